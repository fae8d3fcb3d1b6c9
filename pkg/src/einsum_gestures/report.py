#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Define a standard run report object
"""
import logging
from mdclense.parser import MarkdownParser
from pathlib import Path
import textnorm

mdparser = MarkdownParser()


def norm(s: str, preserve: list = list(), trim: bool = True) -> str:
    """Normalize unicode and whitespace in a string."""
    return textnorm.normalize_space(
        textnorm.normalize_unicode(s), preserve=preserve, trim=trim
    )


class Report:
    """
    Standard report objects
    Capabilities:
    - title
    - summary
    - markdown version
    - plain text version derived from the markdown
    """

    def __init__(self, **kwargs):
        self._title = ""
        self._summary = ""
        self._markdown = ""
        for k, v in kwargs.items():
            setattr(self, k, v)

    @property
    def title(self):
        return self._title

    @title.setter
    def title(self, s: str):
        self._title = norm(s)

    @property
    def summary(self):
        return self._summary

    @summary.setter
    def summary(self, s: str):
        self._summary = norm(s)

    @property
    def text(self):
        if self._markdown:
            return norm(mdparser.parse(self._markdown), preserve=["\n"])
        return ""

    @property
    def markdown(self):
        return self._markdown

    @markdown.setter
    def markdown(self, s: str):
        logger = logging.getLogger("markdown")
        s_clean = norm(s, preserve=["\n"], trim=False).strip("\n")
        logger.debug(f"s_clean final: '{s_clean}'")
        self._markdown = s_clean

    def write(self, directory: Path, stem: str):
        """Write <stem>.md and <stem>.txt into directory."""
        directory = Path(directory)
        with open(directory / f"{stem}.md", "w", encoding="utf-8") as f:
            f.write(self.markdown + "\n")
        with open(directory / f"{stem}.txt", "w", encoding="utf-8") as f:
            f.write(self.text + "\n")

    def __str__(self):
        return self.text


def markdown_table(header: list, rows: list) -> str:
    """Pipe table with right-aligned columns after the first."""
    lines = [
        "| " + " | ".join(str(h) for h in header) + " |",
        "|" + "|".join([" --- "] + [" ---: "] * (len(header) - 1)) + "|",
    ]
    lines.extend("| " + " | ".join(str(v) for v in row) + " |" for row in rows)
    return "\n".join(lines)
