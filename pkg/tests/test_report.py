#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Test the report module
"""

from einsum_gestures.report import Report, markdown_table, norm


class TestReport:
    def test_init_title(self):
        t = "Gesture recognition evaluation"
        r = Report(title=t)
        assert r.title == t

    def test_change_title(self):
        r = Report(title="Computational cost")
        r.title = "  Fused   accuracy "
        assert r.title == "Fused accuracy"

    def test_init_summary(self):
        s = "Fused accuracy 97.96% against 84.84% for the best single model."
        r = Report(summary=s)
        assert r.summary == s

    def test_text_from_markdown(self):
        r = Report(markdown="# Cost\n\nMerged models need **22,654** MACs.")
        assert "22,654" in r.text
        assert "**" not in r.text

    def test_empty(self):
        assert Report().text == ""

    def test_write(self, tmp_path):
        r = Report(markdown="# Evaluation\n\nAll good.")
        r.write(tmp_path, "evaluation")
        assert (tmp_path / "evaluation.md").read_text(encoding="utf-8").startswith("# Evaluation")
        assert "All good." in (tmp_path / "evaluation.txt").read_text(encoding="utf-8")


class TestNorm:
    def test_whitespace(self):
        assert norm("  two   hands\tlateral down ") == "two hands lateral down"

    def test_preserve_newlines(self):
        assert norm("a  b\nc", preserve=["\n"]) == "a b\nc"


class TestTable:
    def test_layout(self):
        table = markdown_table(["Model", "MACs"], [["Einsum SPR", 12938], ["Einsum SA", 3242]])
        lines = table.split("\n")
        assert lines[0] == "| Model | MACs |"
        assert lines[1] == "| --- | ---: |"
        assert lines[3] == "| Einsum SA | 3242 |"
