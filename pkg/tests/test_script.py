#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Test the command-line helpers in scripts/gestures.py
"""

from importlib.util import module_from_spec, spec_from_file_location
from pathlib import Path

SCRIPT = Path(__file__).parents[1] / "scripts" / "gestures.py"


def load_script():
    spec = spec_from_file_location("gestures_script", SCRIPT)
    module = module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class TestCommandLine:
    @classmethod
    def setup_class(cls):
        cls.script = load_script()

    def test_paper_check_alias(self):
        argv = ["cost", "--paper-check", "-o", "out"]
        assert self.script.canonical_args(argv) == ["cost", "--check-published", "-o", "out"]

    def test_other_args_untouched(self):
        argv = ["pipeline", "-d", "work", "-p", "--check-published"]
        assert self.script.canonical_args(argv) == argv

    def test_alias_targets_a_known_flag(self):
        known = {row[1] for row in self.script.OPTIONAL_ARGUMENTS}
        assert set(self.script.ALIASES.values()) <= known

    def test_overrides_skip_sentinels(self):
        kwargs = {
            "classes": 3,
            "samples": -1,
            "seed": -1,
            "split_seed": 2,
            "epochs": -1,
            "fusion": "",
            "workers": -1,
            "deterministic": False,
        }
        assert self.script.overrides(kwargs) == {"classes": 3, "split_seed": 2}

    def test_overrides_deterministic(self):
        assert self.script.overrides({"deterministic": True}) == {"deterministic": True}
