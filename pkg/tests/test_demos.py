"""Every demo script runs cleanly top to bottom."""

import runpy
from pathlib import Path

import pytest

DEMO_DIR = Path(__file__).resolve().parent.parent / "demos"
SCRIPTS = sorted(DEMO_DIR.glob("*.py"))


class TestDemos:
    def test_demos_exist(self):
        assert len(SCRIPTS) >= 5

    @pytest.mark.parametrize("script", SCRIPTS, ids=lambda p: p.stem)
    def test_runs_to_completion(self, script, capsys):
        runpy.run_path(str(script), run_name="__main__")
        assert capsys.readouterr().out.strip()
