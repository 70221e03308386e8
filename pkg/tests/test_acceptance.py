"""The eleven acceptance criteria, one test each, plus suite determinism."""

import json

import pytest

from scfred.acceptance import CRITERIA, run_all
from scfred.cli import main
from scfred.report import dumps

SEED = 42


@pytest.fixture(scope="module")
def results():
    out = {r.number: r for r in run_all(SEED)}
    print()
    for r in out.values():
        print(r.line())
    return out


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(results, number, request):
    r = results[number]
    # written past output capture so the line shows in a plain `pytest -v` log
    reporter = request.config.pluginmanager.getplugin("terminalreporter")
    if reporter is not None:
        reporter.write_line("")
        reporter.write_line(r.line())
    print(r.line())
    assert r.passed, json.loads(dumps(r.metrics))
    assert r.within_budget, f"runtime {r.runtime:.2f}s exceeds {r.budget}s"


def test_metrics_are_json(results):
    for r in results.values():
        json.loads(dumps(r.to_dict()))


@pytest.mark.slow
def test_suite_is_byte_identical(tmp_path, monkeypatch):
    blobs = []
    for name in ("a", "b"):
        monkeypatch.setenv("SCFRED_OUT", str(tmp_path / name))
        assert main(["suite", "--seed", str(SEED)]) == 0
        blobs.append(((tmp_path / name / "suite.json").read_bytes(), (tmp_path / name / "suite.csv").read_bytes()))
    assert blobs[0] == blobs[1]
    report = json.loads(blobs[0][0])
    assert report["seed"] == SEED and report["passed"] is True
