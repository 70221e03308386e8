import csv
import json

import pytest

from scfred import algebra, degen
from scfred.cli import main
from scfred.config import RunConfig
from scfred.errors import ConfigError


@pytest.fixture
def out(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv("SCFRED_OUT", str(d))
    return d


def _report(path):
    data = json.loads(path.read_text())
    assert len(data["config_hash"]) == 64
    assert isinstance(data["seed"], int)
    return data


def test_config_defaults_and_hash():
    a, b = RunConfig.default(), RunConfig.default()
    assert a.hash() == b.hash()
    assert a.seed == 42
    b.set("run", "seed", 7)
    assert a.hash() != b.hash()


@pytest.mark.parametrize(
    "text,key,line",
    [
        ("[grid]\nh = abc\n", "grid.h", 2),
        ("[tolerances]\nsolver = -1\n", "tolerances.solver", 2),
        ("[run]\nseed = 1\nseed = 2\n", "run.seed", 3),
        ("[grid]\n\ndomain = disk\n", "grid.domain", 3),
    ],
)
def test_config_errors_locate_key(text, key, line):
    with pytest.raises(ConfigError) as err:
        RunConfig.from_text(text)
    assert err.value.key == key
    assert err.value.line == line


def test_config_garbage_line():
    with pytest.raises(ConfigError) as err:
        RunConfig.from_text("[run]\nthis is not a pair\n")
    assert err.value.line == 2


def test_out_dir_env(monkeypatch):
    cfg = RunConfig.default()
    monkeypatch.setenv("SCFRED_OUT", "/tmp/elsewhere")
    assert cfg.out_dir() == "/tmp/elsewhere"
    monkeypatch.delenv("SCFRED_OUT")
    assert cfg.out_dir() == "scfred-out"


def test_glue_diag(out):
    assert main(["glue", "--profile", "exponential", "--r", "0.5", "--diag"]) == 0
    data = _report(out / "glue.json")
    assert data["result"]["min_determinant"] >= 0.5
    raw = (out / "glue_diag.csv").read_bytes()
    assert b"\r" not in raw
    rows = list(csv.DictReader(raw.decode().splitlines()))
    assert min(float(r["determinant"]) for r in rows) >= 0.5 - 1e-12
    assert all("," not in r["s"] for r in rows)


def test_space(out):
    assert main(["space", "--rank", "10"]) == 0
    data = _report(out / "space.json")
    assert data["result"]["embeddings"]["0->1"]["compactness_consistent"] is not None
    header = (out / "space_embedding.csv").read_text().splitlines()[0]
    assert header == "level,index,singular_value"


def test_germ(out):
    assert main(["germ", "--name", "sine", "--v", "0.4"]) == 0
    data = _report(out / "germ.json")
    assert data["result"]["root_error"] <= 1e-12
    assert (out / "germ_log.csv").read_text().startswith("iteration,level,residual\n")


def test_degen_validate(out, tmp_path):
    path = tmp_path / "morse5.json"
    path.write_text(json.dumps(degen.morse_structure({f"x{i}": float(i) for i in range(5)}).to_dict()))
    assert main(["degen", "validate", str(path)]) == 0
    assert _report(out / "degen_validate.json")["passed"] is True


def test_degen_validate_failure(out, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"S": ["A", "B"], "R": [["A", "B", "A"]]}))
    assert main(["degen", "validate", str(path)]) == 1
    data = _report(out / "degen_validate.json")
    assert data["passed"] is False


def test_algebra_homology(out, tmp_path):
    Q, labels, index = algebra.sphere_datum()
    sp, qp = tmp_path / "s.json", tmp_path / "q.json"
    sp.write_text(json.dumps(Q.structure.to_dict()))
    qp.write_text(json.dumps(dict(Q.to_dict(), index=index)))
    assert main(["algebra", "homology", str(sp), str(qp)]) == 0
    data = _report(out / "algebra_homology.json")
    assert data["result"]["homology"]["betti"] == {"0": 1, "1": 0, "2": 1}


def test_sft(out):
    assert main(["sft", "p_g q_g p_d q_d", "--induce"]) == 0
    data = _report(out / "sft.json")
    assert data["result"]["normal_forms"]["p_g q_g p_d q_d"]["normal_form"].endswith("ℏ^2")


def test_morse(out):
    assert main(["morse", "--problem", "double_well"]) == 0
    data = _report(out / "morse.json")
    assert data["result"]["counts"] == {"min+,saddle": 1, "min-,saddle": 1}
    assert (out / "trajectory_min-_saddle_0.csv").read_text().startswith("s,u1,u2\n")


def test_structured_errors(out, tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nh = abc\n")
    assert main(["--config", str(bad), "space"]) == 2
    err = json.loads(capsys.readouterr().err.splitlines()[0])
    assert err == {"error": "ConfigError", "key": "grid.h", "line": 2, "message": err["message"]}
    assert main(["glue", "--r", "1.5"]) == 2
    assert json.loads(capsys.readouterr().err.splitlines()[0])["error"] == "ParameterDomainError"
    with pytest.raises(SystemExit) as ex:
        main(["nope"])
    assert ex.value.code == 2


def test_options_after_subcommand(out):
    assert main(["germ", "--seed", "5", "--name", "linear", "--v", "0.25"]) == 0
    assert _report(out / "germ.json")["seed"] == 5
