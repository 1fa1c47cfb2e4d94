import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from whisker_lab.cli import main
from whisker_lab.pipeline import CSV_COLUMNS, validate_plotdata

CFG = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def run():
    r = CliRunner()
    return lambda *args: r.invoke(main, [str(a) for a in args])


def test_torus_and_linearize(run, tmp_path):
    res = run("torus", "--config", CFG / "d1.toml")
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert data["residuals"]["psi"] < 1e-13
    for method in ("newton", "rg"):
        res = run("linearize", "--config", CFG / "d1.toml", "--method", method, "--out", tmp_path / (method + ".json"))
        assert res.exit_code == 0
    a = json.loads((tmp_path / "newton.json").read_text())
    b = json.loads((tmp_path / "rg.json").read_text())
    assert abs(a["gamma"]["re"] - b["gamma"]["re"]) < 1e-12 and a["gamma"]["im"] == 0


def test_verify_passes_and_is_deterministic(run, tmp_path):
    outs = []
    for k in range(2):
        p = tmp_path / ("rep%d.json" % k)
        res = run("verify", "--config", CFG / "d1.toml", "--out", p)
        assert res.exit_code == 0, res.output
        assert "PASS" in res.output
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert "timing" not in rep


def test_verify_writes_artifacts(run, tmp_path):
    res = run("verify", "--config", CFG / "d1.toml", "--eps", "0", "--artifacts", tmp_path / "art")
    assert res.exit_code == 0
    names = sorted(p.name for p in (tmp_path / "art").iterdir())
    assert len(names) >= 3 and all(n.endswith(".json") for n in names)


def test_rational_frequency_rejected(run):
    res = run("verify", "--config", CFG / "rational.toml")
    assert res.exit_code == 2
    assert "config error" in res.output


def test_missing_config(run, tmp_path):
    assert run("torus", "--config", tmp_path / "nope.toml").exit_code == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("g = [")
    assert run("torus", "--config", bad).exit_code == 2


def test_odd_perturbation_fails_verify(run):
    res = run("verify", "--config", CFG / "odd.toml")
    assert res.exit_code == 1
    assert "FAIL" in res.output


def test_expand(run, tmp_path):
    p = tmp_path / "orders.json"
    res = run("expand", "--config", CFG / "d1.toml", "--order", 3, "--out", p)
    assert res.exit_code == 0
    data = json.loads(p.read_text())
    assert data["trig_degree"] == [0, 1, 2, 3]
    assert abs(data["gamma"][2] - 0.0577159) < 1e-6


def test_wedge(run):
    res = run("wedge", "--config", CFG / "d1.toml", "--l", 0, "--z", "10", "--theta", "0")
    assert res.exit_code == 0
    assert json.loads(res.output)["certificate_ok"]
    assert run("wedge", "--config", CFG / "d1.toml", "--l", 0, "--z", "10i", "--theta", "0").exit_code == 1
    assert run("wedge", "--config", CFG / "d1.toml", "--l", 0, "--z", "1", "--theta", "0,1").exit_code == 2


def test_plotdata(run, tmp_path):
    p = tmp_path / "split.csv"
    res = run("plotdata", "--config", CFG / "d1.toml", "--n", 20, "--out", p)
    assert res.exit_code == 0, res.output
    rows = validate_plotdata(p)
    assert len(rows) == 40 and {r[0] for r in rows} == {"u", "s"}
    assert p.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert run("plotdata", "--config", CFG / "d1.toml", "--section", "psi=1", "--out", p).exit_code != 0


def test_plotdata_validator_rejects(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("branch,phi,I\nq,1,2\n")
    with pytest.raises(ValueError):
        validate_plotdata(p)
    p.write_text("branch,phi,I\nu,nan,2\n")
    with pytest.raises(ValueError):
        validate_plotdata(p)
    p.write_text("a,b,c\n")
    with pytest.raises(ValueError):
        validate_plotdata(p)


def test_plot_branches_coincide_at_zero_eps(tmp_path):
    from whisker_lab.pipeline import branch_gap, plotdata_rows
    from conftest import pipeline
    rows = plotdata_rows(pipeline(1, 0.0)[3], 30)
    assert branch_gap(rows) < 1e-7
    assert branch_gap(plotdata_rows(pipeline(1, 1e-3)[3], 30)) > 1e-5
