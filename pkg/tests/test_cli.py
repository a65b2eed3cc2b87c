import json
import math

import pytest

from tritail.cli import main
from tritail.experiments import ConfigError, ExperimentConfig, cell_seed, fmt, resolve_tilt


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_phase_json(capsys):
    code, out, _ = run(capsys, "phase", "--p", "0.2", "--t", "0.3")
    assert code == 0
    d = json.loads(out)
    assert d["replica_symmetric"] is True
    assert d["s_alpha[0.666667]"] is True and d["s_alpha[1]"] is False
    assert d["version"]


def test_oracle_json(capsys, tmp_path):
    path = tmp_path / "joint.csv"
    code, out, _ = run(capsys, "oracle", "--n", "3", "--tilt", "edge", "--joint-out", str(path))
    assert code == 0
    d = json.loads(out)
    assert d["mu"] == pytest.approx(0.042875, abs=1e-15)
    assert d["estimator_mean"] == pytest.approx(d["mu"], rel=1e-12)
    assert path.read_text().splitlines()[0] == "n,E,T,count"


@pytest.mark.parametrize("argv", [
    ["phase", "--p", "0.5", "--t", "0.4"],
    ["oracle", "--n", "9"],
    ["estimate", "--p", "0.2", "--t", "0.3", "--tilt", "triangle", "--n", "8"],  # outside S_1, no cap
    ["estimate", "--tilt", "nope"],
    ["estimate", "--n", "2"],
    ["table", "t9"],
    ["curve", "phase", "--beta-steps", "1"],
    ["phase", "--bogus"],
])
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "error" in err


def test_runtime_error_exit_3(capsys, monkeypatch):
    import tritail.cli as cli

    def boom(*a, **k):
        raise RuntimeError("sampler failed")

    monkeypatch.setattr(cli, "run_estimate", boom)
    code, _, err = run(capsys, "estimate", "--n", "6", "--tilt", "edge")
    assert code == 3 and "sampler failed" in err


def test_estimate_small_and_deterministic(capsys, tmp_path):
    argv = ["estimate", "--n", "8", "--tilt", "hybrid:0.37", "--budget-frac", "0.05", "--seed", "4"]
    code, out1, _ = run(capsys, *argv)
    assert code == 0
    _, out2, _ = run(capsys, *argv)
    a, b = json.loads(out1), json.loads(out2)
    a.pop("seconds", None), b.pop("seconds", None)
    assert a == b
    for key in ("version", "seed", "h", "beta", "alpha", "steps_per_replica", "burnin_per_replica", "mu_hat"):
        assert key in a
    assert a["seed"] == 4 and a["mode"] == "reference"


def test_estimate_writes_histogram(capsys, tmp_path):
    hist = tmp_path / "h.csv"
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "estimate", "--n", "8", "--tilt", "edge", "--budget-frac", "0.05",
                     "--hist-out", str(hist), "--out", str(out))
    assert code == 0
    assert json.loads(out.read_text())["mode"] == "exact_psi"
    lines = hist.read_text().splitlines()
    assert "edge_count,frequency" in lines


def test_hist_edges(capsys):
    code, out, _ = run(capsys, "hist-edges", "--n", "8", "--tilt", "edge", "--budget-frac", "0.05")
    assert code == 0
    body = [line for line in out.splitlines() if not line.startswith("#")]
    assert body[0] == "edge_count,frequency"
    assert all(int(line.split(",")[1]) > 0 for line in body[1:])


def test_curve_phase_csv(capsys):
    code, out, _ = run(capsys, "curve", "phase", "--p", "0.2", "--beta-max", "8", "--beta-steps", "41")
    assert code == 0
    lines = out.splitlines()
    header = dict(line[2:].split("=", 1) for line in lines if line.startswith("# "))
    assert float(header["transition_beta"]) == pytest.approx(4.755, abs=0.01)
    body = [line for line in lines if not line.startswith("#")]
    assert body[0] == "beta,u,kind"


def test_curve_second_moment_minimum(capsys):
    code, out, _ = run(capsys, "curve", "second_moment", "--p", "0.2", "--t", "0.3",
                       "--beta-min", "5", "--beta-max", "7", "--beta-steps", "201")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines() if line[0].isdigit()]
    cond = [float(r[1]) for r in rows]
    k = min(range(len(cond)), key=cond.__getitem__)
    assert float(rows[k][0]) == pytest.approx(5.98885, abs=0.011)


def test_table_small(capsys):
    code, out, _ = run(capsys, "table", "t3", "--n", "10", "--budget-frac", "0.02", "--seed", "3")
    assert code == 0
    lines = out.splitlines()
    body = [line for line in lines if not line.startswith("#")]
    assert body[0].startswith("n,triangle_a2/3,triangle_a2/3_log,triangle_a2/3_se")
    assert len(body) == 2
    assert any(line.startswith("# tilt[n=10,edge]=") for line in lines)


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(p=0.2, t=0.3, n=[16, 32], tilt="triangle", alpha=2 / 3, r=0.4272, seed=7,
                           budget_frac=0.25, estimator="reference")
    again = ExperimentConfig.from_text(cfg.to_text())
    assert again == cfg
    path = tmp_path / "c.cfg"
    path.write_text(cfg.to_text())
    assert ExperimentConfig.from_file(path) == cfg
    assert ExperimentConfig.from_file(path, {"seed": 9}).seed == 9


def test_config_parsing():
    cfg = ExperimentConfig.from_text("p = 0.2\nt = 0.3  # comment\nn = 16, 32\ntilt = triangle:2/3\n")
    assert cfg.n == [16, 32] and cfg.alpha == pytest.approx(2 / 3) and cfg.tilt == "triangle"
    assert ExperimentConfig.from_text("tilt = hybrid:0.37").q == 0.37
    for bad in ("p", "bogus = 1", "seed = x", "tilt = edge:1", "q = 0.5"):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_text(bad)


def test_config_flags_override_file(capsys, tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("n = 8\ntilt = edge\nseed = 1\nbudget_frac = 0.05\n")
    _, out, _ = run(capsys, "estimate", "--config", str(path), "--seed", "2")
    assert json.loads(out)["seed"] == 2


def test_resolve_tilt_conditioned():
    cfg = ExperimentConfig(p=0.2, t=0.3, tilt="triangle", alpha=1.0, r=0.4272)
    tilt = resolve_tilt(cfg)
    assert tilt.beta == pytest.approx(5.98885, abs=1e-4)
    with pytest.raises(ConfigError):
        resolve_tilt(ExperimentConfig(p=0.05, t=0.3, tilt="triangle", r=0.5))


def test_helpers():
    assert cell_seed(1, 16, 0) == cell_seed(1, 16, 0) != cell_seed(1, 16, 1)
    assert fmt(1.5e-4) == "1.500000e-04"
    assert fmt(0.12475) == "0.12475"
    assert fmt(0.0) == "0"
    assert fmt(-math.inf) == "-inf"
    assert fmt(7) == "7"
