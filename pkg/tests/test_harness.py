import csv
import json
import logging
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from bayesfblin import dynamics, harness
from bayesfblin.errors import IntegrationError
from bayesfblin.gp import GPModel
from bayesfblin.harness import ExperimentConfig, RunRecord, metrics, report, run

EXP = Path(__file__).resolve().parent.parent / "experiments"


@pytest.fixture(scope="module")
def exp1():
    return ExperimentConfig.load(EXP / "exp1.json")


@pytest.fixture(scope="module")
def short_run(exp1):
    return run(replace(exp1, t_f=3.0))


def _record(u, x, du=0.01, xi=(math.pi, 0.0)):
    n = len(u)
    return RunRecord("r", "sp", du, np.array(xi), np.arange(n) * du, np.array(x, float),
                     np.array(u, float).reshape(n, 1), ["normal"] * n, np.zeros((n, 4)), np.array(x[-1]))


def test_exp1_config_values(exp1):
    assert exp1.plant == {"plant": "pendulum", "l": 1.0, "r": 1.0, "m": 0.5, "g": 9.81}
    assert (exp1.delta_u, exp1.delta_l, exp1.theta) == (0.01, 0.5, (0.001, 0.005))
    assert exp1.x0 == (0.0, -2.0) and exp1.xi == (math.pi, 0.0)
    assert exp1.w == (1.0, 1.0) and exp1.t_f == 20.0


def test_config_json_round_trip(exp1, tmp_path):
    exp1.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json").to_dict() == exp1.to_dict()


@pytest.mark.parametrize("bad", [{"t_f": -1.0}, {"controller": "pid"}, {"hyper_mode": "bayes"}])
def test_config_validation(exp1, bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**exp1.to_dict(), **bad})


def test_unknown_config_key(exp1):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**exp1.to_dict(), "colour": "red"})


def test_zero_horizon(exp1):
    rec = run(replace(exp1, t_f=0.0))
    m = metrics(rec)
    assert len(rec.t) == 0 and m["energy"] == 0.0 and m["error"] == 0.0
    np.testing.assert_array_equal(rec.terminal, exp1.x0)


def test_rows_uniformly_spaced(short_run):
    assert len(short_run.t) == 300
    np.testing.assert_allclose(np.diff(short_run.t), 0.01, atol=1e-12)
    assert np.all(np.diff(short_run.t) > 0)


def test_constant_control_energy():
    rec = _record([2.0] * 100, [(0.0, 0.0)] * 100)
    assert metrics(rec)["energy"] == pytest.approx(4.0, abs=1e-12)


def test_error_zero_at_goal():
    rec = _record([0.0] * 10, [(math.pi, 0.0)] * 10)
    assert metrics(rec)["error"] == 0.0


def test_metrics_nonnegative(short_run):
    m = metrics(short_run)
    assert m["energy"] >= 0 and m["error"] >= 0


def test_probe_shape_in_run_log(exp1):
    rec = run(exp1)
    phases, u = rec.phase, rec.u[:, 0]
    k = 0
    episodes = 0
    while k < len(phases):
        if phases[k] != "normal":
            block = phases[k:k + 3]
            assert block == [phases[k]] * 3
            expected = 0.0 if phases[k] == "probing_a" else exp1.u_probe
            assert np.all(u[k:k + 3] == expected)
            episodes += 1
            k += 3
        else:
            k += 1
    assert episodes == rec.counters["probes_a"] + rec.counters["probes_b"] > 0


def test_no_probes_after_budget(exp1):
    rec = run(replace(exp1, probe_budget_end=4.0, t_f=8.0))
    late = [p for t, p in zip(rec.t, rec.phase) if t >= 4.0]
    assert late and all(p == "normal" for p in late)


def test_determinism(exp1):
    a = metrics(run(replace(exp1, t_f=5.0)))
    b = metrics(run(replace(exp1, t_f=5.0)))
    assert json.dumps(a) == json.dumps(b)


def test_integration_failure_gives_partial_record(exp1, monkeypatch):
    real = dynamics.integrate_hold
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] > 10:
            raise IntegrationError("stiff", 0.004)
        return real(*a, **k)

    monkeypatch.setattr(dynamics, "integrate_hold", flaky)
    rec = run(replace(exp1, t_f=1.0))
    assert not rec.complete and len(rec.t) == 11
    assert not metrics(rec)["converged"]


def test_baseline_runs(exp1):
    rec = run(replace(exp1, controller="p", gain=1.0, t_f=1.0))
    assert rec.controller == "p1" and rec.n_data_a == 0
    assert rec.u[0, 0] == pytest.approx(math.pi + 2.0)
    assert np.all(np.isnan(rec.stats))


def test_model_persistence_round_trip(exp1, tmp_path):
    out = tmp_path / "models.json"
    rec = run(replace(exp1, t_f=3.0), model_out=str(out))
    doc = json.loads(out.read_text())
    assert set(doc) == {"model_a", "model_b"} and doc["model_b"][0]["type"] == "lognormal"
    ma, mb = harness.load_models(out)
    np.testing.assert_array_equal(ma[0].X, rec.state.model_a[0].X)
    np.testing.assert_array_equal(mb[0].log_gp.y, rec.state.model_b[0].log_gp.y)
    warm = harness.initial_state(exp1, str(out))
    assert warm.n_data_a == rec.n_data_a and warm.n_data_b == rec.n_data_b


def test_report_files(short_run, tmp_path):
    table = report([short_run], tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["exp1_sp.csv", "metrics.csv", "metrics.json"]
    with open(tmp_path / "exp1_sp.csv") as fh:
        assert fh.readline().strip() == "t,x1,x2,u,phase,mean_a,var_a,mean_b,var_b"
    doc = json.loads((tmp_path / "metrics.json").read_text())
    for key in ("energy", "error", "n_data_a", "n_data_b"):
        assert key in doc[0]
    assert doc == json.loads(json.dumps(table))


def test_csv_round_trip(short_run, tmp_path):
    report([short_run], tmp_path)
    rows = harness.read_trajectory(tmp_path / "exp1_sp.csv")
    mem = short_run.rows()
    assert len(rows) == len(mem)
    for parsed, orig in zip(rows, mem):
        assert parsed["phase"] == orig[4]
        for key, v in zip(["t", "x1", "x2", "u"], orig[:4]):
            assert float(parsed[key]) == pytest.approx(v, rel=1e-12, abs=0)


def test_metrics_from_csv_match(short_run, tmp_path):
    report([short_run], tmp_path)
    m = harness.metrics_from_rows(harness.read_trajectory(tmp_path / "exp1_sp.csv"), short_run.xi)
    ref = metrics(short_run)
    assert m["energy"] == pytest.approx(ref["energy"], rel=1e-9)
    assert m["error"] == pytest.approx(ref["error"], rel=1e-9)


def test_report_unwritable(short_run, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        report([short_run], blocker / "sub")


def test_optimize_mode_keeps_b_kernel_without_data(exp1, tmp_path, caplog):
    out = tmp_path / "m.json"
    run(replace(exp1, t_f=3.0), model_out=str(out))
    ma, mb = harness.load_models(out)
    pilot = (ma, [replace(mb[0], log_gp=GPModel(exp1.kernel_b))])
    with caplog.at_level(logging.WARNING):
        cfg = harness.optimize_mode(exp1, pilot, restarts=1)
    assert cfg.kernel_b == exp1.kernel_b
    assert "kernel_b unchanged" in caplog.text
    before = ma[0].with_kernel(exp1.kernel_a).log_marginal_likelihood()
    after = ma[0].with_kernel(cfg.kernel_a).log_marginal_likelihood()
    assert after >= before


def test_optimize_mode_needs_drift_data(exp1):
    empty = harness.initial_state(exp1)
    with pytest.raises(ValueError):
        harness.optimize_mode(exp1, (list(empty.model_a), list(empty.model_b)))


def test_positions_only_mode_runs(exp1):
    rec = run(replace(exp1, observe_velocity=False, t_f=3.0))
    assert rec.complete and rec.n_data_a > 0


def test_converged_window():
    xs = [(math.pi, 0.0)] * 200
    assert harness.converged(_record([0.0] * 200, xs))
    assert not harness.converged(_record([0.0] * 200, [(0.0, 0.0)] * 200))


@pytest.mark.parametrize("name", ["exp1", "exp3"])
def test_warm_start_probes_less(name, tmp_path):
    cfg = ExperimentConfig.load(EXP / f"{name}.json")
    if cfg.hyper_mode == "optimize":
        run(ExperimentConfig.load(EXP / cfg.pilot), model_out=str(tmp_path / "pilot.json"))
        cfg = harness.optimize_mode(cfg, tmp_path / "pilot.json")
    sp1 = run(cfg, model_out=str(tmp_path / "sp1.json"))
    sp2 = run(cfg, model_in=str(tmp_path / "sp1.json"))
    episodes = lambda r: r.counters["probes_a"] + r.counters["probes_b"]
    assert episodes(sp2) < episodes(sp1)
    assert metrics(sp2)["energy"] <= metrics(sp1)["energy"]
