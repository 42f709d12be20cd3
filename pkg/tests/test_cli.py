import json
import subprocess
import sys

import numpy as np
import pytest

from drmksd import harness
from drmksd.cli import main
from drmksd.config import dump_config, load_config, parse_config
from drmksd.dgp import Dataset, write_csv
from drmksd.errors import InvalidArgumentError


def write_config(path, **sections):
    path.write_text(json.dumps(sections))
    return path


def test_config_defaults_expand_on_write_back(tmp_path):
    cfg = load_config(write_config(tmp_path / "c.json", dgp={"n": 50}))
    data = json.loads(dump_config(cfg))
    assert data["schema_version"] == 1
    assert data["kernel"] == {"family": "imq", "c": 1.0, "lengthscale": 0.1, "beta": -0.5}
    assert data["propensity"]["clip"] == 0.01 and data["optimizer"]["step_size"] == 0.01
    assert parse_config(data) == cfg


@pytest.mark.parametrize("body,fragment", [
    ({"dgp": {"n": 10, "sample_size": 3}}, "dgp.sample_size"),
    ({"variant": "aipw"}, "variant"),
    ({"schema_version": 2}, "schema_version"),
    ({"kernel": {"lengthscale": -1}}, "kernel.lengthscale"),
])
def test_config_errors_name_the_field(tmp_path, body, fragment):
    with pytest.raises(InvalidArgumentError, match=fragment):
        load_config(write_config(tmp_path / "c.json", **body))


def test_config_syntax_error_names_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "dgp": {"n": 10,}\n}')
    with pytest.raises(InvalidArgumentError, match="line 2"):
        load_config(path)


def test_simulate(tmp_path):
    cfg = write_config(tmp_path / "c.json", dgp={"n": 10}, seed=7)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a.csv")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b.csv")]) == 0
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "x1,a,y1" and len(lines) == 11
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_simulate_rejects_empty_sample(tmp_path):
    cfg = write_config(tmp_path / "c.json", dgp={"n": 0})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a.csv")]) == 2


def test_fit_output_keys(tmp_path):
    cfg = write_config(tmp_path / "c.json", dgp={"n": 200}, seed=1)
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "fit.json")]) == 0
    out = json.loads((tmp_path / "fit.json").read_text())
    assert set(out) == {"theta_n", "g_n", "ci", "gamma_condition_number", "variant", "converged", "warning"}
    assert out["ci"][0][0] <= out["theta_n"][0] <= out["ci"][0][1]
    assert json.loads((tmp_path / "fit.config.json").read_text())["seed"] == 1


def _all_treated_csv(path, n=2000):
    Y = np.random.default_rng(3).standard_normal((n, 1))
    write_csv(Dataset(Y.copy(), np.ones(n, dtype=int), Y), path)


def test_fit_all_treated_and_variants_coincide(tmp_path):
    data = tmp_path / "d.csv"
    _all_treated_csv(data)
    cfg = write_config(tmp_path / "c.json", propensity={"kind": "constant", "value": 0.99, "clip": 0.01},
                       outcome={"kind": "zero"})
    thetas = {}
    for variant in ("dr", "ipw"):
        out = tmp_path / f"{variant}.json"
        assert main(["fit", "--config", str(cfg), "--data", str(data), "--out", str(out),
                     "--variant", variant]) == 0
        thetas[variant] = json.loads(out.read_text())["theta_n"][0]
    assert -0.1 < thetas["dr"] < 0.1
    assert abs(thetas["dr"] - thetas["ipw"]) <= 1e-9


def test_fit_malformed_csv(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x1,a,y1\n0.1,1,0.2\n0.3,1,oops\n")
    cfg = write_config(tmp_path / "c.json")
    assert main(["fit", "--config", str(cfg), "--data", str(data)]) == 2
    assert "row 3" in capsys.readouterr().err


def test_fit_without_treated_fold(tmp_path, capsys):
    data = tmp_path / "d.csv"
    X = np.arange(6.0)[:, None]
    write_csv(Dataset(X, [1, 1, 1, 0, 0, 0], X), data)
    cfg = write_config(tmp_path / "c.json", split="sequential")
    assert main(["fit", "--config", str(cfg), "--data", str(data)]) == 3
    payload = json.loads(capsys.readouterr().out)
    assert payload["error"]["type"] == "estimation_impossible"


def test_fit_inference_unavailable_still_reports_theta(tmp_path, monkeypatch):
    from drmksd import inference
    monkeypatch.setattr(inference, "MAX_CONDITION", 0.5)
    cfg = write_config(tmp_path / "c.json", dgp={"kind": "rbm2d", "n": 100}, model={"family": "rbm2d"})
    out = tmp_path / "fit.json"
    assert main(["fit", "--config", str(cfg), "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["ci"] is None and len(payload["theta_n"]) == 2
    assert "inference unavailable" in payload["warning"]


def test_dimension_mismatch_is_usage_error(tmp_path):
    cfg = write_config(tmp_path / "c.json", dgp={"kind": "rbm2d", "n": 50})
    assert main(["fit", "--config", str(cfg)]) == 2


def test_replicate_single_matches_fit(tmp_path):
    cfg = parse_config({"dgp": {"n": 120}, "seed": 4})
    rows = harness.replicate(cfg)
    seed = rows[0]["seed"]
    report = harness.fit_dataset(cfg, harness.sample_dataset(cfg, seed), seed)
    assert rows[0]["theta"] == report.fit.theta.tolist()
    assert rows[0]["ci_lo"] == report.ci[:, 0].tolist()


def test_replicate_thread_invariance_and_summary(tmp_path):
    cfg = write_config(tmp_path / "c.json", dgp={"n": 100}, replications=6, seed=9)
    assert main(["replicate", "--config", str(cfg), "--out", str(tmp_path / "one.csv"), "--threads", "1"]) == 0
    assert main(["replicate", "--config", str(cfg), "--out", str(tmp_path / "three.csv"), "--threads", "3"]) == 0
    strip = lambda p: [line.rsplit(",", 1)[0] for line in p.read_text().splitlines()]
    assert strip(tmp_path / "one.csv") == strip(tmp_path / "three.csv")
    header = (tmp_path / "one.csv").read_text().splitlines()[0]
    assert header == "rep,seed,status,theta_1,g_n,ci_lo_1,ci_hi_1,converged,ms"
    rows = harness.read_results(tmp_path / "one.csv")
    assert [r["rep"] for r in rows] == list(range(6))
    summary = json.loads((tmp_path / "one.summary.json").read_text())
    recomputed = np.mean([r["theta"][0] ** 2 for r in rows])
    assert abs(summary["mse"][0] - recomputed) <= 1e-12
    assert summary["status_counts"] == {"ok": 6}


def test_threads_env_fallback(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.json", dgp={"n": 60}, replications=2)
    monkeypatch.setenv("DRMKSD_THREADS", "0")
    assert main(["replicate", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == 2
    monkeypatch.setenv("DRMKSD_THREADS", "2")
    assert main(["replicate", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == 0


def test_replicate_records_failures_in_rows():
    # tiny samples leave some folds without treated units
    cfg = parse_config({"dgp": {"n": 3}, "replications": 20, "seed": 0})
    rows = harness.replicate(cfg)
    statuses = {r["status"] for r in rows}
    assert statuses <= {"ok", "inference_unavailable", "estimation_impossible"}
    assert "estimation_impossible" in statuses
    for r in rows:
        if r["status"] == "estimation_impossible":
            assert np.isnan(r["theta"][0])
        else:
            assert np.isfinite(r["theta"][0])


def test_gridscan(tmp_path):
    cfg = write_config(tmp_path / "c.json", dgp={"kind": "rbm2d", "n": 200, "theta_true": [1, 1]},
                       model={"family": "rbm2d"},
                       grid=[{"min": -2, "max": 2, "step": 0.5}, {"min": -2, "max": 2, "step": 0.5}])
    out = tmp_path / "g.csv"
    assert main(["gridscan", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "theta_1,theta_2,g_n,argmin" and len(lines) == 82
    values = np.array([float(l.split(",")[2]) for l in lines[1:]])
    flags = [l.endswith(",1") for l in lines[1:]]
    assert sum(flags) == 1 and flags.index(True) == int(np.argmin(values))


def test_gridscan_point_matches_objective(tmp_path):
    cfg = parse_config({"grid": [{"min": 0.3, "max": 0.3, "step": 1}], "dgp": {"n": 80}})
    data = harness.sample_dataset(cfg, cfg.seed)
    points, values, best = harness.gridscan(cfg, data)
    obj = harness.build_objective(cfg, data, cfg.seed)
    assert points.shape == (1, 1) and values[0] == obj.value([0.3]) and best == 0
    # evaluation order does not matter
    perm = np.array([[0.1], [0.3], [-0.2]])
    np.testing.assert_array_equal(obj.values_on(perm)[::-1], obj.values_on(perm[::-1]))


def test_gridscan_outside_box(tmp_path):
    cfg = write_config(tmp_path / "c.json", grid=[{"min": -20, "max": 0, "step": 1}])
    assert main(["gridscan", "--config", str(cfg), "--out", str(tmp_path / "g.csv")]) == 2


def test_console_script_usage_error():
    proc = subprocess.run([sys.executable, "-m", "drmksd.cli", "bogus", "--config", "x"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
