import math

import pytest

import wlmix


def test_registries():
    assert "wl" in wlmix.methods()
    assert {"mvn", "lasso", "lgcp"} <= set(wlmix.models())


def test_estimate_mvn():
    out = wlmix.estimate({"name": "mvn", "dim": 3, "mu": 1.0}, "wl", {"total_iters": 4000, "burn_in": 2000}, seed=5)
    assert out["ok"]
    assert out["log_z_true"] == 0.0
    assert abs(out["log_z"]) < 0.3
    again = wlmix.estimate({"name": "mvn", "dim": 3, "mu": 1.0}, "wl", {"total_iters": 4000, "burn_in": 2000}, seed=5)
    assert again["log_z"] == out["log_z"]


def test_estimate_reports_failure():
    out = wlmix.estimate({"name": "lgcp", "M": 3}, "chib", {"n": 100})
    assert not out["ok"]
    assert out["error"]


def test_bad_model_raises():
    with pytest.raises(Exception):
        wlmix.estimate({"name": "nope"})


def test_wl_update():
    lg, lq = wlmix.wl_update([math.log(0.5), math.log(0.5)], 1, 0.5)
    assert lg - lq == pytest.approx(math.log(1.5))
    assert math.exp(lg) + math.exp(lq) == pytest.approx(1.0)
    with pytest.raises(Exception):
        wlmix.wl_update([0.0, 0.0], 2, 0.5)


def test_benchmark(tmp_path):
    cfg = {
        "name": "py",
        "models": [{"name": "gauss1d"}],
        "methods": [{"method": "is", "config": {"n": 2000}}],
        "replicates": 2,
        "seed": 3,
    }
    summary = wlmix.benchmark(cfg, tmp_path, workers=1)
    (row,) = summary["rows"]
    assert row["succeeded"] == 2
    assert row["mean_log_z"] == pytest.approx(0.5 * math.log(2 * math.pi), abs=0.05)
    assert (tmp_path / "results.csv").exists()


def test_gprior_select():
    import random

    rng = random.Random(1)
    n, p = 60, 4
    X = [[rng.gauss(0, 1) for _ in range(p)] for _ in range(n)]
    y = [2.0 * row[0] - 1.5 * row[1] + rng.gauss(0, 1) for row in X]
    out = wlmix.gprior_select(X, y, g=math.exp(4), iters=20000, seed=2)
    est = [r["probability"] for r in out["inclusion"]]
    assert max(abs(a - b) for a, b in zip(est, out["exact_inclusion"])) < 0.05
    assert est[0] > 0.95 and est[1] > 0.95
