import math

import numpy as np
import pytest

import ssmiss


def test_condition_matrices():
    p = ssmiss.make_condition(0.25, 0.7, 0.15)
    assert p["A"].shape == (2, 2)
    assert p["A"][0, 1] == pytest.approx(0.15)
    assert np.allclose(np.diag(p["R"]), 0.25)


def test_simulate_and_mask():
    s = ssmiss.simulate(0.25, 0.7, 0.0, timepoints=300, seed=4)
    assert s.z.shape == (300, 6)
    assert not s.mask.any()
    assert s.x.shape == (300, 2)
    again = ssmiss.simulate(0.25, 0.7, 0.0, timepoints=300, seed=4)
    assert np.array_equal(s.z, again.z)

    m = ssmiss.mask_series(s, "MCAR", 0.3, seed=5)
    rows = m.mask[:, :3].all(axis=1)
    assert rows.sum() == 90
    assert not m.mask[:, 3:].any()


def test_fit_recovers_autoregression():
    s = ssmiss.simulate(0.25, 0.7, 0.0, timepoints=500, seed=9)
    fit = ssmiss.fit_mle(ssmiss.mask_series(s, "MAR", 0.3, seed=10))
    assert fit["converged"]
    est, se = fit["parameters"]["alpha11"]
    assert abs(est - 0.7) < 0.2
    assert se > 0
    assert math.isfinite(ssmiss.neg_loglik(s, 0.25, 0.7, 0.0))


def test_imputers_keep_observed_values():
    s = ssmiss.mask_series(ssmiss.simulate(0.25, 0.7, 0.0, timepoints=200, seed=2), "TMAR", 0.3, seed=3)
    obs = ~s.mask
    for model in ("ARIMA", "Spline", "Regression"):
        r = ssmiss.em_impute(s, level_model=model)
        assert np.array_equal(r["completed"][obs], s.z[obs])
        assert np.isfinite(r["completed"]).all()
    sets = ssmiss.mice_impute(s, variant="MICE-t", m=3, seed=7)
    assert len(sets) == 3
    for d in sets:
        assert np.array_equal(d[obs], s.z[obs])


def test_pooling_and_metrics():
    f = ssmiss.rubin_pool([[1.0], [3.0]], [[math.sqrt(0.5)], [math.sqrt(0.5)]])
    assert f["estimate"][0] == pytest.approx(2.0)
    assert f["total"][0] == pytest.approx(3.5)
    assert ssmiss.median_bias(0.7, [0.6, 0.65, 0.75]) == pytest.approx(0.05)
    assert ssmiss.coverage(0.75, [0.7], [0.05]) == 100.0


def test_bad_config_is_a_value_error():
    with pytest.raises(ValueError):
        ssmiss.run_study("replications: 0\n")


def test_tiny_study(tmp_path):
    cfg = (
        "replications: 1\ntimepoints: 120\nconditions:\n  sigma2: [0.25]\n  alpha: [0.7]\n"
        "  gamma: [0.0]\nmethods: [K]\nmissingness:\n  mechanisms: [MCAR]\n  rates: [0.3]\n"
    )
    out = ssmiss.run_study(cfg, output_dir=str(tmp_path), threads=1)
    assert out["items_run"] == 1
    assert out["failure_records"] == 0
    assert (tmp_path / "records.ndjson").exists()
