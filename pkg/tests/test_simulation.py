import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from clusterinf import DataError, DGPSpec, gen_demeaned_covariance_check, gen_disturbances, simulate
from clusterinf.rng import replication_rng
from clusterinf.simulation import (cluster_sizes, demeaned_covariance, method_pvalue, report_json,
                                   run_size_experiment, simulate_nested)


def test_random_effects_icc():
    lam, omega = 0.8, 1.2
    spec = DGPSpec("random_effects", G=100_000, size=2, lam=lam, omega=omega)
    u = gen_disturbances(spec, 1).reshape(-1, 2)
    icc = np.corrcoef(u[:, 0], u[:, 1])[0, 1]
    assert abs(icc - lam ** 2 / (lam ** 2 + omega ** 2)) < 0.02
    n = u.size
    se = math.sqrt(2 / n) * (lam ** 2 + omega ** 2)
    assert abs(u.var() - (lam ** 2 + omega ** 2)) < 3 * se


def test_factor_covariance():
    lam, lam_sd = 0.7, 0.3
    spec = DGPSpec("factor", G=100_000, size=2, lam=lam, lam_sd=lam_sd)
    u = gen_disturbances(spec, 2).reshape(-1, 2)
    # E[l_i l_j] = lam^2 for i != j, E[l_i^2] = lam^2 + lam_sd^2
    assert abs(np.mean(u[:, 0] * u[:, 1]) - lam ** 2) < 0.02
    assert abs(np.mean(u ** 2) - (lam ** 2 + lam_sd ** 2 + 1)) < 0.03


def test_demeaned_covariance_monte_carlo():
    rng = np.random.default_rng(4)
    loads = np.array([0.2, 1.0, 1.5, 0.7])
    draws = loads * rng.standard_normal((100_000, 1)) + rng.standard_normal((100_000, 4))
    dm = draws - draws.mean(axis=1, keepdims=True)
    emp = dm.T @ dm / len(dm)
    assert np.max(np.abs(emp - demeaned_covariance(loads))) < 0.02
    # equal loadings leave no factor term after demeaning
    spec = DGPSpec("random_effects", size=4, lam=2.0, omega=1.0)
    assert_allclose(gen_demeaned_covariance_check(spec, factor_only=True), 0.0)
    assert_allclose(gen_demeaned_covariance_check(spec), np.eye(4) - 0.25)


def test_cluster_size_patterns():
    assert cluster_sizes(DGPSpec(G=5, size=7)).tolist() == [7] * 5
    dom = cluster_sizes(DGPSpec(G=51, size=20, size_pattern="one_dominant", dominant_share=0.5))
    assert dom[0] == dom[1:].sum()
    ln = cluster_sizes(DGPSpec(G=40, size=20, size_pattern="lognormal", lognormal_sigma=1.0))
    assert ln.min() >= 2 and ln.max() > 3 * np.median(ln)
    assert abs(ln.mean() - 20) < 2


def test_spec_validation():
    with pytest.raises(DataError):
        DGPSpec(kind="garch")
    with pytest.raises(DataError):
        DGPSpec(rho=1.0)
    with pytest.raises(DataError):
        DGPSpec(kind="ar1_placebo", size=15, periods=10)


def test_regressor_shapes():
    rng = replication_rng(0, 0)
    s = simulate(DGPSpec(G=10, size=4, regressor="cluster_dummy", dummy_share=0.3), rng)
    x = s.X[:, 1]
    assert set(np.unique(x)) == {0.0, 1.0}
    assert np.all(x.reshape(10, 4) == x.reshape(10, 4)[:, :1])
    p = simulate(DGPSpec("ar1_placebo", G=6, size=20, periods=10, regressor="ar1"), rng)
    assert p.periods.max() == 9 and len(p.y) == 120
    with pytest.raises(DataError):
        simulate(DGPSpec(regressor="ar1"), rng)


def test_heavy_tails_unit_variance():
    spec = DGPSpec("iid", G=50_000, size=4, heavy_tails=True)
    u = gen_disturbances(spec, 3)
    assert abs(u.var() - 1) < 0.05


def test_nested_sample_shares():
    rng = np.random.default_rng(0)
    s, coarse = simulate_nested(rng, 4, 3, 5)
    assert len(s.y) == 60 and coarse.max() == 3 and s.codes.max() == 11
    with pytest.raises(DataError):
        simulate_nested(rng, 4, 3, 5, rho_fine=0.7, rho_coarse=0.5)


def test_method_pvalue_dispatch():
    from clusterinf import fit_ols
    s = simulate(DGPSpec(G=20, size=5), replication_rng(1, 0))
    fit = fit_ols(s.dataset(), s.partition())
    for m in ("HC1", "CV1", "CV2", "CV3", "WCR", "WCU", "WCR-CV3"):
        assert 0 <= method_pvalue(fit, 1, m, B=99) <= 1
    with pytest.raises(DataError):
        method_pvalue(fit, 1, "BRL")


def test_iid_hc1_size():
    rep = run_size_experiment(DGPSpec("iid", G=200, size=1, regressor="obs_normal"), ["HC1"],
                              reps=2000, seed=11)
    assert 3.5 <= 100 * rep.rate("HC1") <= 6.5


def test_report_reproducible_across_threads():
    spec = DGPSpec(G=12, size=5)
    a = run_size_experiment(spec, ["CV1", "WCR"], reps=30, seed=9, boot_reps=99, threads=1)
    b = run_size_experiment(spec, ["CV1", "WCR"], reps=30, seed=9, boot_reps=99, threads=6)
    assert report_json(a) == report_json(b)
    d = json.loads(report_json(a))
    assert d["reps"] == 30 and len(d["results"]) == 2
    assert a.to_frame()["mc_se_pct"].ge(0).all()
    with pytest.raises(DataError):
        run_size_experiment(spec, ["XYZ"], reps=1)
