import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from clusterinf import (DataError, RankDeficiencyError, Restriction, build_partition, cross, cv1,
                        cv2, cv3, cv3_jackknife, fit_ols, hc1, singletons, student_t_cdf, t_test,
                        twoway_cv1, wald_test, within_transform)
from clusterinf.crve import two_sided_p

import oracles


def rel_frob(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_cv1_matches_dense(rng):
    for _ in range(10):
        data, part = oracles.random_instance(rng, N=40, G=7, k=3)
        fit = fit_ols(data, part)
        expect = oracles.dense_cv1(data.regressors, data.outcome, part.codes)
        assert rel_frob(cv1(fit).matrix, expect) < 1e-10
        assert cv1(fit).dof == 6


def test_cv3_jackknife_equals_dense_inverse_form(rng):
    for _ in range(10):
        data, part = oracles.random_instance(rng, N=45, G=6, k=3)
        fit = fit_ols(data, part)
        cov, deleted = cv3_jackknife(fit)
        expect = oracles.dense_cv3(data.regressors, data.outcome, part.codes)
        assert rel_frob(cov.matrix, expect) < 1e-8
        for g in range(part.g_count):
            assert_allclose(deleted[g],
                            oracles.refit_without(data.regressors, data.outcome, part.codes, g),
                            rtol=1e-9, atol=1e-12)


def test_cv2_matches_dense_eigen(rng):
    for _ in range(10):
        data, part = oracles.random_instance(rng, N=45, G=6, k=3)
        fit = fit_ols(data, part)
        expect = oracles.dense_cv2(data.regressors, data.outcome, part.codes)
        assert rel_frob(cv2(fit).matrix, expect) < 1e-9


def test_singleton_clusters_reduce_to_hc(rng):
    data, _ = oracles.random_instance(rng, N=30, G=5, k=3)
    X, y = data.regressors, data.outcome
    fit = fit_ols(data, singletons(data.n_obs))
    assert_allclose(cv1(fit).matrix, oracles.hc_oracle(X, y, "HC1"), rtol=1e-10)
    assert_allclose(hc1(fit).matrix, oracles.hc_oracle(X, y, "HC1"), rtol=1e-10)
    assert_allclose(cv2(fit).matrix, oracles.hc_oracle(X, y, "HC2"), rtol=1e-10)
    assert_allclose(cv3(fit).matrix, oracles.hc_oracle(X, y, "HC3"), rtol=1e-10)


def test_cv_ordering_on_balanced_design(rng):
    # with leverage in (0, 1) the inverse adjustments inflate the meat
    data, part = oracles.random_instance(rng, N=60, G=10, k=2, balanced=True)
    fit = fit_ols(data, part)
    a = np.array([0, 1.0])
    raw = cv1(fit, scale=False).se(a)
    assert raw < cv2(fit).se(a) < cv3(fit).se(a) * np.sqrt(10 / 9)


def test_one_cluster_rejected(rng):
    data, _ = oracles.random_instance(rng, N=20, G=2, k=2)
    fit = fit_ols(data, build_partition(np.zeros(20)))
    for est in (cv1, cv2, cv3):
        with pytest.raises(DataError):
            est(fit)


def test_fixed_effect_at_cluster_level_needs_within_transform(rng):
    data, part = oracles.random_instance(rng, N=40, G=5, k=2)
    X = np.column_stack([data.regressors, np.eye(5)[part.codes][:, 1:]])
    d = data.__class__(data.outcome, X, data.names + tuple(f"d{g}" for g in range(1, 5)))
    with pytest.raises(RankDeficiencyError, match="within_transform"):
        cv2(fit_ols(d, part))
    # after absorbing, the estimator is defined
    demeaned, _ = within_transform(data, part)
    assert np.isfinite(cv2(fit_ols(demeaned, part)).matrix).all()


def test_twoway_matches_inclusion_exclusion(rng):
    data, _ = oracles.random_instance(rng, N=60, G=5, k=3)
    a = build_partition(rng.integers(0, 6, 60))
    b = build_partition(rng.integers(0, 4, 60))
    c = cross(a, b)
    fa = fit_ols(data, a)
    cov = twoway_cv1(fa, fa.recluster(b), fa.recluster(c.intersection))
    X, u = data.regressors, fa.residuals

    def meat(part):
        s = np.array([X[idx].T @ u[idx] for idx in part.groups()])
        n = part.g_count
        return n / (n - 1) * s.T @ s

    expect = oracles.dense_sandwich(X, meat(a) + meat(b) - meat(c.intersection))
    assert_allclose(cov.matrix, expect, rtol=1e-10)
    assert cov.dof == min(a.g_count, b.g_count) - 1
    psd = twoway_cv1(fa, fa.recluster(b), fa.recluster(c.intersection), include_intersection=False)
    assert psd.psd_flag


@given(st.floats(-40, 40), st.floats(0.5, 500))
@settings(max_examples=200, deadline=None)
def test_student_t_cdf_matches_scipy(x, dof):
    assert abs(student_t_cdf(x, dof) - stats.t.cdf(x, dof)) < 1e-12


def test_student_t_cdf_edges():
    assert student_t_cdf(0.0, 3) == 0.5
    assert student_t_cdf(np.inf, 3) == 1.0
    assert student_t_cdf(-np.inf, 3) == 0.0
    with pytest.raises(ValueError):
        student_t_cdf(1.0, 0)
    assert two_sided_p(0.0, 5) == 1.0
    assert abs(two_sided_p(1.96, None) - 0.05) < 1e-3


def test_t_test_and_single_wald_agree(rng):
    data, part = oracles.random_instance(rng, N=50, G=8, k=3)
    fit = fit_ols(data, part)
    cov = cv1(fit)
    tr = t_test(fit, cov, 1, beta0=0.3)
    assert tr.dof == (7,)
    assert_allclose(tr.p_value, 2 * stats.t.sf(abs(tr.statistic), 7), rtol=1e-10)
    w = wald_test(fit, cov, Restriction.single(3, 1, 0.3))
    assert_allclose(w.statistic, tr.statistic ** 2, rtol=1e-12)
    assert_allclose(w.p_value, tr.p_value, rtol=1e-10)


def test_wald_multi_restriction_uses_f(rng):
    data, part = oracles.random_instance(rng, N=50, G=8, k=3)
    fit = fit_ols(data, part)
    cov = cv1(fit)
    rest = Restriction(np.eye(3)[1:], np.zeros(2))
    w = wald_test(fit, cov, rest)
    gap = fit.beta[1:]
    W = gap @ np.linalg.solve(cov.matrix[1:, 1:], gap)
    assert_allclose(w.statistic, W, rtol=1e-10)
    assert w.dof == (2, 6)
    assert_allclose(w.p_value, stats.f.sf(W * 6 / (2 * 7), 2, 6), rtol=1e-10)
    hw = wald_test(fit, hc1(fit), rest)
    assert hw.dof == (2, None)


def test_wald_rank_bound(rng):
    data, part = oracles.random_instance(rng, N=40, G=3, k=4)
    fit = fit_ols(data, part)
    with pytest.raises(RankDeficiencyError):
        wald_test(fit, cv1(fit), Restriction(np.eye(4)[1:], np.zeros(3)))
