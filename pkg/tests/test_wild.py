import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from clusterinf import (RADEMACHER, BootstrapError, DataError, Dataset, Restriction,
                        boot_p_values, build_partition, ci_bootstrap_se, ci_inversion,
                        ci_percentile_t, cv1, cv3, fit_ols, pairs_cluster_test, singletons,
                        t_test, wcr_test, wcu_test, wr_test, wu_test)
from clusterinf.wild import BootstrapResult, percentile_positions, wild_test

import oracles


def close_to_oracle(fast, slow, tol=1e-10):
    # absolute scale: exact zeros of the fast path meet rounding noise of the oracle
    assert np.all(np.abs(fast - slow) <= tol * np.maximum(1.0, np.abs(slow)))


@pytest.mark.parametrize("studentize", ["cv1", "cv3"])
@pytest.mark.parametrize("test, variant", [(wcr_test, "WCR"), (wcu_test, "WCU")])
def test_fast_path_matches_refitting(rng, test, variant, studentize):
    for _ in range(3):
        data, part = oracles.random_instance(rng, N=35, G=7, k=3)
        fit = fit_ols(data, part)
        rest = Restriction.single(3, 1, 0.2)
        V = RADEMACHER.draw(int(rng.integers(1 << 30)), np.arange(30), 7)
        res = test(fit, rest, draws=V, studentize=studentize)
        slow = oracles.naive_wild(data.regressors, data.outcome, part.codes, rest.R, rest.r, V,
                                  variant=variant, studentize=studentize)
        close_to_oracle(res.replicates, slow)


def test_observed_statistic_matches_t_test(rng):
    data, part = oracles.random_instance(rng, N=40, G=8, k=3)
    fit = fit_ols(data, part)
    rest = Restriction.single(3, 2, 0.1)
    t = t_test(fit, cv1(fit), 2, 0.1).statistic
    for fn in (wcr_test, wcu_test):
        assert_allclose(fn(fit, rest, B=99).tau, t, rtol=1e-10)
    t3 = t_test(fit, cv3(fit), 2, 0.1).statistic
    assert_allclose(wcr_test(fit, rest, B=99, studentize="cv3").tau, t3, rtol=1e-9)


def test_obs_level_matches_refitting(rng):
    data, part = oracles.random_instance(rng, N=24, G=4, k=2)
    fit = fit_ols(data, part)
    rest = Restriction.single(2, 1, 0.0)
    V = RADEMACHER.draw(4, np.arange(20), 24)
    for test, variant in ((wr_test, "WR"), (wu_test, "WU")):
        res = test(fit, rest, draws=V)
        slow = oracles.naive_wild(data.regressors, data.outcome, part.codes, rest.R, rest.r, V,
                                  variant=variant, obs_level=True)
        close_to_oracle(res.replicates, slow)


@pytest.mark.parametrize("studentize", ["cv1", "cv3"])
def test_enumeration_identities(rng, studentize):
    data, part = oracles.random_instance(rng, N=64, G=16, k=2)
    fit = fit_ols(data, part)
    res = wcr_test(fit, Restriction.single(2, 1), aux="rademacher", B=99999,
                   studentize=studentize)
    assert res.enumerated and res.B == 65536 == res.replicates.size
    assert res.replicates[0] == res.tau
    assert res.replicates[-1] == -res.tau
    # every draw has its negation in the grid, so the multiset is symmetric
    assert_array_equal(np.sort(res.replicates), np.sort(-res.replicates))
    assert res.p_symmetric > 0


def test_wcu_all_ones_gives_zero(rng):
    data, part = oracles.random_instance(rng, N=30, G=6, k=2)
    fit = fit_ols(data, part)
    res = wcu_test(fit, Restriction.single(2, 1), draws=np.ones((3, 6)))
    assert_array_equal(res.replicates, 0.0)
    assert_allclose(res.estimates, fit.beta[1], rtol=1e-12)


def test_zero_residuals_give_zero_replicates(rng):
    N = 20
    X = np.column_stack([np.ones(N), rng.normal(size=N)])
    data = Dataset(X @ [1.0, 2.0], X, ("c", "x"))
    fit = fit_ols(data, build_partition(np.arange(N) % 5))
    res = wcu_test(fit, Restriction.single(2, 1, 2.0), B=99, aux="rademacher")
    assert_array_equal(res.replicates, 0.0)


def test_singletons_make_obs_level_equal_cluster_level(rng):
    data, _ = oracles.random_instance(rng, N=30, G=5, k=2)
    fit = fit_ols(data, singletons(30))
    rest = Restriction.single(2, 1)
    assert_array_equal(wr_test(fit, rest, B=199, seed=4).replicates,
                       wcr_test(fit, rest, B=199, seed=4).replicates)
    assert_array_equal(wu_test(fit, rest, B=199, seed=4).replicates,
                       wcu_test(fit, rest, B=199, seed=4).replicates)


def test_results_do_not_depend_on_threads(rng):
    data, part = oracles.random_instance(rng, N=200, G=20, k=3)
    fit = fit_ols(data, part)
    rest = Restriction.single(3, 1)
    a = wcr_test(fit, rest, B=999, seed=3, threads=1)
    b = wcr_test(fit, rest, B=999, seed=3, threads=8)
    assert_array_equal(a.replicates, b.replicates)
    assert a.p_symmetric == b.p_symmetric


def test_default_aux_small_g_is_webb(rng):
    data, part = oracles.random_instance(rng, N=30, G=6, k=2)
    res = wcr_test(fit_ols(data, part), Restriction.single(2, 1), B=999)
    assert res.aux == "webb"
    assert any("Webb" in n for n in res.notes)


def test_warns_when_b_not_exact(rng):
    data, part = oracles.random_instance(rng, N=60, G=15, k=2)
    fit = fit_ols(data, part)
    with pytest.warns(UserWarning, match="not an integer"):
        wcr_test(fit, Restriction.single(2, 1), B=100)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        wcr_test(fit, Restriction.single(2, 1), B=199)


def test_joint_restriction_gives_wald(rng):
    data, part = oracles.random_instance(rng, N=80, G=16, k=3)
    fit = fit_ols(data, part)
    rest = Restriction(np.eye(3)[1:], np.zeros(2))
    res = wcr_test(fit, rest, B=999)
    assert res.n_restrictions == 2
    assert res.tau >= 0 and np.all(res.replicates >= 0)
    assert res.p_symmetric == res.p_equal_tail == res.p_upper


def test_wild_test_dispatch_and_errors(rng):
    data, part = oracles.random_instance(rng, N=30, G=6, k=2)
    fit = fit_ols(data, part)
    rest = Restriction.single(2, 1)
    assert wild_test(fit, rest, variant="wcu", B=99).variant == "WCU"
    with pytest.raises(DataError):
        wcr_test(fit)
    with pytest.raises(DataError):
        wcr_test(fit, rest, draws=np.ones((3, 5)))
    with pytest.raises(DataError):
        wcr_test(fit.recluster(build_partition(np.zeros(30))), rest, B=99)


def test_boot_p_values_counting_example():
    reps = np.arange(-4, 5, dtype=float)
    assert boot_p_values(2.5, reps, "upper") == pytest.approx(2 / 9)
    assert boot_p_values(2.5, reps, "equal_tail") == pytest.approx(4 / 9)
    assert boot_p_values(2.5, reps, "symmetric") == pytest.approx(4 / 9)
    assert boot_p_values(10.0, reps, "upper") == 0.0
    # symmetric set without a tie at zero: both tails hold half, capped at 1
    even = np.array([-4, -3, -2, -1, 1, 2, 3, 4], dtype=float)
    assert boot_p_values(0.0, even, "equal_tail") == 1.0
    assert boot_p_values(0.0, reps, "equal_tail") == pytest.approx(8 / 9)
    assert boot_p_values(2.0, reps, "upper", ties_exceed=True) == pytest.approx(3 / 9)
    with pytest.raises(ValueError):
        boot_p_values(0.0, reps, "left")


@given(st.floats(-5, 5), st.lists(st.floats(-5, 5), min_size=1, max_size=50))
@settings(max_examples=100, deadline=None)
def test_boot_p_values_bounds(tau, reps):
    for kind in ("symmetric", "equal_tail", "upper"):
        p = boot_p_values(tau, reps, kind)
        assert 0.0 <= p <= 1.0
    assert boot_p_values(tau, reps, "upper") <= boot_p_values(tau, reps, "upper",
                                                              ties_exceed=True)


# --------------------------------------------------------------------------- pairs


def _brute_pairs(data, part, j):
    """beta*_j over all G**G ordered draws of whole clusters."""
    import itertools
    G = part.g_count
    out = []
    for pick in itertools.product(range(G), repeat=G):
        rows = np.concatenate([part.members(g) for g in pick])
        X, y = data.regressors[rows], data.outcome[rows]
        try:
            out.append(np.linalg.solve(X.T @ X, X.T @ y)[j])
        except np.linalg.LinAlgError:
            out.append(np.nan)
    return np.array(out)


def test_pairs_enumeration_matches_brute_force(rng):
    data, part = oracles.random_instance(rng, N=15, G=3, k=2)
    res = pairs_cluster_test(data, part, Restriction.single(2, 1), B=999)
    assert res.enumerated and res.B == 27
    brute = _brute_pairs(data, part, 1)
    good = brute[~np.isnan(brute)]
    assert_allclose(np.sort(res.estimates), np.sort(good), rtol=1e-10)


def test_pairs_single_cluster_is_degenerate(rng):
    data, _ = oracles.random_instance(rng, N=10, G=2, k=2)
    res = pairs_cluster_test(data, build_partition(np.zeros(10)), Restriction.single(2, 1), B=99)
    assert res.B == 1
    assert_array_equal(res.replicates, 0.0)


def test_pairs_identical_clusters(rng):
    x = rng.normal(size=6)
    y = 1 + x + rng.normal(size=6)
    X = np.tile(np.column_stack([np.ones(6), x]), (4, 1))
    data = Dataset(np.tile(y, 4), X, ("c", "x"))
    res = pairs_cluster_test(data, build_partition(np.repeat(np.arange(4), 6)),
                             Restriction.single(2, 1), B=99)
    assert_array_equal(res.replicates, 0.0)


def test_pairs_discard_limit(rng):
    # a dummy that is nonzero in one cluster only: most draws omit it
    N, G = 40, 20
    codes = np.repeat(np.arange(G), 2)
    X = np.column_stack([np.ones(N), rng.normal(size=N), (codes == 0).astype(float)])
    data = Dataset(rng.normal(size=N), X, ("c", "x", "d"))
    with pytest.raises(BootstrapError):
        pairs_cluster_test(data, build_partition(codes), Restriction.single(3, 1), B=199)


# --------------------------------------------------------------------------- intervals


def test_percentile_positions():
    assert percentile_positions(99, 0.10) == (5, 95)
    assert percentile_positions(999, 0.05) == (25, 975)


def _fake_result(fit, reps, estimates=None):
    a = np.zeros(fit.k)
    a[1] = 1.0
    reps = np.asarray(reps, dtype=float)
    return BootstrapResult(0.0, reps, 1.0, 1.0, 1.0, reps.size, False, 0, "WCU", "cv1",
                           "rademacher", contrast=a, estimates=estimates)


def test_percentile_t_symmetric_and_shift(rng):
    data, part = oracles.random_instance(rng, N=40, G=8, k=2)
    fit = fit_ols(data, part)
    cov = cv1(fit)
    s = cov.se([0, 1])
    half = np.linspace(0.1, 3.0, 49)
    reps = np.concatenate([-half, [0.0], half])          # B = 99, symmetric
    ci = ci_percentile_t(fit, cov, _fake_result(fit, reps), alpha=0.10)
    srt = np.sort(reps)
    c = srt[94]
    assert ci.lower == fit.beta[1] - s * c
    assert ci.upper == fit.beta[1] + s * c
    assert ci.info["positions"] == (5, 95)
    shifted = ci_percentile_t(fit, cov, _fake_result(fit, reps + 0.5), alpha=0.10)
    assert_allclose([shifted.lower, shifted.upper],
                    [ci.lower - s * 0.5, ci.upper - s * 0.5], rtol=1e-12)


def test_bootstrap_se_interval(rng):
    from scipy import stats

    data, part = oracles.random_instance(rng, N=40, G=8, k=2)
    fit = fit_ols(data, part)
    cov = cv1(fit)
    b = fit.beta[1]
    flat = ci_bootstrap_se(fit, cov, _fake_result(fit, np.zeros(9), np.full(9, b)))
    assert flat.lower == flat.upper == b
    d = 0.3
    est = np.array([b - d, b + d] * 5)
    ci = ci_bootstrap_se(fit, cov, _fake_result(fit, np.zeros(10), est))
    sd = d * math.sqrt(10 / 9)
    assert_allclose(ci.upper - b, stats.t.ppf(0.975, 7) * sd, rtol=1e-12)
    one = ci_bootstrap_se(fit, cov, _fake_result(fit, np.zeros(10), est), alpha=1.0)
    assert one.lower == one.upper == b


def test_ci_inversion_endpoints(rng):
    data, part = oracles.random_instance(rng, N=100, G=20, k=2)
    fit = fit_ols(data, part)
    B, alpha = 399, 0.10
    ci = ci_inversion(fit, 1, B=B, seed=2, alpha=alpha, aux="rademacher")
    assert ci.lower < fit.beta[1] < ci.upper
    for end in (ci.lower, ci.upper):
        res = wcr_test(fit, Restriction.single(2, 1, end), B=B, seed=2, aux="rademacher")
        assert abs(boot_p_values(res.tau, res.replicates, "equal_tail", ties_exceed=True)
                   - alpha) <= 1 / B + 1e-12


def test_ci_inversion_rejects_degenerate_regressor(rng):
    N = 30
    codes = np.arange(N) % 6
    x = rng.normal(size=6)[codes]
    X = np.column_stack([np.ones(N), x, 2 * x + 1])
    data = Dataset(rng.normal(size=N), X, ("c", "x", "z"))
    with pytest.raises(np.linalg.LinAlgError):
        ci_inversion(fit_ols(data, build_partition(codes)), 1, B=99)
