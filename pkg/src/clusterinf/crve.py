"""Cluster-robust variance estimators and the tests built on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .core import DataError
from .estimation import RankDeficiencyError, RegressionFit, Restriction, check_spd

KINDS = ("HC1", "CV1", "CV2", "CV3", "TwoWayCV1")


@dataclass(frozen=True)
class CovEstimate:
    """A k by k coefficient covariance estimate and its reference distribution.

    ``dof`` is the Student-t degrees of freedom used for P values; ``None``
    means the standard normal (used for HC1).
    """

    matrix: np.ndarray
    kind: str
    dof: float | None
    psd_flag: bool = True
    n_clusters: int | tuple[int, ...] = 0
    info: dict = field(default_factory=dict, compare=False)

    def se(self, a=None) -> float | np.ndarray:
        """Standard error of ``a'beta``; all coefficient s.e. when ``a`` is None."""
        if a is None:
            return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))
        a = np.asarray(a, dtype=float)
        return float(np.sqrt(max(a @ self.matrix @ a, 0.0)))


def _psd(M: np.ndarray) -> bool:
    tr = np.trace(M)
    if tr == 0:
        return bool(np.all(M == 0))
    return bool(np.linalg.eigvalsh(M)[0] >= -1e-10 * abs(tr))


def _sandwich(fit: RegressionFit, meat: np.ndarray) -> np.ndarray:
    V = fit.xtx_inv @ meat @ fit.xtx_inv
    return (V + V.T) / 2


def _meat(scores: np.ndarray) -> np.ndarray:
    # einsum keeps a fixed (cluster-order) accumulation
    return np.einsum("gi,gj->ij", scores, scores)


def cv1_factor(G: int, N: int, k: int) -> float:
    return G * (N - 1) / ((G - 1) * (N - k))


def cv1(fit: RegressionFit, *, scale: bool = True) -> CovEstimate:
    """CV1: empirical-score sandwich times ``G(N-1)/((G-1)(N-k))``.

    Set ``scale=False`` for the raw sandwich.
    """
    G, N = fit.g_count, fit.n_obs
    if G < 2:
        raise DataError("cluster-robust variance needs at least two clusters")
    c = cv1_factor(G, N, fit.k_dof) if scale else 1.0
    V = c * _sandwich(fit, _meat(fit.scores))
    return CovEstimate(V, "CV1", G - 1, _psd(V), G)


def hc1(fit: RegressionFit) -> CovEstimate:
    """Heteroskedasticity-robust HC1 with a standard normal reference."""
    X, u = fit.data.regressors, fit.residuals
    N = fit.n_obs
    meat = (X * (u * u)[:, None]).T @ X
    V = N / (N - fit.k_dof) * _sandwich(fit, meat)
    return CovEstimate(V, "HC1", None, _psd(V), N)


def _half_power_scores(fit: RegressionFit, power: float, floor: float = 1e-10) -> np.ndarray:
    """Scores ``X_g' M_gg^{-power} u_g`` without forming N_g by N_g matrices.

    With ``Z_g = X_g A^{1/2}`` and ``A = (X'X)^{-1}``, the nonzero eigenvalues
    of ``X_g A X_g'`` are those of the k by k matrix ``Z_g'Z_g``, so the
    matrix function reduces to a k-dimensional eigendecomposition.
    """
    w, U = np.linalg.eigh(fit.xtx_inv)
    A_half = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    out = np.empty_like(fit.scores)
    for g in range(fit.g_count):
        B = fit.xtx_g[g]
        lam, Q = np.linalg.eigh(A_half @ B @ A_half)
        lam = np.clip(lam, 0.0, None)
        m_min = 1.0 - lam.max()
        if m_min < floor:
            raise RankDeficiencyError(
                f"M_gg for cluster {fit.clusters.labels[g]!r} is singular "
                f"(min eigenvalue {m_min:.3g}); absorb cluster fixed effects with "
                "within_transform before using CV2/CV3"
            )
        one_minus = 1.0 - lam
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lam > 1e-14, (one_minus ** -power - 1.0) / lam, power)
        s = fit.scores[g]
        out[g] = s + B @ A_half @ (Q @ (ratio * (Q.T @ (A_half @ s))))
    return out


def cv2(fit: RegressionFit) -> CovEstimate:
    """CV2: scores built from ``M_gg^{-1/2}``-transformed residuals."""
    G = fit.g_count
    if G < 2:
        raise DataError("cluster-robust variance needs at least two clusters")
    s = _half_power_scores(fit, 0.5)
    V = _sandwich(fit, _meat(s))
    return CovEstimate(V, "CV2", G - 1, _psd(V), G)


def deleted_estimates(fit: RegressionFit) -> np.ndarray:
    """Coefficients re-estimated with each cluster removed (G by k).

    Uses only the cached ``X_g'X_g`` and ``X_g'y_g`` blocks.
    """
    xtx = fit.xtx
    xty = fit.data.regressors.T @ fit.data.outcome
    out = np.empty((fit.g_count, fit.k))
    for g in range(fit.g_count):
        A = xtx - fit.xtx_g[g]
        try:
            check_spd((A + A.T) / 2, fit.data.names, what="X'X without this cluster")
        except RankDeficiencyError as exc:
            raise RankDeficiencyError(
                f"deleting cluster {fit.clusters.labels[g]!r} leaves a singular problem; "
                f"the full-sample estimates should probably not be believed ({exc})"
            ) from None
        out[g] = np.linalg.solve(A, xty - fit.xty_g[g])
    return out


def cv3_jackknife(fit: RegressionFit) -> tuple[CovEstimate, np.ndarray]:
    """CV3 computed as the delete-one-cluster jackknife.

    Returns
    -------
    cov : CovEstimate
        ``(G-1)/G * sum_g (b_g - b)(b_g - b)'``.
    deleted : ndarray
        G by k matrix of delete-one-cluster estimates ``b_g``.
    """
    G = fit.g_count
    if G < 2:
        raise DataError("cluster-robust variance needs at least two clusters")
    deleted = deleted_estimates(fit)
    dev = deleted - fit.beta
    V = (G - 1) / G * _meat(dev)
    V = (V + V.T) / 2
    return CovEstimate(V, "CV3", G - 1, _psd(V), G), deleted


def cv3(fit: RegressionFit) -> CovEstimate:
    return cv3_jackknife(fit)[0]


def twoway_cv1(fit_a: RegressionFit, fit_b: RegressionFit, fit_ab: RegressionFit, *,
               scale: bool = True, obs_factor: bool = False,
               include_intersection: bool = True, dof: float | None = None) -> CovEstimate:
    """Two-way cluster-robust covariance.

    The meat is ``c_G S_G + c_H S_H - c_GH S_GH`` where each ``S`` sums the
    outer products of scores for one partition. With ``scale`` each term gets
    its own ``n/(n-1)`` factor (n = clusters in that term); ``obs_factor``
    multiplies everything by ``(N-1)/(N-k)`` as well. ``include_intersection
    =False`` drops the subtracted term, which guarantees a PSD result.

    The reference distribution defaults to ``t(min(G, H) - 1)``.
    """
    for f in (fit_b, fit_ab):
        if f.data is not fit_a.data and not (
            np.array_equal(f.beta, fit_a.beta) and f.n_obs == fit_a.n_obs
        ):
            raise DataError("two-way fits must share the same data and estimates")
    G, H, GH = fit_a.g_count, fit_b.g_count, fit_ab.g_count
    if min(G, H) < 2:
        raise DataError("two-way clustering needs at least two clusters in each dimension")

    def c(n):
        return n / (n - 1) if scale and n > 1 else 1.0

    meat = c(G) * _meat(fit_a.scores) + c(H) * _meat(fit_b.scores)
    if include_intersection:
        meat = meat - c(GH) * _meat(fit_ab.scores)
    if obs_factor:
        N = fit_a.n_obs
        meat = meat * (N - 1) / (N - fit_a.k_dof)
    V = _sandwich(fit_a, meat)
    if dof is None:
        dof = min(G, H) - 1
    return CovEstimate(V, "TwoWayCV1", dof, _psd(V), (G, H, GH),
                       {"include_intersection": include_intersection})


# --------------------------------------------------------------------------- tests


@dataclass(frozen=True)
class TestResult:
    """Outcome of a t or Wald test."""

    statistic: float
    kind: str
    dof: tuple
    p_value: float
    estimate: float | None = None
    std_error: float | None = None

    __test__ = False   # keep pytest from collecting this class


def student_t_cdf(x: float, dof: float) -> float:
    """Student-t CDF via the regularized incomplete beta function."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x == 0:
        return 0.5
    if np.isinf(x):
        return 1.0 if x > 0 else 0.0
    z = x * x / (dof + x * x)
    if z < 0.5:
        # near zero the central mass is the accurate quantity
        half = 0.5 * special.betainc(0.5, dof / 2.0, z)
        return float(0.5 + half if x > 0 else 0.5 - half)
    tail = 0.5 * special.betainc(dof / 2.0, 0.5, 1.0 - z)
    return float(1.0 - tail if x > 0 else tail)


def two_sided_p(t: float, dof: float | None) -> float:
    """P(|T| >= |t|) for Student t(dof), or the normal when ``dof`` is None."""
    if dof is None or np.isinf(dof):
        return float(2.0 * stats.norm.sf(abs(t)))
    return float(min(1.0, special.betainc(dof / 2.0, 0.5, dof / (dof + t * t)))) if t != 0 else 1.0


def t_test(fit: RegressionFit, cov: CovEstimate, a, beta0: float = 0.0) -> TestResult:
    """Test ``a'beta = beta0`` (``a`` may be a coefficient index or a k-vector)."""
    if np.isscalar(a) and float(a).is_integer():
        j = int(a)
        a = np.zeros(fit.k)
        a[j] = 1.0
    a = np.asarray(a, dtype=float)
    var = float(a @ cov.matrix @ a)
    if not var > 0:
        raise RankDeficiencyError("a'Va is zero; the t statistic is undefined")
    est = float(a @ fit.beta)
    se = np.sqrt(var)
    t = (est - beta0) / se
    return TestResult(t, "t", (cov.dof,), two_sided_p(t, cov.dof), est, se)


def wald_test(fit: RegressionFit, cov: CovEstimate, rest: Restriction) -> TestResult:
    """Wald test of ``R beta = r``, referred to F(r, G - r) after rescaling.

    The statistic reported is W itself; the P value uses
    ``W (G - r) / (r (G - 1))`` against F(r, G - r), where ``G - 1`` is the
    covariance's reference d.o.f. With a normal reference (HC1), ``W/r`` is
    compared with chi-square(r)/r.
    """
    R, r = rest.R, rest.r
    q = rest.n_restrictions
    gap = R @ fit.beta - r
    RVR = R @ cov.matrix @ R.T
    if cov.dof is not None and q > cov.dof:
        raise RankDeficiencyError(
            f"{q} restrictions exceed the CRVE rank bound (G - 1 = {cov.dof})")
    try:
        W = float(gap @ np.linalg.solve(RVR, gap))
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError("R V R' is singular") from exc
    if cov.dof is None:
        p = float(stats.chi2.sf(W, q))
        return TestResult(W, "Wald", (q, None), p)
    G = cov.dof + 1
    if G - q <= 0:
        raise RankDeficiencyError(f"{q} restrictions leave no denominator d.o.f. with G = {G}")
    F = W * (G - q) / (q * (G - 1))
    if q == 1:
        # F(1, m) = t(m)^2; use the t tail directly for full precision
        p = two_sided_p(np.sqrt(W), G - 1)
    else:
        p = float(stats.f.sf(F, q, G - q))
    return TestResult(W, "Wald", (q, G - q), min(max(p, 0.0), 1.0))
