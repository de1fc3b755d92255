"""Data-generating processes with clustered dependence and a Monte Carlo size runner."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from ._parallel import chunk_bounds, pmap
from .core import ClusterPartition, DataError, Dataset, _from_codes
from .crve import cv1, cv2, cv3, hc1, two_sided_p
from .estimation import RankDeficiencyError, RegressionFit, Restriction, fit_ols
from .rng import replication_rng
from .wild import BootstrapError, wcr_test, wcu_test

KINDS = ("iid", "random_effects", "factor", "ar1_placebo")
SIZE_PATTERNS = ("equal", "lognormal", "one_dominant")
REGRESSORS = ("cluster_normal", "cluster_dummy", "obs_normal", "ar1")
METHODS = ("HC1", "CV1", "CV2", "CV3", "WCR", "WCU", "WCR-CV3")


@dataclass(frozen=True)
class DGPSpec:
    """Design of one Monte Carlo experiment.

    Disturbances are ``u_gi = lambda_gi e_g + e_gi`` with ``e_g ~ N(0, 1)``
    and ``e_gi ~ N(0, omega^2)``; ``lambda_gi = lam`` for random effects and
    ``lam + lam_sd z_gi`` for the factor model. ``ar1_placebo`` builds a
    state-by-period panel whose disturbance carries its own stationary AR(1)
    state-period component ``lam * w_st``.

    The tested regressor is a placebo with true coefficient ``beta``:
    ``cluster_normal`` and ``cluster_dummy`` are constant within clusters,
    ``obs_normal`` has a cluster component of weight ``x_lam``, and ``ar1``
    is ``delta v_st + (1 - delta) e_ist``.
    """

    kind: str = "random_effects"
    G: int = 50
    size: int = 20
    size_pattern: str = "equal"
    lognormal_sigma: float = 0.5
    dominant_share: float = 0.5
    lam: float = 1.0
    lam_sd: float = 0.0
    omega: float = 1.0
    rho: float = 0.5
    delta: float = 0.5
    periods: int = 10
    regressor: str = "cluster_normal"
    dummy_share: float = 0.5
    x_lam: float = 1.0
    beta: float = 0.0
    intercept: float = 1.0
    heavy_tails: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"kind must be one of {KINDS}")
        if self.size_pattern not in SIZE_PATTERNS:
            raise DataError(f"size_pattern must be one of {SIZE_PATTERNS}")
        if self.regressor not in REGRESSORS:
            raise DataError(f"regressor must be one of {REGRESSORS}")
        if not self.omega > 0:
            raise DataError("omega must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise DataError("rho must lie in [0, 1)")
        if not 0.0 <= self.delta <= 1.0:
            raise DataError("delta must lie in [0, 1]")
        if self.G < 1 or self.size < 1:
            raise DataError("G and size must be positive")
        if not 0.0 < self.dominant_share < 1.0:
            raise DataError("dominant_share must lie in (0, 1)")
        if self.kind == "ar1_placebo" and self.size % self.periods:
            raise DataError("for ar1_placebo, size must be a multiple of periods")


def cluster_sizes(spec: DGPSpec) -> np.ndarray:
    """Deterministic cluster sizes for the requested pattern.

    ``lognormal`` uses evenly spaced quantiles of a lognormal with the
    given sigma, scaled to mean ``size``; ``one_dominant`` gives cluster 0
    the share ``dominant_share`` of all observations.
    """
    G, m = spec.G, spec.size
    if spec.kind == "ar1_placebo" or spec.size_pattern == "equal":
        return np.full(G, m, dtype=np.int64)
    if spec.size_pattern == "lognormal":
        z = stats.norm.ppf((np.arange(G) + 0.5) / G)
        w = np.exp(spec.lognormal_sigma * z)
        return np.maximum(2, np.round(m * w / w.mean())).astype(np.int64)
    sizes = np.full(G, m, dtype=np.int64)
    if G > 1:
        s = spec.dominant_share
        sizes[0] = int(round(s / (1 - s) * m * (G - 1)))
    return sizes


@dataclass
class Sample:
    y: np.ndarray
    X: np.ndarray
    names: tuple
    codes: np.ndarray
    periods: np.ndarray | None = None

    def dataset(self) -> Dataset:
        return Dataset(self.y, self.X, self.names)

    def partition(self) -> ClusterPartition:
        return _from_codes(self.codes, tuple(range(int(self.codes.max()) + 1)))


def _shocks(rng, shape, heavy: bool) -> np.ndarray:
    if heavy:
        # unit-variance Student t(5)
        return rng.standard_t(5, size=shape) * np.sqrt(3.0 / 5.0)
    return rng.standard_normal(shape)


def ar1_panel(rng: np.random.Generator, n_series: int, T: int, rho: float,
              heavy: bool = False) -> np.ndarray:
    """Stationary AR(1) paths ``v_t = rho v_{t-1} + e_t``, shape (n_series, T).

    The first value is drawn from the stationary law ``N(0, 1/(1-rho^2))``.
    """
    e = _shocks(rng, (n_series, T), heavy)
    v = np.empty((n_series, T))
    v[:, 0] = e[:, 0] / np.sqrt(1.0 - rho * rho)
    for t in range(1, T):
        v[:, t] = rho * v[:, t - 1] + e[:, t]
    return v


def _disturbances(spec: DGPSpec, rng, codes, periods):
    G, N = spec.G, len(codes)
    if spec.kind == "ar1_placebo":
        w = ar1_panel(rng, G, spec.periods, spec.rho, spec.heavy_tails)
        return spec.lam * w[codes, periods] + spec.omega * _shocks(rng, N, spec.heavy_tails)
    eps_g = _shocks(rng, G, spec.heavy_tails)
    eps_gi = spec.omega * _shocks(rng, N, spec.heavy_tails)
    if spec.kind == "iid":
        return eps_gi
    if spec.kind == "random_effects":
        return spec.lam * eps_g[codes] + eps_gi
    loads = spec.lam + spec.lam_sd * rng.standard_normal(N)
    return loads * eps_g[codes] + eps_gi


def _layout(spec: DGPSpec):
    sizes = cluster_sizes(spec)
    codes = np.repeat(np.arange(spec.G), sizes)
    if spec.kind == "ar1_placebo":
        per = spec.size // spec.periods
        periods = np.tile(np.repeat(np.arange(spec.periods), per), spec.G)
    else:
        periods = None
    return codes, periods


def gen_disturbances(spec: DGPSpec, seed: int, rep: int = 0) -> np.ndarray:
    """Disturbance vector for replication ``rep`` of the design."""
    codes, periods = _layout(spec)
    return _disturbances(spec, replication_rng(seed, rep), codes, periods)


def simulate(spec: DGPSpec, rng: np.random.Generator) -> Sample:
    """One sample: intercept plus placebo regressor, outcome under ``beta``."""
    codes, periods = _layout(spec)
    G, N = spec.G, len(codes)
    u = _disturbances(spec, rng, codes, periods)
    if spec.regressor == "cluster_normal":
        x = rng.standard_normal(G)[codes]
    elif spec.regressor == "cluster_dummy":
        n1 = min(G - 1, max(1, int(round(spec.dummy_share * G))))
        treated = np.zeros(G)
        treated[rng.choice(G, n1, replace=False)] = 1.0
        x = treated[codes]
    elif spec.regressor == "obs_normal":
        x = spec.x_lam * rng.standard_normal(G)[codes] + rng.standard_normal(N)
    else:
        if periods is None:
            raise DataError("the ar1 regressor needs kind='ar1_placebo'")
        v = ar1_panel(rng, G, spec.periods, spec.rho)
        x = spec.delta * v[codes, periods] + (1 - spec.delta) * rng.standard_normal(N)
    X = np.column_stack([np.ones(N), x])
    y = spec.intercept + spec.beta * x + u
    return Sample(y, X, ("const", "x"), codes, periods)


def demeaned_covariance(loadings, omega: float = 1.0, *, factor_only: bool = False) -> np.ndarray:
    """Covariance of within-cluster demeaned factor-model disturbances.

    For one cluster with loadings ``lambda_i`` this is
    ``(lambda_i - lbar)(lambda_j - lbar) + omega^2 (delta_ij - 1/n)``; the
    first term vanishes exactly when all loadings are equal.
    """
    lam = np.asarray(loadings, dtype=float)
    n = lam.size
    d = lam - lam.mean()
    out = np.outer(d, d)
    if not factor_only:
        out = out + omega ** 2 * (np.eye(n) - 1.0 / n)
    return out


def gen_demeaned_covariance_check(spec_or_loadings, omega: float | None = None,
                                  factor_only: bool = False) -> np.ndarray:
    """Analytic demeaned covariance for a loading vector or a DGPSpec.

    With a spec, the loadings are the constant ``lam`` over one cluster of
    size ``spec.size``.
    """
    if isinstance(spec_or_loadings, DGPSpec):
        s = spec_or_loadings
        return demeaned_covariance(np.full(s.size, s.lam), s.omega, factor_only=factor_only)
    return demeaned_covariance(spec_or_loadings, 1.0 if omega is None else omega,
                               factor_only=factor_only)


# --------------------------------------------------------------------------- test methods


def method_pvalue(fit: RegressionFit, j: int, method: str, *, B: int = 399, seed: int = 0,
                  beta0: float = 0.0) -> float:
    """Two-sided P value for ``beta_j = beta0`` by one inference method.

    HC1 ignores the clustering of ``fit``; CV1/CV2/CV3 use t(G-1); the
    wild bootstraps report the symmetric bootstrap P value.
    """
    m = method.upper()
    a = np.zeros(fit.k)
    a[j] = 1.0
    if m in ("HC1", "CV1", "CV2", "CV3"):
        cov = {"HC1": hc1, "CV1": cv1, "CV2": cv2, "CV3": cv3}[m](fit)
        se = cov.se(a)
        if not se > 0:
            return 1.0 if fit.beta[j] == beta0 else 0.0
        return two_sided_p((fit.beta[j] - beta0) / se, cov.dof)
    if m in ("WCR", "WCU", "WCR-CV3"):
        rest = Restriction.single(fit.k, j, beta0)
        fn = wcu_test if m == "WCU" else wcr_test
        stud = "cv3" if m == "WCR-CV3" else "cv1"
        return fn(fit, rest, B=B, seed=seed, studentize=stud, aux="rademacher").p_symmetric
    raise DataError(f"unknown method {method!r}; choose from {METHODS}")


@dataclass
class MonteCarloReport:
    """Rejection frequencies per method with binomial Monte Carlo errors."""

    methods: list
    rejections: dict
    reps: int
    level: float
    seed: int
    failures: dict = field(default_factory=dict)
    design: dict = field(default_factory=dict)
    seconds: float = 0.0

    def rate(self, method: str) -> float:
        return self.rejections[method] / self.reps

    def mc_se(self, method: str) -> float:
        p = self.rate(method)
        return float(np.sqrt(p * (1 - p) / self.reps))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"method": m, "rejections": self.rejections[m], "reps": self.reps,
             "rejection_pct": 100 * self.rate(m), "mc_se_pct": 100 * self.mc_se(m),
             "failures": self.failures.get(m, 0)}
            for m in self.methods
        ])

    def as_dict(self) -> dict:
        return {"reps": self.reps, "level": self.level, "seed": self.seed,
                "design": self.design,
                "results": self.to_frame().to_dict(orient="records")}


def _derived_seed(seed: int, rep: int) -> int:
    return int(replication_rng(seed, rep).integers(0, 2 ** 62))


def run_size_experiment(spec: DGPSpec, methods, level: float = 0.05, reps: int = 1000,
                        seed: int = 0, *, boot_reps: int = 399, threads: int | None = None,
                        chunk: int = 16) -> MonteCarloReport:
    """Rejection frequencies of ``beta_x = spec.beta`` across replications.

    Replication ``r`` draws from its own stream ``(seed, r)``, so the report
    depends only on ``seed`` and ``reps``. A method that fails numerically
    in a replication counts as not rejecting and is tallied in ``failures``.
    """
    methods = list(methods)
    for m in methods:
        if m.upper() not in METHODS:
            raise DataError(f"unknown method {m!r}; choose from {METHODS}")
    t0 = time.perf_counter()

    def work(bounds):
        lo, hi = bounds
        out = np.zeros((hi - lo, len(methods)), dtype=np.int8)
        for i, rep in enumerate(range(lo, hi)):
            sample = simulate(spec, replication_rng(seed, rep))
            try:
                fit = fit_ols(sample.dataset(), sample.partition())
            except RankDeficiencyError:
                out[i] = -1
                continue
            bseed = _derived_seed(seed ^ 0x5EED, rep)
            for c, m in enumerate(methods):
                try:
                    p = method_pvalue(fit, 1, m, B=boot_reps, seed=bseed, beta0=spec.beta)
                    out[i, c] = p < level
                except (RankDeficiencyError, BootstrapError, DataError):
                    out[i, c] = -1
        return out

    res = np.concatenate(pmap(work, chunk_bounds(reps, chunk), threads))
    rejections = {m: int(np.sum(res[:, c] == 1)) for c, m in enumerate(methods)}
    failures = {m: int(np.sum(res[:, c] == -1)) for c, m in enumerate(methods)}
    return MonteCarloReport(methods, rejections, reps, level, seed, failures, asdict(spec),
                            time.perf_counter() - t0)


def report_json(report: MonteCarloReport) -> str:
    return json.dumps(report.as_dict(), sort_keys=True)


def simulate_nested(rng: np.random.Generator, G_coarse: int, fine_per: int, obs_per: int, *,
                    rho_fine: float = 0.2, rho_coarse: float = 0.0,
                    x_coarse: float = 0.5, x_fine: float = 0.25) -> tuple[Sample, np.ndarray]:
    """Two-level clustered sample for score-variance experiments.

    The disturbance is a sum of a coarse component (intra-coarse correlation
    ``rho_coarse``), a fine component (extra intra-fine correlation
    ``rho_fine``) and noise, with unit variance. The regressor is built the
    same way with shares ``x_coarse`` and ``x_fine``. Returns the sample
    (clustered at the fine level) and the coarse code of every observation.
    """
    for c, f in ((rho_coarse, rho_fine), (x_coarse, x_fine)):
        if c < 0 or f < 0 or c + f > 1:
            raise DataError("variance shares must be non-negative and sum to at most 1")
    H = G_coarse * fine_per
    N = H * obs_per
    fine = np.repeat(np.arange(H), obs_per)
    coarse = fine // fine_per

    def component(c, f):
        out = np.sqrt(c) * rng.standard_normal(G_coarse)[coarse]
        out += np.sqrt(f) * rng.standard_normal(H)[fine]
        return out + np.sqrt(1 - c - f) * rng.standard_normal(N)

    x = component(x_coarse, x_fine)
    u = component(rho_coarse, rho_fine)
    X = np.column_stack([np.ones(N), x])
    return Sample(1.0 + u, X, ("const", "x"), fine), coarse
