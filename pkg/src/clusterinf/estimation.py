"""OLS and linearly restricted OLS with per-cluster cross-product blocks."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .core import ClusterPartition, DataError, Dataset

RCOND_MIN = 1e-12


class RankDeficiencyError(np.linalg.LinAlgError):
    """X'X (or a derived matrix) is singular to working precision."""


@dataclass(frozen=True)
class Restriction:
    """Linear hypothesis ``R beta = r``."""

    R: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        if r.shape != (R.shape[0],):
            raise DataError(f"R has {R.shape[0]} rows but r has shape {r.shape}")
        if R.shape[0] > R.shape[1]:
            raise DataError("more restrictions than coefficients")
        if np.linalg.matrix_rank(R) < R.shape[0]:
            raise DataError("restriction matrix R must have full row rank")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)

    @classmethod
    def single(cls, k: int, j: int, value: float = 0.0) -> "Restriction":
        """The hypothesis ``beta_j = value``."""
        a = np.zeros(k)
        a[j] = 1.0
        return cls(a[None, :], np.array([value]))

    @classmethod
    def linear(cls, a, value: float = 0.0) -> "Restriction":
        """The hypothesis ``a'beta = value``."""
        a = np.asarray(a, dtype=float)
        return cls(a[None, :], np.array([value]))

    @property
    def n_restrictions(self) -> int:
        return self.R.shape[0]

    @property
    def a(self) -> np.ndarray:
        if self.n_restrictions != 1:
            raise DataError("restriction has more than one row")
        return self.R[0]


@dataclass(frozen=True)
class RestrictedPart:
    restriction: Restriction
    beta: np.ndarray
    residuals: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """OLS estimates together with the cluster blocks later stages consume.

    Attributes
    ----------
    beta : (k,) coefficients.
    residuals : (N,) OLS residuals.
    xtx, xtx_inv : (k, k) cross-product matrix and its inverse.
    xtx_g : (G, k, k) per-cluster ``X_g'X_g``.
    xty_g : (G, k) per-cluster ``X_g'y_g``.
    scores : (G, k) empirical scores ``X_g'u_g``.
    restricted : optional restricted estimates and scores.
    """

    data: Dataset
    clusters: ClusterPartition
    beta: np.ndarray
    residuals: np.ndarray
    xtx: np.ndarray
    xtx_inv: np.ndarray
    xtx_g: np.ndarray
    xty_g: np.ndarray
    scores: np.ndarray
    count_absorbed: bool = True
    restricted: RestrictedPart | None = None

    @property
    def n_obs(self) -> int:
        return self.data.n_obs

    @property
    def k(self) -> int:
        return self.data.k

    @property
    def k_dof(self) -> int:
        """Parameter count used in d.o.f. corrections (adds absorbed effects by default)."""
        return self.data.k + (self.data.absorbed if self.count_absorbed else 0)

    @property
    def g_count(self) -> int:
        return self.clusters.g_count

    @cached_property
    def _chol(self):
        return linalg.cho_factor(self.xtx, lower=True)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """``(X'X)^{-1} b`` via the stored Cholesky factor."""
        return linalg.cho_solve(self._chol, b)

    @property
    def ssr(self) -> float:
        return float(self.residuals @ self.residuals)

    def recluster(self, clusters: ClusterPartition) -> "RegressionFit":
        """Same estimates, blocks recomputed for a different partition."""
        return _assemble(self.data, clusters, self.beta, self.residuals, self.xtx,
                         self.xtx_inv, self.count_absorbed, self.restricted)

    def with_restriction(self, rest: Restriction) -> "RegressionFit":
        """Attach restricted estimates without touching the raw data twice."""
        R, r = rest.R, rest.r
        if R.shape[1] != self.k:
            raise DataError(f"restriction has {R.shape[1]} columns, model has k={self.k}")
        A = self.solve(R.T)                       # (X'X)^{-1} R'
        middle = R @ A
        gap = R @ self.beta - r
        try:
            lam = linalg.solve(middle, gap, assume_a="pos")
        except linalg.LinAlgError as exc:
            raise RankDeficiencyError("R (X'X)^{-1} R' is singular") from exc
        shift = A @ lam                           # beta_hat - beta_tilde
        beta_t = self.beta - shift
        X = self.data.regressors
        resid_t = self.residuals + X @ shift
        scores_t = self.scores + self.xtx_g @ shift
        part = RestrictedPart(rest, beta_t, resid_t, scores_t)
        return RegressionFit(self.data, self.clusters, self.beta, self.residuals, self.xtx,
                             self.xtx_inv, self.xtx_g, self.xty_g, self.scores,
                             self.count_absorbed, part)


def check_spd(M: np.ndarray, names=None, what: str = "X'X") -> None:
    """Raise RankDeficiencyError if a symmetric matrix is numerically singular.

    The check runs on the unit-diagonal rescaling of ``M`` so that column
    units do not matter. Offending columns are named from the eigenvectors
    of the smallest eigenvalues.
    """
    k = M.shape[0]
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    d = np.sqrt(np.clip(np.diag(M), 0.0, None))
    zero = d == 0
    if zero.any():
        bad = [names[j] for j in np.flatnonzero(zero)]
        raise RankDeficiencyError(f"{what} is singular: zero column(s) {bad}")
    C = M / np.outer(d, d)
    w, V = np.linalg.eigh(C)
    if w[0] <= RCOND_MIN * w[-1]:
        small = w <= RCOND_MIN * w[-1]
        weight = np.abs(V[:, small]).max(axis=1)
        bad = [names[j] for j in np.flatnonzero(weight > 1e-3)]
        raise RankDeficiencyError(
            f"{what} is singular (reciprocal condition {w[0] / w[-1]:.3g}); "
            f"collinear column(s): {bad}"
        )


def _assemble(data, clusters, beta, resid, xtx, xtx_inv, count_absorbed, restricted=None):
    X, y = data.regressors, data.outcome
    if clusters.n_obs != data.n_obs:
        raise DataError(f"partition covers {clusters.n_obs} rows, data has {data.n_obs}")
    k = X.shape[1]
    outer = (X[:, :, None] * X[:, None, :]).reshape(len(y), k * k)
    xtx_g = clusters.cluster_sum(outer).reshape(-1, k, k)
    xty_g = clusters.cluster_sum(X * y[:, None])
    scores = clusters.cluster_sum(X * resid[:, None])
    if restricted is not None:
        restricted = RestrictedPart(restricted.restriction, restricted.beta,
                                    restricted.residuals,
                                    clusters.cluster_sum(X * restricted.residuals[:, None]))
    for a in (xtx_g, xty_g, scores):
        a.setflags(write=False)
    return RegressionFit(data, clusters, beta, resid, xtx, xtx_inv, xtx_g, xty_g, scores,
                         count_absorbed, restricted)


def fit_ols(data: Dataset, clusters: ClusterPartition, *, count_absorbed: bool = True) -> RegressionFit:
    """Least squares fit with per-cluster blocks and empirical scores.

    Parameters
    ----------
    data : Dataset
    clusters : ClusterPartition
        Partition used for the cached blocks and scores.
    count_absorbed : bool
        Whether absorbed fixed effects count toward k in d.o.f. corrections.

    Raises
    ------
    RankDeficiencyError
        If X'X is singular, naming the collinear columns.
    """
    X, y = data.regressors, data.outcome
    xtx = X.T @ X
    xtx = (xtx + xtx.T) / 2
    check_spd(xtx, data.names)
    cf = linalg.cho_factor(xtx, lower=True)
    beta = linalg.cho_solve(cf, X.T @ y)
    xtx_inv = linalg.cho_solve(cf, np.eye(X.shape[1]))
    xtx_inv = (xtx_inv + xtx_inv.T) / 2
    resid = y - X @ beta
    return _assemble(data, clusters, beta, resid, xtx, xtx_inv, count_absorbed)


def fit_restricted(data: Dataset, clusters: ClusterPartition, rest: Restriction,
                   *, count_absorbed: bool = True) -> RegressionFit:
    """OLS fit plus the estimates that minimise SSR subject to ``R beta = r``."""
    return fit_ols(data, clusters, count_absorbed=count_absorbed).with_restriction(rest)
