"""Cluster-level leverage, partial leverage, influence and size summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import ClusterPartition, DataError
from .crve import deleted_estimates
from .estimation import RankDeficiencyError, RegressionFit


def leverage(fit: RegressionFit) -> np.ndarray:
    """Trace of each cluster's hat-matrix block, ``Tr(X_g'X_g (X'X)^{-1})``."""
    return np.einsum("gkl,lk->g", fit.xtx_g, fit.xtx_inv)


def partial_residual(fit: RegressionFit, j: int) -> np.ndarray:
    """Column ``j`` with every other regressor partialled out."""
    X = fit.data.regressors
    xj = X[:, j]
    others = np.delete(X, j, axis=1)
    if others.shape[1]:
        Q, _ = np.linalg.qr(others)
        xj = xj - Q @ (Q.T @ xj)
    denom = float(xj @ xj)
    if not denom > 1e-12 * float(X[:, j] @ X[:, j]):
        raise RankDeficiencyError(
            f"regressor {fit.data.names[j]!r} has no variation after partialling out the others")
    return xj


def partial_leverage(fit: RegressionFit, j: int) -> np.ndarray:
    """Share of the partialled-out column's sum of squares in each cluster."""
    xj = partial_residual(fit, j)
    num = fit.clusters.cluster_sum(xj * xj)
    return num / num.sum()


def influence(fit: RegressionFit) -> np.ndarray:
    """Delete-one-cluster coefficient vectors (G by k)."""
    return deleted_estimates(fit)


def effective_clusters(partial_leverages) -> tuple[float, float]:
    """Squared coefficient of variation of partial leverages and ``G/(1+V_s)``.

    >>> effective_clusters([0.5, 0.25, 0.25])
    (0.125, 2.6666666666666665)
    """
    L = np.asarray(partial_leverages, dtype=float)
    G = L.size
    mean = L.mean()
    if not mean > 0:
        raise DataError("mean partial leverage must be positive")
    v_s = float(np.sum((L - mean) ** 2) / (G * mean * mean))
    return v_s, G / (1.0 + v_s)


def moulton_factor(M: float, rho: float) -> float:
    """Variance inflation ``1 + (M-1) rho`` for equal clusters of size M."""
    if M < 1:
        raise DataError("cluster size must be at least 1")
    if not 0.0 <= rho <= 1.0:
        raise DataError("rho must lie in [0, 1]")
    return 1.0 + (M - 1) * rho


@dataclass(frozen=True)
class SizeSummary:
    G: int
    N: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def size_summary(partition: ClusterPartition) -> SizeSummary:
    """Cluster-size distribution; quartiles interpolate linearly (type 7)."""
    s = partition.sizes.astype(float)
    q1, med, q3 = np.quantile(s, [0.25, 0.5, 0.75], method="linear")
    return SizeSummary(partition.g_count, partition.n_obs, float(s.min()), float(q1), float(med),
                       float(q3), float(s.max()), float(s.mean()))


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-cluster diagnostics for one fit and one coefficient."""

    labels: tuple
    sizes: np.ndarray
    leverages: np.ndarray
    coefficient: str
    partial_leverages: np.ndarray
    deleted: np.ndarray
    beta_hat: float
    v_s: float
    g_star0: float
    summary: SizeSummary
    extra: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "cluster": [str(c) for c in self.labels],
            "N_g": self.sizes,
            "leverage": self.leverages,
            "partial_leverage": self.partial_leverages,
            "deleted_estimate": self.deleted,
        })

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")

    def edf_frame(self) -> pd.DataFrame:
        """Sorted leverages and partial leverages, each rescaled to sum to one."""
        G = len(self.labels)
        return pd.DataFrame({
            "rank": np.arange(1, G + 1),
            "edf": np.arange(1, G + 1) / G,
            "leverage": np.sort(self.leverages / self.leverages.sum()),
            "partial_leverage": np.sort(self.partial_leverages),
        })

    def as_dict(self) -> dict:
        top = np.argsort(-np.abs(self.deleted - self.beta_hat))[:5]
        return {
            "G": len(self.labels),
            "N": int(self.summary.N),
            "sizes": self.summary.as_dict(),
            "coefficient": self.coefficient,
            "beta_hat": self.beta_hat,
            "max_leverage": float(self.leverages.max()),
            "mean_leverage": float(self.leverages.mean()),
            "max_partial_leverage": float(self.partial_leverages.max()),
            "V_s": self.v_s,
            "g_star0": self.g_star0,
            "most_influential": [
                {"cluster": str(self.labels[g]), "deleted_estimate": float(self.deleted[g])}
                for g in top
            ],
            **self.extra,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def diagnose(fit: RegressionFit, j: int | str) -> DiagnosticsReport:
    """Leverage, partial leverage and influence for coefficient ``j``."""
    if isinstance(j, str):
        j = fit.data.column(j)
    pl = partial_leverage(fit, j)
    v_s, g_star = effective_clusters(pl)
    return DiagnosticsReport(fit.clusters.labels, fit.clusters.sizes.copy(), leverage(fit),
                             fit.data.names[j], pl, influence(fit)[:, j], float(fit.beta[j]),
                             v_s, g_star, size_summary(fit.clusters))
