"""Randomization inference for treatment assigned at the cluster level."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._parallel import chunk_bounds, pmap
from .core import ClusterPartition, DataError, Dataset, within_transform
from .crve import cv1_factor, cv3
from .estimation import RankDeficiencyError, fit_ols
from .rng import replication_rng

BIG_COUNT = 2 ** 63


def count_assignments(G: int, G1: int) -> int:
    """Number of ways to choose ``G1`` treated clusters out of ``G`` (exact)."""
    if not 1 <= G1 <= G:
        raise DataError(f"need 1 <= G1 <= G, got G={G}, G1={G1}")
    return math.comb(G, G1)


def exceeds_int64(count: int) -> bool:
    return count >= BIG_COUNT


@dataclass(frozen=True)
class TreatmentSpec:
    """Cluster-level treatment and, optionally, DiD start periods.

    Parameters
    ----------
    column : str
        Regressor holding the treatment indicator (rebuilt for every
        re-randomization).
    treated : sequence of int
        Indices of the actually treated clusters.
    period : ndarray, optional
        Integer period of every observation. With it, a treated cluster is
        treated from its start period on.
    start : sequence of int, optional
        Start period of each actually treated cluster (same order as
        ``treated``). Re-randomized clusters take these starts in order.
    redraw_start : bool
        Draw start periods uniformly from all periods but the first instead.
    """

    column: str
    treated: tuple
    period: np.ndarray | None = None
    start: tuple | None = None
    redraw_start: bool = False

    def __post_init__(self):
        object.__setattr__(self, "treated", tuple(sorted(int(t) for t in self.treated)))
        if self.start is not None:
            if self.period is None:
                raise DataError("start periods need a period array")
            if len(self.start) != len(self.treated):
                raise DataError("one start period per treated cluster is required")
            object.__setattr__(self, "start", tuple(int(s) for s in self.start))

    def column_for(self, treated, clusters: ClusterPartition, starts=None) -> np.ndarray:
        on = np.zeros(clusters.g_count, dtype=bool)
        on[list(treated)] = True
        if self.period is None:
            return on[clusters.codes].astype(float)
        first = np.full(clusters.g_count, np.iinfo(np.int64).max)
        if starts is None:
            starts = self.start if self.start is not None else (0,) * len(treated)
        first[list(treated)] = starts
        per = np.asarray(self.period)
        return (on[clusters.codes] & (per >= first[clusters.codes])).astype(float)


@dataclass(frozen=True)
class RIResult:
    """Observed statistic, re-randomization replicates and the two P values."""

    observed: float
    replicates: np.ndarray
    p1: float
    p2: float
    S: int
    enumerated: bool
    statistic_kind: str
    two_sided: bool = True
    skipped: int = 0
    total_assignments: int = 0
    notes: tuple = ()
    assignments: list = field(default_factory=list, repr=False, compare=False)

    def to_csv(self, path) -> None:
        pd.DataFrame({"replicate": np.arange(len(self.replicates)),
                      "statistic": self.replicates}).to_csv(path, index=False,
                                                            float_format="%.17g")


def ri_p_values(observed: float, replicates, *, two_sided: bool = True) -> tuple[float, float]:
    """``p1 = #{stat* >= stat}/S`` and ``p2 = (1 + S p1)/(S + 1)``."""
    reps = np.asarray(replicates, dtype=float)
    S = reps.size
    if S < 1:
        raise DataError("randomization inference needs at least one re-randomization")
    if two_sided:
        count = int(np.count_nonzero(np.abs(reps) >= abs(observed)))
    else:
        count = int(np.count_nonzero(reps >= observed))
    p1 = count / S
    # p2 is defined through p1 so the identity holds bit for bit
    return p1, (1 + S * p1) / (S + 1)


def _choose_assignments(G: int, G1: int, actual: tuple, B: int, seed: int):
    total = count_assignments(G, G1)
    if total - 1 <= B:
        out = [c for c in itertools.combinations(range(G), G1) if c != actual]
        return out, True, total
    rng = replication_rng(seed, 0)
    out = []
    if exceeds_int64(total):
        # sampling with replacement; repeats are vanishingly rare
        while len(out) < B:
            c = tuple(sorted(rng.choice(G, G1, replace=False).tolist()))
            if c != actual:
                out.append(c)
        return out, False, total
    seen = {actual}
    while len(out) < B:
        c = tuple(sorted(rng.choice(G, G1, replace=False).tolist()))
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out, False, total


class _FWLStat:
    """Treatment coefficient and CV1 t statistic with the other columns fixed."""

    def __init__(self, data: Dataset, j: int, clusters: ClusterPartition, absorb):
        self.clusters, self.absorb = clusters, absorb
        Z = np.delete(data.regressors, j, axis=1)
        y = data.outcome
        absorbed = data.absorbed
        if absorb is not None:
            y, Z = self._demean(y), self._demean(Z)
            absorbed += absorb.g_count
        self.Q = np.linalg.qr(Z)[0] if Z.shape[1] else np.empty((len(y), 0))
        self.y_t = y - self.Q @ (self.Q.T @ y)
        self.c1 = cv1_factor(clusters.g_count, data.n_obs, data.k + absorbed)

    def _demean(self, a: np.ndarray) -> np.ndarray:
        fe = self.absorb
        n = fe.sizes.astype(float)
        means = fe.cluster_sum(a) / (n[:, None] if a.ndim == 2 else n)
        return a - means[fe.codes]

    def __call__(self, d: np.ndarray, kind: str):
        if self.absorb is not None:
            d = self._demean(d)
        dt = d - self.Q @ (self.Q.T @ d)
        dd = float(dt @ dt)
        if not dd > 1e-10 * max(float(d @ d), 1e-300):
            return None
        beta = float(dt @ self.y_t) / dd
        if kind == "beta":
            return beta
        u = self.y_t - beta * dt
        s = self.clusters.cluster_sum(dt * u)
        se = math.sqrt(self.c1 * float(s @ s)) / dd
        if se == 0:
            return 0.0 if beta == 0 else math.copysign(math.inf, beta)
        return beta / se


def ri_test(data: Dataset, clusters: ClusterPartition, treatment: TreatmentSpec, *,
            statistic_kind: str = "beta", B: int = 999, seed: int = 0, two_sided: bool = True,
            studentize: str = "cv1", absorb: ClusterPartition | None = None,
            threads: int | None = None) -> RIResult:
    """Randomization test of a cluster-level treatment effect.

    All ``C(G, G1) - 1`` alternative assignments are used when there are at
    most ``B`` of them; otherwise ``B`` distinct ones are sampled. Each
    assignment rebuilds the treatment column and re-estimates either the
    coefficient (``"beta"``) or its cluster-robust t statistic (``"t"``).

    Parameters
    ----------
    absorb : ClusterPartition, optional
        Fixed effects partialled out of the outcome, the other regressors
        and every rebuilt treatment column.
    studentize : {"cv1", "cv3"}
        CRVE for ``"t"``; CV1 uses a fast partialled-out formula.

    Raises
    ------
    DataError
        If there is no alternative assignment (``G1 = G``).
    """
    if statistic_kind not in ("beta", "t"):
        raise DataError("statistic_kind must be 'beta' or 't'")
    studentize = studentize.lower()
    G = clusters.g_count
    G1 = len(treatment.treated)
    if not 1 <= G1 < G:
        raise DataError(f"need 1 <= G1 < G treated clusters, got G1={G1}, G={G}")
    j = data.column(treatment.column)
    actual_col = treatment.column_for(treatment.treated, clusters)
    if not np.allclose(actual_col, data.regressors[:, j]):
        raise DataError(f"column {treatment.column!r} does not match the treatment spec "
                        "(staggered treatment needs period and start information)")

    notes = []
    if statistic_kind == "t" and (G1 == 1 or G - G1 == 1):
        notes.append("one treated or control cluster: cluster-robust P values are unreliable")
    assignments, enumerated, total = _choose_assignments(G, G1, treatment.treated, B, seed)

    fast = _FWLStat(data, j, clusters, absorb)

    def stat_for(col):
        if statistic_kind == "t" and studentize == "cv3":
            d = data.replace_column(j, col)
            try:
                if absorb is not None:
                    d, _ = within_transform(d, absorb)
                f = fit_ols(d, clusters)
                jj = d.column(treatment.column)
                return float(f.beta[jj] / cv3(f).se(np.eye(f.k)[jj]))
            except (RankDeficiencyError, DataError):
                return None
        return fast(col, statistic_kind)

    observed = stat_for(actual_col)
    if observed is None:
        raise RankDeficiencyError("the actual treatment column is collinear with the controls")

    T = None if treatment.period is None else int(np.max(treatment.period)) + 1

    def work(bounds):
        out = []
        for b in range(*bounds):
            combo = assignments[b]
            starts = None
            if treatment.redraw_start and T is not None:
                rng = replication_rng(seed ^ 0x57A7, b)
                starts = tuple(rng.integers(1, T, size=len(combo)).tolist())
            v = stat_for(treatment.column_for(combo, clusters, starts))
            out.append(np.nan if v is None else v)
        return out

    vals = np.array([v for part in pmap(work, chunk_bounds(len(assignments), 64), threads)
                     for v in part], dtype=float)
    keep = ~np.isnan(vals)
    skipped = int(np.count_nonzero(~keep))
    reps = vals[keep]
    if reps.size == 0:
        raise RankDeficiencyError("every re-randomization was singular")
    p1, p2 = ri_p_values(observed, reps, two_sided=two_sided)
    reps.setflags(write=False)
    return RIResult(float(observed), reps, p1, p2, int(reps.size), enumerated, statistic_kind,
                    two_sided, skipped, total, tuple(notes),
                    [a for a, k in zip(assignments, keep) if k])
