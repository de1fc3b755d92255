"""Datasets, cluster partitions and the fixed-effect within transform."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np


class DataError(ValueError):
    """Invalid input data or an inconsistent model specification."""


@dataclass(frozen=True)
class Dataset:
    """Outcome vector and regressor matrix for an unweighted linear model.

    Parameters
    ----------
    outcome : ndarray
        Length-N regressand.
    regressors : ndarray
        N by k regressor matrix.
    names : tuple of str
        Column names of ``regressors``; must be unique.
    absorbed : int
        Number of fixed effects partialed out of ``outcome`` and
        ``regressors`` before they were stored here. Used only in
        degrees-of-freedom corrections.
    dropped : tuple of str
        Regressors removed because the within transform wiped them out.
    """

    outcome: np.ndarray
    regressors: np.ndarray
    names: tuple[str, ...]
    absorbed: int = 0
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=float)
        X = np.asarray(self.regressors, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1:
            raise DataError("outcome must be one-dimensional")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"outcome has {y.shape[0]} rows but regressors have {X.shape[0]}")
        if X.shape[1] < 1:
            raise DataError("at least one regressor is required")
        names = tuple(str(n) for n in self.names)
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} names for {X.shape[1]} regressor columns")
        if len(set(names)) != len(names):
            raise DataError("regressor names must be unique")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("data contain non-finite values")
        if y.shape[0] <= X.shape[1] + self.absorbed:
            raise DataError(
                f"N={y.shape[0]} must exceed k={X.shape[1]} plus {self.absorbed} absorbed effects"
            )
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "regressors", X)
        object.__setattr__(self, "names", names)

    @property
    def n_obs(self) -> int:
        return self.outcome.shape[0]

    @property
    def k(self) -> int:
        return self.regressors.shape[1]

    def column(self, name: str) -> int:
        """Index of the regressor called ``name``."""
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"no regressor named {name!r}; have {list(self.names)}") from None

    def with_column(self, name: str, values: np.ndarray) -> "Dataset":
        """Copy with one extra regressor appended at the end."""
        X = np.column_stack([self.regressors, np.asarray(values, dtype=float)])
        return Dataset(self.outcome, X, self.names + (name,), self.absorbed, self.dropped)

    def replace_column(self, j: int, values: np.ndarray) -> "Dataset":
        X = self.regressors.copy()
        X[:, j] = values
        return Dataset(self.outcome, X, self.names, self.absorbed, self.dropped)

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        return Dataset(y, self.regressors, self.names, self.absorbed, self.dropped)


@dataclass(frozen=True)
class ClusterPartition:
    """Assignment of N observations to G disjoint clusters.

    ``codes[i]`` is the cluster index of observation i; clusters are numbered
    in order of first appearance. ``labels`` holds the original identifier of
    each cluster, in the same order.
    """

    codes: np.ndarray
    labels: tuple
    sizes: np.ndarray
    _order: np.ndarray = field(repr=False, compare=False, default=None)
    _starts: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def g_count(self) -> int:
        return len(self.labels)

    @property
    def n_obs(self) -> int:
        return self.codes.shape[0]

    def members(self, g: int) -> np.ndarray:
        """Row indices of cluster ``g``, in data order."""
        return self._order[self._starts[g]:self._starts[g + 1]]

    def groups(self) -> list[np.ndarray]:
        return [self.members(g) for g in range(self.g_count)]

    def cluster_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum rows of ``values`` within clusters (G by ... result, cluster order).

        Sums are accumulated in data order within each cluster, so the result
        does not depend on how callers batch their work.
        """
        values = np.asarray(values, dtype=float)
        sorted_vals = values[self._order]
        starts = self._starts[:-1]
        out = np.add.reduceat(sorted_vals, starts, axis=0)
        # reduceat returns the element itself for empty slices; sizes are >= 1 here
        return out


def build_partition(labels: Sequence[Hashable] | np.ndarray) -> ClusterPartition:
    """Group observations by identifier, numbering clusters by first appearance.

    >>> p = build_partition(["a", "a", "b", "b", "b"])
    >>> p.g_count, p.sizes.tolist()
    (2, [2, 3])
    """
    arr = np.asarray(labels)
    if arr.ndim != 1:
        rows = arr.reshape(len(arr), -1).tolist()
        arr = np.empty(len(rows), dtype=object)
        arr[:] = [tuple(r) for r in rows]
    if arr.shape[0] == 0:
        raise DataError("cannot build a partition from an empty label vector")
    try:
        uniq, first, inverse = np.unique(arr, return_index=True, return_inverse=True)
    except TypeError:
        # mixed or unorderable labels: fall back to a dictionary pass
        mapping: dict = {}
        codes = np.empty(arr.shape[0], dtype=np.int64)
        for i, lab in enumerate(arr.tolist()):
            codes[i] = mapping.setdefault(lab, len(mapping))
        ordered = tuple(mapping)
    else:
        rank = np.empty(len(uniq), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
        codes = rank[inverse.reshape(-1)]
        ordered = tuple(uniq[np.argsort(first, kind="stable")].tolist())
    return _from_codes(codes, ordered)


def _from_codes(codes: np.ndarray, labels: tuple) -> ClusterPartition:
    codes = np.asarray(codes, dtype=np.int64)
    sizes = np.bincount(codes, minlength=len(labels))
    order = np.argsort(codes, kind="stable")
    starts = np.concatenate([[0], np.cumsum(sizes)])
    codes.setflags(write=False)
    sizes.setflags(write=False)
    return ClusterPartition(codes, labels, sizes, order, starts)


def singletons(n: int) -> ClusterPartition:
    """Every observation in its own cluster (heteroskedasticity-robust case)."""
    return _from_codes(np.arange(n), tuple(range(n)))


def is_nested(fine: ClusterPartition, coarse: ClusterPartition) -> bool:
    """True when every fine cluster lies inside a single coarse cluster."""
    if fine.n_obs != coarse.n_obs:
        raise DataError(f"partitions cover {fine.n_obs} and {coarse.n_obs} observations")
    parent = np.full(fine.g_count, -1, dtype=np.int64)
    parent[fine.codes] = coarse.codes
    return bool(np.all(parent[fine.codes] == coarse.codes))


def coarse_parent(fine: ClusterPartition, coarse: ClusterPartition) -> np.ndarray:
    """Coarse-cluster index of each fine cluster; requires nesting."""
    if not is_nested(fine, coarse):
        raise DataError("fine partition is not nested in the coarse partition")
    parent = np.empty(fine.g_count, dtype=np.int64)
    parent[fine.codes] = coarse.codes
    return parent


@dataclass(frozen=True)
class CrossedPartition:
    """Two clustering dimensions plus their intersection."""

    dim_a: ClusterPartition
    dim_b: ClusterPartition
    intersection: ClusterPartition


def cross(dim_a: ClusterPartition, dim_b: ClusterPartition) -> CrossedPartition:
    """Build the coarsest common refinement of two partitions."""
    if dim_a.n_obs != dim_b.n_obs:
        raise DataError("crossed partitions must cover the same observations")
    pairs = dim_a.codes * dim_b.g_count + dim_b.codes
    inter = build_partition(pairs)
    labels = tuple((dim_a.labels[p // dim_b.g_count], dim_b.labels[p % dim_b.g_count])
                   for p in inter.labels)
    inter = _from_codes(inter.codes, labels)
    return CrossedPartition(dim_a, dim_b, inter)


def within_transform(data: Dataset, fe: ClusterPartition, *, tol: float = 1e-10):
    """Demean outcome and regressors within fixed-effect groups.

    Columns that become numerically zero (max |x| below ``tol`` times the
    original column scale) are dropped and listed in ``Dataset.dropped``.

    Returns
    -------
    (Dataset, int)
        Transformed data and the number of absorbed fixed effects.
    """
    if fe.n_obs != data.n_obs:
        raise DataError(f"fixed-effect partition covers {fe.n_obs} rows, data has {data.n_obs}")
    counts = fe.sizes.astype(float)

    def demean(a):
        means = fe.cluster_sum(a) / (counts[:, None] if a.ndim == 2 else counts)
        return a - means[fe.codes]

    y = demean(data.outcome)
    X = demean(data.regressors)
    scale = np.max(np.abs(data.regressors), axis=0)
    scale[scale == 0] = 1.0
    keep = np.max(np.abs(X), axis=0) >= tol * scale
    if not keep.any():
        raise DataError("every regressor is absorbed by the fixed effects")
    names = tuple(n for n, k in zip(data.names, keep) if k)
    dropped = data.dropped + tuple(n for n, k in zip(data.names, keep) if not k)
    absorbed = data.absorbed + fe.g_count
    out = Dataset(y, X[:, keep], names, absorbed, dropped)
    return out, fe.g_count


def dummies(labels, *, drop_first: bool = True, prefix: str = "d") -> tuple[np.ndarray, tuple[str, ...]]:
    """Indicator columns for a categorical variable (levels in first-appearance order)."""
    part = build_partition(labels)
    D = np.zeros((part.n_obs, part.g_count))
    D[np.arange(part.n_obs), part.codes] = 1.0
    names = tuple(f"{prefix}[{lab}]" for lab in part.labels)
    if drop_first:
        return D[:, 1:], names[1:]
    return D, names
