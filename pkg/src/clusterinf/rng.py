"""Counter-based random streams and bootstrap auxiliary distributions.

Every bootstrap draw is a pure function of ``(seed, replicate, position)``,
hashed with the SplitMix64 finalizer. Replicates can therefore be generated
in any order, by any number of workers, and still agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def stream_keys(seed: int, replicates: np.ndarray) -> np.ndarray:
    """One 64-bit key per replicate index."""
    base = _mix(np.array([seed & _MASK64], dtype=np.uint64))[0]
    reps = np.asarray(replicates, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(base ^ _mix(reps * _GOLDEN + _GOLDEN))


def random_bits(seed: int, replicates: np.ndarray, width: int) -> np.ndarray:
    """Array of shape ``(len(replicates), width)`` of uniform 64-bit words."""
    keys = stream_keys(seed, replicates)
    pos = (np.arange(width, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
    with np.errstate(over="ignore"):
        return _mix(keys[:, None] + pos[None, :])


def uniforms(seed: int, replicates: np.ndarray, width: int) -> np.ndarray:
    """Uniform(0, 1) doubles with 53 random bits."""
    bits = random_bits(seed, replicates, width) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class AuxDistribution:
    """Mean-zero, unit-variance auxiliary distribution for wild bootstraps."""

    kind: str
    support: np.ndarray
    probs: np.ndarray

    @property
    def size(self) -> int:
        return len(self.support)

    def draw(self, seed: int, replicates: np.ndarray, width: int) -> np.ndarray:
        """Equally likely support points indexed by the counter hash."""
        bits = random_bits(seed, replicates, width)
        if self.size == 2:
            idx = (bits >> np.uint64(63)).astype(np.intp)
        else:
            # top 53 bits scaled to [0, size); bias is below 2^-50
            u = (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
            idx = np.minimum((u * self.size).astype(np.intp), self.size - 1)
        return self.support[idx]

    def enumerate(self, width: int, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Rows ``start:stop`` of the full ``size**width`` grid of draws.

        Row ``b`` spells ``b`` in base ``size``; row 0 is all of the first
        support point. For Rademacher the first point is +1, so row 0 is the
        all-ones draw and the last row the all-minus-ones draw.
        """
        total = self.size ** width
        stop = total if stop is None else min(stop, total)
        b = np.arange(start, stop, dtype=np.int64)
        digits = np.empty((len(b), width), dtype=np.intp)
        rem = b.copy()
        for col in range(width - 1, -1, -1):
            digits[:, col] = rem % self.size
            rem //= self.size
        return self.support[digits]


RADEMACHER = AuxDistribution("rademacher", np.array([1.0, -1.0]), np.array([0.5, 0.5]))
WEBB = AuxDistribution(
    "webb",
    np.array([np.sqrt(1.5), 1.0, np.sqrt(0.5), -np.sqrt(0.5), -1.0, -np.sqrt(1.5)]),
    np.full(6, 1.0 / 6.0),
)


def aux_distribution(name: str | AuxDistribution) -> AuxDistribution:
    if isinstance(name, AuxDistribution):
        return name
    key = str(name).lower()
    if key in ("rademacher", "rad"):
        return RADEMACHER
    if key in ("webb", "webb6"):
        return WEBB
    raise ValueError(f"unknown auxiliary distribution {name!r}")


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent numpy Generator for Monte Carlo replication ``rep``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & _MASK64, rep])))
