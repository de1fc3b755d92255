"""Wild cluster bootstraps, the pairs cluster bootstrap, and bootstrap intervals.

All wild variants run on cluster-level score blocks. For a hypothesis
``R beta = r`` with ``W = (X'X)^{-1} R'``, a bootstrap sample is summarised
by ``S* = sum_g v_g s_g`` (``s_g`` restricted or unrestricted scores), and

* numerator: ``W' S*``
* CV1 scores: ``q*_g = v_g W's_g - W'X_g'X_g (X'X)^{-1} S*``
* CV3 deviations: ``(E_g - W)' S* - v_g E_g' s_g`` with
  ``E_g = (X'X - X_g'X_g)^{-1} R'``

so each replicate costs O(G k r) after an O(G k^3) setup and never touches
the raw data.

Every statistic, including the observed one, is evaluated in chunks of a
fixed shape so a given draw row always produces the same bits no matter
where it sits, how replicates are batched, or how many threads run.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._parallel import chunk_bounds, pmap
from .core import ClusterPartition, DataError, Dataset
from .crve import CovEstimate, cv1, cv1_factor
from .estimation import RankDeficiencyError, RegressionFit, Restriction, fit_ols
from .rng import RADEMACHER, WEBB, AuxDistribution, aux_distribution, uniforms

log = logging.getLogger(__name__)

DEFAULT_B = 9999
CHUNK_ROWS = 256
_EPS = np.finfo(float).eps
VARIANTS = ("WCR", "WCU", "WR", "WU")


class BootstrapError(RuntimeError):
    """The bootstrap could not produce a usable answer."""


@dataclass(frozen=True)
class BootstrapResult:
    """Observed statistic, bootstrap replicates and P values.

    For a single restriction ``tau`` is a t statistic; for several it is a
    Wald statistic, which has only an upper tail, so all three P values
    coincide. ``estimates`` holds ``a'beta*_b`` for single restrictions
    (used by the bootstrap-se interval).
    """

    tau: float
    replicates: np.ndarray
    p_symmetric: float
    p_equal_tail: float
    p_upper: float
    B: int
    enumerated: bool
    seed: int
    variant: str
    studentization: str
    aux: str
    n_restrictions: int = 1
    estimate: float | None = None
    std_error: float | None = None
    contrast: np.ndarray | None = None
    estimates: np.ndarray | None = None
    discarded: int = 0
    notes: tuple = ()

    def to_frame(self):
        import pandas as pd

        cols = {"replicate": np.arange(self.B), "tau_star": self.replicates}
        if self.estimates is not None:
            cols["estimate_star"] = self.estimates
        return pd.DataFrame(cols)

    def to_csv(self, path) -> None:
        """Write the replicate distribution for plotting."""
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: str
    iterations: int | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise BootstrapError(f"interval endpoints out of order: {self.lower} > {self.upper}")


# --------------------------------------------------------------------------- P values


def boot_p_values(tau: float, replicates, kind: str = "symmetric", *,
                  ties_exceed: bool = False) -> float:
    """Bootstrap P value from replicate statistics.

    ``symmetric`` counts ``|tau*| > |tau|``, ``upper`` counts ``tau* > tau``,
    and ``equal_tail`` is ``2/B min(#{tau* > tau}, #{tau* <= tau})`` capped
    at 1. With ``ties_exceed`` a replicate equal to ``tau`` counts as
    exceeding it.
    """
    reps = np.asarray(replicates, dtype=float)
    B = reps.size
    if B < 1:
        raise ValueError("need at least one replicate")
    if kind == "symmetric":
        a, t = np.abs(reps), abs(tau)
        n = np.count_nonzero(a >= t) if ties_exceed else np.count_nonzero(a > t)
        return n / B
    above = np.count_nonzero(reps >= tau) if ties_exceed else np.count_nonzero(reps > tau)
    if kind == "upper":
        return above / B
    if kind == "equal_tail":
        below = np.count_nonzero(reps <= tau)
        return min(1.0, 2.0 * min(above, below) / B)
    raise ValueError(f"unknown P value kind {kind!r}")


def _default_aux(G: int, aux, notes: list) -> AuxDistribution:
    if aux is not None:
        return aux_distribution(aux)
    if G <= 12:
        msg = f"G={G} <= 12: using the Webb six-point distribution"
        log.info(msg)
        notes.append(msg)
        return WEBB
    return RADEMACHER


def _check_b(B: int, enumerated: bool) -> None:
    if B < 1:
        raise DataError("B must be at least 1")
    if not enumerated and (0.05 * (B + 1)) % 1 > 1e-9 and abs((0.05 * (B + 1)) % 1 - 1) > 1e-9:
        warnings.warn(f"0.05(B+1) is not an integer for B={B}; level-0.05 tests are not exact",
                      stacklevel=3)


# --------------------------------------------------------------------------- wild kernel


class _WildKernel:
    """Replicate statistics for one wild bootstrap setup."""

    def __init__(self, fit: RegressionFit, rest: Restriction, variant: str, studentize: str):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if studentize not in ("cv1", "cv3"):
            raise ValueError(f"studentization must be 'cv1' or 'cv3', got {studentize!r}")
        G = fit.g_count
        if G < 2:
            raise DataError("the wild cluster bootstrap needs at least two clusters")
        self.fit, self.rest = fit, rest
        self.studentize = studentize
        self.restricted = variant in ("WCR", "WR")
        clusters = fit.clusters
        # observation-level draws with singleton clusters are cluster-level draws
        self.obs_level = variant in ("WR", "WU") and G != fit.n_obs
        R = rest.R
        self.r = R.shape[0]

        if self.restricted:
            part = fit.restricted
            if part is None or not (np.array_equal(part.restriction.R, R)
                                    and np.array_equal(part.restriction.r, rest.r)):
                part = fit.with_restriction(rest).restricted
            u0, s0, beta_c = part.residuals, part.scores, part.beta
        else:
            u0, s0, beta_c = fit.residuals, fit.scores, fit.beta
        # a'beta*_b = offset + numerator
        self.offset = R @ beta_c if not self.restricted else rest.r

        W = fit.solve(R.T)                                        # k x r
        self.W = W
        self.C = s0 @ W                                           # G x r
        self.s0 = s0
        self.c1 = cv1_factor(G, fit.n_obs, fit.k_dof)
        # rounding scale of a'beta itself; residual scores of an exact fit are pure noise
        beta_scale = float(np.sum(np.abs(fit.xty_g @ W)))
        if studentize == "cv1":
            D = fit.xtx_g @ W                                     # G x k x r
            self.P = np.transpose(fit.solve(np.moveaxis(D, 0, 1).reshape(fit.k, -1))
                                  .reshape(fit.k, G, self.r), (1, 2, 0))  # G x r x k
            self.var_ref = self.c1 * float(np.sum(self.C ** 2))
        else:
            E = np.empty((G, fit.k, self.r))
            for g in range(G):
                A = fit.xtx - fit.xtx_g[g]
                try:
                    E[g] = np.linalg.solve((A + A.T) / 2, R.T)
                except np.linalg.LinAlgError:
                    raise RankDeficiencyError(
                        f"deleting cluster {clusters.labels[g]!r} leaves a singular problem; "
                        "CV3 studentization is unavailable") from None
            if not np.all(np.isfinite(E)):
                raise RankDeficiencyError("delete-one-cluster solve failed")
            self.E = E
            self.Dm = E - W[None]
            self.F = np.einsum("gkr,gk->gr", E, s0)
            self.var_ref = (G - 1) / G * float(np.sum(self.F ** 2))

        if self.obs_level:
            X = fit.data.regressors
            order = clusters._order
            self.psi = (X * u0[:, None])[order]                   # sorted by cluster
            self.c_obs = self.psi @ W
            self.order = order
            self.starts = clusters._starts[:-1]
            self.num_tol = 8 * _EPS * (float(np.sum(np.abs(self.c_obs))) + beta_scale)
            width = max(fit.k, self.r)
            self.chunk = int(max(1, min(CHUNK_ROWS, 2 ** 21 // (fit.n_obs * width))))
            self.width = fit.n_obs
        else:
            self.num_tol = 8 * _EPS * (float(np.sum(np.abs(self.C))) + beta_scale)
            self.chunk = CHUNK_ROWS
            self.width = G

    # -- evaluation on a chunk of exactly self.chunk rows
    def _eval(self, V: np.ndarray):
        G = self.fit.g_count
        if self.obs_level:
            Vs = V[:, self.order]
            S = np.einsum("bn,nk->bk", Vs, self.psi)
            if self.studentize == "cv1":
                first = np.add.reduceat(Vs[:, :, None] * self.c_obs[None], self.starts, axis=1)
            else:
                sg = np.add.reduceat(Vs[:, :, None] * self.psi[None], self.starts, axis=1)
                first = np.einsum("gkr,bgk->bgr", self.E, sg)
        else:
            S = np.einsum("bg,gk->bk", V, self.s0)
            first = V[:, :, None] * (self.C if self.studentize == "cv1" else self.F)[None]
        num = np.einsum("bk,kr->br", S, self.W)
        if self.studentize == "cv1":
            q = first - np.einsum("grk,bk->bgr", self.P, S)
            var = self.c1 * np.einsum("bgi,bgj->bij", q, q)
        else:
            dev = np.einsum("gkr,bk->bgr", self.Dm, S) - first
            var = (G - 1) / G * np.einsum("bgi,bgj->bij", dev, dev)
        return num, var

    def _raw(self, V: np.ndarray):
        n = V.shape[0]
        if n < self.chunk:
            V = np.vstack([V, np.ones((self.chunk - n, V.shape[1]))])
        num, var = self._eval(V)
        num, var = num[:n], var[:n]
        # numerators at rounding-error level are exact zeros
        return np.where(np.abs(num) <= self.num_tol, 0.0, num), var

    def statistics(self, V: np.ndarray):
        """Replicate statistics and numerators ``R(beta*_b - beta_c)``."""
        num, var = self._raw(V)
        return _studentize(num, var, self.var_ref), num

    def observed(self) -> float:
        """Actual-sample statistic; the all-ones draw reproduces the data."""
        num, var = self._raw(np.ones((1, self.width)))
        if not self.restricted:
            num = (self.rest.R @ self.fit.beta - self.rest.r)[None, :]
        return float(_studentize(num, var, self.var_ref)[0])


def _studentize(num: np.ndarray, var: np.ndarray, var_ref: float) -> np.ndarray:
    r = num.shape[1]
    tol = (1e-12) ** 2 * var_ref
    if r == 1:
        v = var[:, 0, 0]
        zero = v <= tol
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num[:, 0] / np.sqrt(np.where(zero, 1.0, v))
        # zero variance: infinite statistic with the numerator's sign, or 0 if 0/0
        limit = np.where(num[:, 0] == 0, 0.0, np.copysign(np.inf, num[:, 0]))
        return np.where(zero, limit, t)
    out = np.empty(num.shape[0])
    for b in range(num.shape[0]):
        try:
            out[b] = num[b] @ np.linalg.solve(var[b], num[b])
        except np.linalg.LinAlgError:
            out[b] = 0.0 if not np.any(num[b]) else np.inf
    return out


def _draw_rows(aux: AuxDistribution, seed: int, width: int, B: int, enumerate_: bool,
               start: int, stop: int) -> np.ndarray:
    if enumerate_:
        return aux.enumerate(width, start, stop)
    return aux.draw(seed, np.arange(start, stop), width)


def _plan(aux: AuxDistribution, width: int, B: int) -> tuple[bool, int]:
    """Enumerate when the full grid is no larger than B."""
    if width * math.log(aux.size) <= math.log(B) + 1e-12 and aux.size ** width <= B:
        return True, aux.size ** width
    return False, B


def _run_wild(fit: RegressionFit, rest: Restriction | None, variant: str, *, aux, B: int,
              seed: int, studentize: str, threads, draws: np.ndarray | None) -> BootstrapResult:
    if rest is None:
        if fit.restricted is None:
            raise DataError("pass a Restriction or a fit carrying restricted estimates")
        rest = fit.restricted.restriction
    studentize = studentize.lower()
    notes: list = []
    kernel = _WildKernel(fit, rest, variant, studentize)
    aux = _default_aux(fit.g_count, aux, notes)
    if draws is not None:
        draws = np.asarray(draws, dtype=float)
        if draws.ndim != 2 or draws.shape[1] != kernel.width:
            raise DataError(f"draws must have shape (B, {kernel.width})")
        enumerated, B = False, draws.shape[0]
    else:
        enumerated, B = _plan(aux, kernel.width, B)
        _check_b(B, enumerated)

    def work(bounds):
        lo, hi = bounds
        V = draws[lo:hi] if draws is not None else _draw_rows(
            aux, seed, kernel.width, B, enumerated, lo, hi)
        return kernel.statistics(V)

    parts = pmap(work, chunk_bounds(B, kernel.chunk), threads)
    reps = np.concatenate([p[0] for p in parts])
    nums = np.concatenate([p[1] for p in parts])
    tau = kernel.observed()
    return _package(kernel.fit, rest, tau, reps, nums, kernel.offset, B, enumerated, seed,
                    variant, studentize, aux.kind, notes)


def _package(fit, rest, tau, reps, nums, offset, B, enumerated, seed, variant, studentize,
             aux_name, notes, discarded=0):
    r = rest.n_restrictions
    if r == 1:
        a = rest.R[0]
        est = float(a @ fit.beta)
        estimates = nums[:, 0] + float(offset[0])
        se = abs((est - rest.r[0]) / tau) if np.isfinite(tau) and tau != 0 else None
        ps = boot_p_values(tau, reps, "symmetric", ties_exceed=True)
        pe = boot_p_values(tau, reps, "equal_tail", ties_exceed=True)
        pu = boot_p_values(tau, reps, "upper", ties_exceed=True)
    else:
        a, est, estimates, se = None, None, None, None
        pu = boot_p_values(tau, reps, "upper", ties_exceed=True)
        ps = pe = pu
    reps.setflags(write=False)
    return BootstrapResult(float(tau), reps, ps, pe, pu, int(B), enumerated, int(seed),
                           variant, studentize.upper(), aux_name, r, est, se, a, estimates,
                           discarded, tuple(notes))


def wcr_test(fit: RegressionFit, rest: Restriction | None = None, *, aux=None, B: int = DEFAULT_B,
             seed: int = 0, studentize: str = "cv1", threads: int | None = None,
             draws: np.ndarray | None = None) -> BootstrapResult:
    """Restricted wild cluster bootstrap test of ``R beta = r``.

    Parameters
    ----------
    fit : RegressionFit
        Unrestricted fit; restricted estimates are attached if missing.
    rest : Restriction, optional
        Defaults to the restriction already attached to ``fit``.
    aux : str or AuxDistribution, optional
        Rademacher by default, Webb when G <= 12.
    B : int
        Replicates; when ``support**G <= B`` every draw is enumerated instead.
    seed : int
        Replicate b uses the counter stream ``(seed, b)``.
    studentize : {"cv1", "cv3"}
        CRVE used in both the actual and the bootstrap statistics.
    threads : int, optional
        Worker threads (results do not depend on this).
    draws : ndarray, optional
        Explicit (B, G) matrix of auxiliary draws, overriding ``aux``/``seed``.
    """
    return _run_wild(fit, rest, "WCR", aux=aux, B=B, seed=seed, studentize=studentize,
                     threads=threads, draws=draws)


def wcu_test(fit, rest=None, *, aux=None, B=DEFAULT_B, seed=0, studentize="cv1",
             threads=None, draws=None) -> BootstrapResult:
    """Unrestricted wild cluster bootstrap; replicates are centred at beta-hat."""
    return _run_wild(fit, rest, "WCU", aux=aux, B=B, seed=seed, studentize=studentize,
                     threads=threads, draws=draws)


def wr_test(fit, rest=None, *, aux=None, B=DEFAULT_B, seed=0, studentize="cv1",
            threads=None, draws=None) -> BootstrapResult:
    """Restricted wild bootstrap with one draw per observation."""
    return _run_wild(fit, rest, "WR", aux=aux, B=B, seed=seed, studentize=studentize,
                     threads=threads, draws=draws)


def wu_test(fit, rest=None, *, aux=None, B=DEFAULT_B, seed=0, studentize="cv1",
            threads=None, draws=None) -> BootstrapResult:
    """Unrestricted wild bootstrap with one draw per observation."""
    return _run_wild(fit, rest, "WU", aux=aux, B=B, seed=seed, studentize=studentize,
                     threads=threads, draws=draws)


def wild_test(fit, rest=None, *, variant: str = "WCR", **kw) -> BootstrapResult:
    return _run_wild(fit, rest, variant.upper(), aux=kw.pop("aux", None),
                     B=kw.pop("B", DEFAULT_B), seed=kw.pop("seed", 0),
                     studentize=kw.pop("studentize", "cv1"), threads=kw.pop("threads", None),
                     draws=kw.pop("draws", None))


# --------------------------------------------------------------------------- pairs bootstrap


def pairs_cluster_test(data: Dataset, clusters: ClusterPartition, rest: Restriction, *,
                       B: int = DEFAULT_B, seed: int = 0, threads: int | None = None,
                       count_absorbed: bool = True, max_discard: float = 0.10) -> BootstrapResult:
    """Pairs cluster bootstrap with CV1 studentization.

    Each replicate draws G whole clusters with replacement and refits; the
    statistic is centred at beta-hat. Draws with a singular ``X*'X*`` are
    discarded and counted. When ``G**G <= B`` every ordered draw is
    enumerated (each with probability ``G**-G``).
    """
    if B < 1:
        raise DataError("B must be at least 1")
    fit = fit_ols(data, clusters, count_absorbed=count_absorbed)
    G, k = fit.g_count, fit.k
    R = rest.R
    sizes = clusters.sizes.astype(float)
    enumerated = G * math.log(G) <= math.log(B) + 1e-12 and G ** G <= B
    total = G ** G if enumerated else B
    if not enumerated:
        _check_b(B, False)
    k_dof = fit.k_dof

    def counts_for(lo, hi):
        n = hi - lo
        if enumerated:
            b = np.arange(lo, hi, dtype=np.int64)
            idx = np.empty((n, G), dtype=np.int64)
            for col in range(G - 1, -1, -1):
                idx[:, col] = b % G
                b //= G
        else:
            u = uniforms(seed, np.arange(lo, hi), G)
            idx = np.minimum((u * G).astype(np.int64), G - 1)
        flat = (idx + (np.arange(n) * G)[:, None]).ravel()
        return np.bincount(flat, minlength=n * G).reshape(n, G).astype(float)

    def evaluate(counts):
        n = counts.shape[0]
        if n < CHUNK_ROWS:
            counts = np.vstack([counts, np.ones((CHUNK_ROWS - n, G))])
        A = np.einsum("bg,gkl->bkl", counts, fit.xtx_g)
        c = np.einsum("bg,gk->bk", counts, fit.xty_g)
        d = np.sqrt(np.clip(np.einsum("bkk->bk", A), 0.0, None))
        ok = np.all(d > 0, axis=1)
        dd = np.where(d > 0, d, 1.0)
        w = np.linalg.eigvalsh(A / (dd[:, :, None] * dd[:, None, :]))
        ok &= w[:, 0] > 1e-12 * w[:, -1]
        A_safe = np.where(ok[:, None, None], A, np.eye(k)[None])
        beta = np.linalg.solve(A_safe, c[:, :, None])[:, :, 0]
        Wb = np.linalg.solve(A_safe, np.broadcast_to(R.T, (len(A), k, R.shape[0])))
        s = fit.xty_g[None] - np.einsum("gkl,bl->bgk", fit.xtx_g, beta)
        q = np.einsum("bgk,bkr->bgr", s, Wb)
        n_star = counts @ sizes
        c1 = np.where(G > 1, G * (n_star - 1) / (max(G - 1, 1) * (n_star - k_dof)), 1.0)
        var = c1[:, None, None] * np.einsum("bg,bgi,bgj->bij", counts, q, q)
        # magnitude of the terms cancelling in each score, for the zero test
        mag = np.abs(fit.xty_g)[None] + np.einsum("gkl,bl->bgk", np.abs(fit.xtx_g), np.abs(beta))
        scale = np.einsum("bgk,bkr->bgr", mag, np.abs(Wb))
        var_ref = c1 * np.einsum("bg,bgr->b", counts, scale ** 2)
        return beta[:n], var[:n], var_ref[:n], ok[:n]

    beta_ref, var_ones, ref_ones, ok_ones = evaluate(np.ones((1, G)))
    if not ok_ones[0]:
        raise RankDeficiencyError("X'X is singular")
    rb_ref = R @ beta_ref[0]
    num_tol = 1e-10 * (np.abs(R) @ np.abs(beta_ref[0]))

    def work(bounds):
        beta, var, var_ref, ok = evaluate(counts_for(*bounds))
        num = beta @ R.T - rb_ref[None, :]
        num = np.where(np.abs(num) <= num_tol[None, :], 0.0, num)
        zero_var = var[:, 0, 0] <= (1e-10) ** 2 * var_ref if R.shape[0] == 1 else None
        if R.shape[0] == 1:
            v = np.where(zero_var, 1.0, var[:, 0, 0])
            t = num[:, 0] / np.sqrt(v)
            limit = np.where(num[:, 0] == 0, 0.0, np.copysign(np.inf, num[:, 0]))
            t = np.where(zero_var, limit, t)
        else:
            t = _studentize(num, var, 0.0)
        return t, num, ok

    parts = pmap(work, chunk_bounds(total, CHUNK_ROWS), threads)
    reps = np.concatenate([p[0] for p in parts])
    nums = np.concatenate([p[1] for p in parts])
    ok = np.concatenate([p[2] for p in parts])
    discarded = int(np.count_nonzero(~ok))
    if discarded > max_discard * total:
        raise BootstrapError(
            f"{discarded} of {total} pairs-bootstrap draws had a singular X'X; "
            "the bootstrap distribution is unreliable")
    reps, nums = reps[ok], nums[ok]

    gap = rb_ref - rest.r
    if R.shape[0] == 1:
        v = var_ones[0, 0, 0]
        tau = float(gap[0] / np.sqrt(v)) if v > (1e-10) ** 2 * ref_ones[0] else (
            0.0 if gap[0] == 0 else float(np.sign(gap[0]) * np.inf))
    else:
        tau = float(_studentize(gap[None], var_ones, 0.0)[0])

    return _package(fit, rest, tau, reps, nums, rb_ref, len(reps), enumerated, seed, "Pairs",
                    "cv1", "pairs", [], discarded)


# --------------------------------------------------------------------------- intervals


def _as_contrast(k: int, j) -> np.ndarray:
    if np.isscalar(j):
        a = np.zeros(k)
        a[int(j)] = 1.0
        return a
    return np.asarray(j, dtype=float)


def ci_inversion(fit: RegressionFit, j, *, aux=None, B: int = DEFAULT_B, seed: int = 0,
                 alpha: float = 0.05, studentize: str = "cv1", threads: int | None = None,
                 max_expansions: int = 60, rel_tol: float = 1e-6) -> ConfidenceInterval:
    """Invert the equal-tail WCR P value over the hypothesised value.

    Every candidate uses the same auxiliary draws. Each endpoint is
    bracketed outward from ``beta_hat +- 3 se`` (doubling the distance)
    and bisected until the bracket is narrower than ``rel_tol * se``. The
    endpoint returned is the last point still accepted (P >= alpha).
    """
    a = _as_contrast(fit.k, j)
    studentize = studentize.lower()
    est = float(a @ fit.beta)
    se = cv1(fit).se(a)
    if not se > 0:
        raise BootstrapError("zero standard error; the interval is undefined")
    notes: list = []
    aux = _default_aux(fit.g_count, aux, notes)
    probe = _WildKernel(fit, Restriction.linear(a, est), "WCR", studentize)
    enumerated, B = _plan(aux, probe.width, B)
    _check_b(B, enumerated)
    bounds = chunk_bounds(B, probe.chunk)
    blocks = [_draw_rows(aux, seed, probe.width, B, enumerated, lo, hi) for lo, hi in bounds]
    evals = [0]

    def pval(beta_c: float) -> float:
        evals[0] += 1
        kern = _WildKernel(fit, Restriction.linear(a, beta_c), "WCR", studentize)
        reps = np.concatenate(pmap(lambda V: kern.statistics(V)[0], blocks, threads))
        tau = kern.observed()
        return boot_p_values(tau, reps, "equal_tail", ties_exceed=True)

    if pval(est) < alpha:
        raise BootstrapError("interval endpoint not found: the estimate itself is rejected")

    def endpoint(sign: int) -> float:
        inner, dist = est, 3.0 * se
        outer = est + sign * dist
        n = 0
        while pval(outer) >= alpha:
            n += 1
            if n > max_expansions:
                raise BootstrapError("interval endpoint not found")
            inner, dist = outer, 2.0 * dist
            outer = est + sign * dist
        while abs(outer - inner) >= rel_tol * se:
            mid = 0.5 * (inner + outer)
            if pval(mid) >= alpha:
                inner = mid
            else:
                outer = mid
        return inner

    lo, hi = endpoint(-1), endpoint(+1)
    return ConfidenceInterval(lo, hi, 1 - alpha, "inversion", evals[0],
                              {"B": B, "enumerated": enumerated, "aux": aux.kind})


def ci_bootstrap_se(fit: RegressionFit, cov: CovEstimate, result: BootstrapResult,
                    alpha: float = 0.05) -> ConfidenceInterval:
    """``beta_hat +- t_{1-alpha/2}(G-1) * sd(beta*_b)``."""
    if result.estimates is None:
        raise DataError("bootstrap-se interval needs a single-restriction result")
    est = float(result.contrast @ fit.beta)
    sd = float(np.std(result.estimates, ddof=1)) if result.B > 1 else 0.0
    q = stats.norm.ppf(1 - alpha / 2) if cov.dof is None else stats.t.ppf(1 - alpha / 2, cov.dof)
    half = float(q) * sd
    return ConfidenceInterval(est - half, est + half, 1 - alpha, "bootstrap_se",
                              info={"sd": sd, "quantile": float(q)})


def percentile_positions(B: int, alpha: float) -> tuple[int, int]:
    """1-based order statistics for the percentile-t critical values.

    The upper position is ``(1 - alpha/2)(B + 1)`` (rounded down when not an
    integer) and the lower one mirrors it as ``B + 1 - upper``.
    """
    hi = int(math.floor((1 - alpha / 2) * (B + 1) + 1e-9))
    hi = min(max(hi, 1), B)
    return B + 1 - hi, hi


def ci_percentile_t(fit: RegressionFit, cov: CovEstimate, result: BootstrapResult,
                    alpha: float = 0.05) -> ConfidenceInterval:
    """Studentized bootstrap interval ``[b - s c*_{hi}, b - s c*_{lo}]``."""
    if result.contrast is None:
        raise DataError("percentile-t interval needs a single-restriction result")
    a = result.contrast
    est = float(a @ fit.beta)
    s = cov.se(a)
    srt = np.sort(result.replicates)
    lo_pos, hi_pos = percentile_positions(result.B, alpha)
    c_hi, c_lo = srt[hi_pos - 1], srt[lo_pos - 1]
    return ConfidenceInterval(float(est - s * c_hi), float(est - s * c_lo), 1 - alpha, "percentile_t",
                              info={"positions": (lo_pos, hi_pos), "se": s})
