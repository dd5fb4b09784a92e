"""Desk-scale reference computations used to validate the fast paths.

Everything here is written with explicit Python loops over pixels, patch
offsets and candidates, and with its own boundary reflection, so it shares
no indexing code with the vectorized solver. Intended for images of at most
~16x16.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, SolverError
from .solver import SolverConfig, mask_for
from .weights import WeightField


def closed_form_weights(
    f: np.ndarray,
    cand: np.ndarray | None = None,
    shape: tuple[int, int] | None = None,
) -> WeightField:
    """Row-normalize a nonnegative matrix: w(x, y) = f(x, y) / sum_y f(x, y).

    ``cand`` gives the candidate index of every column entry (image flat
    indices, -1 for unused) and ``shape`` the image shape. Without them the
    columns are labelled ``0..m-1`` and the field shape is ``(n_rows, 1)``.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("f must be a 2-D matrix")
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise ValueError("f must be finite and nonnegative")
    s = f.sum(axis=1, keepdims=True)
    zero = np.flatnonzero(s[:, 0] <= 0)
    if zero.size:
        raise ValueError(f"row {int(zero[0])} of f sums to zero")
    n, m = f.shape
    if cand is None:
        cand = np.broadcast_to(np.arange(m, dtype=np.int64), (n, m)).copy()
        shape = (n, 1)
    elif shape is None:
        raise ValueError("shape is required together with cand")
    return WeightField(
        shape=tuple(shape),
        cand=np.asarray(cand, dtype=np.int64),
        weights=f / s,
        domain=np.ones(tuple(shape), dtype=bool),
    )


def entropic_objective(f: np.ndarray, w: np.ndarray) -> float:
    """P(w) = sum_x sum_y w ln w - w ln f, with 0 ln 0 = 0."""
    f = np.asarray(f, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    total = 0.0
    for i in range(f.shape[0]):
        for j in range(f.shape[1]):
            if w[i, j] > 0:
                total += w[i, j] * (math.log(w[i, j]) - math.log(f[i, j]))
    return total


class LogSumCheck(NamedTuple):
    lhs: float
    rhs: float
    probe_min: float


def logsum_min_oracle(f: np.ndarray, n_probes: int = 100, seed: int = 0) -> LogSumCheck:
    """Both sides of -sum_x ln sum_y f = min_w P(w) over row-stochastic w.

    ``lhs`` is the log-sum side, ``rhs`` is P at the closed-form minimizer,
    and ``probe_min`` the smallest P over ``n_probes`` random row-stochastic
    matrices (each row drawn uniformly from the simplex).
    """
    f = np.asarray(f, dtype=np.float64)
    if not np.all(f > 0):
        raise ValueError("f must be strictly positive")
    lhs = -sum(math.log(math.fsum(row)) for row in f)
    rhs = entropic_objective(f, closed_form_weights(f).weights)
    rng = np.random.default_rng(seed)
    probe_min = math.inf
    for _ in range(n_probes):
        w = rng.dirichlet(np.ones(f.shape[1]), size=f.shape[0])
        # the sampler's rows can miss 1 by an ulp; close them exactly
        w[:, -1] = np.maximum(1.0 - w[:, :-1].sum(axis=1), 0.0)
        probe_min = min(probe_min, entropic_objective(f, w))
    return LogSumCheck(lhs, rhs, probe_min)


def reflect(i: int, n: int, boundary: str) -> int:
    """In-range index read at position ``i`` of a length-``n`` axis."""
    if boundary == "clamp":
        return min(max(i, 0), n - 1)
    if boundary != "mirror":
        raise ConfigurationError(f"unknown boundary policy {boundary!r}")
    while i < 0 or i >= n:
        i = -i - 1 if i < 0 else 2 * n - i - 1
    return i


def _pair_terms(w: WeightField, profile: np.ndarray, boundary: str):
    """Yield (a, b, c) for every w(x, y) g(z) term, a/b flat pixel indices."""
    h, wd = w.shape
    r = (len(profile) - 1) // 2
    for x in range(h * wd):
        xr, xc = divmod(x, wd)
        for (yr, yc), p in w.row((xr, xc)):
            for i in range(-r, r + 1):
                for j in range(-r, r + 1):
                    a = reflect(xr + i, h, boundary) * wd + reflect(xc + j, wd, boundary)
                    b = reflect(yr + i, h, boundary) * wd + reflect(yc + j, wd, boundary)
                    yield a, b, p * profile[i + r] * profile[j + r]


def energy_oracle(u, w: WeightField, v, mask, cfg: SolverConfig) -> tuple[float, float, float]:
    """(fidelity, entropy term, patch term) by direct summation."""
    mask = mask_for(mask, cfg)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    lam = cfg.resolved_lambda
    region = mask.known if cfg.fidelity_region == "known" else mask.extended_known
    fid = 0.0
    for p in zip(*np.nonzero(region)):
        d = u[p] - v[p]
        if math.isinf(lam):
            if d != 0:
                return math.inf, math.nan, math.nan
        else:
            fid += 0.5 * lam * d * d
    ent = 0.0
    for p in np.ravel(w.weights):
        if p > 0:
            ent += p * math.log(p)
    flat = u.ravel()
    patch = 0.0
    for a, b, c in _pair_terms(w, cfg.kernel().profile, cfg.boundary):
        patch += c * (flat[a] - flat[b]) ** 2
    return fid, cfg.resolved_h * ent, patch


@dataclass
class MStepSystem:
    """Stationarity system of the image step, A u = b, with w held fixed.

    ``A = 2 L + diag(lam)`` where ``u^T L u`` is the patch term. ``den`` is the
    per-pixel incident coupling mass ``2 sum c`` with self-couplings counted
    from both ends, which is what the pointwise update divides by. The
    splitting ``M = diag(den + lam)``, ``N = M - A`` gives that update as
    ``M^-1 (N u + b)``. ``free`` marks pixels that are solved for; the rest
    are fixed (pinned to v or frozen at u).
    """

    A: np.ndarray
    b: np.ndarray
    den: np.ndarray
    lam: np.ndarray
    free: np.ndarray
    fixed_values: np.ndarray
    shape: tuple[int, int]

    @property
    def M(self) -> np.ndarray:
        return np.diag(self.den + self.lam)

    @property
    def N(self) -> np.ndarray:
        return self.M - self.A


def assemble_mstep_system(u, w: WeightField, v, mask, cfg: SolverConfig) -> MStepSystem:
    if not cfg.mollifier.is_delta:
        raise ConfigurationError("the image-step oracle assumes the delta mollifier")
    mask = mask_for(mask, cfg)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = u.size
    L = np.zeros((n, n))
    den = np.zeros(n)
    for a, b, c in _pair_terms(w, cfg.kernel().profile, cfg.boundary):
        den[a] += 2 * c
        den[b] += 2 * c
        if a != b:
            L[a, a] += c
            L[b, b] += c
            L[a, b] -= c
            L[b, a] -= c
    region = mask.known if cfg.fidelity_region == "known" else mask.extended_known
    lam_val = cfg.resolved_lambda
    pinned = region.ravel() & math.isinf(lam_val)
    lam = np.where(region.ravel() & ~pinned, lam_val, 0.0)
    frozen = mask.hole.ravel() if cfg.freeze_hole else np.zeros(n, dtype=bool)
    fixed_values = np.where(frozen, u.ravel(), np.where(pinned, v.ravel(), 0.0))
    free = ~(pinned | frozen)
    return MStepSystem(
        A=2 * L + np.diag(lam),
        b=lam * v.ravel(),
        den=den,
        lam=lam,
        free=free,
        fixed_values=fixed_values,
        shape=u.shape,
    )


def _check_anchored(sys: MStepSystem) -> None:
    """Every connected block of free pixels must touch data or a fixed pixel."""
    F = np.flatnonzero(sys.free)
    off = sys.A - np.diag(np.diag(sys.A))
    adj = off[np.ix_(F, F)] != 0
    n_comp, labels = connected_components(adj, directed=False)
    fixed = ~sys.free
    for k in range(n_comp):
        members = F[labels == k]
        if np.any(sys.lam[members] > 0):
            continue
        if fixed.any() and np.any(off[np.ix_(members, np.flatnonzero(fixed))] != 0):
            continue
        p = int(members[0])
        pix = divmod(p, sys.shape[1])
        raise SolverError(
            f"image-step system is singular: pixel {pix} has no fidelity and no path to constrained pixels",
            pixel=pix,
        )


def exact_mstep_oracle(u, w: WeightField, v, mask, cfg: SolverConfig) -> np.ndarray:
    """Exact minimizer of fidelity + patch energy over u for fixed w."""
    sys = assemble_mstep_system(u, w, v, mask, cfg)
    _check_anchored(sys)
    F = np.flatnonzero(sys.free)
    X = np.flatnonzero(~sys.free)
    out = sys.fixed_values.copy()
    rhs = sys.b[F] - sys.A[np.ix_(F, X)] @ sys.fixed_values[X]
    out[F] = np.linalg.solve(sys.A[np.ix_(F, F)], rhs)
    return out.reshape(sys.shape)


def jacobi_from_system(sys: MStepSystem, u) -> np.ndarray:
    """One sweep u' = M^-1 (N u + b) on free pixels; fixed pixels take their values."""
    uf = np.asarray(u, dtype=np.float64).ravel()
    Md = sys.den + sys.lam
    out = sys.fixed_values.copy()
    F = sys.free
    out[F] = (sys.N @ uf + sys.b)[F] / Md[F]
    return out.reshape(sys.shape)


def gradient_check(u, w: WeightField, v, mask, cfg: SolverConfig, step: float = 1.0) -> np.ndarray:
    """Central-difference gradient of fidelity + patch energy at the free pixels.

    The energy is quadratic in u, so the central difference is exact up to
    rounding for any step.
    """
    sys = assemble_mstep_system(u, w, v, mask, cfg)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64).ravel()
    terms = np.array(list(_pair_terms(w, cfg.kernel().profile, cfg.boundary))).reshape(-1, 3)
    a, b, c = terms[:, 0].astype(np.int64), terms[:, 1].astype(np.int64), terms[:, 2]

    def H(x):
        fid = 0.5 * np.sum(sys.lam * (x - v) ** 2)
        return fid + np.sum(c * (x[a] - x[b]) ** 2)

    grad = np.zeros(u.size)
    for p in np.flatnonzero(sys.free):
        up = u.ravel().copy()
        um = u.ravel().copy()
        up[p] += step
        um[p] -= step
        grad[p] = (H(up) - H(um)) / (2 * step)
    return grad.reshape(u.shape)


__all__ = [
    "LogSumCheck",
    "MStepSystem",
    "assemble_mstep_system",
    "closed_form_weights",
    "energy_oracle",
    "exact_mstep_oracle",
    "gradient_check",
    "jacobi_from_system",
    "entropic_objective",
    "logsum_min_oracle",
    "reflect",
]
