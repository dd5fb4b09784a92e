"""Alternating weight / image minimization of the patch-mixture energy.

For a weight field ``w`` and image ``u`` the energy is

    J(u, w) = lam/2 * sum_{x in F} (u - v)^2          (fidelity, F = known set)
            + h * sum_x sum_y w ln w                  (entropy)
            + sum_x sum_y w(x, y) * eps_u(x, y)       (patch term)

The weight step is its exact minimizer over the candidate supports (a
softmax of ``-eps / h``); the image step is one pointwise Jacobi sweep of the
stationarity equation in ``u`` with ``w`` fixed.

Patch reads that leave the image are routed through the boundary policy, so
every term ``w(x, y) g(z) (u[a] - u[b])^2`` couples two in-image pixels ``a``
and ``b``. The image step is computed from that list of couplings, which
makes it consistent with the energy everywhere, including near borders.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CandidateSetEmptyError, SolverError
from .image import RegionMask, as_image, extension_index, known_mean_fill
from .patches import DELTA, Mollifier, PatchKernel, make_gaussian_kernel, mollify
from .weights import (
    SearchConfig,
    WeightField,
    candidate_distances,
    entropy,
    update_weights,
)

logger = logging.getLogger(__name__)

WEIGHT_DOMAINS = ("all", "extended_hole", "extended_known")
FIDELITY_REGIONS = ("known", "extended_known")
DEFAULT_SIGMA_EST = 10.0


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one restoration run.

    ``h=None`` picks ``2 * sigma_est**2`` (``sigma_est`` is ``sigma``, or 10
    for noise-free data); ``lam=None`` picks ``h / sigma**2``, which is
    infinite when ``sigma == 0`` and then pins the fidelity region to ``v``.
    """

    patch_radius: int = 3
    patch_width: float | None = None
    mollifier: Mollifier = DELTA
    search: SearchConfig = SearchConfig()
    sigma: float = 0.0
    h: float | None = None
    lam: float | None = None
    tol: float = 1e-5
    max_iters: int = 50
    mode: str = "coupled"
    weight_domain: str = "all"
    fidelity_region: str = "known"
    freeze_hole: bool = False
    boundary: str = "mirror"
    init_window: int = 21
    threads: int = 1

    def __post_init__(self):
        if self.patch_radius < 0:
            raise ValueError("patch_radius must be >= 0")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be > 0")
        if self.lam is not None and not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.mode not in ("coupled", "decoupled"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.weight_domain not in WEIGHT_DOMAINS:
            raise ValueError(f"unknown weight domain {self.weight_domain!r}")
        if self.fidelity_region not in FIDELITY_REGIONS:
            raise ValueError(f"unknown fidelity region {self.fidelity_region!r}")

    @property
    def resolved_h(self) -> float:
        if self.h is not None:
            return float(self.h)
        s = self.sigma if self.sigma > 0 else DEFAULT_SIGMA_EST
        return 2.0 * s * s

    @property
    def resolved_lambda(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        if self.sigma == 0:
            return math.inf
        return self.resolved_h / (self.sigma * self.sigma)

    def kernel(self) -> PatchKernel:
        return make_gaussian_kernel(self.patch_radius, self.patch_width)

    def inpainting_stage(self) -> "SolverConfig":
        """Weights only for centers touching the hole; the rest acts as data."""
        return replace(self, weight_domain="extended_hole", freeze_hole=False)

    def denoising_stage(self) -> "SolverConfig":
        """Weights only between patches clear of the hole; hole pixels frozen."""
        return replace(self, weight_domain="extended_known", freeze_hole=True)


@dataclass(frozen=True)
class EnergyBreakdown:
    fidelity: float
    entropy_term: float
    patch_term: float
    total: float
    rel_change: float = math.nan

    @property
    def h_objective(self) -> float:
        """Entropy plus patch term, the weight-dependent part of the energy."""
        return self.entropy_term + self.patch_term


@dataclass
class SolverState:
    u: np.ndarray
    w: WeightField | None = None
    iter: int = 0
    trace: list[EnergyBreakdown] = field(default_factory=list)
    wstep_trace: list[EnergyBreakdown] = field(default_factory=list)
    converged: bool = False


def mask_for(mask: RegionMask | np.ndarray, cfg: SolverConfig) -> RegionMask:
    if isinstance(mask, RegionMask):
        return mask if mask.patch_radius == cfg.patch_radius else mask.with_radius(cfg.patch_radius)
    return RegionMask(np.asarray(mask, dtype=bool), cfg.patch_radius)


def weight_domain(mask: RegionMask, cfg: SolverConfig) -> np.ndarray:
    if cfg.weight_domain == "all":
        return np.ones(mask.shape, dtype=bool)
    if cfg.weight_domain == "extended_hole":
        return mask.extended_hole.copy()
    return mask.extended_known.copy()


def fidelity_weights(mask: RegionMask, cfg: SolverConfig) -> np.ndarray:
    """Per-pixel fidelity weight: lambda on the fidelity region, 0 elsewhere."""
    region = mask.known if cfg.fidelity_region == "known" else mask.extended_known
    return np.where(region, cfg.resolved_lambda, 0.0)


def frozen_pixels(mask: RegionMask, cfg: SolverConfig) -> np.ndarray:
    return mask.hole.copy() if cfg.freeze_hole else np.zeros(mask.shape, dtype=bool)


@dataclass(frozen=True)
class Couplings:
    """Flattened list of pairwise terms c * (u[a] - u[b])^2 of the patch energy."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def couplings(w: WeightField, kernel: PatchKernel, boundary: str = "mirror") -> Couplings:
    """Expand ``w`` into one coupling per (x, candidate y, patch offset z).

    ``a`` and ``b`` are the in-image pixels read at ``x + z`` and ``y + z``
    after boundary extension; ``c = w(x, y) g(z)``.
    """
    hh, ww = w.shape
    r = kernel.radius
    ext_idx = extension_index(w.shape, r, boundary)
    rows, slots = np.nonzero(w.cand >= 0)
    y = w.cand[rows, slots]
    wt = w.weights[rows, slots]
    xr, xc = rows // ww, rows % ww
    yr, yc = y // ww, y % ww
    aa, bb, cc = [], [], []
    for i in range(2 * r + 1):
        for j in range(2 * r + 1):
            aa.append(ext_idx[xr + i, xc + j])
            bb.append(ext_idx[yr + i, yc + j])
            cc.append(wt * (kernel.profile[i] * kernel.profile[j]))
    if not aa:
        empty = np.zeros(0, dtype=np.int64)
        return Couplings(empty, empty, np.zeros(0))
    return Couplings(np.concatenate(aa), np.concatenate(bb), np.concatenate(cc))


def _patch_term(m: np.ndarray, cp: Couplings) -> float:
    flat = m.ravel()
    d = flat[cp.a] - flat[cp.b]
    return float(np.sum(cp.c * d * d))


def _fidelity_term(u: np.ndarray, v: np.ndarray, lam_t: np.ndarray) -> float:
    d = u - v
    finite = np.isfinite(lam_t)
    fid = 0.5 * float(np.sum(np.where(finite, lam_t, 0.0) * d * d))
    if (~finite).any() and np.any(d[~finite] != 0):
        return math.inf
    return fid


def energy(
    u: np.ndarray,
    w: WeightField,
    v: np.ndarray,
    mask: RegionMask | np.ndarray,
    cfg: SolverConfig,
    _couplings: Couplings | None = None,
) -> EnergyBreakdown:
    """Fidelity, entropy and patch terms of J(u, w)."""
    mask = mask_for(mask, cfg)
    kernel = cfg.kernel()
    cp = _couplings if _couplings is not None else couplings(w, kernel, cfg.boundary)
    fid = _fidelity_term(u, v, fidelity_weights(mask, cfg))
    ent = cfg.resolved_h * entropy(w)
    patch = _patch_term(mollify(u, cfg.mollifier, cfg.boundary), cp)
    return EnergyBreakdown(fid, ent, patch, fid + ent + patch)


def mixture_neg_log_likelihood(
    u: np.ndarray,
    mask: RegionMask | np.ndarray,
    kernel: PatchKernel,
    h: float,
    search: SearchConfig = SearchConfig(search_radius=None, top_k=None),
    mollifier: Mollifier = DELTA,
    boundary: str = "mirror",
) -> float:
    """-sum_x ln sum_y delta_h(u_B(x) - u_B(y)), evaluated in log space.

    ``delta_h(d) = (pi h)^(-|B|/2) exp(-eps / h)`` with ``|B|`` the patch
    support size; the sum over ``y`` runs over the admissible centers
    (the whole extended-known set with the default search).
    """
    if not h > 0:
        raise ValueError("h must be > 0")
    u = np.asarray(u, dtype=np.float64)
    if not isinstance(mask, RegionMask):
        mask = RegionMask(np.asarray(mask, dtype=bool), kernel.radius)
    mask = mask.with_radius(kernel.radius)
    if not mask.extended_known.any():
        raise ValueError("no admissible patch centers (extended-known set is empty)")
    dist, _ = candidate_distances(u, mask, kernel, search, mollifier, boundary)
    z = -dist / h
    zmax = z.max(axis=1, keepdims=True)
    bad = ~np.isfinite(zmax[:, 0])
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        ww = u.shape[1]
        raise CandidateSetEmptyError((i // ww, i % ww), search.search_radius or math.inf)
    lse = zmax[:, 0] + np.log(np.sum(np.exp(z - zmax), axis=1))
    const = 0.5 * kernel.support_size * math.log(math.pi * h)
    return float(np.sum(const - lse))


def update_image(
    u: np.ndarray,
    w: WeightField,
    v: np.ndarray,
    mask: RegionMask | np.ndarray,
    cfg: SolverConfig,
    _couplings: Couplings | None = None,
) -> np.ndarray:
    """One pointwise sweep of the image update with the weights held fixed.

        u'(p) = (2 sum c u(q) + lam~ v(p)) / (2 sum c + lam~)

    where the sums run over every coupling incident to ``p`` and ``q`` is the
    other end. It is evaluated in the equivalent increment form
    ``u(p) + (2 sum c (u(q) - u(p)) + lam~ (v(p) - u(p))) / (2 sum c + lam~)``. Pixels with infinite fidelity weight are set to ``v``; frozen
    hole pixels keep their value.
    """
    mask = mask_for(mask, cfg)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cp = _couplings if _couplings is not None else couplings(w, cfg.kernel(), cfg.boundary)
    n = u.size
    flat = u.ravel()
    idx = np.concatenate([cp.a, cp.b])
    other = np.concatenate([cp.b, cp.a])
    two_c = np.concatenate([cp.c, cp.c]) * 2.0
    # accumulate differences u(q) - u(p) so constants are reproduced exactly
    pull = np.bincount(idx, weights=two_c * (flat[other] - flat[idx]), minlength=n)
    den = np.bincount(idx, weights=two_c, minlength=n)
    lam_t = fidelity_weights(mask, cfg).ravel()
    frozen = frozen_pixels(mask, cfg).ravel()
    pinned = np.isinf(lam_t)
    lam_f = np.where(pinned, 0.0, lam_t)
    vf = v.ravel()
    denom = den + lam_f
    active = ~(pinned | frozen)
    bad = active & ~(denom > 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        pix = (i // u.shape[1], i % u.shape[1])
        raise SolverError(
            f"image update has zero denominator at pixel {pix}: no weight mass reaches it "
            "and it has no fidelity; widen the search window or initialize via multiscale",
            pixel=pix,
        )
    out = flat.copy()
    fa = flat[active]
    out[active] = fa + (pull[active] + lam_f[active] * (vf[active] - fa)) / denom[active]
    out[pinned & ~frozen] = vf[pinned & ~frozen]
    return out.reshape(u.shape)


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    num = float(np.sum((new - old) ** 2))
    den = float(np.sum(old * old))
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def iterate(state: SolverState, v: np.ndarray, mask: RegionMask | np.ndarray, cfg: SolverConfig) -> SolverState:
    """Weight step, then image step; records the energy after each."""
    mask = mask_for(mask, cfg)
    kernel = cfg.kernel()
    w = update_weights(
        state.u,
        mask,
        kernel,
        cfg.resolved_h,
        cfg.search,
        domain=weight_domain(mask, cfg),
        mollifier=cfg.mollifier,
        boundary=cfg.boundary,
        threads=cfg.threads,
    )
    cp = couplings(w, kernel, cfg.boundary)
    e_w = energy(state.u, w, v, mask, cfg, _couplings=cp)
    u_new = update_image(state.u, w, v, mask, cfg, _couplings=cp)
    rel = relative_change(u_new, state.u)
    e = energy(u_new, w, v, mask, cfg, _couplings=cp)
    e = replace(e, rel_change=rel)
    if not math.isfinite(e.total):
        raise SolverError(f"non-finite energy at iteration {state.iter + 1}: {e}")
    return SolverState(
        u=u_new,
        w=w,
        iter=state.iter + 1,
        trace=state.trace + [e],
        wstep_trace=state.wstep_trace + [e_w],
        converged=rel < cfg.tol,
    )


def initial_image(v: np.ndarray, mask: RegionMask, cfg: SolverConfig) -> np.ndarray:
    """Known pixels from ``v``; hole pixels from the windowed known mean."""
    if not mask.hole.any():
        return np.array(v, dtype=np.float64, copy=True)
    return known_mean_fill(v, mask.known, cfg.init_window)


def _widened(cfg: SolverConfig, shape: tuple[int, int]) -> SolverConfig | None:
    s = cfg.search.search_radius
    if s is None:
        return None
    s2 = 2 * s
    new_s = None if s2 >= max(shape) else s2
    return replace(cfg, search=replace(cfg.search, search_radius=new_s))


def solve(
    v: np.ndarray,
    mask: RegionMask | np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    u0: np.ndarray | None = None,
) -> SolverState:
    """Alternate weight and image steps until the relative change drops below tol.

    The stopping rule is ``|u_new - u|^2 / |u|^2 < tol`` or ``max_iters``.
    If some pixel has no admissible candidate in its search window the
    window is doubled (up to the whole image) and the run restarts.
    """
    v = as_image(v)
    mask = mask_for(mask, cfg)
    mask.check_image(v)
    u = initial_image(v, mask, cfg) if u0 is None else as_image(u0).copy()
    if u.shape != v.shape:
        raise SolverError(f"initial image shape {u.shape} does not match data {v.shape}")
    state = SolverState(u=u)
    while True:
        try:
            state = iterate(state, v, mask, cfg)
            break
        except CandidateSetEmptyError as exc:
            wider = _widened(cfg, v.shape)
            if wider is None:
                raise
            logger.warning("%s; retrying with search radius %s", exc, wider.search.search_radius)
            cfg = wider
    while not state.converged and state.iter < cfg.max_iters:
        state = iterate(state, v, mask, cfg)
    if not state.converged:
        logger.info("stopped after %d iterations without reaching tol=%g", state.iter, cfg.tol)
    return state


def solve_decoupled(
    v: np.ndarray,
    mask: RegionMask | np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    n_levels: int | None = None,
) -> SolverState:
    """Inpaint the hole first, then denoise the known region separately.

    Stage 1 runs the inpainting configuration through the multiscale driver;
    stage 2 runs the denoising configuration with the hole frozen at the
    stage-1 result. The output takes the hole from stage 1 and the known
    region from stage 2.
    """
    from .multiscale import solve_multiscale

    v = as_image(v)
    mask = mask_for(mask, cfg)
    mask.check_image(v)
    trace: list[EnergyBreakdown] = []
    wtrace: list[EnergyBreakdown] = []
    if mask.hole.any():
        stage1 = solve_multiscale(v, mask, cfg.inpainting_stage(), n_levels)
        filled = np.where(mask.hole, stage1.u, v)
        trace += stage1.trace
        wtrace += stage1.wstep_trace
    else:
        filled = v.copy()
    stage2 = solve(v, mask, cfg.denoising_stage(), u0=filled)
    out = np.where(mask.hole, filled, stage2.u)
    return SolverState(
        u=out,
        w=stage2.w,
        iter=stage2.iter,
        trace=trace + stage2.trace,
        wstep_trace=wtrace + stage2.wstep_trace,
        converged=stage2.converged,
    )


TRACE_HEADER = ["iter", "fidelity", "entropy", "patch", "total", "rel_change"]


def write_trace_csv(trace: list[EnergyBreakdown], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for i, e in enumerate(trace, start=1):
            writer.writerow([i] + [repr(x) for x in (e.fidelity, e.entropy_term, e.patch_term, e.total, e.rel_change)])
