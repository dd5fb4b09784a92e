"""Coarse-to-fine driver for large holes.

Each coarser level halves the resolution with a 5-tap binomial prefilter
that only averages known pixels. A coarse pixel is a hole only when all of
its fine children are holes, so partially known blocks still contribute
data. The coarsest level is solved from a mean-filled start; each finer
level starts from the bilinear upsampling of the level below.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .image import RegionMask, as_image, extend
from .solver import SolverConfig, SolverState, mask_for, solve

logger = logging.getLogger(__name__)

BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
MAX_LEVELS = 4


@dataclass(frozen=True, eq=False)
class Pyramid:
    """Levels ordered coarse to fine as ``(image, hole)`` pairs."""

    levels: list[tuple[np.ndarray, np.ndarray]]
    factor: int = 2

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def _masked_binomial(v: np.ndarray, known: np.ndarray, boundary: str) -> tuple[np.ndarray, np.ndarray]:
    h, w = v.shape
    num = extend(np.where(known, v, 0.0), 2, boundary)
    den = extend(known.astype(np.float64), 2, boundary)
    tn = np.zeros((h + 4, w))
    td = np.zeros((h + 4, w))
    for j, k in enumerate(BINOMIAL5):
        tn += k * num[:, j:j + w]
        td += k * den[:, j:j + w]
    fn = np.zeros((h, w))
    fd = np.zeros((h, w))
    for i, k in enumerate(BINOMIAL5):
        fn += k * tn[i:i + h]
        fd += k * td[i:i + h]
    return fn, fd


def downsample(v: np.ndarray, hole: np.ndarray, boundary: str = "mirror") -> tuple[np.ndarray, np.ndarray]:
    """One pyramid step: known-normalized binomial filter, then keep even samples."""
    v = np.asarray(v, dtype=np.float64)
    hole = np.asarray(hole, dtype=bool)
    fn, fd = _masked_binomial(v, ~hole, boundary)
    fn, fd = fn[::2, ::2], fd[::2, ::2]
    h, w = hole.shape
    padded = np.ones((h + h % 2, w + w % 2), dtype=bool)
    padded[:h, :w] = hole
    ch, cw = padded.shape[0] // 2, padded.shape[1] // 2
    coarse_hole = padded.reshape(ch, 2, cw, 2).all(axis=(1, 3))
    coarse = np.where(fd > 0, fn / np.where(fd > 0, fd, 1.0), 0.0)
    return coarse, coarse_hole


def build_pyramid(
    v: np.ndarray,
    mask: RegionMask | np.ndarray,
    n_levels: int,
    patch_radius: int | None = None,
    boundary: str = "mirror",
) -> Pyramid:
    if n_levels < 1:
        raise ConfigurationError("n_levels must be >= 1")
    v = as_image(v)
    if isinstance(mask, RegionMask):
        hole = mask.hole
        r = mask.patch_radius if patch_radius is None else patch_radius
    else:
        hole = np.asarray(mask, dtype=bool)
        r = 0 if patch_radius is None else patch_radius
    if hole.shape != v.shape:
        raise ConfigurationError(f"mask shape {hole.shape} does not match image shape {v.shape}")
    levels = [(v.copy(), hole.copy())]
    for _ in range(n_levels - 1):
        img, hl = levels[0]
        levels.insert(0, downsample(img, hl, boundary))
    coarse_img, coarse_hole = levels[0]
    need = 2 * (2 * r + 1)
    if n_levels > 1 and min(coarse_img.shape) < need:
        raise ConfigurationError(
            f"coarsest level {coarse_img.shape} is smaller than twice the patch diameter ({need})"
        )
    if not RegionMask(coarse_hole, r).extended_known.any():
        raise ConfigurationError("coarsest level has no patch centers clear of the hole")
    return Pyramid(levels)


def _linear_weights(n_fine: int, n_coarse: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = np.clip(np.arange(n_fine) / 2.0, 0, n_coarse - 1)
    i0 = np.floor(t).astype(int)
    i1 = np.minimum(i0 + 1, n_coarse - 1)
    return i0, i1, t - i0


def upsample_init(
    coarse_u: np.ndarray,
    fine_shape: tuple[int, int],
    fine_hole: np.ndarray,
    fine_v: np.ndarray,
) -> np.ndarray:
    """Bilinear upsampling (fine pixel p sits at coarse coordinate p/2), then
    known fine pixels are overwritten with ``fine_v``."""
    coarse_u = np.asarray(coarse_u, dtype=np.float64)
    hf, wf = fine_shape
    hc, wc = coarse_u.shape
    if hc != math.ceil(hf / 2) or wc != math.ceil(wf / 2):
        raise ConfigurationError(f"coarse shape {coarse_u.shape} is not half of {fine_shape}")
    fine_hole = np.asarray(fine_hole, dtype=bool)
    if fine_hole.shape != tuple(fine_shape) or np.shape(fine_v) != tuple(fine_shape):
        raise ConfigurationError("fine mask/image shape mismatch")
    r0, r1, fr = _linear_weights(hf, hc)
    c0, c1, fc = _linear_weights(wf, wc)
    rows = coarse_u[r0] * (1 - fr)[:, None] + coarse_u[r1] * fr[:, None]
    up = rows[:, c0] * (1 - fc)[None, :] + rows[:, c1] * fc[None, :]
    return np.where(fine_hole, up, fine_v)


def default_n_levels(hole: np.ndarray, patch_radius: int, shape: tuple[int, int] | None = None) -> int:
    """floor(log2(hole diameter / patch diameter)) + 1, clamped to [1, 4].

    The hole diameter is the side of the largest square that fits inside the
    hole. Levels are further capped so the coarsest image stays at least two
    patch diameters wide.
    """
    hole = np.asarray(hole, dtype=bool)
    if not hole.any():
        return 1
    depth = ndimage.distance_transform_cdt(np.pad(hole, 1), metric="chessboard")
    diameter = 2 * int(depth.max()) - 1
    patch_d = 2 * patch_radius + 1
    n = int(math.floor(math.log2(max(diameter, 1) / patch_d))) + 1 if diameter > patch_d else 1
    n = max(1, min(MAX_LEVELS, n))
    shape = hole.shape if shape is None else shape
    while n > 1 and min(math.ceil(s / 2 ** (n - 1)) for s in shape) < 2 * patch_d:
        n -= 1
    return n


def solve_multiscale(
    v: np.ndarray,
    mask: RegionMask | np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    n_levels: int | None = None,
    on_level: Callable[[int, SolverState], None] | None = None,
) -> SolverState:
    """Solve coarse to fine; returns the finest state with the full trace.

    ``on_level(k, state)`` is called after each level, ``k = 0`` coarsest.
    """
    v = as_image(v)
    mask = mask_for(mask, cfg)
    mask.check_image(v)
    if n_levels is None:
        n_levels = default_n_levels(mask.hole, cfg.patch_radius, v.shape)
    pyr = build_pyramid(v, mask, n_levels, cfg.patch_radius, cfg.boundary)
    trace, wtrace = [], []
    state = None
    for k, (img, hole) in enumerate(pyr.levels):
        if state is None:
            u0 = None
        else:
            u0 = upsample_init(state.u, img.shape, hole, img)
        state = solve(img, RegionMask(hole, cfg.patch_radius), cfg, u0=u0)
        if not np.all(np.isfinite(state.u)):
            raise ConfigurationError(f"level {k} produced non-finite values")
        if not state.converged:
            logger.warning("level %d/%d stopped at max_iters=%d before converging", k + 1, n_levels, cfg.max_iters)
        trace += state.trace
        wtrace += state.wstep_trace
        if on_level is not None:
            on_level(k, state)
    state.trace = trace
    state.wstep_trace = wtrace
    return state
