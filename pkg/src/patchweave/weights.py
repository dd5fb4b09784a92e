"""Nonlocal weight fields: candidate search, the softmax weight update, entropy.

A :class:`WeightField` stores, for every pixel ``x`` that carries a
distribution, a fixed-width row of candidate centers ``y`` (flat indices,
``-1`` for unused slots) and their weights. Rows of pixels outside the
field's domain are entirely empty.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CandidateSetEmptyError
from .image import RegionMask, extend
from .patches import DELTA, Mollifier, PatchKernel, mollify, shifted_patch_distances

# offsets evaluated per vectorized batch; bounds peak memory of the search
OFFSET_BATCH = 96


@dataclass(frozen=True)
class SearchConfig:
    """Candidate window half-width (None = whole image), top-K truncation, stride."""

    search_radius: int | None = 15
    top_k: int | None = 32
    subsample_stride: int = 1

    def __post_init__(self):
        if self.search_radius is not None and self.search_radius < 1:
            raise ValueError("search_radius must be >= 1 (or None for unbounded)")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1 when given")
        if self.subsample_stride < 1:
            raise ValueError("subsample_stride must be >= 1")

    def window_offsets(self, shape: tuple[int, int]) -> np.ndarray:
        """Row-major ``(n, 2)`` array of admissible center offsets."""
        h, w = shape
        if self.search_radius is None:
            sr, sc = h - 1, w - 1
        else:
            sr = min(self.search_radius, h - 1)
            sc = min(self.search_radius, w - 1)
        st = self.subsample_stride
        dr = np.arange(-sr, sr + 1)
        dc = np.arange(-sc, sc + 1)
        dr = dr[dr % st == 0]
        dc = dc[dc % st == 0]
        grid = np.stack(np.meshgrid(dr, dc, indexing="ij"), axis=-1)
        return grid.reshape(-1, 2)


def candidate_set(x: tuple[int, int], cfg: SearchConfig, mask: RegionMask) -> list[tuple[int, int]]:
    """Admissible patch centers for pixel ``x`` in row-major order."""
    h, w = mask.shape
    ok = mask.extended_known
    out = []
    for dr, dc in cfg.window_offsets(mask.shape):
        yr, yc = x[0] + int(dr), x[1] + int(dc)
        if 0 <= yr < h and 0 <= yc < w and ok[yr, yc]:
            out.append((yr, yc))
    if not out:
        raise CandidateSetEmptyError(tuple(x), math.inf if cfg.search_radius is None else cfg.search_radius)
    return out


@dataclass(frozen=True, eq=False)
class WeightField:
    """Sparse per-pixel distributions over candidate patch centers.

    ``cand[i, k]`` is the flat index of the k-th candidate of pixel ``i``
    (-1 when unused), ``weights[i, k]`` its probability, and ``distances``
    the patch errors the weights were computed from (``inf`` when unused).
    """

    shape: tuple[int, int]
    cand: np.ndarray
    weights: np.ndarray
    domain: np.ndarray
    distances: np.ndarray | None = None

    @property
    def n_pixels(self) -> int:
        return self.shape[0] * self.shape[1]

    def row(self, x: tuple[int, int]) -> list[tuple[tuple[int, int], float]]:
        i = x[0] * self.shape[1] + x[1]
        w = self.shape[1]
        return [
            ((int(c) // w, int(c) % w), float(p))
            for c, p in zip(self.cand[i], self.weights[i])
            if c >= 0
        ]

    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1).reshape(self.shape)

    def to_dense(self) -> np.ndarray:
        """``(N, N)`` matrix of w(x, y); intended for desk-scale checks only."""
        n = self.n_pixels
        dense = np.zeros((n, n))
        rows = np.repeat(np.arange(n), self.cand.shape[1]).reshape(self.cand.shape)
        ok = self.cand >= 0
        np.add.at(dense, (rows[ok], self.cand[ok]), self.weights[ok])
        return dense


def extended_weight(field: WeightField, x: tuple[int, int], y: tuple[int, int]) -> float:
    """Zero-extended lookup: the stored w(x, y), or 0 for anything not stored."""
    h, w = field.shape
    if not (0 <= x[0] < h and 0 <= x[1] < w and 0 <= y[0] < h and 0 <= y[1] < w):
        return 0.0
    i = x[0] * w + x[1]
    j = y[0] * w + y[1]
    hit = np.flatnonzero(field.cand[i] == j)
    return float(field.weights[i, hit[0]]) if hit.size else 0.0


def entropy(field: WeightField) -> float:
    """sum_x sum_y w ln w with the convention 0 ln 0 = 0."""
    w = field.weights
    pos = w > 0
    terms = np.zeros_like(w)
    terms[pos] = w[pos] * np.log(w[pos])
    return float(terms.sum())


def softmax_rows(distances: np.ndarray, h: float) -> np.ndarray:
    """Row-wise exp(-d/h) normalization with max subtraction; inf maps to 0."""
    finite = np.isfinite(distances)
    dmin = np.where(finite, distances, np.inf).min(axis=1, keepdims=True)
    dmin = np.where(np.isfinite(dmin), dmin, 0.0)
    z = np.where(finite, np.exp(-(np.where(finite, distances, dmin) - dmin) / h), 0.0)
    s = z.sum(axis=1, keepdims=True)
    return z / np.where(s > 0, s, 1.0)


def _smallest_k(dist: np.ndarray, idx: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Keep the k smallest entries per row; ties go to the earlier column.

    Surviving entries keep their column order.
    """
    n, m = dist.shape
    if m <= k:
        return dist, idx
    thr = np.partition(dist, k - 1, axis=1)[:, k - 1:k]
    below = dist < thr
    tie = dist == thr
    need = k - below.sum(axis=1, keepdims=True)
    keep = below | (tie & (np.cumsum(tie, axis=1) <= need))
    return dist[keep].reshape(n, k), idx[keep].reshape(n, k)


def _band_search(
    ext: np.ndarray,
    ok_pad: np.ndarray,
    kernel: PatchKernel,
    offsets: np.ndarray,
    s: int,
    rows: tuple[int, int],
    top_k: int | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Patch errors to all admissible candidates for the pixels in ``rows``.

    Returns ``(dist, off_idx)`` of shape ``(n_band_pixels, K)`` where
    ``off_idx`` indexes ``offsets``; inadmissible slots hold ``inf``.
    """
    r0, r1 = rows
    bh = r1 - r0
    w = ext.shape[1] - 2 * kernel.radius
    ok_windows = sliding_window_view(ok_pad, (bh, w))
    best_d = np.zeros((bh * w, 0))
    best_i = np.zeros((bh * w, 0), dtype=np.int64)
    for start in range(0, len(offsets), OFFSET_BATCH):
        chunk = offsets[start:start + OFFSET_BATCH]
        c = len(chunk)
        dist = shifted_patch_distances(ext, kernel, chunk, rows)
        valid = ok_windows[s + r0 + chunk[:, 0], s + chunk[:, 1]]
        dist[~valid] = np.inf
        dist = dist.reshape(c, bh * w).T
        ids = np.broadcast_to(np.arange(start, start + c), dist.shape)
        best_d = np.concatenate([best_d, dist], axis=1)
        best_i = np.concatenate([best_i, ids], axis=1)
        if top_k is not None:
            best_d, best_i = _smallest_k(best_d, best_i, top_k)
    return best_d, best_i


def candidate_distances(
    u: np.ndarray,
    mask: RegionMask,
    kernel: PatchKernel,
    cfg: SearchConfig = SearchConfig(),
    mollifier: Mollifier = DELTA,
    boundary: str = "mirror",
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Patch errors from every pixel to its (top-K) admissible candidates.

    Returns ``(dist, cand)``, both ``(N, K)``: ``cand`` holds flat candidate
    indices in row-major order (-1 where unused) and ``dist`` the matching
    patch errors (inf where unused). Pixels are processed in row bands on
    up to ``threads`` workers; every entry is computed identically whatever
    the banding, so the result does not depend on the thread count.
    """
    u = np.asarray(u, dtype=np.float64)
    if mask.patch_radius != kernel.radius:
        mask = mask.with_radius(kernel.radius)
    shape = u.shape
    hh, ww = shape
    offsets = cfg.window_offsets(shape)
    s = int(np.abs(offsets).max()) if len(offsets) else 0
    ext = extend(mollify(u, mollifier, boundary), kernel.radius, boundary)
    ok_pad = np.pad(mask.extended_known, s, mode="constant", constant_values=False)

    threads = max(1, int(threads))
    edges = np.linspace(0, hh, min(hh, threads) + 1).round().astype(int)
    bands = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def run(rows):
        return _band_search(ext, ok_pad, kernel, offsets, s, rows, cfg.top_k)

    if len(bands) == 1:
        parts = [run(bands[0])]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bands))
    dist = np.concatenate([p[0] for p in parts], axis=0)
    off_idx = np.concatenate([p[1] for p in parts], axis=0)
    pix = np.arange(hh * ww, dtype=np.int64)[:, None]
    cand = pix + offsets[off_idx, 0] * ww + offsets[off_idx, 1]
    cand = np.where(np.isfinite(dist), cand, -1)
    return dist, cand


def update_weights(
    u: np.ndarray,
    mask: RegionMask,
    kernel: PatchKernel,
    h: float,
    cfg: SearchConfig = SearchConfig(),
    domain: np.ndarray | None = None,
    mollifier: Mollifier = DELTA,
    boundary: str = "mirror",
    threads: int = 1,
) -> WeightField:
    """Softmax weights w(x, y) proportional to exp(-eps(x, y) / h).

    Candidates ``y`` are the extended-known centers in the search window of
    ``x``; with ``top_k`` only the K closest survive and are renormalized.
    ``domain`` selects the pixels that get a distribution (all by default).
    The result is independent of ``threads``.
    """
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    u = np.asarray(u, dtype=np.float64)
    mask.check_image(u)
    if mask.patch_radius != kernel.radius:
        mask = mask.with_radius(kernel.radius)
    shape = u.shape
    if domain is None:
        domain = np.ones(shape, dtype=bool)
    domain = np.asarray(domain, dtype=bool)
    dist, cand = candidate_distances(u, mask, kernel, cfg, mollifier, boundary, threads)
    hh, ww = shape
    flat_dom = domain.ravel()
    dist = np.where(flat_dom[:, None], dist, np.inf)
    cand = np.where(flat_dom[:, None], cand, -1)
    empty = flat_dom & ~np.isfinite(dist).any(axis=1)
    if empty.any():
        i = int(np.flatnonzero(empty)[0])
        raise CandidateSetEmptyError(
            (i // ww, i % ww), math.inf if cfg.search_radius is None else cfg.search_radius
        )
    weights = softmax_rows(dist, h)
    return WeightField(shape=shape, cand=cand, weights=weights, domain=domain.copy(), distances=dist)


def write_weights_csv(field: WeightField, x: tuple[int, int], path: str | os.PathLike) -> None:
    """Dump one pixel's distribution as ``y_row,y_col,weight`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y_row", "y_col", "weight"])
        for (yr, yc), p in field.row(x):
            writer.writerow([yr, yc, repr(p)])
