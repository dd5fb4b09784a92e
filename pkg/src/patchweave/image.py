"""Images, hole masks, region algebra, noise synthesis and quality metrics.

Images are plain 2-D ``float64`` arrays on the 0-255 intensity scale, indexed
``[row, col]``. Reads outside the image go through :func:`extend`, which
implements the two supported boundary policies:

``mirror``
    half-sample symmetric reflection (``abc|cba``), the default;
``clamp``
    edge replication (``abc|ccc``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, EmptyRegionError

BOUNDARY_POLICIES = {"mirror": "symmetric", "clamp": "edge"}


def _np_mode(boundary: str) -> str:
    try:
        return BOUNDARY_POLICIES[boundary]
    except KeyError:
        raise ConfigurationError(
            f"unknown boundary policy {boundary!r}; expected one of {sorted(BOUNDARY_POLICIES)}"
        ) from None


def as_image(a) -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array (copying only when needed)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ConfigurationError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("image contains NaN or Inf values")
    return arr


def extend(u: np.ndarray, pad: int, boundary: str = "mirror") -> np.ndarray:
    """Pad ``u`` by ``pad`` pixels on every side using the boundary policy."""
    if pad < 0:
        raise ValueError("pad must be non-negative")
    if pad == 0:
        return np.array(u, copy=True)
    return np.pad(u, pad, mode=_np_mode(boundary))


def extension_index(shape: tuple[int, int], pad: int, boundary: str = "mirror") -> np.ndarray:
    """Flat in-image index that each position of the padded grid reads from.

    ``extend(u, pad)`` equals ``u.ravel()[extension_index(u.shape, pad)]``; the
    solver uses the index to scatter gradients of out-of-bounds reads back onto
    the pixels they came from.
    """
    idx = np.arange(shape[0] * shape[1], dtype=np.int64).reshape(shape)
    return extend(idx, pad, boundary)


def dilate_mask(hole: np.ndarray, r: int) -> np.ndarray:
    """Centers whose ``(2r+1)x(2r+1)`` square neighbourhood meets the hole.

    This is the extended hole (hole + B_r); an empty hole stays empty.
    """
    hole = np.asarray(hole, dtype=bool)
    if r < 0:
        raise ValueError("patch radius must be non-negative")
    if hole.ndim != 2 or 0 in hole.shape:
        raise ConfigurationError(f"mask must be a non-empty 2-D array, got shape {hole.shape}")
    if r == 0 or not hole.any():
        return hole.copy()
    return ndimage.maximum_filter(hole, size=2 * r + 1, mode="constant", cval=False)


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Hole labeling plus the derived sets for a given patch radius.

    ``hole`` is O, ``known`` its complement, ``extended_hole`` is O + B_r and
    ``extended_known`` the complement of that (the admissible patch centers).
    """

    hole: np.ndarray
    patch_radius: int = 0

    def __post_init__(self):
        hole = np.asarray(self.hole, dtype=bool)
        if hole.ndim != 2 or 0 in hole.shape:
            raise ConfigurationError(f"mask must be a non-empty 2-D array, got shape {hole.shape}")
        if self.patch_radius < 0:
            raise ValueError("patch radius must be non-negative")
        hole = hole.copy()
        hole.setflags(write=False)
        object.__setattr__(self, "hole", hole)

    @classmethod
    def empty(cls, shape: tuple[int, int], patch_radius: int = 0) -> "RegionMask":
        return cls(np.zeros(shape, dtype=bool), patch_radius)

    @property
    def shape(self) -> tuple[int, int]:
        return self.hole.shape

    @property
    def height(self) -> int:
        return self.hole.shape[0]

    @property
    def width(self) -> int:
        return self.hole.shape[1]

    @property
    def known(self) -> np.ndarray:
        return ~self.hole

    @cached_property
    def extended_hole(self) -> np.ndarray:
        out = dilate_mask(self.hole, self.patch_radius)
        out.setflags(write=False)
        return out

    @property
    def extended_known(self) -> np.ndarray:
        return ~self.extended_hole

    def with_radius(self, r: int) -> "RegionMask":
        return RegionMask(self.hole, r)

    def check_image(self, u: np.ndarray) -> None:
        if np.shape(u) != self.shape:
            raise ConfigurationError(
                f"mask shape {self.shape} does not match image shape {np.shape(u)}"
            )


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")


def add_gaussian_noise(u: np.ndarray, spec: NoiseSpec, region: np.ndarray | None = None) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) samples to ``u`` on ``region`` (everywhere if None).

    The full noise field is drawn before masking, so the value added at a pixel
    depends only on the seed and the image shape, not on the region.
    """
    u = as_image(u)
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.shape != u.shape:
            raise ConfigurationError(f"region shape {region.shape} does not match image {u.shape}")
    if spec.sigma == 0:
        return u.copy()
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.sigma, size=u.shape)
    if region is None:
        return u + noise
    return np.where(region, u + noise, u)


def _region_values(a, b, region) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError(f"image shapes differ: {a.shape} vs {b.shape}")
    if region is None:
        if a.size == 0:
            raise EmptyRegionError("empty region")
        return a.ravel(), b.ravel()
    region = np.asarray(region, dtype=bool)
    if region.shape != a.shape:
        raise ConfigurationError(f"region shape {region.shape} does not match image {a.shape}")
    if not region.any():
        raise EmptyRegionError("empty region")
    return a[region], b[region]


def mse(a, b, region=None) -> float:
    """Mean squared difference over ``region`` (whole image if None)."""
    x, y = _region_values(a, b, region)
    d = x - y
    return float(np.mean(d * d))


def psnr(a, b, region=None, peak: float = 255.0) -> float:
    """PSNR in dB; ``math.inf`` when the images agree exactly on the region."""
    err = mse(a, b, region)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def known_mean_fill(v: np.ndarray, known: np.ndarray, window: int = 21) -> np.ndarray:
    """Fill unknown pixels with the mean of known pixels in a ``window``-sized box.

    Pixels whose box holds no known pixel fall back to the global known mean.
    Known pixels are returned unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    known = np.asarray(known, dtype=bool)
    if known.all():
        return v.copy()
    if not known.any():
        raise EmptyRegionError("cannot initialize holes: no known pixels")
    vk = np.where(known, v, 0.0)
    # box sums via zero-padded summed-area table keep integer-valued sums exact
    half = window // 2
    sums = _box_sum(vk, half)
    counts = _box_sum(known.astype(np.float64), half)
    global_mean = float(vk.sum() / known.sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        local = np.where(counts > 0, sums / np.where(counts > 0, counts, 1.0), global_mean)
    return np.where(known, v, local)


def _box_sum(a: np.ndarray, half: int) -> np.ndarray:
    h, w = a.shape
    sat = np.zeros((h + 1, w + 1))
    sat[1:, 1:] = a.cumsum(0).cumsum(1)
    r0 = np.clip(np.arange(h) - half, 0, h)
    r1 = np.clip(np.arange(h) + half + 1, 0, h)
    c0 = np.clip(np.arange(w) - half, 0, w)
    c1 = np.clip(np.arange(w) + half + 1, 0, w)
    return (
        sat[np.ix_(r1, c1)] - sat[np.ix_(r0, c1)] - sat[np.ix_(r1, c0)] + sat[np.ix_(r0, c0)]
    )

