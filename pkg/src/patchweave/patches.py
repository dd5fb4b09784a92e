"""Patch supports, intra-patch weights, mollifiers and the patch error.

The patch error between centers ``x`` and ``y`` is

    eps(x, y) = sum_z g(z) * (m(x + z) - m(y + z))**2

over the square support ``|z|_inf <= r``, where ``m`` is the (optionally
mollified) image read through the boundary policy. ``g`` is a normalized
separable Gaussian, so ``eps`` is a weighted *mean* of squared differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import extend


def _gaussian_profile(r: int, width: float) -> np.ndarray:
    t = np.arange(-r, r + 1, dtype=np.float64)
    p = np.exp(-(t * t) / (2.0 * width * width))
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class PatchKernel:
    """Square patch support of radius ``r`` with weights ``g = outer(profile, profile)``."""

    radius: int
    width: float
    profile: np.ndarray

    @property
    def size(self) -> int:
        return 2 * self.radius + 1

    @property
    def support_size(self) -> int:
        return self.size * self.size

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.profile, self.profile)

    @property
    def offsets(self) -> list[tuple[int, int]]:
        r = self.radius
        return [(i, j) for i in range(-r, r + 1) for j in range(-r, r + 1)]

    def weight(self, dz_row: int, dz_col: int) -> float:
        r = self.radius
        return float(self.profile[dz_row + r] * self.profile[dz_col + r])


def default_patch_width(r: int) -> float:
    return r / 2.0 if r > 0 else 1.0


def make_gaussian_kernel(r: int, a: float | None = None) -> PatchKernel:
    """Gaussian patch weights g(z) ~ exp(-|z|^2 / (2 a^2)) normalized to sum 1."""
    if r < 0:
        raise ValueError(f"patch radius must be >= 0, got {r}")
    if a is None:
        a = default_patch_width(r)
    if not a > 0:
        raise ValueError(f"Gaussian width must be > 0, got {a}")
    profile = _gaussian_profile(r, a)
    profile.setflags(write=False)
    return PatchKernel(radius=r, width=float(a), profile=profile)


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Pre-smoothing applied before patches are compared.

    ``Mollifier()`` is the identity (delta). ``Mollifier.gaussian(radius)``
    is a normalized Gaussian on a ``(2 radius + 1)`` square.
    """

    kind: str = "delta"
    radius: int = 0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("delta", "gaussian"):
            raise ValueError(f"unknown mollifier kind {self.kind!r}")
        if self.kind == "gaussian" and (self.radius < 1 or not self.width > 0):
            raise ValueError("gaussian mollifier needs radius >= 1 and width > 0")

    @classmethod
    def gaussian(cls, radius: int = 1, width: float | None = None) -> "Mollifier":
        return cls("gaussian", radius, radius / 2.0 if width is None else width)

    @property
    def is_delta(self) -> bool:
        return self.kind == "delta"

    @property
    def weights(self) -> np.ndarray:
        if self.is_delta:
            return np.ones((1, 1))
        p = _gaussian_profile(self.radius, self.width)
        return np.outer(p, p)


DELTA = Mollifier()


def mollify(u: np.ndarray, m: Mollifier = DELTA, boundary: str = "mirror") -> np.ndarray:
    """Convolve ``u`` with the mollifier; the delta kind returns a copy of ``u``."""
    u = np.asarray(u, dtype=np.float64)
    if m.is_delta:
        return u.copy()
    k = m.radius
    h, w = u.shape
    p = _gaussian_profile(k, m.width)
    ext = extend(u, k, boundary)
    # kernel is symmetric, so correlation and convolution coincide
    rows = np.zeros((h + 2 * k, w))
    for j in range(2 * k + 1):
        rows += p[j] * ext[:, j:j + w]
    out = np.zeros((h, w))
    for i in range(2 * k + 1):
        out += p[i] * rows[i:i + h, :]
    return out


def patch_distance(
    u: np.ndarray,
    x: tuple[int, int],
    y: tuple[int, int],
    kernel: PatchKernel,
    mollifier: Mollifier = DELTA,
    boundary: str = "mirror",
) -> float:
    """Patch error between the patches centered at pixels ``x`` and ``y``."""
    r = kernel.radius
    ext = extend(mollify(u, mollifier, boundary), r, boundary)
    n = kernel.size
    px = ext[x[0]:x[0] + n, x[1]:x[1] + n]
    py = ext[y[0]:y[0] + n, y[1]:y[1] + n]
    d = px - py
    return float(np.sum(kernel.weights * d * d))


def shifted_patch_distances(
    ext: np.ndarray,
    kernel: PatchKernel,
    offsets: np.ndarray,
    rows: tuple[int, int] | None = None,
) -> np.ndarray:
    """Patch errors eps(x, x + d) for every pixel x and every offset d.

    ``ext`` is the (mollified) image already extended by ``kernel.radius``.
    Returns an array of shape ``(len(offsets), n_rows, W)`` covering image
    rows ``rows`` (all rows by default). Entries whose partner ``x + d``
    falls outside the image are meaningless and must be masked by the
    caller. Each entry is accumulated tap by tap in a fixed order, so its
    value does not depend on how the image is split into row bands.
    """
    r = kernel.radius
    h = ext.shape[0] - 2 * r
    w = ext.shape[1] - 2 * r
    r0, r1 = (0, h) if rows is None else rows
    bh = r1 - r0
    offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, 2)
    if len(offsets) == 0:
        return np.zeros((0, bh, w))
    s = int(np.abs(offsets).max())
    band = ext[r0:r1 + 2 * r]
    big = np.pad(ext, s, mode="constant")
    windows = sliding_window_view(big, band.shape)
    shifted = windows[s + r0 + offsets[:, 0], s + offsets[:, 1]]
    diff = band[None, :, :] - shifted
    diff *= diff
    q = kernel.profile
    tmp = np.zeros((len(offsets), bh + 2 * r, w))
    for j in range(2 * r + 1):
        tmp += q[j] * diff[:, :, j:j + w]
    out = np.zeros((len(offsets), bh, w))
    for i in range(2 * r + 1):
        out += q[i] * tmp[:, i:i + bh, :]
    return out
