"""Procedural test images on the square canvas ``[-1, 1]^2``."""
from __future__ import annotations

import numpy as np

from .core import Image2D, pixel_radii

# (amplitude, x, y, width): off-centre blobs with distinct radii so the
# image has no rotational or mirror symmetry. The widths are narrow enough that
# neighbouring views differ by more than 1% measurement noise, which the
# nearest-neighbour ordering relies on.
DEFAULT_BLOBS = (
    (1.00, 0.38, 0.10, 0.052),
    (0.75, -0.22, 0.33, 0.048),
    (0.55, -0.15, -0.40, 0.040),
    (0.40, 0.10, -0.12, 0.064),
)
DEFAULT_R0 = 0.95


def _canvas(n: int) -> tuple[np.ndarray, np.ndarray, float]:
    p = 2.0 / n
    c = (np.arange(n) - (n - 1) / 2) * p
    return c[None, :], c[:, None], p


def gaussian_mixture(n: int = 128, blobs=DEFAULT_BLOBS, r0: float = DEFAULT_R0) -> Image2D:
    """Sum of isotropic Gaussians, zeroed outside radius ``r0``."""
    x, y, p = _canvas(n)
    img = np.zeros((n, n))
    for amp, cx, cy, s in blobs:
        img += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
    img[pixel_radii(img.shape, p) > r0] = 0.0
    return Image2D(img, p, r0)


def centered_gaussian(n: int = 128, width: float = 0.15, r0: float = DEFAULT_R0) -> Image2D:
    return gaussian_mixture(n, ((1.0, 0.0, 0.0, width),), r0)


def disc(n: int = 256, radius: float = 0.8, r0: float = DEFAULT_R0, supersample: int = 8) -> Image2D:
    """Unit-valued disc with anti-aliased edge (fractional pixel coverage)."""
    x, y, p = _canvas(n)
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    cover = np.zeros((n, n))
    for dy in sub:
        for dx in sub:
            cover += (x + dx * p) ** 2 + (y + dy * p) ** 2 <= radius * radius
    cover /= supersample * supersample
    cover[pixel_radii(cover.shape, p) > r0] = 0.0
    return Image2D(cover, p, r0)


def default_phantom(n: int = 128) -> Image2D:
    return gaussian_mixture(n)
