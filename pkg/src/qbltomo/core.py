"""Shared numeric types and helpers.

Everything here works in float64 / complex128. Fourier series are stored with
a symmetric index range ``[-k0, k0]`` in a single array; index ``k`` lives at
``coeffs[k + k0]``.

Randomness goes through :func:`make_rng`, which wraps numpy's PCG64 bit
generator. Child streams are derived with :func:`derive_seed` so that parallel
or reordered work never shares generator state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SEED_MASK = (1 << 64) - 1


class FormatError(ValueError):
    """Raised for malformed image/sinogram files."""


# ---------------------------------------------------------------------------
# RNG
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit unsigned seed."""
    seed = int(seed)
    if seed < 0 or seed > SEED_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministically derive a child seed from ``seed`` and integer keys."""
    ss = np.random.SeedSequence([int(seed) & SEED_MASK, *[int(k) & SEED_MASK for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_sorted_uniform(n: int, lo: float, hi: float, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. Uniform[lo, hi) locations and return them sorted."""
    if n < 1:
        raise ValueError("sample_sorted_uniform needs n >= 1")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi})")
    rng = make_rng(seed)
    t = np.sort(lo + (hi - lo) * rng.random(n))
    # guard against rounding up to hi for very narrow intervals
    return np.minimum(t, np.nextafter(hi, lo))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Image2D:
    """Real image on a square-pixel grid centred on the origin.

    Pixel ``[row, col]`` sits at ``x = (col - c) * pixel_size``,
    ``y = (row - c) * pixel_size`` with ``c = (n - 1) / 2`` per axis.
    """

    pixels: np.ndarray
    pixel_size: float = 1.0
    support_radius: float | None = None

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError("Image2D pixels must be a 2D array")
        if not np.all(np.isfinite(px)):
            raise ValueError("Image2D pixels must be finite")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        r = pixel_radii(px.shape, self.pixel_size)
        nz = px != 0
        if self.support_radius is None:
            r0 = float(r[nz].max()) if nz.any() else 0.0
            object.__setattr__(self, "support_radius", r0)
        elif np.any(nz & (r > self.support_radius)):
            raise ValueError("nonzero pixels outside support_radius")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def max_abs_am(self) -> float:
        return float(np.abs(self.pixels).max()) if self.pixels.size else 0.0

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical x (per column) and y (per row) coordinates."""
        h, w = self.pixels.shape
        x = (np.arange(w) - (w - 1) / 2) * self.pixel_size
        y = (np.arange(h) - (h - 1) / 2) * self.pixel_size
        return x, y


def pixel_radii(shape: tuple[int, int], pixel_size: float) -> np.ndarray:
    h, w = shape
    x = (np.arange(w) - (w - 1) / 2) * pixel_size
    y = (np.arange(h) - (h - 1) / 2) * pixel_size
    return np.hypot(x[None, :], y[:, None])


def support_mask(shape: tuple[int, int], pixel_size: float, radius: float) -> np.ndarray:
    return pixel_radii(shape, pixel_size) <= radius


@dataclass(frozen=True)
class Sinogram:
    """Projections, one row per view, ``B`` offset bins uniform on ``[-r0, r0]``.

    ``angles_known`` is ground truth kept only for diagnostics; reconstruction
    never reads it unless explicitly asked to.
    """

    data: np.ndarray
    bin_spacing: float
    angles_known: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.data)
        d = np.ascontiguousarray(d, dtype=np.complex128 if np.iscomplexobj(d) else np.float64)
        if d.ndim != 2:
            raise ValueError("sinogram data must be 2D (projections x bins)")
        if d.shape[1] < 2:
            raise ValueError("sinogram needs at least 2 bins")
        if not np.all(np.isfinite(d)):
            raise ValueError("sinogram data must be finite")
        if self.bin_spacing <= 0:
            raise ValueError("bin_spacing must be positive")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        if self.angles_known is not None:
            a = np.asarray(self.angles_known, dtype=np.float64).copy()
            if a.shape != (d.shape[0],):
                raise ValueError("angles_known must have one entry per projection")
            a.setflags(write=False)
            object.__setattr__(self, "angles_known", a)

    @property
    def num_projections(self) -> int:
        return self.data.shape[0]

    @property
    def num_bins(self) -> int:
        return self.data.shape[1]

    @property
    def support_radius(self) -> float:
        return self.bin_spacing * (self.num_bins - 1) / 2

    @property
    def offsets(self) -> np.ndarray:
        b = self.num_bins
        return (np.arange(b) - (b - 1) / 2) * self.bin_spacing


@dataclass(frozen=True)
class PeriodicSignal:
    period: float
    eval: Callable[[np.ndarray], np.ndarray]

    def __call__(self, t):
        return self.eval(np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class FourierSeries:
    """Truncated Fourier series ``sum_{|k|<=k0} c_k exp(2j*pi*k*t/period)``."""

    k0: int
    coeffs: np.ndarray
    period: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128).ravel().copy()
        if self.k0 < 0:
            raise ValueError("k0 must be >= 0")
        if c.size != 2 * self.k0 + 1:
            raise ValueError(f"expected {2 * self.k0 + 1} coefficients, got {c.size}")
        if self.period <= 0:
            raise ValueError("period must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_dict(cls, coeffs: dict[int, complex], period: float = 1.0) -> "FourierSeries":
        k0 = max((abs(k) for k in coeffs), default=0)
        c = np.zeros(2 * k0 + 1, dtype=np.complex128)
        for k, v in coeffs.items():
            c[k + k0] = v
        return cls(k0, c, period)

    @classmethod
    def zeros(cls, k0: int, period: float = 1.0) -> "FourierSeries":
        return cls(k0, np.zeros(2 * k0 + 1, dtype=np.complex128), period)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.k0, self.k0 + 1)

    def coeff(self, k: int) -> complex:
        return complex(self.coeffs[k + self.k0]) if abs(k) <= self.k0 else 0j

    def __call__(self, t):
        return synthesize(self, t)


def synthesize(fs: FourierSeries, t):
    """Evaluate the series at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=np.float64)
    w = 2j * np.pi / fs.period
    out = np.exp(w * np.multiply.outer(t_arr, fs.ks)) @ fs.coeffs
    return complex(out) if t_arr.ndim == 0 else out


def analyze_uniform(values: np.ndarray, k0: int, period: float = 1.0) -> FourierSeries:
    """Fourier coefficients from samples on the exact grid ``t_m = m*period/M``.

    Exact (up to rounding) when the signal has no content beyond ``|k| > M - k0 - 1``.
    """
    v = np.asarray(values, dtype=np.complex128)
    m = v.size
    if m < 2 * k0 + 1:
        raise ValueError(f"need at least {2 * k0 + 1} samples for k0={k0}, got {m}")
    spec = np.fft.fft(v) / m
    ks = np.arange(-k0, k0 + 1)
    return FourierSeries(k0, spec[ks % m], period)


def l2_distance_periodic(f: FourierSeries, g: FourierSeries) -> float:
    """L2 distance (period-normalised) between two series via Parseval."""
    if not np.isclose(f.period, g.period, rtol=1e-12, atol=0):
        raise ValueError(f"period mismatch: {f.period} vs {g.period}")
    k0 = max(f.k0, g.k0)
    diff = np.zeros(2 * k0 + 1, dtype=np.complex128)
    diff[k0 - f.k0 : k0 + f.k0 + 1] += f.coeffs
    diff[k0 - g.k0 : k0 + g.k0 + 1] -= g.coeffs
    return float(np.sqrt(np.sum(np.abs(diff) ** 2)))
