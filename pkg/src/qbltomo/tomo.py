"""Tomographic reconstruction from projections at unknown angles.

Pipeline (``reconstruct_unknown_angles``)::

    sinogram --project_spectra--> 1D spectra per view
             --reconstruct_rings--> Fourier-series coefficients of every ring |nu| <= nu0
             --evaluate_polar-----> ring values on M uniform spokes
             --inverse_polar_ft---> image

Geometry conventions: the projection at angle ``theta`` integrates along the
line ``x cos(theta) + y sin(theta) = rho``; spectra use
``exp(-2j*pi*nu*rho)`` with ``rho = 0`` at the centre bin, so the spectrum of the
view at ``theta`` equals the 2D Fourier transform of the image along the ray
``nu * (cos(theta), sin(theta))``. The ``i``-th view in the claimed order is
assigned the angle ``2*pi*(i - 1)/N``, so the anchor view sits at 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import map_coordinates

from .core import FourierSeries, Image2D, Sinogram, make_rng, support_mask
from .ordering import Permutation
from .qbl import OrderedSampleSet, estimate_coeffs, max_k0

RING_GAMMA = 0.765
TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionSpectra:
    """Oversampled 1D spectra, one row per view, ``fft`` frequency layout."""

    data: np.ndarray
    freq_spacing: float
    oversample: int
    support_radius: float

    @property
    def num_views(self) -> int:
        return self.data.shape[0]

    @property
    def freqs(self) -> np.ndarray:
        f = self.data.shape[1]
        return np.fft.fftfreq(f) * f * self.freq_spacing

    @property
    def num_rings(self) -> int:
        """Non-negative frequency bins, DC included."""
        return self.data.shape[1] // 2 + 1


@dataclass(frozen=True)
class ReconstructionConfig:
    """Knobs for :func:`reconstruct_unknown_angles`; ``None`` means automatic.

    nu0
        Cut-off radius in the frequency plane; auto picks the smallest radius
        holding ``energy_fraction`` of the mean (area-weighted) spectral energy.
    k0
        Global ring half-bandwidth; auto is ``ceil(ln N / gamma)``.
    M
        Spokes used for the polar grid; auto covers both the ring bandwidth and
        the oscillation of the inverse kernel over the support.
    ring_cap
        Cap each ring at ``ceil(2*pi*nu*r0/gamma) + ring_margin`` harmonics.
    """

    nu0: float | None = None
    k0: int | None = None
    M: int | None = None
    oversample: int = 4
    grid: int = 128
    pixel_size: float | None = None
    gamma: float = RING_GAMMA
    ring_cap: bool = True
    ring_margin: int = 2
    energy_fraction: float = 0.999
    symmetrize: bool = True

    def __post_init__(self):
        if self.nu0 is not None and not self.nu0 > 0:
            raise ValueError("nu0 must be > 0")
        if self.k0 is not None and self.k0 < 0:
            raise ValueError("k0 must be >= 0")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        if not 0 < self.energy_fraction <= 1:
            raise ValueError("energy_fraction must be in (0, 1]")
        if self.M is not None and self.k0 is not None and self.M < 2 * self.k0 + 1:
            raise ValueError("M must be >= 2*k0 + 1")


@dataclass(frozen=True)
class RingCoeffs:
    """Coefficients ``a_k(nu)`` for rings ``nu = 0, dnu, 2*dnu, ...``.

    Row ``r`` of ``coeffs`` holds ``k = -k0..k0``; entries beyond ``ring_k0[r]``
    are zero.
    """

    coeffs: np.ndarray
    ring_k0: np.ndarray
    k0: int
    dnu: float
    nu0: float
    support_radius: float

    @property
    def nu(self) -> np.ndarray:
        return np.arange(self.coeffs.shape[0]) * self.dnu

    def series(self, r: int) -> FourierSeries:
        k = int(self.ring_k0[r])
        return FourierSeries(k, self.coeffs[r, self.k0 - k : self.k0 + k + 1], TWO_PI)


@dataclass(frozen=True)
class PolarSpectrum:
    """Ring values on ``M`` spokes at ``theta_m = 2*pi*m/M``; ring ``r`` sits at ``r * dnu``."""

    values: np.ndarray
    dnu: float
    nu0: float
    M: int

    @property
    def nu(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.dnu

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.M) / self.M


@dataclass(frozen=True)
class SobolevStats:
    alpha: float
    norm_alpha_sq: float
    nu0: np.ndarray
    tail_energy: np.ndarray

    @property
    def bound(self) -> np.ndarray:
        return self.nu0 ** (-2 * self.alpha) * self.norm_alpha_sq


# ---------------------------------------------------------------------------
# Forward model
# ---------------------------------------------------------------------------

def _line_samples(r0: float, bins: int, pixel_size: float, step: float | None):
    """Sample points (rho, s) inside the support disc, grouped by bin."""
    rho = np.linspace(-r0, r0, bins)
    ds = pixel_size / 2 if step is None else step
    if ds > pixel_size / 2:
        raise ValueError("integration step must be <= pixel_size / 2")
    reach = r0 + 2 * pixel_size  # bilinear interpolant spills past the last pixel centre
    ns = int(math.ceil(2 * reach / ds)) + 1
    s = np.linspace(-reach, reach, ns)
    ds = s[1] - s[0]
    keep = rho[:, None] ** 2 + s[None, :] ** 2 <= reach * reach
    rr, ss = np.broadcast_to(rho[:, None], keep.shape)[keep], np.broadcast_to(s[None, :], keep.shape)[keep]
    counts = keep.sum(axis=1)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return rho, rr, ss, ds, starts, counts


def radon(img: Image2D, angles, bins: int, step: float | None = None, chunk_points: int = 2_000_000) -> Sinogram:
    """Line integrals of ``img`` at each angle, ``bins`` offsets uniform on ``[-r0, r0]``.

    Rotate-and-sum with bilinear interpolation and integration step
    ``pixel_size / 2`` (or ``step`` if smaller).
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    if angles.size == 0:
        raise ValueError("radon needs at least one angle")
    if bins < 2:
        raise ValueError("radon needs bins >= 2")
    p = img.pixel_size
    r0 = img.support_radius if img.support_radius > 0 else p
    rho, rr, ss, ds, starts, counts = _line_samples(r0, bins, p, step)
    h, w = img.shape
    cy, cx = (h - 1) / 2, (w - 1) / 2
    out = np.zeros((angles.size, bins))
    nonempty = counts > 0
    per = max(1, chunk_points // max(rr.size, 1))
    for a0 in range(0, angles.size, per):
        th = angles[a0 : a0 + per]
        c, s = np.cos(th)[:, None], np.sin(th)[:, None]
        x = rr * c - ss * s
        y = rr * s + ss * c
        coords = np.stack([(y / p + cy).ravel(), (x / p + cx).ravel()])
        vals = map_coordinates(img.pixels, coords, order=1, mode="constant", cval=0.0)
        vals = vals.reshape(th.size, rr.size)
        sums = np.add.reduceat(vals, starts[nonempty], axis=1) if rr.size else 0.0
        out[a0 : a0 + th.size, nonempty] = sums * ds
    return Sinogram(out, rho[1] - rho[0], angles)


def add_projection_noise(s: Sinogram, sigma_rel: float, seed: int) -> Sinogram:
    """Add i.i.d. Gaussian noise with ``sigma = sigma_rel * mean(|data|)`` to every bin."""
    if sigma_rel < 0:
        raise ValueError("sigma_rel must be >= 0")
    if sigma_rel == 0:
        return s
    sigma = sigma_rel * float(np.mean(np.abs(s.data)))
    noise = make_rng(seed).normal(0.0, sigma, size=s.data.shape)
    return Sinogram(s.data + noise, s.bin_spacing, s.angles_known)


def project_spectra(s: Sinogram, oversample: int = 2) -> ProjectionSpectra:
    """Zero-padded DFT of every view, phase referenced to ``rho = 0``."""
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    f = oversample * s.num_bins
    dnu = 1.0 / (f * s.bin_spacing)
    nu = np.fft.fftfreq(f) * f * dnu
    rho0 = s.offsets[0]
    phase = np.exp(-2j * np.pi * nu * rho0)
    if f % 2 == 0:
        # the Nyquist bin stands for both +nu and -nu; average the two phases
        phase[f // 2] = np.cos(2 * np.pi * nu[f // 2] * rho0)
    data = np.fft.fft(s.data, n=f, axis=1) * (phase * s.bin_spacing)
    return ProjectionSpectra(data, dnu, oversample, s.support_radius)


# ---------------------------------------------------------------------------
# Ring estimation
# ---------------------------------------------------------------------------

def _ring_area_weights(n_rings: int, dnu: float) -> np.ndarray:
    """Area of the annulus cell around each ring; the DC ring gets the central disc."""
    nu = np.arange(n_rings) * dnu
    w = TWO_PI * nu * dnu
    w[0] = np.pi * (dnu / 2) ** 2
    return w


def auto_nu0(spectra: ProjectionSpectra, energy_fraction: float = 0.999) -> float:
    """Smallest ring radius enclosing ``energy_fraction`` of the area-weighted mean spectral energy.

    White measurement noise spreads a flat floor over every ring, which would
    drag the radius out towards Nyquist. The floor is estimated as the median
    power over the top quarter of rings and subtracted before accumulating.
    """
    nr = spectra.num_rings
    power = np.mean(np.abs(spectra.data[:, :nr]) ** 2, axis=0)
    floor = np.median(power[(3 * nr) // 4 :]) if nr >= 8 else 0.0
    power = np.clip(power - floor, 0.0, None)
    energy = np.cumsum(power * _ring_area_weights(nr, spectra.freq_spacing))
    if energy[-1] <= 0:
        return spectra.freq_spacing
    idx = int(np.searchsorted(energy, energy_fraction * energy[-1]))
    return max(min(idx, nr - 1), 1) * spectra.freq_spacing


def default_k0(n: int, gamma: float = RING_GAMMA) -> int:
    if n < 2:
        raise ValueError("need at least 2 projections")
    return min(math.ceil(math.log(n) / gamma), max_k0(n))


def _resolve(spectra: ProjectionSpectra, cfg: ReconstructionConfig) -> tuple[float, int, np.ndarray]:
    n = spectra.num_views
    if n < 2:
        raise ValueError("cannot reconstruct from fewer than 2 projections")
    k0 = default_k0(n, cfg.gamma) if cfg.k0 is None else cfg.k0
    if k0 > max_k0(n):
        raise ValueError(f"k0={k0} needs at least {2 * k0 + 1} projections, got {n}")
    nu0 = auto_nu0(spectra, cfg.energy_fraction) if cfg.nu0 is None else cfg.nu0
    nr = min(int(math.floor(nu0 / spectra.freq_spacing + 1e-9)) + 1, spectra.num_rings)
    nu = np.arange(nr) * spectra.freq_spacing
    ring_k0 = np.full(nr, k0)
    if cfg.ring_cap:
        cap = np.ceil(TWO_PI * nu * spectra.support_radius / cfg.gamma).astype(int) + cfg.ring_margin
        ring_k0 = np.minimum(ring_k0, cap)
    return nu0, k0, ring_k0


def reconstruct_rings(spectra: ProjectionSpectra, order: Permutation, cfg: ReconstructionConfig) -> RingCoeffs:
    """Fourier coefficients of every ring ``nu <= nu0`` from views in claimed order.

    Row ``order.map[i] - 1`` of the spectra is taken as the ring sample at angle
    ``2*pi*(i - 1)/N``.
    """
    if order.n != spectra.num_views:
        raise ValueError(f"order has {order.n} entries for {spectra.num_views} views")
    nu0, k0, ring_k0 = _resolve(spectra, cfg)
    rows = spectra.data[order.indices()]
    coeffs = np.zeros((ring_k0.size, 2 * k0 + 1), dtype=np.complex128)
    for r, kr in enumerate(ring_k0):
        fs = estimate_coeffs(OrderedSampleSet(rows[:, r], TWO_PI), int(kr), index_origin=0)
        coeffs[r, k0 - kr : k0 + kr + 1] = fs.coeffs
    return RingCoeffs(coeffs, ring_k0, k0, spectra.freq_spacing, nu0, spectra.support_radius)


def reconstruct_rings_known_angles(spectra: ProjectionSpectra, angles, cfg: ReconstructionConfig) -> RingCoeffs:
    """Reference estimator using the true view angles (trapezoid weights on the circle)."""
    th = np.mod(np.asarray(angles, dtype=np.float64), TWO_PI)
    if th.size != spectra.num_views:
        raise ValueError("one angle per view required")
    nu0, k0, ring_k0 = _resolve(spectra, cfg)
    idx = np.argsort(th)
    th = th[idx]
    gaps = np.diff(np.concatenate([th, [th[0] + TWO_PI]]))
    wts = 0.5 * (gaps + np.roll(gaps, 1)) / TWO_PI
    ks = np.arange(-k0, k0 + 1)
    kern = np.exp(-1j * np.outer(ks, th)) * wts  # (2k0+1, N)
    nr = ring_k0.size
    coeffs = kern @ spectra.data[idx, :nr]  # (2k0+1, R)
    coeffs = coeffs.T.copy()
    coeffs[np.abs(ks)[None, :] > ring_k0[:, None]] = 0
    return RingCoeffs(coeffs, ring_k0, k0, spectra.freq_spacing, nu0, spectra.support_radius)


def symmetrize_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Coefficient form of ``(F(theta) + conj(F(theta + pi))) / 2`` along the last axis."""
    k0 = (coeffs.shape[-1] - 1) // 2
    sign = (-1.0) ** np.arange(-k0, k0 + 1)
    return 0.5 * (coeffs + sign * np.conj(coeffs[..., ::-1]))


def evaluate_polar(rings: RingCoeffs, M: int, symmetrize: bool = True) -> PolarSpectrum:
    """Ring values at ``M`` uniform angles, optionally made Hermitian (real-image prior)."""
    if M < 2 * rings.k0 + 1:
        raise ValueError(f"M={M} must be >= 2*k0+1 = {2 * rings.k0 + 1}")
    c = symmetrize_coeffs(rings.coeffs) if symmetrize else rings.coeffs
    ks = np.arange(-rings.k0, rings.k0 + 1)
    theta = TWO_PI * np.arange(M) / M
    basis = np.exp(1j * np.outer(ks, theta))
    return PolarSpectrum(c @ basis, rings.dnu, rings.nu0, M)


def symmetrize_polar(ps: PolarSpectrum) -> PolarSpectrum:
    """Conjugate-average each spoke with its opposite (needs even ``M``)."""
    if ps.M % 2:
        raise ValueError("spoke symmetrization needs an even number of spokes")
    opp = np.roll(ps.values, -ps.M // 2, axis=1)
    return replace(ps, values=0.5 * (ps.values + np.conj(opp)))


def auto_M(k0: int, nu0: float, r0: float) -> int:
    m = max(4 * k0 + 2, k0 + int(math.ceil(TWO_PI * nu0 * r0)) + 16)
    return m + (m % 2)


def inverse_polar_ft(ps: PolarSpectrum, grid: int, pixel_size: float, support_radius: float | None = None) -> Image2D:
    """Direct weighted sum of the inverse 2D Fourier integral over the polar samples.

    Each sample carries its polar cell area ``nu * dnu * dtheta``; the DC samples
    share the central disc of radius ``dnu / 2``. The real part is returned and
    masked to ``support_radius`` when given.
    """
    if grid < 2:
        raise ValueError("grid must be >= 2")
    nr, m = ps.values.shape
    w = _ring_area_weights(nr, ps.dnu) / m  # per spoke
    nu = ps.nu[:, None]
    th = ps.theta[None, :]
    u = (nu * np.cos(th)).ravel()
    v = (nu * np.sin(th)).ravel()
    c = (ps.values * w[:, None]).ravel()
    x = (np.arange(grid) - (grid - 1) / 2) * pixel_size
    ex = np.exp(2j * np.pi * np.outer(u, x))  # (K, W)
    ey = np.exp(2j * np.pi * np.outer(v, x))  # (K, H)
    img = ((ey * c[:, None]).T @ ex).real
    if support_radius is not None:
        img[~support_mask(img.shape, pixel_size, support_radius)] = 0.0
    else:
        support_radius = float("inf")
    return Image2D(img, pixel_size, None if not np.isfinite(support_radius) else support_radius)


def output_pixel_size(r0: float, cfg: ReconstructionConfig) -> float:
    return cfg.pixel_size if cfg.pixel_size is not None else 2 * r0 / (cfg.grid - 1)


def reconstruct_from_rings(rings: RingCoeffs, cfg: ReconstructionConfig) -> Image2D:
    M = cfg.M if cfg.M is not None else auto_M(rings.k0, rings.nu0, rings.support_radius)
    ps = evaluate_polar(rings, M, symmetrize=cfg.symmetrize)
    p = output_pixel_size(rings.support_radius, cfg)
    return inverse_polar_ft(ps, cfg.grid, p, rings.support_radius)


def reconstruct_unknown_angles(s: Sinogram, cfg: ReconstructionConfig, order: Permutation | None = None) -> Image2D:
    """Full pipeline: spectra, ring coefficients, polar grid, inverse transform.

    ``order`` defaults to the row order of ``s``.
    """
    if s.num_projections < 2:
        raise ValueError("cannot reconstruct from fewer than 2 projections")
    order = Permutation.identity(s.num_projections) if order is None else order
    spectra = project_spectra(s, cfg.oversample)
    return reconstruct_from_rings(reconstruct_rings(spectra, order, cfg), cfg)


def reconstruct_known_angles(s: Sinogram, cfg: ReconstructionConfig, angles=None) -> Image2D:
    angles = s.angles_known if angles is None else angles
    if angles is None:
        raise ValueError("no angles given and sinogram carries none")
    spectra = project_spectra(s, cfg.oversample)
    return reconstruct_from_rings(reconstruct_rings_known_angles(spectra, angles, cfg), cfg)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def dtft2(img: Image2D, u, v) -> np.ndarray:
    """Continuous-frequency Fourier transform of the pixel image at points ``(u, v)``."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    x, y = img.coords()
    ex = np.exp(-2j * np.pi * np.outer(u, x))
    ey = np.exp(-2j * np.pi * np.outer(v, y))
    return np.sum((ey @ img.pixels) * ex, axis=1) * img.pixel_size**2


def fst_check(img: Image2D, angles, bins: int, oversample: int = 2) -> np.ndarray:
    """Relative L2 gap between each view's spectrum and the image FT along the same ray."""
    s = radon(img, angles, bins)
    spec = project_spectra(s, oversample)
    nu = spec.freqs
    errs = []
    for i, th in enumerate(np.atleast_1d(angles)):
        ref = dtft2(img, nu * np.cos(th), nu * np.sin(th))
        errs.append(np.linalg.norm(spec.data[i] - ref) / np.linalg.norm(ref))
    return np.array(errs)


def ring_coefficients(img: Image2D, nu: float, k0: int, n_angles: int = 512) -> FourierSeries:
    """Fourier coefficients in angle of the image FT on the ring of radius ``nu``."""
    th = TWO_PI * np.arange(n_angles) / n_angles
    vals = dtft2(img, nu * np.cos(th), nu * np.sin(th))
    spec = np.fft.fft(vals) / n_angles
    ks = np.arange(-k0, k0 + 1)
    return FourierSeries(k0, spec[ks % n_angles], TWO_PI)


def ring_qbl_check(img: Image2D, nu: float, gamma: float = RING_GAMMA, margin: int = 2,
                   k_max: int = 120, rel_floor: float = 1e-12) -> dict:
    """Check ``|a_k| <= d exp(-gamma |k|)`` beyond ``k1 = ceil(2 pi nu r0 / gamma)``.

    ``d`` is fitted at ``k1`` (largest of ``|a_{+-k1}|``). Only ``|k| > k1 + margin``
    count, and only where the bound is above ``rel_floor * max|a_k|`` (below that
    the coefficients are at double-precision round-off).
    """
    fs = ring_coefficients(img, nu, k_max, n_angles=4 * k_max + 8)
    mag = np.abs(fs.coeffs)
    ks = fs.ks
    k1 = int(math.ceil(TWO_PI * nu * img.support_radius / gamma))
    d = max(abs(fs.coeff(k1)), abs(fs.coeff(-k1))) * math.exp(gamma * k1)
    bound = d * np.exp(-gamma * np.abs(ks))
    checked = (np.abs(ks) > k1 + margin) & (bound > rel_floor * mag.max())
    viol = checked & (mag > bound)
    return {"nu": nu, "k1": k1, "d": d, "checked": int(checked.sum()),
            "violations": int(viol.sum()), "coeffs": fs}


def mass_residual(img: Image2D, s: Sinogram) -> np.ndarray:
    """Per-view relative gap between ``sum(R) * drho`` and the image mass."""
    mass = img.pixels.sum() * img.pixel_size**2
    per_view = s.data.sum(axis=1).real * s.bin_spacing
    return np.abs(per_view - mass) / abs(mass)


def _fft_grid(img: Image2D, pad: int = 1):
    h, w = img.shape
    p = img.pixel_size
    spec = np.fft.fft2(img.pixels, s=(pad * h, pad * w)) * p * p
    u = np.fft.fftfreq(pad * w, p)[None, :]
    v = np.fft.fftfreq(pad * h, p)[:, None]
    return spec, u * u + v * v, 1.0 / (pad * w * p) / (pad * h * p)


def sobolev_tail(img: Image2D, alpha: float, nu0_list) -> SobolevStats:
    """Discrete ``||f||_alpha^2`` and tail energies ``e_f(nu0)`` from the 2D DFT."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    spec, r2, dudv = _fft_grid(img)
    power = np.abs(spec) ** 2 * dudv / TWO_PI
    norm = float(np.sum((1 + r2) ** alpha * power))
    nu0 = np.asarray(nu0_list, dtype=np.float64)
    tails = np.array([np.sum(power[r2 > n * n]) for n in nu0])
    return SobolevStats(float(alpha), norm, nu0, tails)


def disc_truncate(img: Image2D, nu0: float, pad: int = 4) -> Image2D:
    """Keep only the Fourier content with radius ``<= nu0``.

    The image is zero-padded ``pad``-fold first so the frequency grid is fine
    enough to resolve the disc edge; the result is cropped back.
    """
    h, w = img.shape
    spec, r2, _ = _fft_grid(img, pad)
    spec[r2 > nu0 * nu0] = 0
    out = np.fft.ifft2(spec).real[:h, :w] / img.pixel_size**2
    return Image2D(out, img.pixel_size, None)


def relative_error(f: Image2D, fhat: Image2D) -> float:
    """Squared relative error ``||fhat - f||^2 / ||f||^2`` over all pixels."""
    a, b = f.pixels, fhat.pixels
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ref = float(np.sum(a * a))
    if ref == 0:
        raise ValueError("reference image is zero")
    return float(np.sum((b - a) ** 2) / ref)
