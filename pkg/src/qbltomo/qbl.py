"""Reconstruction of periodic quasi-bandlimited signals from ordered samples.

The samples arrive in a claimed order but their locations are unknown. The
``i``-th sample is assigned the location ``(i - 1 + index_origin) * period / N``
(``index_origin=1`` puts the first sample at ``period / N``, which is where the
``i``-th order statistic of ``N`` uniform draws concentrates). The Fourier
coefficients are then the plain DFT of the samples on that grid.

A signal is quasi-bandlimited, ``qbl(k1, gamma)``, when its coefficients obey
``|a_k| <= d * exp(-gamma * |k|)`` for ``|k| >= k1``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import FourierSeries, make_rng


@dataclass(frozen=True)
class QblParams:
    k1: int
    gamma: float
    d: float = 1.0

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not self.d >= 0:
            raise ValueError("d must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean i.i.d. Gaussian noise with standard deviation ``sigma``."""

    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class OrderedSampleSet:
    """Sample values in claimed order; locations assumed Uniform[0, period)."""

    values: np.ndarray
    period: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values)
        v = np.array(v, dtype=np.complex128 if np.iscomplexobj(v) else np.float64).ravel()
        if v.size < 1:
            raise ValueError("OrderedSampleSet needs at least one sample")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        if self.period <= 0:
            raise ValueError("period must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def max_k0(n: int) -> int:
    """Largest half-bandwidth the DFT of ``n`` samples can resolve without aliasing."""
    return (n - 1) // 2


def choose_k0(n: int, gamma: float) -> int:
    """``ceil(ln(n) / gamma)`` clamped to ``(n - 1) // 2``."""
    if n < 2:
        raise ValueError("choose_k0 needs n >= 2")
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    return min(math.ceil(math.log(n) / gamma), max_k0(n))


def estimate_coeffs(samples: OrderedSampleSet, k0: int, index_origin: int = 1) -> FourierSeries:
    """Estimate ``a_k`` for ``|k| <= k0`` from samples in claimed order.

    ``a_k = (1/N) * sum_i v_i * exp(-2j*pi*k*(i - 1 + index_origin)/N)``, i.e. the
    DFT on a uniform grid. Switching ``index_origin`` between 0 and 1 shifts the
    assigned grid by ``period / N`` and multiplies ``a_k`` by ``exp(-2j*pi*k/N)``.
    """
    v = samples.values
    n = v.size
    if k0 < 0:
        raise ValueError("k0 must be >= 0")
    if k0 > max_k0(n):
        raise ValueError(f"k0={k0} aliases with N={n} samples (max {max_k0(n)})")
    ks = np.arange(-k0, k0 + 1)
    spec = np.fft.fft(v)[ks % n] / n
    if index_origin:
        spec = spec * np.exp(-2j * np.pi * ks * index_origin / n)
    return FourierSeries(k0, spec, samples.period)


def reconstruct_p3(samples: OrderedSampleSet, qbl: QblParams, index_origin: int = 1) -> FourierSeries:
    """Bandlimited reconstruction with ``k0 = ceil(ln N / gamma)``.

    Covers the noiseless / perfectly ordered cases as special inputs. Warns when
    ``N <= exp(gamma * k1)``, where the truncation argument does not apply yet.
    """
    n = len(samples)
    if n < 2:
        raise ValueError("reconstruct_p3 needs at least 2 samples")
    if n <= math.exp(qbl.gamma * qbl.k1):
        warnings.warn(
            f"N={n} is below exp(gamma*k1)={math.exp(qbl.gamma * qbl.k1):.3g}; "
            "error bound does not hold yet",
            RuntimeWarning,
            stacklevel=2,
        )
    return estimate_coeffs(samples, choose_k0(n, qbl.gamma), index_origin)


def bandlimit_tail_energy(qbl: QblParams, k0: int) -> float:
    """Upper bound on ``sum_{|k|>k0} |a_k|^2`` for a ``qbl(k1, gamma)`` signal with constant ``d``."""
    if k0 < qbl.k1:
        raise ValueError(f"k0={k0} must be >= k1={qbl.k1}")
    g = qbl.gamma
    return 2 * qbl.d**2 * math.exp(-2 * g * k0) / (1 - math.exp(-2 * g))


def add_sample_noise(samples: OrderedSampleSet, spec: NoiseSpec, seed: int) -> OrderedSampleSet:
    """Add i.i.d. N(0, sigma^2) noise; real noise for real samples, real part only for complex."""
    if spec.sigma == 0:
        return samples
    rng = make_rng(seed)
    eps = rng.normal(0.0, spec.sigma, size=len(samples))
    return OrderedSampleSet(samples.values + eps, samples.period)


def exp_decay_signal(gamma: float, d: float = 1.0, period: float = 1.0):
    """Closed form of ``g(t) = sum_k d*exp(-gamma*|k|) exp(2j*pi*k*t/period)`` (a Poisson kernel)."""
    r = math.exp(-gamma)

    def g(t):
        c = np.cos(2 * np.pi * np.asarray(t, dtype=np.float64) / period)
        return d * (1 - r * r) / (1 - 2 * r * c + r * r)

    return g


def exp_decay_error(est: FourierSeries, gamma: float, d: float = 1.0) -> float:
    """Exact ``||g - est||^2`` for ``a_k = d*exp(-gamma*|k|)``, tail included in closed form."""
    k0 = est.k0
    ks = est.ks
    inband = np.sum(np.abs(est.coeffs - d * np.exp(-gamma * np.abs(ks))) ** 2)
    r2 = math.exp(-2 * gamma)
    tail = 2 * d * d * r2 ** (k0 + 1) / (1 - r2)
    return float(inband + tail)
