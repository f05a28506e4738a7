import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbltomo import harness, phantom, tomo
from qbltomo.core import Image2D, Sinogram, support_mask
from qbltomo.ordering import Permutation


@pytest.fixture(scope="module")
def img128():
    return phantom.default_phantom(128)


@pytest.fixture(scope="module")
def disc256():
    return phantom.disc(256, radius=0.8)


def exact_spectra(img, angles, n_freq=48, dnu=0.13):
    """Projection spectra taken straight from the image transform (no Radon step)."""
    nu = np.fft.fftfreq(n_freq) * n_freq * dnu
    rows = np.array([tomo.dtft2(img, nu * np.cos(a), nu * np.sin(a)) for a in angles])
    return tomo.ProjectionSpectra(rows, dnu, 4, img.support_radius)


# --- forward model ------------------------------------------------------------

def test_radon_disc_chord(disc256):
    angles = np.array([0.0, 0.4, 1.3, 2.9, 4.4])
    s = tomo.radon(disc256, angles, 256)
    rho = s.offsets
    interior = np.abs(rho) < 0.8 - 4 * disc256.pixel_size
    chord = 2 * np.sqrt(np.clip(0.8**2 - rho**2, 0, None))
    err = np.abs(s.data[:, interior] - chord[interior]).max() / chord.max()
    assert err <= 0.02
    outside = np.abs(rho) > 0.8 + 2 * disc256.pixel_size
    assert np.all(s.data[:, outside] == 0)


def test_radon_zero_image():
    img = Image2D(np.zeros((32, 32)), 1 / 16, 1.0)
    s = tomo.radon(img, [0.0, 1.0, 2.0], 32)
    assert np.all(s.data == 0)


def test_radon_errors(img128):
    with pytest.raises(ValueError):
        tomo.radon(img128, [], 64)
    with pytest.raises(ValueError):
        tomo.radon(img128, [0.0], 1)


def test_radon_bins_cover_support(img128):
    s = tomo.radon(img128, [0.0], 65)
    assert s.offsets[0] == pytest.approx(-img128.support_radius)
    assert s.offsets[-1] == pytest.approx(img128.support_radius)


def test_radon_mass_conservation(img128):
    angles = np.linspace(0, 2 * np.pi, 17)[:-1]
    s = tomo.radon(img128, angles, 128)
    assert tomo.mass_residual(img128, s).max() < 0.01


def test_noise_identity_at_zero(img128):
    s = tomo.radon(img128, [0.0, 1.0], 64)
    assert tomo.add_projection_noise(s, 0.0, 1) is s
    with pytest.raises(ValueError):
        tomo.add_projection_noise(s, -0.1, 1)


def test_noise_moments():
    data = np.full((200, 500), 3.0)
    data[:, ::2] = -1.0
    s = Sinogram(data, 0.01)
    noisy = tomo.add_projection_noise(s, 0.05, 7)
    d = noisy.data - data
    sigma = 0.05 * 2.0  # mean |value| is 2
    assert abs(d.mean()) < 4 * sigma / np.sqrt(d.size)
    assert abs(d.var() / sigma**2 - 1) < 0.02
    assert np.array_equal(noisy.data, tomo.add_projection_noise(s, 0.05, 7).data)


# --- spectra -------------------------------------------------------------------

def test_spectrum_of_constant_row():
    n = 64
    s = Sinogram(np.ones((1, n)), 1 / 32)
    spec = tomo.project_spectra(s, oversample=1)
    mag = np.abs(spec.data[0])
    assert mag[0] == pytest.approx(n / 32)
    assert mag[1:].max() <= 1e-10 * mag[0]


def test_spectrum_layout(img128):
    s = tomo.radon(img128, [0.3], 100)
    spec = tomo.project_spectra(s, oversample=3)
    assert spec.data.shape == (1, 300)
    assert spec.freq_spacing == pytest.approx(1 / (300 * s.bin_spacing))
    with pytest.raises(ValueError):
        tomo.project_spectra(s, 0)


def test_spectrum_hermitian(img128):
    s = tomo.radon(img128, [0.3, 2.0, 5.1], 96)
    d = tomo.project_spectra(s, 4).data
    f = d.shape[1]
    neg = d[:, (-np.arange(f)) % f]
    assert np.abs(neg - np.conj(d)).max() <= 1e-12 * np.abs(d).max()


def test_fourier_slice_disc(disc256):
    err = tomo.fst_check(disc256, np.pi * np.arange(4) / 4, 256)
    assert err.max() <= 0.05


# --- rings ---------------------------------------------------------------------

def test_centered_blob_rings_are_flat():
    img = phantom.centered_gaussian(64, width=0.15)
    n = 64
    angles = 2 * np.pi * np.arange(n) / n
    spec = exact_spectra(img, angles)
    rings = tomo.reconstruct_rings(spec, Permutation.identity(n), tomo.ReconstructionConfig(nu0=2.0, k0=6))
    a0 = rings.coeffs[:, rings.k0]
    assert np.allclose(a0, spec.data[:, : a0.size].mean(axis=0), rtol=1e-12, atol=1e-15)
    others = np.delete(rings.coeffs, rings.k0, axis=1)
    # pixelation breaks exact symmetry only through the square grid (4-fold)
    assert np.abs(others).max() <= 1e-3 * np.abs(a0).max()


def test_ring_estimates_converge_with_n(img128):
    cfg = tomo.ReconstructionConfig(nu0=2.0)
    ns = [500, 2000, 8000]
    errs = []
    for n in ns:
        e = []
        for trial in range(3):
            th = harness.trial_angles(n, 100 + trial)
            rings = tomo.reconstruct_rings(exact_spectra(img128, th), Permutation.identity(n), cfg)
            tot = 0.0
            for r, nu in enumerate(rings.nu):
                ref = tomo.ring_coefficients(img128, nu, rings.k0, 256)
                ref = np.where(np.abs(ref.ks) <= rings.ring_k0[r], ref.coeffs, 0)
                tot += np.sum(np.abs(rings.coeffs[r] - ref) ** 2)
            e.append(tot)
        errs.append(np.mean(e))
    assert errs[0] > errs[1] > errs[2]
    assert harness.slope_fit(errs, ns) <= -0.5


def test_reversed_order_mirrors_rings(img128):
    n = 41
    angles = 2 * np.pi * np.arange(n) / n
    spec = exact_spectra(img128, angles)
    cfg = tomo.ReconstructionConfig(nu0=3.0, k0=8)
    fwd = tomo.reconstruct_rings(spec, Permutation.identity(n), cfg)
    rev = tomo.reconstruct_rings(spec, Permutation(np.array([1, *range(n, 1, -1)])), cfg)
    assert np.allclose(rev.coeffs, fwd.coeffs[:, ::-1], atol=1e-12)
    # the mirrored image y -> -y has exactly those rings
    mirror = Image2D(img128.pixels[::-1], img128.pixel_size, img128.support_radius)
    ref = tomo.reconstruct_rings(exact_spectra(mirror, angles), Permutation.identity(n), cfg)
    assert np.allclose(rev.coeffs, ref.coeffs, atol=1e-9 * np.abs(ref.coeffs).max())


def test_ring_caps(img128):
    spec = tomo.project_spectra(tomo.radon(img128, 2 * np.pi * np.arange(64) / 64, 64), 4)
    rings = tomo.reconstruct_rings(spec, Permutation.identity(64), tomo.ReconstructionConfig(nu0=4.0))
    assert rings.k0 == tomo.default_k0(64)
    assert np.all(rings.ring_k0 <= rings.k0)
    assert rings.ring_k0[0] == 2
    assert np.all(np.diff(rings.ring_k0) >= 0)
    for r in range(rings.coeffs.shape[0]):
        k = rings.ring_k0[r]
        assert np.all(rings.coeffs[r, : rings.k0 - k] == 0)
        assert rings.series(r).k0 == k


def test_ring_errors(img128):
    spec = tomo.project_spectra(tomo.radon(img128, [0.0, 1.0, 2.0, 3.0], 32), 2)
    with pytest.raises(ValueError):
        tomo.reconstruct_rings(spec, Permutation.identity(4), tomo.ReconstructionConfig(k0=2))
    with pytest.raises(ValueError):
        tomo.reconstruct_rings(spec, Permutation.identity(5), tomo.ReconstructionConfig())
    with pytest.raises(ValueError):
        tomo.ReconstructionConfig(nu0=0.0)
    with pytest.raises(ValueError):
        tomo.ReconstructionConfig(k0=5, M=10)


def test_auto_nu0_ignores_white_noise(img128):
    s = tomo.radon(img128, harness.trial_angles(300, 1), 128)
    clean = tomo.auto_nu0(tomo.project_spectra(s, 4))
    noisy = tomo.auto_nu0(tomo.project_spectra(tomo.add_projection_noise(s, 0.01, 2), 4))
    assert noisy == pytest.approx(clean, rel=0.15)


# --- polar evaluation and inversion --------------------------------------------

def _rings(coeffs, k0=None):
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    k0 = (coeffs.shape[1] - 1) // 2 if k0 is None else k0
    nr = coeffs.shape[0]
    return tomo.RingCoeffs(coeffs, np.full(nr, k0), k0, 0.1, 0.1 * (nr - 1), 1.0)


def test_polar_dc_only_is_constant():
    ps = tomo.evaluate_polar(_rings([[0, 0, 2.5, 0, 0]]), 7, symmetrize=False)
    assert np.allclose(ps.values, 2.5)


@given(st.integers(0, 2**32), st.integers(0, 5), st.integers(0, 6))
def test_polar_matches_synthesis(seed, k0, extra):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(3, 2 * k0 + 1)) + 1j * rng.normal(size=(3, 2 * k0 + 1))
    rings = _rings(c)
    M = 2 * k0 + 1 + extra
    ps = tomo.evaluate_polar(rings, M, symmetrize=False)
    for r in range(3):
        assert np.allclose(ps.values[r], rings.series(r)(ps.theta))
    sym = tomo.evaluate_polar(rings, 2 * M, symmetrize=True).values
    opp = np.roll(sym, -M, axis=1)
    assert np.allclose(sym, np.conj(opp))


@given(st.integers(0, 2**32))
def test_symmetrization_idempotent(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(2, 9)) + 1j * rng.normal(size=(2, 9))
    once = tomo.symmetrize_coeffs(c)
    assert np.allclose(tomo.symmetrize_coeffs(once), once)
    ps = tomo.evaluate_polar(_rings(c), 12, symmetrize=False)
    sp = tomo.symmetrize_polar(ps)
    assert np.allclose(tomo.symmetrize_polar(sp).values, sp.values)
    assert np.allclose(sp.values, tomo.evaluate_polar(_rings(c), 12, symmetrize=True).values)


def test_polar_errors():
    with pytest.raises(ValueError):
        tomo.evaluate_polar(_rings(np.ones((1, 5))), 4)
    with pytest.raises(ValueError):
        tomo.symmetrize_polar(tomo.evaluate_polar(_rings(np.ones((1, 5))), 5))


def test_inverse_of_zero_spectrum():
    ps = tomo.PolarSpectrum(np.zeros((6, 10), dtype=complex), 0.2, 1.0, 10)
    out = tomo.inverse_polar_ft(ps, 16, 0.1, 0.7)
    assert np.all(out.pixels == 0)
    with pytest.raises(ValueError):
        tomo.inverse_polar_ft(ps, 1, 0.1)


def test_inverse_polar_matches_disc_truncation(img128):
    # exact ring samples of the phantom transform, inverted on the polar grid,
    # against the phantom with everything outside the disc removed
    dnu, nu0, k0 = 0.13, 8.0, 11
    M = tomo.auto_M(k0, nu0, img128.support_radius)
    assert M >= 4 * k0
    nu = np.arange(int(nu0 / dnu) + 1) * dnu
    th = 2 * np.pi * np.arange(M) / M
    vals = tomo.dtft2(img128, np.outer(nu, np.cos(th)), np.outer(nu, np.sin(th))).reshape(nu.size, M)
    ps = tomo.PolarSpectrum(vals, dnu, nu0, M)
    got = tomo.inverse_polar_ft(ps, 128, img128.pixel_size, img128.support_radius)
    ref = tomo.disc_truncate(img128, nu0).pixels
    ref = np.where(support_mask(ref.shape, img128.pixel_size, img128.support_radius), ref, 0)
    err = np.linalg.norm(got.pixels - ref) / np.linalg.norm(ref)
    assert err <= 0.03


# --- end to end ----------------------------------------------------------------

@pytest.fixture(scope="module")
def run4000(img128):
    n = 4000
    th = harness.trial_angles(n, 3)
    s = tomo.radon(img128, th, 128)
    cfg = tomo.ReconstructionConfig(grid=128, pixel_size=img128.pixel_size)
    known = tomo.reconstruct_known_angles(s, cfg, th)
    unknown = tomo.reconstruct_unknown_angles(s, cfg)
    return s, cfg, known, unknown


def test_known_angles_end_to_end(img128, run4000):
    _, _, known, _ = run4000
    assert tomo.relative_error(img128, known) <= 0.1


def test_known_angles_beat_order_statistics(img128, run4000):
    _, _, known, unknown = run4000
    assert tomo.relative_error(img128, known) <= tomo.relative_error(img128, unknown)


def test_error_decomposition(img128, run4000):
    s, cfg, _, unknown = run4000
    nu0 = tomo.auto_nu0(tomo.project_spectra(s, cfg.oversample))
    oracle = tomo.disc_truncate(img128, nu0).pixels
    a = img128.pixel_size**2
    total = np.sum((unknown.pixels - img128.pixels) ** 2) * a
    in_disc = np.sum((unknown.pixels - oracle) ** 2) * a
    tail = tomo.sobolev_tail(img128, 0.0, [nu0]).tail_energy[0]
    assert total <= 4 * in_disc + 2 * np.pi * tail


def test_single_projection_rejected(img128):
    s = tomo.radon(img128, [0.0], 64)
    with pytest.raises(ValueError):
        tomo.reconstruct_unknown_angles(s, tomo.ReconstructionConfig())
    with pytest.raises(ValueError):
        bare = tomo.radon(img128, [0.0, 1.0], 64)
        tomo.reconstruct_known_angles(Sinogram(bare.data, bare.bin_spacing), tomo.ReconstructionConfig())


# --- Sobolev diagnostics --------------------------------------------------------

def test_sobolev_parseval(img128):
    st0 = tomo.sobolev_tail(img128, 0.0, [1.0])
    energy = np.sum(img128.pixels**2) * img128.pixel_size**2 / (2 * np.pi)
    assert st0.norm_alpha_sq == pytest.approx(energy, rel=1e-6)


def test_sobolev_tail_monotone_and_bounded(img128):
    nu0 = np.array([0.5, 1, 2, 4, 8, 16, 30])
    for alpha in (0.5, 1.0, 2.0):
        stats = tomo.sobolev_tail(img128, alpha, nu0)
        assert np.all(np.diff(stats.tail_energy) <= 0)
        assert np.all(stats.tail_energy <= stats.bound)
    with pytest.raises(ValueError):
        tomo.sobolev_tail(img128, -1, [1.0])


def test_relative_error_basics(img128):
    assert tomo.relative_error(img128, img128) == 0
    zero = Image2D(np.zeros(img128.shape), img128.pixel_size)
    assert tomo.relative_error(img128, zero) == pytest.approx(1.0)
    double = Image2D(2 * img128.pixels, img128.pixel_size)
    assert tomo.relative_error(img128, double) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        tomo.relative_error(zero, img128)
    with pytest.raises(ValueError):
        tomo.relative_error(img128, Image2D(np.zeros((4, 4))))
