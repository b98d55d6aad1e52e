"""Lattice sampling, mollifiers, covariance pairing and the Wick square."""

import math

import numpy as np
import pytest
import scipy.fft as sfft
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from opelab.errors import PoleError, ResolutionError
from opelab.free_field import (
    Grid,
    Mollifier,
    TestFunction,
    calibrate_kappa,
    continuum_mollified_variance,
    covariance_pairing,
    fit_power_law,
    kappa,
    kappa_green,
    lattice_covariance,
    mollified_variance,
    mollify,
    read_binary,
    sample_field,
    sample_half_spectra,
    spectral_density,
    wick_square,
    write_binary,
    write_csv,
)

GRID = Grid(1, 4096, 16.0)


def continuum_mollified_covariance(mol, dim_phi, u):
    """(2 pi)^{-1} int |rho^|^2 |xi|^{2[phi]-1} cos(xi u) dxi in d = 1."""
    w = mol.width
    f = lambda k: float(mol.fourier(np.array([k]))[0] ** 2) * math.cos(k * u)  # noqa: E731
    head, _ = integrate.quad(f, 0, 1 / w, weight="alg", wvar=(2 * dim_phi - 1, 0), limit=400)
    tail, _ = integrate.quad(lambda k: f(k) * k ** (2 * dim_phi - 1), 1 / w, 120 / w, limit=800, epsrel=1e-11)
    return (head + tail) / math.pi


# --- kappa -------------------------------------------------------------------


def test_kappa_paper_formula_values():
    assert kappa(2, 0.5, "paper_formula") == pytest.approx(2 * math.pi, rel=1e-14)
    assert kappa(3, 0.5, "paper_formula") == pytest.approx(2 * math.pi**2, rel=1e-14)


def test_kappa_calibration_selects_green_normalization():
    cal = calibrate_kappa(3, 0.5)
    assert cal.selected == "paper_formula_over_2pi_d"
    assert cal.fitted == pytest.approx(2 * math.pi**2 / (2 * math.pi) ** 3, rel=1e-6)
    # the Green's function of the Laplacian in three dimensions
    assert kappa(3, 0.5) == pytest.approx(1 / (4 * math.pi), rel=1e-12)


@pytest.mark.parametrize("d, s", [(1, 0.2), (2, 0.5), (2, 0.3)])
def test_calibrated_kappa_is_paper_over_two_pi_d(d, s):
    assert kappa(d, s) == pytest.approx(kappa(d, s, "paper_formula") / (2 * math.pi) ** d, rel=1e-12)


@pytest.mark.parametrize("d, s", [(1, 0.5), (1, 0.7), (2, 1.0), (3, 0.0)])
def test_kappa_pole(d, s):
    with pytest.raises(PoleError):
        kappa(d, s, "paper_formula")


def test_kappa_unknown_mode():
    with pytest.raises(ValueError):
        kappa(1, 0.2, "other")


# --- covariance pairing ------------------------------------------------------


def test_covariance_pairing_gaussian():
    f = TestFunction.gaussian(1, 1.0)
    assert covariance_pairing(f, f, 1, 0.25) == pytest.approx(special.gamma(0.25), rel=1e-7)


@given(
    st.floats(0.3, 2.0),
    st.floats(0.3, 2.0),
    st.floats(-1.0, 1.0),
    st.sampled_from(["gaussian", "bump", "hermite"]),
)
def test_covariance_pairing_symmetric(w1, w2, c, kind):
    f = TestFunction.gaussian(1, w1)
    g = TestFunction(kind, 1, (c,), w2)
    assert covariance_pairing(f, g, 1, 0.2) == pytest.approx(covariance_pairing(g, f, 1, 0.2), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("lam", [2.0, 4.0])
@pytest.mark.parametrize("d, s", [(1, 0.2), (2, 0.4)])
def test_covariance_pairing_dilation(lam, d, s):
    f = TestFunction.gaussian(d, 0.7)
    base = covariance_pairing(f, f, d, s)
    big = covariance_pairing(f.scaled(lam), f.scaled(lam), d, s)
    assert big == pytest.approx(lam ** (2 * d - 2 * s) * base, rel=1e-6)


def test_covariance_pairing_positive():
    f = TestFunction.hermite([1, 2], 0.8)
    assert covariance_pairing(f, f, 2, 0.5) > 0


# --- sampling ----------------------------------------------------------------


def test_sample_determinism():
    a = sample_field(Grid(2, 32, 4.0), 0.4, seed=7, index=3)
    b = sample_field(Grid(2, 32, 4.0), 0.4, seed=7, index=3)
    assert np.array_equal(a.real_space, b.real_space)
    assert np.array_equal(a.spectral, b.spectral)
    c = sample_field(Grid(2, 32, 4.0), 0.4, seed=7, index=4)
    assert not np.array_equal(a.real_space, c.real_space)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_sample_structure(d):
    grid = Grid(d, 16, 3.0)
    field = sample_field(grid, 0.4, seed=1)
    assert field.spectral[(0,) * d] == 0
    back = sfft.ifftn(field.spectral).real * grid.sites / grid.box_length**d
    assert np.allclose(back, field.real_space, rtol=1e-10, atol=1e-12)
    imag = sfft.ifftn(field.spectral).imag
    assert np.max(np.abs(imag)) <= 1e-10 * np.max(np.abs(sfft.ifftn(field.spectral).real))


def test_half_spectra_match_full_sample():
    grid = Grid(2, 16, 2.0)
    half = sample_half_spectra(grid, 0.3, 5, [2])[0]
    full = sample_field(grid, 0.3, 5, index=2)
    assert np.allclose(half, full.spectral[..., : grid.n_per_side // 2 + 1])


def test_spectral_law_mid_band():
    grid = Grid(1, 64, 8.0)
    n = 10_000
    spec = sample_half_spectra(grid, 0.2, 11, range(n))
    var = np.mean(np.abs(spec) ** 2, axis=0) / grid.box_length
    law = spectral_density(grid, 0.2, half=True)
    mid = slice(4, 24)
    assert np.all(np.abs(var[mid] / law[mid] - 1) < 0.05)


def test_lattice_covariance_stationary():
    grid = Grid(1, 64, 8.0)
    n = 4000
    spec = sample_half_spectra(grid, 0.2, 3, range(n))
    real = sfft.irfftn(spec, s=grid.shape, axes=(-1,)) * grid.sites / grid.box_length
    exact = lattice_covariance(grid, 0.2)
    for shift in (0, 17, 40):
        x0 = real[:, shift]
        for u in (1, 5):
            emp = x0 * real[:, (shift + u) % 64]
            assert abs(emp.mean() - exact[u]) < 4 * emp.std() / math.sqrt(n)


def test_lattice_covariance_power_law():
    fit = fit_power_law(GRID, lattice_covariance(GRID, 0.2))
    assert fit.slope == pytest.approx(-0.4, abs=0.02)


# --- mollifiers --------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("sharpness", [1.0, 2.5])
def test_mollifier_unit_mass(d, sharpness):
    for r in (0, -2, -5):
        mol = Mollifier(d, r, 2.0, sharpness)
        assert mol.mass() == pytest.approx(1.0, abs=1e-8)


def test_mollifier_support_and_sign():
    mol = Mollifier(2, -3)
    x = np.random.default_rng(0).uniform(-0.3, 0.3, (1000, 2))
    vals = mol(x)
    assert np.all(vals >= 0)
    assert np.all(vals[np.linalg.norm(x, axis=1) >= mol.width] == 0)


def test_mollifier_validation():
    with pytest.raises(ValueError):
        Mollifier(1, 1)
    with pytest.raises(ValueError):
        Mollifier(1, -1, L=1.0)


def test_mollify_resolution_error():
    field = sample_field(Grid(1, 64, 16.0), 0.2, 0)
    with pytest.raises(ResolutionError):
        mollify(field, Mollifier(1, -4))


def test_mollify_zero_field():
    field = sample_field(Grid(1, 256, 8.0), 0.2, 0)
    zero = type(field)(field.grid, 0.2, 0, 0, np.zeros_like(field.spectral), np.zeros_like(field.real_space))
    assert np.all(mollify(zero, Mollifier(1, -2)) == 0)


def test_mollify_commutes():
    grid = Grid(1, 512, 8.0)
    field = sample_field(grid, 0.2, 4)
    a, b = Mollifier(1, -2), Mollifier(1, -3, sharpness=2.0)
    wa = np.fft.fft(a.lattice_weights(grid))
    wb = np.fft.fft(b.lattice_weights(grid))
    once_a = np.fft.ifft(field.spectral * wa * wb).real
    once_b = np.fft.ifft(field.spectral * wb * wa).real
    assert np.allclose(once_a, once_b, atol=1e-14)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_mollify_linear(a, b, seed):
    grid = Grid(1, 128, 4.0)
    f1 = sample_field(grid, 0.2, seed)
    f2 = sample_field(grid, 0.2, seed, index=1)
    combo = type(f1)(grid, 0.2, 0, 0, a * f1.spectral + b * f2.spectral, a * f1.real_space + b * f2.real_space)
    mol = Mollifier(1, -2)
    lhs = mollify(combo, mol)
    rhs = a * mollify(f1, mol) + b * mollify(f2, mol)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_mollified_variance_monte_carlo():
    grid = Grid(1, 1024, 16.0)
    mol = Mollifier(1, -3)
    n = 10_000
    spec = sample_half_spectra(grid, 0.2, 21, range(n))
    w = np.fft.rfft(mol.lattice_weights(grid))
    at0 = (np.fft.irfft(spec * w, n=grid.n_per_side, axis=-1) * grid.sites / grid.box_length)[:, 0]
    exact = mollified_variance(grid, 0.2, mol)
    sq = at0**2
    assert abs(sq.mean() - exact) < 3 * sq.std() / math.sqrt(n)


def test_mollified_variance_is_continuum_minus_zero_mode_offset():
    # dropping the zero mode lowers the lattice covariance by an almost
    # constant amount at separations much smaller than the box
    mol = Mollifier(1, -4)
    C = lattice_covariance(GRID, 0.2)
    k = kappa(1, 0.2)
    steps = [64, 128, 256]
    offsets = [k * (s * GRID.spacing) ** -0.4 - C[s] for s in steps]
    assert np.ptp(offsets) < 2e-3 * np.mean(offsets)
    cont = continuum_mollified_variance(1, 0.2, mol)
    lat = mollified_variance(GRID, 0.2, mol)
    assert lat + offsets[0] == pytest.approx(cont, rel=1e-3)


def test_mollified_increment_matches_continuum():
    # E[(phi_r(x) - phi_r(y))^2] is blind to the zero-mode offset
    grid = Grid(1, 2048, 16.0)
    mol = Mollifier(1, -3)
    n = 10_000
    spec = sample_half_spectra(grid, 0.2, 8, range(n))
    w = np.fft.rfft(mol.lattice_weights(grid))
    phi_r = np.fft.irfft(spec * w, n=grid.n_per_side, axis=-1) * grid.sites / grid.box_length
    u_steps = 32
    u = u_steps * grid.spacing
    inc = (phi_r[:, 0] - phi_r[:, u_steps]) ** 2
    cont = 2 * (continuum_mollified_variance(1, 0.2, mol) - continuum_mollified_covariance(mol, 0.2, u))
    assert abs(inc.mean() - cont) < 3 * inc.std() / math.sqrt(n)


def test_continuum_mollified_variance_scaling():
    a = continuum_mollified_variance(1, 0.2, Mollifier(1, -2))
    b = continuum_mollified_variance(1, 0.2, Mollifier(1, -3))
    assert b / a == pytest.approx(2**0.4, rel=1e-7)


# --- Wick square -------------------------------------------------------------


def test_wick_square_statistics():
    grid = Grid(1, 1024, 16.0)
    mol = Mollifier(1, -3)
    f = TestFunction.gaussian(1, 1.0)
    n = 3000
    vals = np.array([wick_square(sample_field(grid, 0.2, 2, i), mol, f) for i in range(n)])
    se = vals.std() / math.sqrt(n)
    assert abs(vals.mean()) < 3 * se
    # Var = 2 sum f f C_r^2 with C_r the lattice covariance of phi_r
    wh = np.fft.fft(mol.lattice_weights(grid))
    Cr = np.fft.ifft(spectral_density(grid, 0.2) * np.abs(wh) ** 2).real * grid.sites / grid.box_length
    fv = f.on_grid(grid)
    conv = np.fft.ifft(np.fft.fft(fv) * np.fft.fft(Cr**2)).real
    var = 2 * np.sum(fv * conv) * grid.spacing**2
    sq = (vals - vals.mean()) ** 2
    assert abs(sq.mean() - var) < 3 * sq.std() / math.sqrt(n)


def test_wick_square_linear_in_f():
    grid = Grid(1, 512, 8.0)
    field = sample_field(grid, 0.2, 1)
    mol = Mollifier(1, -2)
    f, g = TestFunction.gaussian(1, 0.5), TestFunction.hermite([1], 0.7)
    combo = 2.0 * f.on_grid(grid) - 0.5 * g.on_grid(grid)
    lhs = wick_square(field, mol, combo)
    rhs = 2.0 * wick_square(field, mol, f) - 0.5 * wick_square(field, mol, g)
    assert lhs == pytest.approx(rhs, rel=1e-12)


# --- test functions ----------------------------------------------------------


@given(
    st.sampled_from(["gaussian", "bump", "hermite"]),
    st.floats(0.3, 2.0),
    st.floats(-1.0, 1.0),
    st.floats(0.0, 3.0),
    st.floats(0.0, 3.0),
)
def test_seminorm_monotone_in_weight(kind, width, c, k1, k2):
    f = TestFunction(kind, 1, (c,), width)
    lo, hi = sorted((k1, k2))
    assert f.seminorm(0, lo) <= f.seminorm(0, hi) * (1 + 1e-12)


def test_seminorm_values():
    f = TestFunction.gaussian(1, 1.0)
    assert f.seminorm(0, 0) == pytest.approx(1.0)
    # sup |f'| of exp(-x^2/2) is exp(-1/2) at |x| = 1
    assert f.seminorm(1, 0) == pytest.approx(math.exp(-0.5), rel=1e-4)


def test_test_function_fourier_matches_quadrature():
    for f in (TestFunction.gaussian(1, 0.7, (0.3,)), TestFunction.hermite([2], 0.9), TestFunction.bump(1, 1.3)):
        for xi in (0.0, 0.8, 2.5):
            re, _ = integrate.quad(lambda x: float(f(x)) * math.cos(xi * x), -20, 20, limit=400)
            im, _ = integrate.quad(lambda x: -float(f(x)) * math.sin(xi * x), -20, 20, limit=400)
            got = complex(f.fourier(xi))
            assert got == pytest.approx(complex(re, im), abs=1e-8)


def test_test_function_dict_round_trip():
    f = TestFunction.hermite([1, 2], 0.8, center=(0.1, -0.2), amplitude=3.0)
    assert TestFunction.from_dict(f.to_dict()) == f


# --- export ------------------------------------------------------------------


def test_binary_round_trip(tmp_path):
    grid = Grid(2, 8, 3.0)
    field = sample_field(grid, 0.3, 9)
    path = tmp_path / "f.bin"
    write_binary(path, grid, field.real_space, 0.3, 9)
    raw = path.read_bytes()
    assert len(raw) == 64 + 8 * grid.sites
    g2, s, seed, vals = read_binary(path)
    assert (g2, s, seed) == (grid, 0.3, 9)
    assert np.array_equal(vals, field.real_space)


def test_csv_export(tmp_path):
    grid = Grid(1, 8, 2.0)
    vals = np.arange(8.0)
    path = tmp_path / "f.csv"
    write_csv(path, grid, vals)
    lines = path.read_text().splitlines()
    assert lines[0] == "i0,x0,value"
    assert len(lines) == 9
    assert lines[2].split(",")[-1] == "1.0"


def test_grid_validation():
    for args in [(1, 6, 1.0), (1, 2, 1.0), (4, 8, 1.0), (1, 8, 0.0)]:
        with pytest.raises(ValueError):
            Grid(*args)


def test_kappa_green_matches_lattice_short_range():
    # lattice covariance minus its far-field offset approaches the continuum law
    C = lattice_covariance(GRID, 0.2)
    k = kappa_green(1, 0.2)
    a, b = 32, 64
    inc = C[a] - C[b]
    want = k * ((a * GRID.spacing) ** -0.4 - (b * GRID.spacing) ** -0.4)
    assert inc == pytest.approx(want, rel=2e-3)
