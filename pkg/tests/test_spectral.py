import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import band_packet
from jumpbvp import dense
from jumpbvp.lattice import WaveField, gaussian_packet, indicator_mask, make_grid
from jumpbvp.spectral import (
    DispersionRelation,
    SpectralError,
    band_excess,
    check_band_limit,
    fourier,
    hardy_project,
    heisenberg_projector,
    joint_eigenbasis,
    offset_evolution,
    propagate,
    regularized_projector,
    shifted_symbol,
)


def _random_band_field(grid, d, rng, band):
    v = rng.normal(size=(grid.N, d)) + 1j * rng.normal(size=(grid.N, d))
    f = hardy_project(WaveField(grid, v), band)
    return f * (1.0 / f.norm())


def test_dispersion_validation():
    with pytest.raises(SpectralError):
        DispersionRelation([-1.0])
    d = DispersionRelation([0.0, 2.0])
    assert d(np.array([1.5])).shape == (1, 2)
    assert np.allclose(d(1.5), [1.5, 2.5])


def test_fourier_is_unitary(small_grid, rng):
    f = WaveField(small_grid, rng.normal(size=(64, 3)) + 0j)
    g = fourier(f)
    assert g.norm_sq() == pytest.approx(f.norm_sq(), rel=1e-13)
    assert np.allclose(fourier(g, "inverse").values, f.values)
    with pytest.raises(ValueError):
        fourier(f, "sideways")


def test_transport_limits_of_symbol():
    d = DispersionRelation([1.0])
    k = np.array([-2.0, 0.0, 3.0])
    assert np.array_equal(shifted_symbol(d, np.inf, k)[:, 0], -k)
    assert np.array_equal(shifted_symbol(d, np.inf, k, "output")[:, 0], k)
    assert np.allclose(shifted_symbol(d, 1e8, k)[:, 0], -k, atol=1e-7)


def test_band_limit_detection(small_grid):
    f = gaussian_packet(small_grid, 0.0, 1.0, k0=6.0)
    assert band_excess(f, 5.0) > 0.1
    with pytest.raises(SpectralError, match="band-limited"):
        propagate(f, DispersionRelation([1.0]), 5.0, 1.0)
    assert band_excess(hardy_project(f, 5.0), 5.0) < 1e-30
    out = gaussian_packet(small_grid, 0.0, 1.0, k0=-6.0)
    with pytest.raises(SpectralError):
        check_band_limit(out, 5.0, "output")


def test_seam_check_trips(small_grid):
    f = band_packet(small_grid, 5.0, center=5.0)
    with pytest.raises(SpectralError, match="seam"):
        propagate(f, DispersionRelation([0.0]), np.inf, 3.0)


def test_dimension_mismatch(small_grid):
    f = gaussian_packet(small_grid, spinor=(1.0, 0.0))
    with pytest.raises(SpectralError):
        propagate(f, DispersionRelation([1.0]), 20.0, 0.5)


def test_massless_propagation_is_a_shift(wide_grid):
    psi = gaussian_packet(wide_grid, 0.0, 1.0)
    d0 = DispersionRelation([0.0])
    for kappa in (16.0, 64.0, np.inf):
        for n in (1, 64, 160):
            t = n * wide_grid.dz
            err = (propagate(psi, d0, kappa, t) - psi.shifted(t)).norm()
            assert err <= 1e-12


def test_output_channel_moves_left_to_right(wide_grid):
    psi = gaussian_packet(wide_grid, 0.0, 1.0)
    t = 64 * wide_grid.dz
    out = propagate(psi, DispersionRelation([0.0]), 40.0, t, channel="output")
    assert (out - psi.shifted(-t)).norm() <= 1e-12


def test_heisenberg_projector_time_zero(small_grid, unit_mass):
    psi = band_packet(small_grid, 5.0)
    p = heisenberg_projector(psi, unit_mass, 16.0, 0.0)
    assert np.array_equal(p.values, indicator_mask(small_grid, 0.0).values[:, None] * psi.values)


def test_massless_projector_is_sharp_above_nyquist(wide_grid):
    # the sharp mask puts mass at every bin; the symbol is a pure shift on all
    # bins only when kappa exceeds the Nyquist momentum pi/dz
    psi = gaussian_packet(wide_grid, 0.0, 1.0)
    d0 = DispersionRelation([0.0])
    kappa = 1.01 * np.pi / wide_grid.dz
    for t in (0.5, 1.0, 2.5):
        target = WaveField(wide_grid, indicator_mask(wide_grid, t).values[:, None] * psi.values)
        assert (heisenberg_projector(psi, d0, kappa, t) - target).norm() <= 1e-12


def test_massless_projector_error_is_mask_leakage(wide_grid):
    # below Nyquist the error equals the predicted leakage of the masked field
    psi = gaussian_packet(wide_grid, 0.0, 1.0)
    d0 = DispersionRelation([0.0])
    kappa, t = 16.0, 1.0
    n = wide_grid.steps(t)
    masked = WaveField(wide_grid, indicator_mask(wide_grid, 0.0).values[:, None] * psi.shifted(t).values)
    F = np.fft.fft(masked.values, axis=0, norm="ortho")
    k = wide_grid.momentum().k[:, None]
    # bins k >= kappa pick up exp(i t (k - 2 kappa)) instead of exp(-i t k)
    wrong = np.where(k >= kappa, np.exp(1j * t * (k - 2 * kappa)) - np.exp(-1j * t * k), 0.0)
    predicted = np.sqrt(np.sum(np.abs(wrong * F) ** 2) * wide_grid.dz)
    target = WaveField(wide_grid, np.roll(masked.values, n, axis=0))
    err = (heisenberg_projector(psi, d0, kappa, t) - target).norm()
    assert err == pytest.approx(predicted, rel=1e-9)
    assert err > 1e-3


def test_regularized_projector_rejects_theta(small_grid, unit_mass):
    with pytest.raises(SpectralError):
        regularized_projector(band_packet(small_grid, 5.0), unit_mass, 16.0, 0.5, 0.0)


def test_joint_eigenbasis_checks(doublet):
    lam, V = joint_eigenbasis(doublet, np.array([[0.1, 0.2], [0.2, -0.1]]))
    assert np.allclose(np.sort(lam), [-np.sqrt(0.05), np.sqrt(0.05)])
    with pytest.raises(SpectralError, match="commute"):
        joint_eigenbasis(DispersionRelation([1.0, 2.0]), np.array([[0, 1], [1, 0.0]]))
    with pytest.raises(SpectralError, match="non-real"):
        joint_eigenbasis(doublet, np.array([[0, 1], [-1, 0.0]]))


def test_offset_evolution_transport_limit(small_grid, doublet, rng):
    f = _random_band_field(small_grid, 2, rng, 5.0)
    K = np.array([[0.3, 0.1], [0.1, -0.2]])
    w, U = np.linalg.eigh(K)
    expected = f.values @ (U @ np.diag(np.exp(-1j * 0.7 * w)) @ U.conj().T).T
    assert np.allclose(offset_evolution(f, doublet, np.inf, K, 0.7).values, expected, atol=1e-13)


@pytest.mark.parametrize("mu", [[0.0], [1.0], [0.5, 2.0]])
def test_dense_oracle_agreement(small_grid, mu, rng):
    disp = DispersionRelation(mu)
    d = len(mu)
    kappa, t, theta = 16.0, 0.7, 0.05
    K = np.diag(rng.uniform(-0.4, 0.4, d))
    ops = [
        (lambda f: propagate(f, disp, kappa, t, check_seam=False), dense.dense_propagator(small_grid, mu, kappa, t)),
        (lambda f: heisenberg_projector(f, disp, kappa, t), dense.dense_heisenberg_projector(small_grid, mu, kappa, t)),
        (lambda f: regularized_projector(f, disp, kappa, t, theta),
         dense.dense_regularized_projector(small_grid, mu, kappa, t, theta)),
        (lambda f: offset_evolution(f, disp, kappa, K, t), dense.dense_offset_evolution(small_grid, mu, kappa, K, t)),
    ]
    for _ in range(5):
        f = _random_band_field(small_grid, d, rng, 5.0)
        for op, M in ops:
            assert (op(f) - dense.dense_apply(M, f)).norm() <= 1e-12


@given(st.floats(-3, 3), st.floats(20.0, 200.0), st.floats(0.0, 3.0))
def test_propagation_is_unitary(t, kappa, mass):
    g = make_grid(16.0, 256)
    psi = band_packet(g, 8.0, center=0.0, width=1.3)
    out = propagate(psi, DispersionRelation([mass]), kappa, t, check_seam=False)
    assert out.norm() == pytest.approx(1.0, abs=1e-13)


@given(st.floats(-2, 2), st.floats(10.0, 100.0))
def test_heisenberg_projector_is_orthogonal_projection(t, kappa):
    g = make_grid(8.0, 64)
    d = DispersionRelation([1.0])
    rng = np.random.default_rng(7)
    f = _random_band_field(g, 1, rng, 5.0)
    h = _random_band_field(g, 1, rng, 5.0)
    p = heisenberg_projector(f, d, kappa, t)
    pp = heisenberg_projector(p, d, kappa, t, check_band=False)
    assert (pp - p).norm() <= 1e-12
    ph = heisenberg_projector(h, d, kappa, t)
    lhs = np.vdot(h.values, p.values)
    rhs = np.vdot(ph.values, f.values)
    assert abs(lhs - rhs) <= 1e-12


@given(st.floats(0.01, 1.0), st.floats(-2, 2))
def test_regularized_projector_is_positive_contraction(theta, t):
    g = make_grid(8.0, 64)
    d = DispersionRelation([1.0])
    f = _random_band_field(g, 1, np.random.default_rng(3), 5.0)
    p = regularized_projector(f, d, 16.0, t, theta)
    assert p.norm() <= f.norm() + 1e-14
    assert np.vdot(f.values, p.values).real >= -1e-14


def test_dense_oracle_runtime(small_grid):
    t0 = time.perf_counter()
    dense.dense_offset_evolution(small_grid, [1.0, 1.0], 16.0, np.diag([0.1, -0.2]), 0.3)
    assert time.perf_counter() - t0 < 5.0
