import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from jumpbvp.lattice import OperatorField, WaveField, gaussian_packet, make_grid, weighted_norm_sq
from jumpbvp.ordexp import (
    FamilyError,
    GeneratorField,
    build_family,
    constant_family,
    dress,
    hermitian_defect,
    interaction_family,
    load_generator_table,
    write_generator_table,
)

A = np.array([[0.4, 0.2 - 0.1j], [0.2 + 0.1j, -0.3]])


def _mixed(z):
    return np.array([[0.3 * np.cos(z), 0.2], [0.2, -0.1 * z]], dtype=complex)


def test_linear_generator_closed_form():
    g = make_grid(4.0, 512)
    fam = build_family(GeneratorField.from_function(g, lambda z: z * A))
    exact = np.stack([scipy.linalg.expm(-0.5j * z * z * A) for z in g.z])
    assert np.max(np.abs(fam.values.values - exact)) < 1e-9


def test_constant_family_matches_integration():
    g = make_grid(4.0, 256)
    K = np.array([[0.5, 0.1], [0.1, -0.2]])
    a = constant_family(g, K)
    b = build_family(GeneratorField.constant(g, K))
    assert np.max(np.abs(a.values.values - b.values.values)) < 1e-10
    assert a.isometry_defect() < 1e-12


def test_noncommuting_generator_against_ivp():
    g = make_grid(4.0, 256)
    fam = build_family(GeneratorField.from_function(g, _mixed), substeps=8)

    # the family integrates the piecewise-linear interpolant of the node values
    nodes = np.stack([_mixed(z) for z in g.z])

    def kappa_lin(z):
        return np.array([[np.interp(z, g.z, nodes[:, a, b].real) + 1j * np.interp(z, g.z, nodes[:, a, b].imag)
                          for b in range(2)] for a in range(2)])

    def rhs(z, y):
        Y = y.reshape(2, 2)
        return (-1j * Y @ kappa_lin(z)).ravel()

    for zt in (2.0, -3.0):
        sol = scipy.integrate.solve_ivp(rhs, (0.0, zt), np.eye(2, dtype=complex).ravel(),
                                        method="DOP853", rtol=1e-12, atol=1e-13, max_step=g.dz / 2)
        j = int(round((zt + g.L) / g.dz))
        assert np.max(np.abs(fam.values.values[j] - sol.y[:, -1].reshape(2, 2))) < 1e-8


def test_non_hermitian_generator_gives_density_growth():
    # kappa = i a: eps(z) = exp(a z), rho(z) = exp(2 a z) rho0
    g = make_grid(2.0, 128)
    a = 0.4
    fam = build_family(GeneratorField.constant(g, 1j * a, d=1))
    assert np.allclose(fam.density.values[:, 0, 0].real, np.exp(2 * a * g.z), rtol=1e-9)
    assert GeneratorField.constant(g, 1j * a, d=1).kappa0_defect() > 0.5


def test_density_and_adjoint_properties():
    g = make_grid(4.0, 256)
    R0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    fam = build_family(GeneratorField.from_function(g, _mixed, R0))
    rho = fam.density.values
    assert np.min(np.linalg.eigvalsh(rho)) > 0
    assert np.allclose(rho[g.zero_index], R0)
    assert fam.isometry_defect() < 1e-11


def test_dressing_is_isometric():
    g = make_grid(8.0, 256)
    R0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    fam = build_family(GeneratorField.from_function(g, _mixed, R0))
    f = gaussian_packet(g, 0.5, 1.0, 1.0, (1.0, 1j))
    flat = dress(f, fam, "forward")
    rho0 = OperatorField.constant(g, R0)
    assert weighted_norm_sq(flat, rho0) == pytest.approx(weighted_norm_sq(f, fam.density), rel=1e-12)
    back = dress(flat, fam, "adjoint")
    assert np.allclose(back.values, f.values, atol=1e-12)
    with pytest.raises(ValueError):
        dress(f, fam, "sideways")


def test_rho0_validation():
    g = make_grid(1.0, 16)
    with pytest.raises(FamilyError):
        GeneratorField.constant(g, np.zeros((2, 2)), np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(FamilyError):
        GeneratorField.constant(g, np.zeros((2, 2)), -np.eye(2))


def test_blowup_detected():
    g = make_grid(32.0, 64)
    with pytest.raises(FamilyError, match="blew up"):
        build_family(GeneratorField.constant(g, 2j, d=1))


def test_substeps_validated():
    g = make_grid(1.0, 16)
    with pytest.raises(FamilyError):
        build_family(GeneratorField.constant(g, 0.1, d=1), substeps=2)


def test_hermitian_defect_weighted():
    R = np.diag([2.0, 1.0])
    K = np.array([[0.0, 1.0], [2.0, 0.0]])  # R^-1 K^H R = K
    assert hermitian_defect(K, R) < 1e-15
    assert hermitian_defect(K, np.eye(2)) > 0.5


def test_interaction_family_routes_agree():
    g = make_grid(4.0, 256)
    K0 = np.diag([0.5, -0.3])
    fam = build_family(GeneratorField.from_function(g, lambda z: K0 + 0.2 * np.cos(z) * np.array([[0, 1], [1, 0]])))
    ufam = interaction_family(fam, K0)
    expected = np.stack([scipy.linalg.expm(1j * z * K0) for z in g.z]) @ fam.values.values
    assert np.max(np.abs(ufam.values.values - expected)) < 1e-8
    with pytest.raises(FamilyError):
        interaction_family(fam, np.array([[0, 1], [0, 0.0]]))


def test_generator_table_round_trip(tmp_path):
    g = make_grid(1.0, 16)
    gen = GeneratorField.from_function(g, _mixed)
    p = tmp_path / "kappa.txt"
    write_generator_table(p, gen.field)
    back = load_generator_table(p, g, 2)
    assert np.array_equal(back.values, gen.field.values)


def test_generator_table_wrong_node_count(tmp_path):
    p = tmp_path / "short.txt"
    p.write_text("# too short\n" + "0 0\n" * 10)
    with pytest.raises(FamilyError, match="expected N=16"):
        load_generator_table(p, make_grid(1.0, 16), 1)


def test_time_reversal_defect():
    g = make_grid(4.0, 64)
    assert GeneratorField.from_function(g, lambda z: np.cos(z)).time_reversal_defect() < 1e-15
    assert GeneratorField.from_function(g, lambda z: np.sin(z)).time_reversal_defect() > 0.5


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 3.0))
def test_constant_family_isometry_property(a, b, r):
    g = make_grid(2.0, 32)
    K = np.array([[a, b], [b, -a]])
    fam = constant_family(g, K, np.diag([r, 1.0]) if abs(b) < 1e-12 else None)
    assert fam.isometry_defect() < 1e-11
    f = WaveField(g, np.ones((32, 2)))
    flat = dress(f, fam)
    assert weighted_norm_sq(flat, OperatorField.constant(g, fam.rho0)) == pytest.approx(
        weighted_norm_sq(f, fam.density), rel=1e-11)
