"""Input/output wave pair of the relativistic reflection problem.

The input wave ``psi`` lives on the whole line and is band-limited below
``kappa0`` after undressing; the output wave is its reflection,
``psi_out(-z) = sigma(z) psi(z)`` with ``sigma(z) = eps*(z) sigma0 eps(z)``.
Both channels evolve independently by one-shot spectral propagation at the
reference momentum ``kappa``; the boundary condition at ``z = 0`` is carried
by the truncated wave, equal to ``psi^t`` on ``z >= 0`` and to
``psi_out^t(-z)`` on ``z < 0``.  ``kappa = inf`` selects the transport limit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import OperatorField, WaveField, apply_pointwise, as_matrix, indicator_mask, weighted_norm_sq
from .ordexp import OrderedExpFamily, dress
from .spectral import DispersionRelation, check_band_limit, propagate

__all__ = [
    "BvpError",
    "BvpProblem",
    "PairState",
    "extend_output_initial",
    "evolve_pair",
    "truncated_limit",
    "boundary_current",
    "connection_defect",
    "pair_norm_sq",
    "time_reversal_check",
]


class BvpError(ValueError):
    pass


def _sqrtm_pos(R):
    w, U = np.linalg.eigh(R)
    return (U * np.sqrt(w)) @ U.conj().T, (U / np.sqrt(w)) @ U.conj().T


class BvpProblem:
    """Validated problem data.

    Parameters
    ----------
    disp : DispersionRelation
    kappa : float
        Reference momentum, or ``numpy.inf`` for the transport limit.
    family : OrderedExpFamily
        Dressing family; its ``rho0`` is the reference weight.
    sigma0 : array_like
        Boundary operator in the reference space.  ``rho0^{1/2} sigma0
        rho0^{-1/2}`` must be unitary and commute with ``diag(mu)``.
    band : float
        Band limit ``kappa0 < kappa`` of the undressed input.
    psi : WaveField
        Initial input wave.
    """

    def __init__(self, disp: DispersionRelation, kappa: float, family: OrderedExpFamily, sigma0,
                 band: float, psi: WaveField, tol: float = 1e-12):
        d = disp.dim
        errors = []
        if family.dim != d or psi.dim != d:
            raise BvpError(f"dimension mismatch: mu has {d}, family {family.dim}, psi {psi.dim}")
        if psi.grid != family.grid:
            raise BvpError("psi and family live on different grids")
        if not kappa > band:
            errors.append(f"band limit {band} must be below kappa={kappa}")
        S0 = as_matrix(sigma0, d)
        r, rinv = _sqrtm_pos(family.rho0)
        sig = r @ S0 @ rinv
        if np.linalg.norm(sig.conj().T @ sig - np.eye(d), 2) > tol:
            errors.append("sigma0 is not unitary in the reference weight")
        M = np.diag(disp.mu)
        if np.linalg.norm(sig @ M - M @ sig, 2) > tol * max(1.0, disp.max_mass):
            errors.append("sigma0 does not commute with the mass spectrum")
        if errors:
            raise BvpError("; ".join(errors))
        self.disp, self.kappa, self.family, self.band = disp, float(kappa), family, float(band)
        self.sigma0 = S0
        self.psi = psi
        self._r, self._rinv = r, rinv
        self.psi0 = dress(psi, family, "forward")
        check_band_limit(self.psi0, band, "input")
        self.sigma_field = OperatorField(
            psi.grid, family.adjoint.values @ S0 @ family.values.values)

    @property
    def grid(self):
        return self.psi.grid

    @property
    def rho0(self):
        return self.family.rho0

    def with_kappa(self, kappa) -> "BvpProblem":
        return BvpProblem(self.disp, kappa, self.family, self.sigma0, self.band, self.psi)

    def with_psi(self, psi) -> "BvpProblem":
        return BvpProblem(self.disp, self.kappa, self.family, self.sigma0, self.band, psi)

    def _flat(self, phi: WaveField, t: float, channel: str) -> WaveField:
        # rho0^{-1/2} exp(-i t omega) rho0^{1/2}, unitary in the rho0 norm
        v = WaveField(phi.grid, phi.values @ self._r.T)
        v = propagate(v, self.disp, self.kappa, t, channel)
        return WaveField(phi.grid, v.values @ self._rinv.T)


@dataclass(frozen=True, eq=False)
class PairState:
    t: float
    input: WaveField
    output: WaveField
    truncated: WaveField
    rho0: np.ndarray


def extend_output_initial(problem: BvpProblem) -> WaveField:
    """Output wave with ``psi_out(-z_j) = sigma(z_j) psi(z_j)`` at every node."""
    return apply_pointwise(problem.sigma_field, problem.psi).reflected()


def _assemble(problem, t, psi_t, out_t):
    mask = indicator_mask(problem.grid, 0.0).as_bool()
    chi = np.array(psi_t.values)
    chi[mask] = out_t.reflected().values[mask]
    return PairState(float(t), psi_t, out_t, WaveField(problem.grid, chi), problem.rho0)


def _evolve_channels(problem, psi, out, t):
    fam = problem.family
    psi0 = dress(psi, fam, "forward")
    out0 = dress(out, fam, "reflected")
    psi_t = dress(problem._flat(psi0, t, "input"), fam, "adjoint")
    out_t = dress(problem._flat(out0, t, "output"), fam, "reflected_adjoint")
    return psi_t, out_t


def evolve_pair(problem: BvpProblem, t: float) -> PairState:
    """Evolve the pair to time ``t`` and assemble the truncated wave."""
    if t == 0:
        return _assemble(problem, 0.0, problem.psi, extend_output_initial(problem))
    psi_t, out_t = _evolve_channels(problem, problem.psi, extend_output_initial(problem), t)
    return _assemble(problem, t, psi_t, out_t)


def truncated_limit(problem: BvpProblem, t: float) -> WaveField:
    """Closed-form transport limit of the truncated wave for a lattice ``t``.

    ``chi^t(z) = eps*(z) eps(z+t) chi_t(z+t)`` with
    ``chi_t = psi + (sigma - 1) 1_t psi``.
    """
    grid = problem.grid
    n = grid.steps(t)
    fam = problem.family
    psi = problem.psi.values
    jumped = np.einsum("nij,nj->ni", problem.sigma_field.values, psi)
    chi_t = np.where(indicator_mask(grid, t).as_bool()[:, None], jumped, psi)
    moved = np.roll(np.einsum("nij,nj->ni", fam.values.values, chi_t), -n, axis=0)
    return WaveField(grid, np.einsum("nij,nj->ni", fam.adjoint.values, moved))


def boundary_current(state: PairState) -> float:
    """``|psi_out(0)|^2 - |psi(0)|^2`` in the reference weight at the node ``z = 0``."""
    j = state.input.grid.zero_index
    a, b = state.output.values[j], state.input.values[j]
    R = state.rho0
    return float(np.vdot(a, R @ a).real - np.vdot(b, R @ b).real)


def connection_defect(problem: BvpProblem, state: PairState) -> float:
    """``max_j ||psi_out(-z_j) - sigma(z_j) psi(z_j)||``."""
    lhs = state.output.reflected().values
    rhs = np.einsum("nij,nj->ni", problem.sigma_field.values, state.input.values)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=1)))


def pair_norm_sq(problem: BvpProblem, state: PairState) -> float:
    """``||psi||_rho^2 + ||psi_out||^2`` weighted by the reflected density."""
    fam = problem.family
    return (weighted_norm_sq(state.input, fam.density)
            + weighted_norm_sq(state.output, fam.reflected_density()))


def time_reversal_check(problem: BvpProblem, t: float, tol: float = 1e-10) -> float:
    """Round trip: evolve by ``t``, conjugate and swap channels, evolve by ``t``.

    Returns the larger of the two channel defects against the conjugated,
    swapped initial pair (weighted norms).

    Raises
    ------
    BvpError
        Unless ``conj(sigma0) = sigma0^-1``, ``conj(rho0) = rho0`` and
        ``conj(kappa(z)) = kappa(-z)`` hold within ``tol``.
    """
    S = problem.sigma0
    unmet = []
    if np.linalg.norm(S.conj() @ S - np.eye(len(S)), 2) > tol:
        unmet.append("conj(sigma0) != sigma0^-1")
    R = problem.rho0
    if np.max(np.abs(R.conj() - R)) > tol:
        unmet.append("rho0 not real")
    if problem.family.generator.time_reversal_defect() > tol:
        unmet.append("conj(kappa(z)) != kappa(-z)")
    if unmet:
        raise BvpError("time reversal preconditions unmet: " + ", ".join(unmet))
    st = evolve_pair(problem, t)
    back_in, back_out = _evolve_channels(problem, st.output.conj(), st.input.conj(), t)
    fam = problem.family
    out0 = extend_output_initial(problem)
    d_in = weighted_norm_sq(back_in - out0.conj(), fam.density)
    d_out = weighted_norm_sq(back_out - problem.psi.conj(), fam.reflected_density())
    return float(np.sqrt(max(d_in, d_out)))
