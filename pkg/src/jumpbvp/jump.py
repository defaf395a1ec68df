"""Closed-form single-jump cocycle and its diagnostics.

The model is ``d_t V + i H V dt = (S - I) V d1_t(s)``: free evolution by
``H`` with one scattering ``S`` at the random instant ``s``.  Its solution is

    V(t, s) = exp(-i t H) S(s)^{1[0 <= s < t]},   S(s) = exp(i s H) S exp(-i s H).

On the grid the unitary group ``V^t`` acts on fields ``chi(z)`` as
``eps* S^{1_0} (shift by t) S^{-1_0} eps`` where ``eps`` is the ordered
exponential of ``u + H``.
"""
from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import (
    LatticeError,
    SpatialGrid,
    WaveField,
    as_matrix,
    indicator_mask,
    norm_sq,
    weighted_norm_sq,
)
from .ordexp import OrderedExpFamily, constant_family, dress
from .spectral import hardy_project

__all__ = [
    "JumpError",
    "JumpDensity",
    "JumpModel",
    "CocycleSample",
    "ExpectationReport",
    "jump_cocycle",
    "cocycle_samples",
    "ito_residual",
    "jump_group_apply",
    "group_check",
    "jump_expectation",
    "sample_jump_times",
    "random_band_limited",
]

_TOL = 1e-12
MC_CHUNK = 16384


class JumpError(ValueError):
    pass


@dataclass(frozen=True)
class JumpDensity:
    """Jump-time density on ``[0, s_max]``.

    ``kind`` is ``'uniform'``, ``'truncated_gaussian'`` (``params = (mean,
    std)``) or ``'custom'`` with ``fn`` given.  Named kinds are normalized
    on the grid; a custom density must already integrate to one.
    """

    kind: str
    s_max: float
    params: tuple = ()
    fn: Callable | None = None

    def raw(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= 0) & (s <= self.s_max)
        if self.kind == "uniform":
            v = np.full_like(s, 1.0 / self.s_max)
        elif self.kind == "truncated_gaussian":
            mean, std = self.params
            v = np.exp(-0.5 * ((s - mean) / std) ** 2)
        elif self.kind == "custom":
            v = np.asarray(self.fn(s), dtype=float)
        else:
            raise JumpError(f"unknown density kind {self.kind!r}")
        return np.where(inside, v, 0.0)

    @property
    def normalize(self) -> bool:
        return self.kind != "custom"


def _expm_herm(H, t):
    w, U = np.linalg.eigh(H)
    t = np.asarray(t, dtype=float)
    return np.einsum("ij,...j,kj->...ik", U, np.exp(-1j * t[..., None] * w), U.conj())


class JumpModel:
    """Hamiltonian, scatter, initial vector and jump density on a grid.

    Parameters
    ----------
    H : array_like
        Hermitian ``d x d``.
    S : array_like
        Unitary ``d x d``.
    eta : array_like
        Unit vector.
    density : JumpDensity
    grid : SpatialGrid
        Used for quadrature, field realization and the inverse CDF.
    """

    def __init__(self, H, S, eta, density: JumpDensity, grid: SpatialGrid):
        eta = np.atleast_1d(np.asarray(eta, dtype=complex))
        d = len(eta)
        H = as_matrix(H, d)
        S = as_matrix(S, d)
        errors = []
        if np.linalg.norm(H - H.conj().T, 2) > _TOL * max(1.0, np.linalg.norm(H, 2)):
            errors.append("H is not Hermitian")
        if np.linalg.norm(S.conj().T @ S - np.eye(d), 2) > _TOL:
            errors.append("S is not unitary")
        if abs(np.linalg.norm(eta) - 1) > _TOL:
            errors.append("eta is not a unit vector")
        if not 0 < density.s_max < grid.L:
            errors.append(f"s_max={density.s_max} must lie in (0, L={grid.L})")
        if errors:
            raise JumpError("; ".join(errors))
        self.H, self.S, self.eta, self.d = H, S, eta, d
        self.density, self.grid = density, grid
        z = grid.z
        self._support = (z > 1e-9 * grid.dz) & (z <= density.s_max + 1e-9 * grid.dz)
        w = density.raw(z) * self._support
        total = w.sum() * grid.dz
        if density.normalize:
            w = w / total
        elif abs(total - 1) > 1e-8:
            raise JumpError(f"jump density integrates to {total:.10g} on the grid, not 1")
        self.weights = w

    def V(self, t, s):
        return jump_cocycle(self, t, s)

    def apply(self, t, s, vec=None):
        """``V(t, s) vec`` for an array of jump times ``s`` (shape ``(n, d)``)."""
        vec = self.eta if vec is None else np.asarray(vec, dtype=complex)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        Ut = _expm_herm(self.H, t)
        Us = _expm_herm(self.H, s)
        # S(s) vec = U(s)^H S U(s) vec, applied only where 0 <= s < t
        jumped = np.einsum("nji,jk,nkl,l->ni", Us.conj(), self.S, Us, vec)
        inside = ((s >= 0) & (s < t))[:, None]
        w = np.where(inside, jumped, vec[None, :])
        return w @ Ut.T


@dataclass(frozen=True)
class CocycleSample:
    t: float
    s: float
    value: np.ndarray


def jump_cocycle(model: JumpModel, t: float, s: float) -> np.ndarray:
    """``V(t, s) = exp(-i t H) S(s)`` if ``0 <= s < t`` else ``exp(-i t H)``."""
    if t < 0 or s < 0:
        raise JumpError("t and s must be nonnegative")
    Ut = _expm_herm(model.H, t)
    if s < t:
        Us = _expm_herm(model.H, s)
        return Ut @ Us.conj().T @ model.S @ Us
    return Ut


def cocycle_samples(model, ts, s):
    return [CocycleSample(float(t), float(s), jump_cocycle(model, t, s)) for t in ts]


def ito_residual(model: JumpModel, s: float, dt: float, t_max: float | None = None) -> dict:
    """Residuals of the Ito equation along the lattice ``t_n = n dt``.

    Returns
    -------
    dict
        ``off_jump_residual``: max over ``t`` outside ``[s - dt, s]`` of
        ``||V(t+dt,s) - V(t,s) + i H V(t,s) dt||``.
        ``jump_defect``: ``||V(s+, s) - S V(s, s)||``.
    """
    if not dt > 0:
        raise JumpError("dt must be positive")
    if t_max is None:
        t_max = 2 * s + 20 * dt
    n = int(np.floor(t_max / dt + 1e-9))
    ts = dt * np.arange(n)
    eps = 1e-9 * dt
    off = 0.0
    H = model.H
    for t in ts:
        if s - dt - eps <= t <= s + eps:
            continue
        Vt = jump_cocycle(model, t, s)
        r = jump_cocycle(model, t + dt, s) - Vt + 1j * dt * (H @ Vt)
        off = max(off, float(np.linalg.norm(r, 2)))
    Us = _expm_herm(H, s)
    after = Us @ Us.conj().T @ model.S @ Us  # limit t -> s from above
    defect = float(np.linalg.norm(after - model.S @ jump_cocycle(model, s, s), 2))
    return {"off_jump_residual": off, "jump_defect": defect}


def _check_generator(model, fam):
    # fam must be generated by u(z) I + H
    K = np.asarray(fam.generator.field.values) - model.H
    off = K - np.einsum("nii->n", K)[:, None, None] / model.d * np.eye(model.d)
    if np.max(np.abs(off)) > 1e-10 * max(1.0, np.linalg.norm(model.H)):
        raise JumpError("family generator is not of the form u(z) I + H")


def jump_group_apply(model: JumpModel, fam: OrderedExpFamily, chi: WaveField, t: float) -> WaveField:
    """``V^t chi = eps* S^{1_0} (chi0 -> chi0(. + t)) S^{-1_0} eps chi``.

    ``t`` must be a lattice multiple of ``dz``.
    """
    grid = chi.grid
    n = grid.steps(t)
    mask = indicator_mask(grid, 0.0).as_bool()
    S, Sinv = model.S, model.S.conj().T
    phi = np.array(dress(chi, fam, "forward").values)
    phi[mask] = phi[mask] @ Sinv.T
    phi = np.roll(phi, -n, axis=0)
    phi[mask] = phi[mask] @ S.T
    return dress(WaveField(grid, phi), fam, "adjoint")


def random_band_limited(grid: SpatialGrid, d: int, rng: np.random.Generator, band: float,
                        packets: int = 3, spread: float | None = None) -> WaveField:
    """Random superposition of Gaussian packets, hardy-projected below ``band``.

    Packets are centered in ``[-spread, spread]`` (default ``L / 3``) so the
    seam stays empty.
    """
    spread = grid.L / 3 if spread is None else spread
    z = grid.z
    v = np.zeros((grid.N, d), dtype=complex)
    for _ in range(packets):
        c = rng.uniform(-spread, spread)
        w = rng.uniform(0.5, 1.5)
        k0 = rng.uniform(-band / 2, band / 4)
        amp = rng.normal(size=d) + 1j * rng.normal(size=d)
        v += np.exp(-((z - c) ** 2) / (2 * w * w) + 1j * k0 * z)[:, None] * amp[None, :]
    f = hardy_project(WaveField(grid, v), band)
    return f * (1.0 / f.norm())


def group_check(model: JumpModel, fam: OrderedExpFamily, r: float, t: float, trials: int = 20,
                seed: int = 0, band: float | None = None) -> float:
    """Max over random band-limited fields of ``||V^r V^t chi - V^{r+t} chi||_rho``."""
    grid = model.grid
    grid.steps(r), grid.steps(t)
    if abs(r) + abs(t) > grid.L / 2:
        raise JumpError("shifts exceed the seam margin")
    _check_generator(model, fam)
    band = np.pi / (4 * grid.dz) if band is None else band
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for _ in range(trials):
        chi = random_band_limited(grid, model.d, rng, band)
        chi = chi * (1.0 / np.sqrt(weighted_norm_sq(chi, fam.density)))
        a = jump_group_apply(model, fam, jump_group_apply(model, fam, chi, t), r)
        b = jump_group_apply(model, fam, chi, r + t)
        worst = max(worst, float(np.sqrt(weighted_norm_sq(a - b, fam.density))))
    return worst


def _inverse_cdf(model):
    density = model.density
    grid = model.grid
    n = max(int(round(density.s_max / grid.dz)), 1) * 8
    s = np.linspace(0.0, density.s_max, n + 1)
    p = density.raw(s)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(s))])
    if cdf[-1] <= 0:
        raise JumpError("jump density has zero mass")
    return s, cdf / cdf[-1]


def sample_jump_times(model: JumpModel, n: int, seed: int, threads: int = 1) -> np.ndarray:
    """Inverse-CDF samples of the jump time.

    Samples are drawn in fixed chunks, each from its own Philox stream
    spawned from ``seed``, so the result does not depend on ``threads``.
    """
    s_nodes, cdf = _inverse_cdf(model)
    chunks = [(i, min(MC_CHUNK, n - i)) for i in range(0, n, MC_CHUNK)]
    seqs = np.random.SeedSequence(seed).spawn(len(chunks))

    def draw(job):
        (_, size), ss = job
        u = np.random.Generator(np.random.Philox(ss)).random(size)
        return np.interp(u, cdf, s_nodes)

    jobs = list(zip(chunks, seqs))
    if threads > 1:
        with cf.ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(draw, jobs))
    else:
        parts = [draw(j) for j in jobs]
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass(frozen=True)
class ExpectationReport:
    t: float
    mc: float
    stderr: float
    quadrature: float
    field_norm: float
    n_samples: int
    seed: int

    @property
    def deterministic_gap(self) -> float:
        return abs(self.quadrature - self.field_norm)

    @property
    def mc_zscore(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.mc == self.quadrature else np.inf
        return abs(self.mc - self.quadrature) / self.stderr

    def passed(self, det_tol=1e-8, z_max=4.0) -> bool:
        det_ok = self.deterministic_gap <= det_tol
        # a constant integrand gives stderr 0; then only roundoff separates mc and quadrature
        mc_ok = self.mc_zscore <= z_max or abs(self.mc - self.quadrature) <= det_tol
        return bool(det_ok and mc_ok)


def jump_expectation(model: JumpModel, A, t: float, mc_samples: int, seed: int,
                     threads: int = 1) -> ExpectationReport:
    """Three estimates of ``E ||A V(t, s) eta||^2`` over the jump time.

    ``mc``: inverse-CDF Monte Carlo.  ``quadrature``: node sum of the same
    integrand against the grid-normalized density.  ``field_norm``: norm of
    ``(A x 1) V^t chi0`` with ``chi0(z) = sqrt(rho_s(z)) eta`` on ``z > 0``;
    carrying the density in the amplitude keeps the field flat-normed, which
    also covers densities vanishing outside ``[0, s_max]``.
    """
    if mc_samples < 1000:
        raise JumpError("mc_samples must be at least 1000")
    if not 0 <= t < model.density.s_max:
        raise JumpError("t must lie in [0, s_max)")
    grid = model.grid
    A = as_matrix(A, model.d)

    def integrand(s):
        v = model.apply(t, s) @ A.T
        return np.sum(np.abs(v) ** 2, axis=1)

    z = grid.z
    sup = model._support
    quad = float(np.sum(integrand(z[sup]) * model.weights[sup]) * grid.dz)

    fam = constant_family(grid, model.H)
    chi0 = np.zeros((grid.N, model.d), dtype=complex)
    chi0[sup] = np.sqrt(model.weights[sup])[:, None] * model.eta[None, :]
    chit = jump_group_apply(model, fam, WaveField(grid, chi0), t)
    field = float(norm_sq(WaveField(grid, chit.values @ A.T)))

    s = sample_jump_times(model, mc_samples, seed, threads)
    f = integrand(s)
    mc = float(np.mean(f))
    se = float(np.std(f, ddof=1) / np.sqrt(len(f)))
    return ExpectationReport(float(t), mc, se, quad, field, int(mc_samples), int(seed))
