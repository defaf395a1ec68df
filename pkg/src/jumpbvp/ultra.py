"""Diagnostics of the kappa -> infinity (transport) limit.

* ``convergence_error``: squared distance between the shifted finite-kappa
  evolution and free transport, computed in momentum space and re-checked in
  position space.
* ``gap_bound_check``: the pointwise gap ``0 <= k + omega_kappa(-k) < mu^2 / (2 (kappa - kappa0))``.
* ``projector_limit_scan`` / ``cocycle_limit_scan``: decay of the finite-kappa
  projector and cocycle towards the sharp mask and its stochastic limit.
* ``limit_equation_residual``: drift and jump content of the limiting
  stochastic equation, flat or dressed.
"""
from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass, field as dc_field

import numpy as np

from .lattice import LatticeError, WaveField, as_matrix, indicator_mask, norm_sq
from .ordexp import OrderedExpFamily
from .spectral import (
    DispersionRelation,
    SpectralError,
    Spectrum,
    check_band_limit,
    fourier,
    heisenberg_projector,
    joint_eigenbasis,
    offset_evolution,
    propagate,
)

__all__ = [
    "ConvergenceReport",
    "CocycleScanReport",
    "convergence_error",
    "quadratic_bound",
    "linear_bound",
    "dispersion_gap",
    "gap_bound_check",
    "ultrarelativistic_scan",
    "projector_limit_scan",
    "cocycle_limit_scan",
    "cocycle_apply",
    "limit_cocycle_apply",
    "rotated_sigma",
    "limit_equation_residual",
    "trend_verdict",
]


def linear_bound(disp, band, kappa, t):
    """``|t| max(mu)^2 / (kappa - band)``."""
    return abs(t) * disp.max_mass**2 / (kappa - band)


def quadratic_bound(disp, band, kappa, t):
    return linear_bound(disp, band, kappa, t) ** 2


def dispersion_gap(disp: DispersionRelation, kappa: float, k):
    """``k + eps(kappa - k) - kappa`` in the cancellation-free form
    ``mu^2 / (eps(kappa - k) + kappa - k)`` (valid for ``k < kappa``)."""
    k = np.asarray(k, dtype=float)
    q = kappa - k
    return disp.mu**2 / (np.sqrt(q[..., None] ** 2 + disp.mu**2) + q[..., None])


def convergence_error(g: Spectrum, disp: DispersionRelation, kappa: float, t: float,
                      band: float | None = None) -> dict:
    """Squared distance between the shifted evolution and free transport.

    Returns ``{'momentum': I, 'position': I_pos}``; ``I`` is the bin sum of
    ``|exp(-i (k + omega_kappa(-k)) t) - 1|^2 |g(k)|^2`` and ``I_pos`` is
    ``||shift_back(propagate(psi)) - psi||^2`` with ``psi`` the inverse
    transform of ``g``.

    Raises
    ------
    SpectralError
        If ``g`` is not band-limited below ``band`` (default ``kappa``) or
        ``||g|| > 1``.
    """
    psi = fourier(g, "inverse")
    check_band_limit(psi, kappa if band is None else band, "input")
    if g.norm_sq() > 1 + 1e-12:
        raise SpectralError(f"spectrum norm^2 {g.norm_sq():.6g} exceeds 1")
    k = g.k
    below = k < kappa
    x = k[:, None] + disp(kappa - k) - kappa
    x[below] = dispersion_gap(disp, kappa, k[below])
    weight = np.abs(np.exp(-1j * x * t) - 1) ** 2
    I = float(np.sum(weight * np.abs(g.values) ** 2) * g.grid.dz)
    moved = propagate(psi, disp, kappa, t, check_seam=False)
    back = propagate(moved, disp, np.inf, -t, check_band=False, check_seam=False)
    return {"momentum": I, "position": norm_sq(back - psi)}


def trend_verdict(errors, jitter=0.10, total_factor=3.0) -> bool:
    """Nonincreasing within ``jitter`` step to step, and last <= first / factor."""
    e = np.asarray(errors, dtype=float)
    if len(e) < 2:
        return True
    steps = bool(np.all(e[1:] <= (1 + jitter) * e[:-1]))
    return steps and bool(e[-1] <= e[0] / total_factor)


@dataclass
class ConvergenceReport:
    band: float
    t: float
    mu: np.ndarray
    kappas: list
    errors: list
    bounds: list
    passed: list
    extra: dict = dc_field(default_factory=dict)

    @property
    def ratios(self):
        e = np.asarray(self.errors, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return list(e[1:] / e[:-1])

    @property
    def trend(self) -> bool:
        return trend_verdict(self.errors)

    def rows(self):
        return [
            {"kappa": k, "error": e, "bound": b, "pass": int(p)}
            for k, e, b, p in zip(self.kappas, self.errors, self.bounds, self.passed)
        ]


def _pmap(fn, items, threads):
    if threads > 1:
        with cf.ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def ultrarelativistic_scan(psi: WaveField, disp, band, kappas, t, threads=1) -> ConvergenceReport:
    """``sqrt(I)`` per kappa against the linear bound; ``I`` must also sit below
    the linear bound itself and the squared bound."""
    g = fourier(psi, "forward")

    def one(kappa):
        return convergence_error(g, disp, kappa, t, band)

    res = _pmap(one, list(kappas), threads)
    errs, bounds, ok = [], [], []
    for kappa, r in zip(kappas, res):
        b = linear_bound(disp, band, kappa, t)
        I = r["momentum"]
        errs.append(float(np.sqrt(I)))
        bounds.append(b)
        strict = (I < b**2 and I < b) if b > 0 else I <= 1e-24
        ok.append(bool(strict and abs(I - r["position"]) <= 1e-12))
    rep = ConvergenceReport(band, t, disp.mu, list(kappas), errs, bounds, ok)
    rep.extra["I"] = [r["momentum"] for r in res]
    rep.extra["I_position"] = [r["position"] for r in res]
    return rep


def gap_bound_check(disp: DispersionRelation, band: float, kappa: float, n: int = 1001,
                    k_low: float | None = None) -> dict:
    """Sweep ``k`` in ``[k_low, band]`` and verify the dispersion gap.

    ``k_low`` defaults to ``-max(|band|, kappa - band)``.
    """
    gap = kappa - band
    if not gap > disp.max_mass:
        raise SpectralError(f"kappa - band = {gap} must exceed max mass {disp.max_mass}")
    lo = -max(abs(band), gap) if k_low is None else k_low
    k = np.linspace(lo, band, n)
    f = dispersion_gap(disp, kappa, k)
    bound = disp.max_mass**2 / (2 * gap)
    sup = float(f.max())
    violations = int(np.sum(f < 0) + np.sum(f >= bound)) if bound > 0 else int(np.sum(f != 0))
    monotone = bool(np.all(np.diff(f, axis=0) >= -4 * np.finfo(float).eps * max(sup, 1e-300)))
    return {"sup": sup, "bound": bound, "margin": bound - sup, "violations": violations,
            "monotone": monotone, "passed": violations == 0 and monotone}


def projector_limit_scan(psi: WaveField, disp, t, kappas, band=None, threads=1) -> ConvergenceReport:
    """``e(kappa) = ||pi_kappa^t psi - 1_t psi||`` over an ascending kappa list."""
    kappas = list(kappas)
    if any(b <= a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappa list must be ascending")
    if band is not None:
        if kappas and kappas[0] <= band:
            raise ValueError("every kappa must exceed the band limit")
        check_band_limit(psi, band, "input")
    target = WaveField(psi.grid, indicator_mask(psi.grid, t).values[:, None] * psi.values)

    def one(kappa):
        return (heisenberg_projector(psi, disp, kappa, t) - target).norm()

    errs = _pmap(one, kappas, threads)
    trend = trend_verdict(errs)
    return ConvergenceReport(band, t, disp.mu, kappas, errs, [np.nan] * len(kappas),
                             [trend] * len(kappas))


def rotated_sigma(grid, sigma, kappa0):
    """``sigma(z) = exp(i kappa0 z) sigma exp(-i kappa0 z)`` at every node."""
    d = sigma.shape[0]
    lam, V = np.linalg.eig(as_matrix(kappa0, d))
    Vinv = np.linalg.inv(V)
    E = np.einsum("ij,nj,jk->nik", V, np.exp(1j * np.outer(grid.z, lam.real)), Vinv)
    Einv = np.einsum("ij,nj,jk->nik", V, np.exp(-1j * np.outer(grid.z, lam.real)), Vinv)
    return E @ sigma @ Einv


def _power_mask(field_values, ops, mask):
    out = np.array(field_values)
    out[mask] = np.einsum("nij,nj->ni", ops[mask], field_values[mask])
    return out


def _validate_pair(disp, sigma, kappa0, tol=1e-12):
    d = disp.dim
    S = as_matrix(sigma, d)
    K = as_matrix(kappa0, d)
    M = np.diag(disp.mu)
    errs = []
    if np.linalg.norm(S @ M - M @ S, 2) > tol * max(1.0, disp.max_mass):
        errs.append("sigma does not commute with the mass spectrum")
    if np.linalg.norm(S.conj().T @ S - np.eye(d), 2) > tol:
        errs.append("sigma is not unitary")
    if np.linalg.norm(K - K.conj().T, 2) > tol * max(1.0, np.linalg.norm(K, 2)):
        errs.append("kappa0 is not Hermitian")
    if errs:
        raise SpectralError("; ".join(errs))
    joint_eigenbasis(disp, K)
    return S, K


def cocycle_apply(psi: WaveField, disp, sigma, kappa0, kappa, t, form="product") -> WaveField:
    """Finite-kappa cocycle applied to ``psi``.

    ``form='product'`` evaluates ``exp(i t omega) sigma^{1_0} exp(-i t omega')
    sigma^{-1_0}`` with ``omega'`` the symbol conjugated by ``exp(i kappa0 z)``
    (a unitary).  ``form='factored'`` evaluates ``exp(-i t eps_{kappa,kappa+kappa0})
    (I + pi_kappa^t (sigma - 1)) sigma^{-1_0}``, which agrees with the product in
    the limit but is not exactly unitary at finite kappa when the mask and the
    offset multiplier fail to commute.  ``sigma`` here is the rotated field
    ``exp(i kappa0 z) sigma exp(-i kappa0 z)``.
    """
    grid = psi.grid
    S, K = _validate_pair(disp, sigma, kappa0)
    sz = rotated_sigma(grid, S, K)
    szinv = np.conj(np.swapaxes(sz, 1, 2))
    mask = indicator_mask(grid, 0.0).as_bool()
    g = _power_mask(psi.values, szinv, mask)
    if form == "product":
        w = offset_evolution(WaveField(grid, g), disp, kappa, K, t)
        w = propagate(w, disp, kappa, t, check_band=False, check_seam=False)
        w = _power_mask(w.values, sz, mask)
        return propagate(WaveField(grid, w), disp, kappa, -t, check_band=False, check_seam=False)
    if form == "factored":
        h = WaveField(grid, np.einsum("nij,nj->ni", sz, g) - g)
        if np.isinf(kappa):
            proj = WaveField(grid, indicator_mask(grid, t).values[:, None] * h.values)
        else:
            proj = heisenberg_projector(h, disp, kappa, t, check_band=False)
        return offset_evolution(WaveField(grid, g) + proj, disp, kappa, K, t)
    raise ValueError(f"form must be 'product' or 'factored', got {form!r}")


class _LimitCocycle:
    """Precomputed factors of the limit cocycle; ``at(t)`` costs one
    pointwise matrix product per node."""

    def __init__(self, psi: WaveField, sigma, kappa0, family=None):
        grid = psi.grid
        d = psi.dim
        self.grid = grid
        self.S = as_matrix(sigma, d)
        self.K = as_matrix(kappa0, d)
        lam, V = np.linalg.eig(self.K)
        self._lam, self._V, self._Vinv = lam.real, V, np.linalg.inv(V)
        z = grid.z
        v = np.array(psi.values)
        if family is not None:
            v = np.einsum("nij,nj->ni", family.values.values, v)
        A = np.einsum("nij,nj->ni", self._expk(-z), v)
        self._A = A
        self._SA = A @ self.S.T
        self._SinvA = A @ np.linalg.inv(self.S).T
        P = self._expk(z)
        if family is not None:
            P = family.adjoint.values @ P
        self._P = P
        self._below0 = z < -1e-9 * grid.dz

    def _expk(self, x):
        x = np.atleast_1d(x)
        return np.einsum("ij,nj,jk->nik", self._V, np.exp(1j * np.outer(x, self._lam)), self._Vinv)

    def at(self, t: float, closed: bool = False) -> np.ndarray:
        z = self.grid.z
        tol = 1e-9 * self.grid.dz
        upto = (z <= t + tol) if closed else (z < t - tol)
        D = upto.astype(int) - self._below0.astype(int)
        W = np.where((D == 1)[:, None], self._SA, np.where((D == -1)[:, None], self._SinvA, self._A))
        W = W @ self._expk(-t)[0].T
        return np.einsum("nij,nj->ni", self._P, W)


def limit_cocycle_apply(psi: WaveField, sigma, kappa0, t, family: OrderedExpFamily | None = None,
                        closed: bool = False) -> WaveField:
    """Limit cocycle ``exp(-i t kappa0) (I + 1_t (sigma - 1)) sigma^{-1_0}``.

    Flat form (``family=None``): ``sigma`` is rotated to ``exp(i kappa0 z)
    sigma exp(-i kappa0 z)``.  Dressed form: with ``family`` the interaction
    family ``eps_u``,
    ``chi(t, z) = eps_u*(z) exp(i (z - t) kappa0) sigma^{D(z)} exp(-i kappa0 z) eps_u(z) chi(z)``
    where ``D = 1_t - 1_0``.  ``closed=True`` includes the node ``z = t`` in
    ``1_t`` (the instant just after the jump).
    """
    return WaveField(psi.grid, _LimitCocycle(psi, sigma, kappa0, family).at(t, closed))


@dataclass
class CocycleScanReport:
    kappas: list
    distances: list
    factored_distances: list
    isometry_defects: list
    residuals: dict | None = None

    @property
    def trend(self) -> bool:
        return trend_verdict(self.distances)

    def rows(self):
        return [
            {"kappa": k, "error": e, "bound": np.nan, "pass": int(self.trend)}
            for k, e in zip(self.kappas, self.distances)
        ]


def cocycle_limit_scan(psi: WaveField, disp, sigma, kappa0, t, kappas, band=None, dt=None,
                       threads=1) -> CocycleScanReport:
    """Distances ``||v_kappa(t) psi - v(t) psi||`` over an ascending kappa list.

    Distances use the product (unitary) form; the factored form is reported
    alongside.  With ``dt`` given, the limit-equation residual up to ``t`` is
    attached.
    """
    kappas = list(kappas)
    if band is not None:
        check_band_limit(psi, band, "input")
    S, K = _validate_pair(disp, sigma, kappa0)
    limit = limit_cocycle_apply(psi, S, K, t)
    n0 = psi.norm()

    def one(kappa):
        a = cocycle_apply(psi, disp, S, K, kappa, t, "product")
        b = cocycle_apply(psi, disp, S, K, kappa, t, "factored")
        return (a - limit).norm(), (b - limit).norm(), abs(a.norm() - n0) / n0

    res = _pmap(one, kappas, threads)
    rep = CocycleScanReport(kappas, [r[0] for r in res], [r[1] for r in res], [r[2] for r in res])
    if dt is not None:
        rep.residuals = limit_equation_residual(psi, K, S, dt, t)
    return rep


def limit_equation_residual(psi: WaveField, kappa0, sigma, dt: float, t_max: float,
                            family: OrderedExpFamily | None = None) -> dict:
    """Split each increment of the limit cocycle into drift and jump parts.

    For steps ``t -> t + dt`` on the lattice ``t_n = n dt`` (``dz / dt`` a
    positive integer):

    * drift: L2 norm over nodes with unchanged mask of
      ``chi(t+dt) - chi(t) + i k(z) chi(t) dt`` (``k = kappa0`` flat, or
      ``eps_u* kappa0 eps_u`` dressed); maximum over steps.
    * jump: at the node ``z = t`` entering the mask,
      ``||chi(t+, t) - s(t) chi(t, t)||`` with ``s = sigma`` flat or
      ``eps_u* sigma eps_u`` dressed; maximum over steps.
    """
    grid = psi.grid
    ratio = grid.dz / dt
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9:
        raise LatticeError(f"dz/dt must be a positive integer, got {ratio}")
    d = psi.dim
    K = as_matrix(kappa0, d)
    S = as_matrix(sigma, d)
    if family is None:
        Kz = np.broadcast_to(K, (grid.N, d, d))
        Sz = np.broadcast_to(S, (grid.N, d, d))
    else:
        Kz = family.adjoint.values @ K @ family.values.values
        Sz = family.adjoint.values @ S @ family.values.values
    n_steps = int(np.floor(t_max / dt + 1e-9))
    if n_steps * dt >= grid.L:
        raise LatticeError("t_max must stay inside the grid")
    z = grid.z
    tol = 1e-9 * grid.dz
    drift, jump = 0.0, 0.0
    cocycle = _LimitCocycle(psi, S, K, family)
    prev = cocycle.at(0.0)
    for n in range(n_steps):
        t = n * dt
        nxt = cocycle.at(t + dt)
        entering = (z >= t - tol) & (z < t + dt - tol)
        keep = ~entering
        r = nxt - prev + 1j * dt * np.einsum("nij,nj->ni", Kz, prev)
        drift = max(drift, float(np.sqrt(np.sum(np.abs(r[keep]) ** 2) * grid.dz)))
        if np.any(entering):
            j = np.flatnonzero(entering)
            if len(j) > 1:
                raise LatticeError("more than one node enters the mask per step")
            j = j[0]
            after = cocycle.at(t, closed=True)[j]
            jump = max(jump, float(np.linalg.norm(after - Sz[j] @ prev[j])))
        prev = nxt
    return {"drift_residual": drift, "jump_defect": jump, "steps": n_steps, "dt": dt}
