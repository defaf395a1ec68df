"""Fourier transforms, the relativistic dispersion symbol and spectral propagators.

Every operator here is a Fourier multiplier, optionally sandwiching the
half-line mask ``1_0``.  Phases are evaluated directly from the symbol, so
``propagate(t)`` is one-shot exact rather than time-stepped.

Symbol conventions (acting on the mode ``exp(i k z)``):

* input channel:  ``omega_kappa(-k) = eps(kappa - k) - kappa``
* output channel: ``eps(kappa + k) - kappa`` (mirror image of the input one)
* ``kappa = inf`` is the transport limit: ``-k`` for input, ``+k`` for output,
  i.e. exact shifts ``f(z + t)`` and ``f(z - t)``.

Input waves are band-limited below ``kappa`` (no mass at ``k >= kappa``);
output waves are band-limited above ``-kappa``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import (
    IndicatorMask,
    LatticeError,
    SpatialGrid,
    WaveField,
    as_matrix,
    indicator_mask,
    seam_mass_fraction,
)

__all__ = [
    "SpectralError",
    "DispersionRelation",
    "Spectrum",
    "fourier",
    "dispersion_eval",
    "shifted_symbol",
    "band_excess",
    "check_band_limit",
    "propagate",
    "hardy_project",
    "heisenberg_projector",
    "regularized_projector",
    "offset_evolution",
    "joint_eigenbasis",
    "BAND_TOL",
    "SEAM_TOL",
]

BAND_TOL = 1e-12
SEAM_TOL = 1e-10
INPUT, OUTPUT = "input", "output"


class SpectralError(ValueError):
    """Band-limit, seam or commutation violations."""


@dataclass(frozen=True, eq=False)
class DispersionRelation:
    """``eps_a(k) = sqrt(k^2 + mu_a^2)`` for a diagonal mass spectrum ``mu``."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.array(self.mu, dtype=float))
        if mu.ndim != 1 or np.any(~np.isfinite(mu)) or np.any(mu < 0):
            raise SpectralError(f"mass spectrum must be a nonnegative vector, got {self.mu}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return len(self.mu)

    @property
    def max_mass(self) -> float:
        return float(self.mu.max())

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return np.sqrt(k[..., None] ** 2 + self.mu**2)

    def phase_speed(self, kappa: float):
        """``eps(kappa) / kappa`` per component."""
        return self(kappa) / kappa


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Orthonormal DFT coefficients in ``numpy.fft`` bin order.

    ``norm_sq`` carries the ``dz`` weight so that it equals the L2 norm of
    the field it came from.
    """

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.N:
            raise LatticeError(f"spectrum shape {v.shape} incompatible with N={self.grid.N}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> np.ndarray:
        return self.grid.momentum().k

    def norm_sq(self) -> float:
        return float(np.vdot(self.values, self.values).real * self.grid.dz)


def _fft(v):
    return np.fft.fft(v, axis=0, norm="ortho")


def _ifft(v):
    return np.fft.ifft(v, axis=0, norm="ortho")


def fourier(obj, direction: str = "forward"):
    """Unitary DFT.  ``forward`` maps WaveField -> Spectrum, ``inverse`` back."""
    if direction == "forward":
        return Spectrum(obj.grid, _fft(obj.values))
    if direction == "inverse":
        return WaveField(obj.grid, _ifft(obj.values))
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def dispersion_eval(disp: DispersionRelation, k):
    return disp(k)


def shifted_symbol(disp: DispersionRelation, kappa: float, k, channel: str = INPUT):
    """Symbol of the shifted generator on the mode ``exp(i k z)``.

    Input channel: ``eps(kappa - k) - kappa``; output channel (the reflected
    symbol): ``eps(kappa + k) - kappa``.  For ``kappa = inf`` the transport
    limits ``-k`` and ``+k`` are returned.
    """
    k = np.asarray(k, dtype=float)
    sgn = _channel_sign(channel)
    if np.isinf(kappa):
        return np.broadcast_to((-sgn * k)[..., None], k.shape + (disp.dim,)).copy()
    return disp(kappa - sgn * k) - kappa


def _channel_sign(channel):
    if channel == INPUT:
        return 1.0
    if channel == OUTPUT:
        return -1.0
    raise ValueError(f"channel must be 'input' or 'output', got {channel!r}")


def band_excess(field: WaveField, kappa: float, channel: str = INPUT) -> float:
    """Fraction of spectral mass outside the channel's band (``k >= kappa`` for input)."""
    if np.isinf(kappa):
        return 0.0
    F = _fft(field.values)
    k = field.grid.momentum().k
    outside = (k >= kappa) if channel == INPUT else (k <= -kappa)
    total = np.sum(np.abs(F) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(F[outside]) ** 2) / total)


def check_band_limit(field: WaveField, kappa: float, channel: str = INPUT, tol: float = BAND_TOL):
    excess = band_excess(field, kappa, channel)
    if excess > tol:
        side = f"k >= {kappa}" if channel == INPUT else f"k <= {-kappa}"
        raise SpectralError(f"{channel} field not band-limited: mass fraction {excess:.3e} at {side}")


def _check_dim(field, disp):
    if field.dim != disp.dim:
        raise SpectralError(f"field dimension {field.dim} != mass spectrum length {disp.dim}")


def _multiplier(field, factor):
    return WaveField(field.grid, _ifft(factor * _fft(field.values)))


def propagate(field: WaveField, disp: DispersionRelation, kappa: float, t: float,
              channel: str = INPUT, check_band=True, check_seam=True) -> WaveField:
    """Apply ``exp(-i t omega_kappa)`` to an input or output wave.

    Parameters
    ----------
    field : WaveField
        Wave band-limited below ``kappa`` (input) or above ``-kappa`` (output).
    disp : DispersionRelation
    kappa : float
        Reference momentum; ``numpy.inf`` selects the exact transport limit.
    t : float
    channel : {'input', 'output'}
    check_band, check_seam : bool
        Validate the band limit before and the seam mass after propagation.
    """
    _check_dim(field, disp)
    if check_band:
        check_band_limit(field, kappa, channel)
    if t == 0:
        return field
    k = field.grid.momentum().k
    out = _multiplier(field, np.exp(-1j * t * shifted_symbol(disp, kappa, k, channel)))
    if check_seam and seam_mass_fraction(out) > SEAM_TOL:
        raise SpectralError(f"seam mass {seam_mass_fraction(out):.3e} after propagation by t={t}")
    return out


def hardy_project(field: WaveField, kappa0: float) -> WaveField:
    """Zero every spectral bin with ``k >= kappa0``."""
    k = field.grid.momentum().k
    keep = (k < kappa0)[:, None]
    return _multiplier(field, keep.astype(float))


def heisenberg_projector(field: WaveField, disp: DispersionRelation, kappa: float, t: float,
                         check_band=True) -> WaveField:
    """``exp(i t omega) 1_0 exp(-i t omega)`` applied to an input wave.

    The mask ``1_0`` (``z < 0``) is applied at the nodes; the two spectral
    factors act on every bin, including bins at ``k >= kappa`` populated by
    the sharp mask.
    """
    _check_dim(field, disp)
    if check_band:
        check_band_limit(field, kappa, INPUT)
    mask = indicator_mask(field.grid, 0.0).values[:, None]
    if t == 0:
        return WaveField(field.grid, mask * field.values)
    k = field.grid.momentum().k
    ph = np.exp(-1j * t * shifted_symbol(disp, kappa, k, INPUT))
    inner = mask * _ifft(ph * _fft(field.values))
    return WaveField(field.grid, _ifft(ph.conj() * _fft(inner)))


def regularized_projector(field: WaveField, disp: DispersionRelation, kappa: float, t: float,
                          theta: float, check_band=True) -> WaveField:
    """``exp(-conj(tau) eps_kappa) 1_0 exp(-tau eps_kappa)`` with ``tau = theta + i t``.

    ``eps_kappa`` acts on ``exp(i k z)`` as ``eps(kappa - k)``.  The result is a
    positive contraction that tends to the Heisenberg projector as
    ``theta -> 0``.
    """
    if not theta > 0:
        raise SpectralError(f"theta must be positive, got {theta}")
    _check_dim(field, disp)
    if check_band:
        check_band_limit(field, kappa, INPUT)
    k = field.grid.momentum().k
    e = disp(kappa - k)
    right = np.exp(-(theta + 1j * t) * e)
    left = np.exp(-(theta - 1j * t) * e)
    mask = indicator_mask(field.grid, 0.0).values[:, None]
    inner = mask * _ifft(right * _fft(field.values))
    return WaveField(field.grid, _ifft(left * _fft(inner)))


def joint_eigenbasis(disp: DispersionRelation, kappa0, tol: float = 1e-12):
    """Eigen-decomposition of ``kappa0`` compatible with the diagonal masses.

    Returns ``(lam, V)`` with ``kappa0 = V diag(lam) V^-1`` and ``V`` block
    diagonal over equal-mass components, so column ``a`` carries mass
    ``mu_a``.  ``kappa0`` must commute with ``diag(mu)`` and have real
    spectrum.
    """
    d = disp.dim
    K = as_matrix(kappa0, d)
    M = np.diag(disp.mu)
    if np.linalg.norm(K @ M - M @ K, 2) > tol * max(1.0, np.linalg.norm(K, 2)):
        raise SpectralError("kappa0 does not commute with the mass spectrum")
    lam = np.zeros(d, dtype=complex)
    V = np.zeros((d, d), dtype=complex)
    for m in np.unique(disp.mu):
        idx = np.flatnonzero(disp.mu == m)
        w, v = np.linalg.eig(K[np.ix_(idx, idx)])
        lam[idx] = w
        V[np.ix_(idx, idx)] = v
    if np.max(np.abs(lam.imag)) > 1e-10 * max(1.0, np.abs(lam).max()):
        raise SpectralError("kappa0 has non-real eigenvalues")
    return lam.real, V


def offset_evolution(field: WaveField, disp: DispersionRelation, kappa: float, kappa0,
                     t: float) -> WaveField:
    """``exp(i t eps_kappa) exp(-i t eps_{kappa + kappa0})`` applied spectrally.

    In the joint eigenbasis of ``(mu, kappa0)`` the bin ``k`` of component
    ``a`` is multiplied by ``exp(i t (eps_a(kappa - k) - eps_a(kappa + lam_a - k)))``.
    For ``kappa = inf`` the limit ``exp(-i t kappa0)`` is applied.
    """
    _check_dim(field, disp)
    lam, V = joint_eigenbasis(disp, kappa0)
    Vinv = np.linalg.inv(V)
    k = field.grid.momentum().k
    if np.isinf(kappa):
        ph = np.broadcast_to(np.exp(-1j * t * lam), (len(k), disp.dim))
    else:
        mu2 = disp.mu**2
        a = np.sqrt((kappa - k)[:, None] ** 2 + mu2)
        b = np.sqrt((kappa + lam[None, :] - k[:, None]) ** 2 + mu2)
        ph = np.exp(1j * t * (a - b))
    F = _fft(field.values) @ Vinv.T
    return WaveField(field.grid, _ifft((ph * F) @ V.T))
