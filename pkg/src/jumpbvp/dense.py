"""Dense-matrix realizations of the spectral operators.

Each operator is assembled as ``W^H diag(symbol) W`` with an explicit DFT
matrix ``W_nj = exp(-i k_n z_j) / sqrt(N)`` built from the mode list, so it
shares no code path with the FFT-based implementations.  Matrices act on
fields flattened node-major (index ``j * d + a``).  Intended for ``N <= 128``.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .lattice import SpatialGrid, WaveField, as_matrix

__all__ = [
    "dft_matrix",
    "dense_apply",
    "dense_mask",
    "dense_propagator",
    "dense_heisenberg_projector",
    "dense_regularized_projector",
    "dense_offset_evolution",
]


def dft_matrix(grid: SpatialGrid) -> np.ndarray:
    n = np.arange(-grid.N // 2, grid.N // 2)
    k = np.pi / grid.L * n
    return np.exp(-1j * np.outer(k, grid.z)) / np.sqrt(grid.N), k


def _conjugate_blocks(grid, d, blocks):
    # blocks: (N, d, d) symbol matrices per mode, mode order of dft_matrix
    W, _ = dft_matrix(grid)
    Wd = np.kron(W, np.eye(d))
    D = scipy.linalg.block_diag(*blocks)
    return Wd.conj().T @ D @ Wd


def _diag_blocks(values):
    return np.stack([np.diag(v) for v in values])


def dense_apply(op: np.ndarray, field: WaveField) -> WaveField:
    return WaveField(field.grid, (op @ field.values.reshape(-1)).reshape(field.values.shape))


def dense_mask(grid: SpatialGrid, d: int, t: float = 0.0) -> np.ndarray:
    m = np.array([1.0 if zj < t - 1e-9 * grid.dz else 0.0 for zj in grid.z])
    return np.kron(np.diag(m), np.eye(d))


def _eps(mu, q):
    return np.sqrt(np.asarray(q, dtype=float)[:, None] ** 2 + np.asarray(mu, dtype=float) ** 2)


def dense_propagator(grid, mu, kappa, t, channel="input"):
    mu = np.atleast_1d(mu)
    _, k = dft_matrix(grid)
    if np.isinf(kappa):
        sym = np.repeat((-k if channel == "input" else k)[:, None], len(mu), axis=1)
    elif channel == "input":
        sym = _eps(mu, kappa - k) - kappa
    else:
        sym = _eps(mu, kappa + k) - kappa
    return _conjugate_blocks(grid, len(mu), _diag_blocks(np.exp(-1j * t * sym)))


def dense_heisenberg_projector(grid, mu, kappa, t):
    U = dense_propagator(grid, mu, kappa, t)
    return U.conj().T @ dense_mask(grid, len(np.atleast_1d(mu))) @ U


def dense_regularized_projector(grid, mu, kappa, t, theta):
    mu = np.atleast_1d(mu)
    _, k = dft_matrix(grid)
    e = _eps(mu, kappa - k)
    R = _conjugate_blocks(grid, len(mu), _diag_blocks(np.exp(-(theta + 1j * t) * e)))
    Lf = _conjugate_blocks(grid, len(mu), _diag_blocks(np.exp(-(theta - 1j * t) * e)))
    return Lf @ dense_mask(grid, len(mu)) @ R


def dense_offset_evolution(grid, mu, kappa, kappa0, t):
    """Per mode: ``expm(i t (E(kappa - k) - E(kappa + kappa0 - k)))`` with
    ``E(Q) = sqrtm(Q^2 + diag(mu)^2)`` evaluated as matrix functions."""
    mu = np.atleast_1d(mu)
    d = len(mu)
    K = as_matrix(kappa0, d)
    M2 = np.diag(np.asarray(mu, dtype=float) ** 2)
    _, k = dft_matrix(grid)
    blocks = []
    I = np.eye(d)
    for kn in k:
        A = scipy.linalg.sqrtm(((kappa - kn) ** 2) * I + M2)
        Q = (kappa - kn) * I + K
        B = scipy.linalg.sqrtm(Q @ Q + M2)
        blocks.append(scipy.linalg.expm(1j * t * (A - B)))
    return _conjugate_blocks(grid, d, np.stack(blocks))
