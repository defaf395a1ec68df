"""Periodic grids, spinor fields, indicator masks and weighted norms.

The real line is realized as the torus ``[-L, L)`` sampled at ``N`` nodes,
with ``z = 0`` sitting exactly on node ``N // 2``.  Fields are complex
arrays of shape ``(N, d)``; operator fields have shape ``(N, d, d)``.
All containers freeze their arrays after validation so they can be shared
between threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LatticeError",
    "SpatialGrid",
    "MomentumGrid",
    "WaveField",
    "SpinorOperator",
    "OperatorField",
    "IndicatorMask",
    "make_grid",
    "indicator_mask",
    "weighted_norm_sq",
    "norm_sq",
    "apply_pointwise",
    "gaussian_packet",
    "seam_mass_fraction",
    "as_matrix",
    "MAX_DIM",
]

MAX_DIM = 64
_OP_TOL = 1e-12


class LatticeError(ValueError):
    """Raised for invalid grids, shapes or operator properties."""


def _frozen(a, dtype=complex):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid on ``[-L, L)``."""

    L: float
    N: int

    def __post_init__(self):
        L, N = self.L, self.N
        if not np.isfinite(L) or L <= 0:
            raise LatticeError(f"half length must be positive, got {L}")
        if int(N) != N or N < 8 or (int(N) & (int(N) - 1)) != 0:
            raise LatticeError(f"N must be a power of two >= 8, got {N}")
        object.__setattr__(self, "L", float(L))
        object.__setattr__(self, "N", int(N))

    @property
    def dz(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def z(self) -> np.ndarray:
        return -self.L + np.arange(self.N) * self.dz

    @property
    def zero_index(self) -> int:
        return self.N // 2

    @property
    def reflection_index(self) -> np.ndarray:
        """Index map j -> j' with z_j' = -z_j on the torus."""
        return (-np.arange(self.N)) % self.N

    def momentum(self) -> "MomentumGrid":
        return MomentumGrid(self)

    def steps(self, t: float, tol: float = 1e-9) -> int:
        """Number of nodes in a lattice shift ``t``; error if off-lattice."""
        m = t / self.dz
        n = int(round(m))
        if abs(m - n) > tol:
            raise LatticeError(f"shift {t} is not an integer multiple of dz={self.dz}")
        return n


class MomentumGrid:
    """Momenta ``k_n = (pi / L) n``, ``n in [-N/2, N/2)``, in DFT ordering.

    ``k`` follows ``numpy.fft`` bin order; ``order`` sorts bins by
    increasing ``n`` and ``index`` maps an integer ``n`` back to its bin.
    """

    def __init__(self, grid: SpatialGrid):
        self.grid = grid
        N = grid.N
        self.n = np.fft.fftfreq(N, d=1.0 / N).astype(int)
        self.k = (np.pi / grid.L) * self.n
        self.order = np.argsort(self.n, kind="stable")
        self.dk = np.pi / grid.L
        self.n.setflags(write=False)
        self.k.setflags(write=False)
        self.order.setflags(write=False)

    def index(self, n):
        """Bin index holding mode number ``n`` (vectorized)."""
        n = np.asarray(n)
        N = self.grid.N
        if np.any((n < -N // 2) | (n >= N // 2)):
            raise LatticeError("mode number outside [-N/2, N/2)")
        return n % N


@dataclass(frozen=True, eq=False)
class WaveField:
    """Spinor-valued field sampled on a grid, shape ``(N, d)``."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.N:
            raise LatticeError(f"field shape {v.shape} incompatible with N={self.grid.N}")
        if not 1 <= v.shape[1] <= MAX_DIM:
            raise LatticeError(f"spinor dimension {v.shape[1]} outside [1, {MAX_DIM}]")
        if not np.all(np.isfinite(v)):
            raise LatticeError("field has non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def norm_sq(self) -> float:
        return norm_sq(self)

    def norm(self) -> float:
        return float(np.sqrt(norm_sq(self)))

    def at(self, z: float) -> np.ndarray:
        """Spinor at the node closest to ``z``."""
        j = int(round((z + self.grid.L) / self.grid.dz)) % self.grid.N
        return np.array(self.values[j])

    def with_values(self, values) -> "WaveField":
        return WaveField(self.grid, values)

    def __add__(self, other):
        _check_same(self, other)
        return WaveField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return WaveField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return WaveField(self.grid, self.values * c)

    __rmul__ = __mul__

    def conj(self) -> "WaveField":
        return WaveField(self.grid, self.values.conj())

    def reflected(self) -> "WaveField":
        """The field ``z -> f(-z)`` (torus reflection through the node at 0)."""
        return WaveField(self.grid, self.values[self.grid.reflection_index])

    def shifted(self, t: float) -> "WaveField":
        """Exact lattice shift ``z -> f(z + t)``; ``t`` must be a multiple of dz."""
        n = self.grid.steps(t)
        return WaveField(self.grid, np.roll(self.values, -n, axis=0))


def _check_same(a, b):
    if a.grid != b.grid:
        raise LatticeError("fields live on different grids")
    if a.values.shape != b.values.shape:
        raise LatticeError(f"shape mismatch {a.values.shape} vs {b.values.shape}")


class SpinorOperator:
    """A ``d x d`` complex matrix with optionally checked properties.

    Parameters
    ----------
    matrix : array_like
        Square matrix, or a scalar for ``d = 1``.
    hermitian, unitary, positive : bool
        Properties asserted at construction within ``1e-12`` in operator norm
        (scaled by the matrix norm for ``hermitian``).
    """

    def __init__(self, matrix, *, hermitian=False, unitary=False, positive=False, tol=_OP_TOL):
        m = np.array(matrix, dtype=complex)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LatticeError(f"operator must be square, got shape {m.shape}")
        if not 1 <= m.shape[0] <= MAX_DIM:
            raise LatticeError(f"operator dimension {m.shape[0]} outside [1, {MAX_DIM}]")
        if not np.all(np.isfinite(m)):
            raise LatticeError("operator has non-finite entries")
        scale = max(1.0, np.linalg.norm(m, 2))
        if (hermitian or positive) and np.linalg.norm(m - m.conj().T, 2) > tol * scale:
            raise LatticeError("operator is not Hermitian")
        if unitary and np.linalg.norm(m.conj().T @ m - np.eye(len(m)), 2) > tol:
            raise LatticeError("operator is not unitary")
        if positive and np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() <= 0:
            raise LatticeError("operator is not positive definite")
        m.setflags(write=False)
        self.matrix = m
        self.hermitian = bool(hermitian)
        self.unitary = bool(unitary)
        self.positive = bool(positive)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __matmul__(self, other):
        return self.matrix @ np.asarray(other)

    def __repr__(self):
        return f"SpinorOperator(dim={self.dim})"


def as_matrix(op, d=None) -> np.ndarray:
    """Coerce a SpinorOperator, scalar or array into a ``d x d`` matrix."""
    m = np.array(op.matrix if isinstance(op, SpinorOperator) else op, dtype=complex)
    if m.ndim == 0:
        m = m * np.eye(d or 1)
    elif m.ndim == 1:
        m = np.diag(m)
    if d is not None and m.shape != (d, d):
        raise LatticeError(f"operator shape {m.shape} does not match dimension {d}")
    return m


@dataclass(frozen=True, eq=False)
class OperatorField:
    """Matrix-valued field, shape ``(N, d, d)``."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or v.shape[0] != self.grid.N or v.shape[1] != v.shape[2]:
            raise LatticeError(f"operator field shape {v.shape} incompatible with N={self.grid.N}")
        if not np.all(np.isfinite(v)):
            raise LatticeError("operator field has non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, grid, op, d=None):
        m = as_matrix(op, d)
        return cls(grid, np.broadcast_to(m, (grid.N,) + m.shape))

    @classmethod
    def identity(cls, grid, d):
        return cls.constant(grid, np.eye(d))

    def at(self, j: int) -> np.ndarray:
        return np.array(self.values[j])


@dataclass(frozen=True, eq=False)
class IndicatorMask:
    """0/1 mask on the grid nodes."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.N,):
            raise LatticeError(f"mask shape {v.shape} incompatible with N={self.grid.N}")
        if not np.all((v == 0) | (v == 1)):
            raise LatticeError("mask values must be 0 or 1")
        object.__setattr__(self, "values", _frozen(v, dtype=np.int8))

    def __sub__(self, other):
        # difference of two masks, e.g. the increment 1_t - 1_0; values in {-1, 0, 1}
        return np.asarray(self.values, dtype=int) - np.asarray(other.values, dtype=int)

    def __mul__(self, other):
        return IndicatorMask(self.grid, self.values * other.values)

    def as_bool(self) -> np.ndarray:
        return self.values.astype(bool)


def make_grid(L: float, N: int) -> SpatialGrid:
    """Grid on ``[-L, L)`` with ``N`` nodes (power of two, at least 8)."""
    return SpatialGrid(L, N)


def indicator_mask(grid: SpatialGrid, t: float) -> IndicatorMask:
    """Mask of the half line ``z < t``; the node at ``z = t`` is excluded.

    Node positions are compared with a relative slack of ``1e-9 dz`` so that
    a ``t`` landing on a node up to rounding is treated as on the node.
    """
    if not abs(t) < grid.L:
        raise LatticeError(f"|t|={abs(t)} must be below L={grid.L}")
    return IndicatorMask(grid, (grid.z < t - 1e-9 * grid.dz).astype(np.int8))


def norm_sq(field: WaveField) -> float:
    """Plain L2 norm squared, ``sum |f_j|^2 dz``."""
    return float(np.vdot(field.values, field.values).real * field.grid.dz)


def weighted_norm_sq(field: WaveField, density: OperatorField | None = None) -> float:
    """``sum_j <f(z_j), rho(z_j) f(z_j)> dz``; ``density=None`` means identity."""
    if density is None:
        return norm_sq(field)
    if density.grid != field.grid:
        raise LatticeError("field and density live on different grids")
    if density.dim != field.dim:
        raise LatticeError(f"density dimension {density.dim} != field dimension {field.dim}")
    f = field.values
    q = np.einsum("ni,nij,nj->", f.conj(), density.values, f)
    return float(q.real * field.grid.dz)


def apply_pointwise(opfield: OperatorField, field: WaveField) -> WaveField:
    """``out(z_j) = op(z_j) @ field(z_j)``."""
    if opfield.grid != field.grid:
        raise LatticeError("operator field and field live on different grids")
    if opfield.dim != field.dim:
        raise LatticeError(f"operator dimension {opfield.dim} != field dimension {field.dim}")
    return WaveField(field.grid, np.einsum("nij,nj->ni", opfield.values, field.values))


def gaussian_packet(grid: SpatialGrid, center=0.0, width=1.0, k0=0.0, spinor=(1.0,)):
    """Normalized Gaussian packet ``exp(-(z-c)^2 / (2 w^2) + i k0 z) * spinor``.

    ``|psi|^2`` has standard deviation ``w / sqrt(2)`` in position and
    ``1 / (w sqrt(2))`` in momentum.
    """
    z = grid.z
    env = np.exp(-((z - center) ** 2) / (2.0 * width**2) + 1j * k0 * z)
    v = np.asarray(spinor, dtype=complex)
    f = env[:, None] * v[None, :]
    f /= np.sqrt(np.vdot(f, f).real * grid.dz)
    return WaveField(grid, f)


def seam_mass_fraction(field: WaveField) -> float:
    """Fraction of the squared norm on nodes within ``dz`` of the seam ``z = +-L``."""
    g = field.grid
    near = np.abs(g.z) >= g.L - g.dz * (1 + 1e-9)
    total = np.sum(np.abs(field.values) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(field.values[near]) ** 2) / total)
