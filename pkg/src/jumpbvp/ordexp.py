"""Ordered exponential families, their weighted adjoints and dressing maps.

The family solves ``i d/dz eps(z) = eps(z) kappa(z)`` with ``eps(0) = I``,
integrated from the node at ``z = 0`` outward in both directions with
classical RK4 (generator linearly interpolated between nodes).  From it we
cache

* the density ``rho(z) = eps(z)^H rho0 eps(z)``,
* the weighted adjoint ``eps*(z) = rho(z)^-1 eps(z)^H rho0``, the inverse of
  ``eps(z)`` that is unitary between ``L2(rho)`` and ``L2(rho0)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import (
    LatticeError,
    OperatorField,
    SpatialGrid,
    WaveField,
    apply_pointwise,
    as_matrix,
)

__all__ = [
    "FamilyError",
    "GeneratorField",
    "OrderedExpFamily",
    "build_family",
    "constant_family",
    "density_profile",
    "dress",
    "interaction_family",
    "hermitian_defect",
    "load_generator_table",
    "write_generator_table",
    "BLOWUP",
]

BLOWUP = 1e12
DIRECTIONS = ("forward", "adjoint", "reflected", "reflected_adjoint")


class FamilyError(ValueError):
    """Positivity loss, blow-up or failed consistency checks."""


def hermitian_defect(kappa0, rho0) -> float:
    """``||rho0^-1 kappa0^H rho0 - kappa0||``, zero iff kappa0 is rho0-Hermitian."""
    K = np.asarray(kappa0, dtype=complex)
    R = np.asarray(rho0, dtype=complex)
    return float(np.linalg.norm(np.linalg.solve(R, K.conj().T @ R) - K, 2))


@dataclass(frozen=True, eq=False)
class GeneratorField:
    """Generator ``kappa(z)`` on the grid together with the reference weight ``rho0``."""

    field: OperatorField
    rho0: np.ndarray = None

    def __post_init__(self):
        d = self.field.dim
        r = np.eye(d) if self.rho0 is None else as_matrix(self.rho0, d)
        if np.linalg.norm(r - r.conj().T) > 1e-12 * max(1.0, np.linalg.norm(r)):
            raise FamilyError("rho0 must be Hermitian")
        if np.linalg.eigvalsh(r).min() <= 0:
            raise FamilyError("rho0 must be positive definite")
        r = np.array(r, dtype=complex)
        r.setflags(write=False)
        object.__setattr__(self, "rho0", r)

    @classmethod
    def constant(cls, grid, kappa0, rho0=None, d=None):
        return cls(OperatorField.constant(grid, kappa0, d), rho0)

    @classmethod
    def from_function(cls, grid, fn, rho0=None):
        """Sample ``fn(z) -> d x d`` (or scalar) at every node."""
        vals = [np.atleast_2d(np.asarray(fn(z), dtype=complex)) for z in grid.z]
        return cls(OperatorField(grid, np.stack(vals)), rho0)

    @property
    def grid(self) -> SpatialGrid:
        return self.field.grid

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def kappa0(self) -> np.ndarray:
        return np.array(self.field.values[self.grid.zero_index])

    def kappa0_defect(self) -> float:
        return hermitian_defect(self.kappa0, self.rho0)

    def time_reversal_defect(self) -> float:
        """``max_z ||conj(kappa(z)) - kappa(-z)||`` over the grid."""
        v = self.field.values
        return float(np.max(np.abs(v.conj() - v[self.grid.reflection_index])))


@dataclass(frozen=True, eq=False)
class OrderedExpFamily:
    generator: GeneratorField
    values: OperatorField
    adjoint: OperatorField
    density: OperatorField
    substeps: int

    @property
    def grid(self) -> SpatialGrid:
        return self.generator.grid

    @property
    def dim(self) -> int:
        return self.generator.dim

    @property
    def rho0(self) -> np.ndarray:
        return self.generator.rho0

    def reflected_density(self) -> OperatorField:
        return OperatorField(self.grid, self.density.values[self.grid.reflection_index])

    def symmetry_defect(self) -> float:
        """Relative ``max ||rho(-z) - rho(z)||``; zero for a symmetric density."""
        r = self.density.values
        return float(np.max(np.abs(r - r[self.grid.reflection_index])) / np.max(np.abs(r)))

    def isometry_defect(self) -> float:
        eye = np.eye(self.dim)
        return float(np.max(np.abs(self.adjoint.values @ self.values.values - eye)))


def _rk4_factors(A1, A2, A3, h):
    """RK4 step matrix ``P`` for ``Y' = Y A(z)``: ``Y(z + h) ~ Y(z) P``.

    ``A1, A2, A3`` are the generator at ``z, z + h/2, z + h`` (batched).
    """
    eye = np.eye(A1.shape[-1])
    B2 = (eye + 0.5 * h * A1) @ A2
    B3 = (eye + 0.5 * h * B2) @ A2
    B4 = (eye + h * B3) @ A3
    return eye + (h / 6.0) * (A1 + 2.0 * B2 + 2.0 * B3 + B4)


def _cell_propagators(Kleft, Kright, dz, m, sign):
    """Propagators over cells, ``Y(end) = Y(start) C``.

    For ``sign=+1`` cell ``c`` runs from node ``Kleft[c]`` to ``Kright[c]``;
    for ``sign=-1`` it runs backwards from ``Kright[c]`` to ``Kleft[c]``.
    """
    h = sign * dz / m
    i = np.arange(m)
    if sign > 0:
        f1, f2, f3 = i / m, (i + 0.5) / m, (i + 1.0) / m
    else:
        f1, f2, f3 = 1 - i / m, 1 - (i + 0.5) / m, 1 - (i + 1.0) / m

    def gen(f):
        # -i * kappa interpolated at fractions f of each cell: shape (cells, m, d, d)
        f = f[None, :, None, None]
        return -1j * ((1 - f) * Kleft[:, None] + f * Kright[:, None])

    P = _rk4_factors(gen(f1), gen(f2), gen(f3), h)
    C = P[:, 0]
    for s in range(1, m):
        C = C @ P[:, s]
    return C


def _check_blowup(E):
    if not np.all(np.isfinite(E)) or np.max(np.abs(E)) > BLOWUP:
        raise FamilyError("ordered exponential blew up (entry magnitude > 1e12)")


def _integrate(gen: GeneratorField, substeps: int) -> np.ndarray:
    grid = gen.grid
    N, d, j0 = grid.N, gen.dim, grid.zero_index
    K = np.asarray(gen.field.values)
    E = np.empty((N, d, d), dtype=complex)
    E[j0] = np.eye(d)
    # forward cells j0 -> N-1
    C = _cell_propagators(K[j0:N - 1], K[j0 + 1:N], grid.dz, substeps, +1)
    for c in range(len(C)):
        E[j0 + c + 1] = E[j0 + c] @ C[c]
    # backward cells: cell c spans nodes (j0-c-1, j0-c), traversed right to left
    idx = np.arange(j0, 0, -1)
    C = _cell_propagators(K[idx - 1], K[idx], grid.dz, substeps, -1)
    for c in range(len(C)):
        E[j0 - c - 1] = E[j0 - c] @ C[c]
    _check_blowup(E)
    return E


def _finish(gen: GeneratorField, E: np.ndarray, substeps: int) -> OrderedExpFamily:
    grid = gen.grid
    R0 = gen.rho0
    EH = np.conj(np.swapaxes(E, 1, 2))
    rho = EH @ R0 @ E
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2)))
    lam = np.linalg.eigvalsh(rho)
    if not np.all(lam[:, 0] > 0):
        bad = int(np.argmin(lam[:, 0]))
        raise FamilyError(f"density lost positivity at z={grid.z[bad]:.6g} (min eigenvalue {lam[bad, 0]:.3e})")
    adj = np.linalg.solve(rho, EH @ R0)
    return OrderedExpFamily(gen, OperatorField(grid, E), OperatorField(grid, adj),
                            OperatorField(grid, rho), int(substeps))


def build_family(gen: GeneratorField, substeps: int = 8) -> OrderedExpFamily:
    """Integrate the ordered exponential of ``gen`` and cache derived fields.

    Parameters
    ----------
    gen : GeneratorField
    substeps : int
        RK4 steps per grid cell, at least 4.

    Raises
    ------
    FamilyError
        On blow-up or loss of positivity of the density.
    """
    if int(substeps) != substeps or substeps < 4:
        raise FamilyError(f"substeps must be an integer >= 4, got {substeps}")
    return _finish(gen, _integrate(gen, int(substeps)), substeps)


def _expi(K, z, rho0):
    """``exp(i K z)`` for every z, for K diagonalizable with real spectrum."""
    w, V = np.linalg.eig(K)
    Vinv = np.linalg.inv(V)
    return np.einsum("ij,nj,jk->nik", V, np.exp(1j * np.outer(z, w.real)), Vinv)


def constant_family(grid: SpatialGrid, kappa0, rho0=None, d=None) -> OrderedExpFamily:
    """Closed-form family ``eps(z) = exp(-i z kappa0)`` for a constant generator.

    ``kappa0`` must be diagonalizable with real spectrum (e.g. rho0-Hermitian).
    """
    gen = GeneratorField.constant(grid, kappa0, rho0, d)
    K = gen.kappa0
    w = np.linalg.eigvals(K)
    if np.max(np.abs(w.imag)) > 1e-12 * max(1.0, np.abs(w).max()):
        raise FamilyError("constant generator must have real spectrum")
    E = _expi(K, -grid.z, gen.rho0)
    return _finish(gen, E, 0)


def density_profile(fam: OrderedExpFamily) -> OperatorField:
    return fam.density


def dress(field: WaveField, fam: OrderedExpFamily, direction: str = "forward") -> WaveField:
    """Pointwise multiplication by ``eps``, ``eps*``, ``eps(-z)`` or ``eps*(-z)``."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if field.grid != fam.grid or field.dim != fam.dim:
        raise LatticeError("field and family differ in grid or dimension")
    op = fam.adjoint if direction.endswith("adjoint") else fam.values
    if direction.startswith("reflected"):
        op = OperatorField(fam.grid, op.values[fam.grid.reflection_index])
    return apply_pointwise(op, field)


def interaction_family(fam: OrderedExpFamily, kappa0=None, tol: float = 1e-8) -> OrderedExpFamily:
    """Family of ``upsilon(z) = kappa(z) - eps*(z) kappa0 eps(z)``.

    Its ordered exponential obeys ``i d/dz Y = Y kappa(z) - kappa0 Y``, which
    is integrated here with the same RK4 scheme (no use of the closed form).
    The result is then checked node-wise against ``exp(i kappa0 z) eps(z)``.

    Raises
    ------
    FamilyError
        If ``kappa0`` is not rho0-Hermitian, or the two routes disagree by
        more than ``tol`` (relative to the family scale).
    """
    gen = fam.generator
    grid, d = fam.grid, fam.dim
    K0 = gen.kappa0 if kappa0 is None else as_matrix(kappa0, d)
    if hermitian_defect(K0, gen.rho0) > 1e-10 * max(1.0, np.linalg.norm(K0, 2)):
        raise FamilyError("kappa0 is not Hermitian with respect to rho0")
    K = np.asarray(gen.field.values)
    ups = K - fam.adjoint.values @ K0 @ fam.values.values

    # RK4 global error ~ (h |K|)^4; keep h |K| <= 5e-3 so the route check is meaningful
    knorm = max(float(np.max(np.linalg.norm(K, 2, axis=(1, 2)))), np.linalg.norm(K0, 2))
    m = max(fam.substeps, 4, int(np.ceil(grid.dz * knorm / 5e-3)))
    j0, N = grid.zero_index, grid.N
    Y = np.empty((N, d, d), dtype=complex)
    Y[j0] = np.eye(d)
    iK0 = 1j * K0

    def rhs(y, kz):
        return iK0 @ y - 1j * (y @ kz)

    for sign, nodes in ((+1, range(j0, N - 1)), (-1, range(j0, 0, -1))):
        h = sign * grid.dz / m
        for j in nodes:
            a, b = K[j], K[j + sign]
            y = Y[j]
            for i in range(m):
                k1m = a + (b - a) * (i / m)
                k2m = a + (b - a) * ((i + 0.5) / m)
                k3m = a + (b - a) * ((i + 1.0) / m)
                s1 = rhs(y, k1m)
                s2 = rhs(y + 0.5 * h * s1, k2m)
                s3 = rhs(y + 0.5 * h * s2, k2m)
                s4 = rhs(y + h * s3, k3m)
                y = y + (h / 6.0) * (s1 + 2 * s2 + 2 * s3 + s4)
            Y[j + sign] = y
    _check_blowup(Y)

    product = _expi(K0, grid.z, gen.rho0) @ fam.values.values
    scale = max(1.0, float(np.max(np.abs(product))))
    defect = float(np.max(np.abs(Y - product))) / scale
    if defect > tol:
        raise FamilyError(f"interaction family disagrees with exp(i kappa0 z) eps(z): {defect:.3e}")
    out = _finish(GeneratorField(OperatorField(grid, ups), gen.rho0), Y, m)
    return out


def load_generator_table(path, grid: SpatialGrid, d: int) -> OperatorField:
    """Read a tabulated generator: one line per node, ``2 d^2`` numbers.

    Each line lists the ``d x d`` matrix row-major as ``re im`` pairs;
    blank lines and ``#`` comments are ignored.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                nums = [float(x) for x in line.replace(",", " ").split()]
            except ValueError as exc:
                raise FamilyError(f"{path}:{lineno}: {exc}") from None
            if len(nums) != 2 * d * d:
                raise FamilyError(f"{path}:{lineno}: expected {2 * d * d} numbers for d={d}, got {len(nums)}")
            rows.append(nums)
    if len(rows) != grid.N:
        raise FamilyError(f"{path}: expected N={grid.N} node rows, found {len(rows)}")
    a = np.asarray(rows).reshape(grid.N, d, d, 2)
    return OperatorField(grid, a[..., 0] + 1j * a[..., 1])


def write_generator_table(path, field: OperatorField) -> None:
    v = np.asarray(field.values)
    flat = np.stack([v.real, v.imag], axis=-1).reshape(len(v), -1)
    with open(path, "w") as fh:
        fh.write(f"# generator table: N={len(v)} d={v.shape[1]}, row-major (re im) pairs\n")
        for row in flat:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
