"""YAML experiment configuration (units: hbar = 1).

Layout::

    # units: hbar = 1
    grid: {L: 32.0, N: 4096}
    d: 2
    mu: [1.0, 1.0]
    model:
      H: [[1, 0], [0, -1]]            # jump model Hamiltonian
      S: [[0, 1], [1, 0]]             # jump scatter operator
      eta: [0.7071067811865476, [0, 0.7071067811865476]]  # unit vector, complex entries as [re, im]
      observable: [[1, 0], [0, 1]]    # optional, defaults to identity
      sigma0: [[0, 1], [1, 0]]        # boundary operator (defaults to S)
      rho0: [[1, 0], [0, 1]]          # reference weight (defaults to identity)
      generator: {kind: zero}         # or {kind: constant, value: M}, {kind: table, path: f}
      coupling: [[0.5, 0], [0, -0.3]] # constant kappa0 of the limit cocycle
    jump_density: {kind: uniform, s_max: 2.0}
    experiment:
      name: demo
      t: 1.0
      band: 8.0
      kappas: [16, 32, 64, 128]
      mc_samples: 100000
      seed: 0
      dt: [1.0, 0.5, 0.25]            # in units of dz
      residual_span: 64               # limit-equation horizon, in units of dz
      thetas: [0.1, 0.05, 0.025]
      packet: {center: 1.0, width: 1.0, k0: 0.0}
    output: {dir: out}

Complex scalars may be written as plain numbers or ``[re, im]`` pairs.  The
shape expected at each key is known, so a ``d x d`` matrix is a list of
``d`` rows of ``d`` such entries and a vector is a list of ``d`` entries.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .lattice import LatticeError, SpatialGrid
from .ordexp import FamilyError, GeneratorField, load_generator_table
from .spectral import DispersionRelation, SpectralError

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "config_hash"]

_TOL = 1e-12


class ConfigError(ValueError):
    """Carries every validation error found, each prefixed by its field path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    raw: dict
    hash: str
    grid: SpatialGrid
    d: int
    disp: DispersionRelation
    H: np.ndarray
    S: np.ndarray
    eta: np.ndarray
    observable: np.ndarray
    sigma0: np.ndarray
    rho0: np.ndarray
    generator: GeneratorField
    coupling: np.ndarray
    density: dict
    experiment: dict
    output_dir: str | None = None
    source: str | None = None
    notes: list = field(default_factory=list)


def _complex(x, path, errors):
    if isinstance(x, bool):
        errors.append(f"{path}: expected a number, got {x!r}")
        return 0j
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
        return complex(x[0], x[1])
    errors.append(f"{path}: expected a number or [re, im] pair, got {x!r}")
    return 0j


def _vector(x, d, path, errors):
    if not isinstance(x, (list, tuple)) or len(x) != d:
        n = len(x) if isinstance(x, (list, tuple)) else "non-list"
        errors.append(f"{path}: expected a vector of length d={d}, got length {n}")
        return None
    return np.array([_complex(v, f"{path}[{i}]", errors) for i, v in enumerate(x)])


def _matrix(x, d, path, errors):
    if not isinstance(x, (list, tuple)) or len(x) != d or not all(
            isinstance(r, (list, tuple)) and len(r) == d for r in x):
        errors.append(f"{path}: expected a {d}x{d} matrix")
        return None
    return np.array([[_complex(v, f"{path}[{i}][{j}]", errors) for j, v in enumerate(r)]
                     for i, r in enumerate(x)])


def _number(block, key, path, errors, default=None, positive=False, integer=False):
    if key not in block:
        if default is None:
            errors.append(f"{path}.{key}: required")
        return default
    v = block[key]
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if integer:
        ok = ok and float(v) == int(v)
    if not ok:
        errors.append(f"{path}.{key}: expected {'an integer' if integer else 'a number'}, got {v!r}")
        return default
    if positive and not v > 0:
        errors.append(f"{path}.{key}: must be positive, got {v}")
    return int(v) if integer else float(v)


def config_hash(raw: dict, extra: bytes = b"") -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob + extra).hexdigest()[:16]


def _check_hermitian(M, path, errors, positive=False):
    if M is None:
        return
    if np.linalg.norm(M - M.conj().T, 2) > _TOL * max(1.0, np.linalg.norm(M, 2)):
        errors.append(f"{path}: not Hermitian")
    elif positive and np.linalg.eigvalsh(M).min() <= 0:
        errors.append(f"{path}: not positive definite")


def _check_unitary(M, path, errors):
    if M is not None and np.linalg.norm(M.conj().T @ M - np.eye(len(M)), 2) > _TOL:
        errors.append(f"{path}: not unitary")


def parse_config(raw, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a parsed document; raises ConfigError listing every problem."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError([f"<root>: expected a mapping, got {type(raw).__name__}"])
    base_dir = Path(".") if base_dir is None else base_dir
    for key in ("grid", "d", "mu", "experiment"):
        if key not in raw:
            errors.append(f"{key}: required")
    gblock = raw.get("grid") or {}
    grid = None
    if isinstance(gblock, dict):
        L = _number(gblock, "L", "grid", errors, positive=True)
        N = _number(gblock, "N", "grid", errors, integer=True)
        if L is not None and N is not None:
            try:
                grid = SpatialGrid(L, N)
            except LatticeError as e:
                errors.append(f"grid: {e}")
    else:
        errors.append("grid: expected a mapping")
    d = raw.get("d")
    if not (isinstance(d, int) and not isinstance(d, bool) and 1 <= d <= 64):
        errors.append(f"d: expected an integer in [1, 64], got {d!r}")
        raise ConfigError(errors)

    disp = None
    mu = raw.get("mu")
    if isinstance(mu, (list, tuple)) and len(mu) == d:
        try:
            disp = DispersionRelation(np.array(mu, dtype=float))
        except (SpectralError, ValueError, TypeError) as e:
            errors.append(f"mu: {e}")
    else:
        errors.append(f"mu: expected a list of d={d} masses")

    model = raw.get("model") or {}
    if not isinstance(model, dict):
        errors.append("model: expected a mapping")
        model = {}

    def mat(key, default):
        if key in model:
            return _matrix(model[key], d, f"model.{key}", errors)
        return default

    sizes = {}
    for key in ("H", "S", "sigma0", "rho0", "observable", "coupling", "eta"):
        if isinstance(model.get(key), (list, tuple)):
            sizes[f"model.{key}"] = len(model[key])
    if "mu" in raw and isinstance(mu, (list, tuple)):
        sizes["mu"] = len(mu)
    odd = {k: n for k, n in sizes.items() if n != d}
    if odd:
        others = [k for k in sizes if k not in odd]
        desc = ", ".join(f"{k} has size {n}" for k, n in odd.items())
        ref = f"{', '.join(others)} and d={d}" if others else f"d={d}"
        errors.append(f"dimension mismatch: {desc}; expected {ref}")

    eye = np.eye(d, dtype=complex)
    H = mat("H", np.zeros((d, d), dtype=complex))
    S = mat("S", eye)
    sigma0 = mat("sigma0", S)
    rho0 = mat("rho0", eye)
    observable = mat("observable", eye)
    coupling = mat("coupling", np.zeros((d, d), dtype=complex))
    eta = _vector(model["eta"], d, "model.eta", errors) if "eta" in model else eye[0]
    _check_hermitian(H, "model.H", errors)
    _check_unitary(S, "model.S", errors)
    n_before = len(errors)
    _check_hermitian(rho0, "model.rho0", errors, positive=True)
    rho0_ok = len(errors) == n_before
    _check_hermitian(coupling, "model.coupling", errors)
    if eta is not None and abs(np.linalg.norm(eta) - 1) > 1e-9:
        errors.append(f"model.eta: not a unit vector (norm {np.linalg.norm(eta):.12g})")
    if sigma0 is not None and disp is not None:
        M = np.diag(disp.mu)
        if np.linalg.norm(sigma0 @ M - M @ sigma0, 2) > _TOL * max(1.0, disp.max_mass):
            errors.append("model.sigma0: does not commute with the mass spectrum mu")
    if coupling is not None and disp is not None:
        M = np.diag(disp.mu)
        if np.linalg.norm(coupling @ M - M @ coupling, 2) > _TOL * max(1.0, np.linalg.norm(coupling, 2)):
            errors.append("model.coupling: does not commute with the mass spectrum mu")

    extra = b""
    generator = None
    gspec = model.get("generator", {"kind": "zero"})
    if grid is not None and rho0 is not None and rho0_ok:
        kind = gspec.get("kind") if isinstance(gspec, dict) else None
        try:
            if kind == "zero":
                generator = GeneratorField.constant(grid, np.zeros((d, d)), rho0, d)
            elif kind == "constant":
                val = _matrix(gspec.get("value"), d, "model.generator.value", errors)
                if val is not None:
                    generator = GeneratorField.constant(grid, val, rho0, d)
            elif kind == "table":
                path = gspec.get("path")
                if not isinstance(path, str):
                    errors.append("model.generator.path: required for kind 'table'")
                else:
                    p = Path(path) if Path(path).is_absolute() else base_dir / path
                    if not p.is_file():
                        errors.append(f"model.generator.path: file not found: {p}")
                    else:
                        extra = p.read_bytes()
                        generator = GeneratorField(load_generator_table(p, grid, d), rho0)
            else:
                errors.append(f"model.generator.kind: expected zero, constant or table, got {kind!r}")
        except (FamilyError, LatticeError, ValueError) as e:
            errors.append(f"model.generator: {e}")

    density = {}
    dblock = raw.get("jump_density", {"kind": "uniform", "s_max": 2.0})
    if isinstance(dblock, dict):
        kind = dblock.get("kind")
        s_max = _number(dblock, "s_max", "jump_density", errors, positive=True)
        density = {"kind": kind, "s_max": s_max, "params": ()}
        if kind == "truncated_gaussian":
            mean = _number(dblock, "mean", "jump_density", errors)
            std = _number(dblock, "std", "jump_density", errors, positive=True)
            density["params"] = (mean, std)
        elif kind != "uniform":
            errors.append(f"jump_density.kind: expected uniform or truncated_gaussian, got {kind!r}")
        if grid is not None and s_max is not None and not s_max < grid.L:
            errors.append(f"jump_density.s_max: {s_max} must be below grid.L={grid.L}")
    else:
        errors.append("jump_density: expected a mapping")

    exp = raw.get("experiment") or {}
    experiment = {}
    if isinstance(exp, dict):
        p = "experiment"
        experiment["name"] = str(exp.get("name", "experiment"))
        experiment["t"] = _number(exp, "t", p, errors, default=1.0)
        experiment["band"] = _number(exp, "band", p, errors, default=8.0, positive=True)
        experiment["mc_samples"] = _number(exp, "mc_samples", p, errors, default=100000, integer=True)
        experiment["seed"] = _number(exp, "seed", p, errors, default=0, integer=True)
        experiment["steps"] = _number(exp, "steps", p, errors, default=100, integer=True)
        experiment["residual_span"] = _number(exp, "residual_span", p, errors, default=64, integer=True)
        for key, default in (("kappas", [16, 32, 64, 128]), ("dt", [1.0, 0.5, 0.25]),
                             ("thetas", [0.1, 0.05, 0.025])):
            v = exp.get(key, default)
            if not isinstance(v, list) or not v or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in v):
                errors.append(f"{p}.{key}: expected a nonempty list of positive numbers")
                v = default
            experiment[key] = [float(x) for x in v]
        if any(k <= experiment["band"] for k in experiment["kappas"]):
            errors.append(f"{p}.kappas: every kappa must exceed band={experiment['band']}")
        if experiment["mc_samples"] is not None and experiment["mc_samples"] < 1000:
            errors.append(f"{p}.mc_samples: must be at least 1000")
        pk = exp.get("packet", {})
        if not isinstance(pk, dict):
            errors.append(f"{p}.packet: expected a mapping")
            pk = {}
        experiment["packet"] = {
            "center": _number(pk, "center", f"{p}.packet", errors, default=1.0),
            "width": _number(pk, "width", f"{p}.packet", errors, default=1.0, positive=True),
            "k0": _number(pk, "k0", f"{p}.packet", errors, default=0.0),
        }
        spinor = pk.get("spinor")
        experiment["packet"]["spinor"] = (
            eta if spinor is None else _vector(spinor, d, f"{p}.packet.spinor", errors))
    else:
        errors.append("experiment: expected a mapping")

    out = raw.get("output") or {}
    output_dir = out.get("dir") if isinstance(out, dict) else None

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(raw=raw, hash=config_hash(raw, extra), grid=grid, d=d, disp=disp,
                            H=H, S=S, eta=eta, observable=observable, sigma0=sigma0, rho0=rho0,
                            generator=generator, coupling=coupling, density=density,
                            experiment=experiment, output_dir=output_dir)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML config file.

    Raises
    ------
    ConfigError
        On a missing file, a YAML parse error, or any validation failure; all
        validation failures are reported together.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"<file>: not found: {p}"])
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError([f"<parse>: {e}"]) from e
    cfg = parse_config(raw, p.parent)
    cfg.source = str(p)
    return cfg
