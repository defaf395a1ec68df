"""Named experiment suites built on a validated ExperimentConfig.

Each suite returns result tables plus named boolean checks; ``run_suite``
collects them into a SuiteResult whose ``passed`` flag drives the CLI exit
code.
"""
from __future__ import annotations

import concurrent.futures as cf
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bvp import (
    BvpError,
    BvpProblem,
    boundary_current,
    connection_defect,
    evolve_pair,
    pair_norm_sq,
    time_reversal_check,
    truncated_limit,
)
from .config import ExperimentConfig
from .jump import JumpDensity, JumpModel, ito_residual, jump_expectation
from .lattice import WaveField, gaussian_packet
from .ordexp import build_family, constant_family, dress, interaction_family
from .spectral import hardy_project, regularized_projector, heisenberg_projector
from .tables import ResultTable
from .ultra import (
    cocycle_limit_scan,
    gap_bound_check,
    limit_equation_residual,
    projector_limit_scan,
    ultrarelativistic_scan,
)

__all__ = ["SUITES", "SuiteResult", "run_suite", "write_outputs", "standard_packet"]

SUITES = ("prop1", "prop2", "prop3", "ito", "projector", "cocycle", "all")
UNIT_TOL = 1e-10
RATE_WINDOW = (3.2, 4.8)


@dataclass
class SuiteResult:
    suite: str
    config_hash: str
    tables: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(self.checks.values())

    def verdict(self) -> dict:
        return {"suite": self.suite, "config_hash": self.config_hash, "version": __version__,
                "passed": self.passed, "checks": {k: bool(v) for k, v in self.checks.items()}}

    def merge(self, other: "SuiteResult"):
        self.tables.update(other.tables)
        self.checks.update(other.checks)


def _table(cfg, name, columns):
    return ResultTable(name, columns, meta={"config_hash": cfg.hash, "version": __version__,
                                            "seed": cfg.experiment["seed"]})


def standard_packet(cfg: ExperimentConfig) -> WaveField:
    """Configured Gaussian packet, hardy-projected below the band and normalized."""
    pk = cfg.experiment["packet"]
    f = gaussian_packet(cfg.grid, pk["center"], pk["width"], pk["k0"], pk["spinor"])
    f = hardy_project(f, cfg.experiment["band"])
    return f * (1.0 / f.norm())


def _family(cfg):
    gen = cfg.generator
    if np.max(np.abs(gen.field.values - gen.field.values[0])) == 0:
        return constant_family(cfg.grid, gen.field.values[0], cfg.rho0, cfg.d)
    return build_family(gen)


def _jump_model(cfg):
    dn = cfg.density
    return JumpModel(cfg.H, cfg.S, cfg.eta, JumpDensity(dn["kind"], dn["s_max"], dn["params"]), cfg.grid)


def suite_prop1(cfg, threads=1) -> SuiteResult:
    ex = cfg.experiment
    rep = jump_expectation(_jump_model(cfg), cfg.observable, ex["t"], ex["mc_samples"], ex["seed"], threads)
    tab = _table(cfg, "prop1", ["t", "mc", "stderr", "quadrature", "field_norm", "zscore", "pass"])
    tab.add(t=rep.t, mc=rep.mc, stderr=rep.stderr, quadrature=rep.quadrature,
            field_norm=rep.field_norm, zscore=rep.mc_zscore, **{"pass": rep.passed()})
    return SuiteResult("prop1", cfg.hash, {"prop1": tab}, {"prop1.expectation": rep.passed()})


def suite_prop2(cfg, threads=1) -> SuiteResult:
    ex = cfg.experiment
    fam = _family(cfg)
    psi = dress(standard_packet(cfg), fam, "adjoint")
    tab = _table(cfg, "prop2", ["kappa", "t", "norm_drift", "current", "connection", "pass"])
    checks = {}
    steps = ex["steps"]
    times = [ex["t"] * n / steps for n in range(1, steps + 1)]
    snapshot = None
    for kappa in ex["kappas"] + [np.inf]:
        pb = BvpProblem(cfg.disp, kappa, fam, cfg.sigma0, ex["band"], psi)
        n0 = pair_norm_sq(pb, evolve_pair(pb, 0.0))
        ok = True
        for t in times:
            st = evolve_pair(pb, t)
            drift = abs(pair_norm_sq(pb, st) / n0 - 1)
            cur = boundary_current(st)
            con = connection_defect(pb, st)
            row_ok = drift <= UNIT_TOL and abs(cur) <= UNIT_TOL and con <= UNIT_TOL
            ok = ok and row_ok
            tab.add(kappa=kappa, t=t, norm_drift=drift, current=cur, connection=con, **{"pass": row_ok})
        checks[f"prop2.unitarity.kappa={kappa:g}"] = ok
        if np.isinf(kappa):
            snapshot = st
            nearest = round(ex["t"] / cfg.grid.dz) * cfg.grid.dz
            if nearest > 0:
                lim = truncated_limit(pb, nearest)
                gap = (evolve_pair(pb, nearest).truncated - lim).norm()
                checks["prop2.transport_limit"] = gap <= UNIT_TOL
    tables = {"prop2": tab}
    try:
        pb = BvpProblem(cfg.disp, ex["kappas"][-1], fam, cfg.sigma0, ex["band"], psi)
        tr = time_reversal_check(pb, ex["t"])
        rt = _table(cfg, "prop2_time_reversal", ["t", "defect", "pass"])
        rt.add(t=ex["t"], defect=tr, **{"pass": tr <= 1e-9})
        tables["prop2_time_reversal"] = rt
        checks["prop2.time_reversal"] = tr <= 1e-9
    except BvpError as e:
        if "preconditions unmet" not in str(e):
            raise
    snap = _table(cfg, "prop2_snapshot", ["z"] + [c for a in range(cfg.d) for c in (f"re_{a}", f"im_{a}")])
    for j, z in enumerate(cfg.grid.z):
        row = {"z": float(z)}
        for a in range(cfg.d):
            v = snapshot.truncated.values[j, a]
            row[f"re_{a}"], row[f"im_{a}"] = float(v.real), float(v.imag)
        snap.add(**row)
    tables["prop2_snapshot"] = snap
    return SuiteResult("prop2", cfg.hash, tables, checks)


def suite_prop3(cfg, threads=1) -> SuiteResult:
    ex = cfg.experiment
    psi = standard_packet(cfg)
    rep = ultrarelativistic_scan(psi, cfg.disp, ex["band"], ex["kappas"], ex["t"], threads)
    tab = _table(cfg, "prop3", ["kappa", "error", "bound", "pass", "I", "I_position",
                                "gap_sup", "gap_bound"])
    checks = {}
    for i, kappa in enumerate(rep.kappas):
        gap_ok, sup, gb = True, 0.0, 0.0
        if kappa - ex["band"] > cfg.disp.max_mass:
            g = gap_bound_check(cfg.disp, ex["band"], kappa)
            gap_ok, sup, gb = g["passed"], g["sup"], g["bound"]
        tab.add(kappa=kappa, error=rep.errors[i], bound=rep.bounds[i], I=rep.extra["I"][i],
                I_position=rep.extra["I_position"][i], gap_sup=sup, gap_bound=gb,
                **{"pass": rep.passed[i] and gap_ok})
        checks[f"prop3.kappa={kappa:g}"] = rep.passed[i] and gap_ok
    return SuiteResult("prop3", cfg.hash, {"prop3": tab}, checks)


def _rate_ok(res):
    r = np.asarray(res, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = r[:-1] / r[1:]
    return bool(np.all((q >= RATE_WINDOW[0]) & (q <= RATE_WINDOW[1])))


def suite_ito(cfg, threads=1) -> SuiteResult:
    ex = cfg.experiment
    dz = cfg.grid.dz
    dts = [f * dz for f in ex["dt"]]
    tab = _table(cfg, "ito", ["form", "dt", "residual", "jump_defect"])
    checks = {}
    model = _jump_model(cfg)
    s = 0.5 * model.density.s_max
    res = [ito_residual(model, s, dt) for dt in dts]
    for dt, r in zip(dts, res):
        tab.add(form="jump", dt=dt, residual=r["off_jump_residual"], jump_defect=r["jump_defect"])
    off = [r["off_jump_residual"] for r in res]
    checks["ito.jump.rate"] = max(off) <= UNIT_TOL or _rate_ok(off)
    checks["ito.jump.defect"] = max(r["jump_defect"] for r in res) <= UNIT_TOL
    psi = standard_packet(cfg)
    fam = _family(cfg)
    forms = [("flat", None), ("dressed", interaction_family(fam, cfg.coupling))]
    horizon = min(ex["t"], ex["residual_span"] * dz)
    for name, f in forms:
        res = [limit_equation_residual(psi, cfg.coupling, cfg.sigma0, dt, horizon, f) for dt in dts]
        for dt, r in zip(dts, res):
            tab.add(form=name, dt=dt, residual=r["drift_residual"], jump_defect=r["jump_defect"])
        drift = [r["drift_residual"] for r in res]
        # a coupling that vanishes makes the drift exactly zero at every dt
        checks[f"ito.{name}.rate"] = max(drift) <= UNIT_TOL or _rate_ok(drift)
        checks[f"ito.{name}.defect"] = max(r["jump_defect"] for r in res) <= UNIT_TOL
    return SuiteResult("ito", cfg.hash, {"ito": tab}, checks)


def suite_projector(cfg, threads=1) -> SuiteResult:
    ex = cfg.experiment
    psi = standard_packet(cfg)
    rep = projector_limit_scan(psi, cfg.disp, ex["t"], ex["kappas"], ex["band"], threads)
    tab = _table(cfg, "projector", ["kappa", "error", "bound", "pass"])
    for row in rep.rows():
        tab.add(**row)
    kappa = ex["kappas"][0]
    sharp = heisenberg_projector(psi, cfg.disp, kappa, ex["t"])
    reg = _table(cfg, "projector_regularized", ["theta", "distance"])
    dist = []
    for theta in ex["thetas"]:
        dist.append((regularized_projector(psi, cfg.disp, kappa, ex["t"], theta) - sharp).norm())
        reg.add(theta=theta, distance=dist[-1])
    order = np.argsort(ex["thetas"])[::-1]
    dsorted = np.asarray(dist)[order]
    checks = {"projector.trend": rep.trend,
              "projector.regularized_decreasing": bool(np.all(np.diff(dsorted) < 0))}
    return SuiteResult("projector", cfg.hash, {"projector": tab, "projector_regularized": reg}, checks)


def suite_cocycle(cfg, threads=1) -> SuiteResult:
    ex = cfg.experiment
    psi = standard_packet(cfg)
    rep = cocycle_limit_scan(psi, cfg.disp, cfg.sigma0, cfg.coupling, ex["t"], ex["kappas"],
                             ex["band"], threads=threads)
    tab = _table(cfg, "cocycle", ["kappa", "error", "bound", "pass", "factored_error", "isometry_defect"])
    for row, fe, iso in zip(rep.rows(), rep.factored_distances, rep.isometry_defects):
        tab.add(factored_error=fe, isometry_defect=iso, **row)
    checks = {"cocycle.trend": rep.trend,
              "cocycle.isometry": max(rep.isometry_defects) <= UNIT_TOL}
    return SuiteResult("cocycle", cfg.hash, {"cocycle": tab}, checks)


_RUNNERS = {"prop1": suite_prop1, "prop2": suite_prop2, "prop3": suite_prop3, "ito": suite_ito,
            "projector": suite_projector, "cocycle": suite_cocycle}


def run_suite(cfg: ExperimentConfig, suite: str, threads: int = 1) -> SuiteResult:
    """Run one named suite, or ``all`` of them (in a task pool when ``threads > 1``)."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if suite != "all":
        return _RUNNERS[suite](cfg, threads)
    names = list(_RUNNERS)
    if threads > 1:
        with cf.ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda n: _RUNNERS[n](cfg, 1), names))
    else:
        parts = [_RUNNERS[n](cfg, 1) for n in names]
    out = SuiteResult("all", cfg.hash)
    for p in parts:
        out.merge(p)
    return out


def write_outputs(result: SuiteResult, out_dir) -> list:
    """Write one CSV per table plus ``verdict_<suite>.json``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [t.write(out / f"{name}.csv") for name, t in result.tables.items()]
    vp = out / f"verdict_{result.suite}.json"
    vp.write_text(json.dumps(result.verdict(), indent=2, sort_keys=True) + "\n")
    return paths + [vp]
