"""Result tables: deterministic CSV with a metadata header, and plot data.

A table file looks like::

    # config_hash: 3fa2...
    # version: 0.1.0
    # seed: 0
    # table: prop3
    kappa,error,bound,pass
    16,0.031310061122497883,0.125,1

Floats are written with 17 significant digits and complex values as
``re+imj`` with the same precision, so equal inputs give byte-identical
files.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["TableError", "ResultTable", "read_table", "merge_tables", "emit_plotdata", "PLOT_KINDS"]

PLOT_KINDS = ("error_vs_kappa", "field_snapshot", "residual_vs_dt")


class TableError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (complex, np.complexfloating)):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _parse(s: str):
    for conv in (int, float, complex):
        try:
            return conv(s)
        except ValueError:
            continue
    return s


@dataclass
class ResultTable:
    """Ordered rows of named columns plus a metadata header."""

    name: str
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, **row):
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise TableError(f"row lacks columns {missing}")
        self.rows.append([row[c] for c in self.columns])

    def column(self, name) -> list:
        if name not in self.columns:
            raise TableError(f"table {self.name!r} has no column {name!r}")
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        meta = {"config_hash": "", "version": "", "seed": ""} | self.meta | {"table": self.name}
        for k, v in meta.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write(self, path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.to_csv())
        return p


def read_table(path) -> ResultTable:
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            lines.append(line)
    if not lines:
        raise TableError(f"{path}: no column header")
    reader = csv.reader(lines)
    columns = next(reader)
    rows = [[_parse(v) for v in r] for r in reader]
    name = meta.pop("table", Path(path).stem)
    return ResultTable(name, columns, rows, meta)


def merge_tables(tables) -> ResultTable:
    """Concatenate rows of tables with equal columns and config hash."""
    tables = list(tables)
    if not tables:
        raise TableError("nothing to merge")
    first = tables[0]
    for t in tables[1:]:
        if t.meta.get("config_hash") != first.meta.get("config_hash"):
            raise TableError(
                f"config hash mismatch: {first.meta.get('config_hash')} vs {t.meta.get('config_hash')}")
        if t.columns != first.columns:
            raise TableError(f"column mismatch: {first.columns} vs {t.columns}")
    return ResultTable(first.name, list(first.columns), [r for t in tables for r in t.rows],
                       dict(first.meta))


def _need(table, cols):
    missing = [c for c in cols if c not in table.columns]
    if missing:
        raise TableError(f"table {table.name!r} lacks column(s) {missing} required for this plot")


def _loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log10(x[ok]), np.log10(y[ok]), 1)[0])


def emit_plotdata(table: ResultTable, kind: str, path, loglog: bool = False) -> Path:
    """Write whitespace-separated plot data.

    ``error_vs_kappa``: columns ``kappa error bound pass``.
    ``field_snapshot``: one block per spinor component (blank-line separated)
    of rows ``z re im abs``; the table needs ``z`` and ``re_a``/``im_a``.
    ``residual_vs_dt``: columns ``dt residual``; the fitted log-log slope is
    written in the header.

    With ``loglog`` the positive numeric columns of decay plots are replaced
    by their base-10 logarithms.
    """
    out = io.StringIO()
    out.write(f"# {kind} from table {table.name}\n")
    for k in ("config_hash", "version", "seed"):
        if k in table.meta:
            out.write(f"# {k}: {table.meta[k]}\n")

    def num(v):
        return f"{float(v):.17g}"

    def lg(v):
        v = float(v)
        return num(math.log10(v)) if v > 0 else "nan"

    if kind == "error_vs_kappa":
        cols = ["kappa", "error", "bound", "pass"]
        _need(table, cols)
        out.write("# " + " ".join(cols) + (" (log10 of kappa, error, bound)" if loglog else "") + "\n")
        for r in zip(*(table.column(c) for c in cols)):
            f = lg if loglog else num
            out.write(f"{f(r[0])} {f(r[1])} {f(r[2])} {int(r[3])}\n")
    elif kind == "field_snapshot":
        _need(table, ["z"])
        comps = sorted(int(c[3:]) for c in table.columns if c.startswith("re_"))
        if not comps:
            raise TableError(f"table {table.name!r} lacks re_<a>/im_<a> columns")
        z = table.column("z")
        for a in comps:
            _need(table, [f"re_{a}", f"im_{a}"])
            out.write(f"# component {a}: z re im abs\n")
            for zj, re, im in zip(z, table.column(f"re_{a}"), table.column(f"im_{a}")):
                out.write(f"{num(zj)} {num(re)} {num(im)} {num(math.hypot(re, im))}\n")
            out.write("\n\n")
    elif kind == "residual_vs_dt":
        _need(table, ["dt", "residual"])
        dt, res = table.column("dt"), table.column("residual")
        forms = table.column("form") if "form" in table.columns else [""] * len(dt)
        for form in dict.fromkeys(forms):
            sel = [i for i, f in enumerate(forms) if f == form]
            x, y = [dt[i] for i in sel], [res[i] for i in sel]
            label = f"{form} " if form else ""
            out.write(f"# {label}loglog_slope: {_loglog_slope(x, y):.6g}\n")
            out.write("# dt residual" + (" (log10)" if loglog else "") + "\n")
            for a, b in zip(x, y):
                out.write(f"{lg(a)} {lg(b)}\n" if loglog else f"{num(a)} {num(b)}\n")
            out.write("\n\n")
    else:
        raise TableError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(out.getvalue())
    return p
