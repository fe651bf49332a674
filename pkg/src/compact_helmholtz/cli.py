"""Experiment runner and report emitter.

Verbs: ``table <spec-file>``, ``spectrum``, ``psi``, ``solve``, ``selftest``.
Exit codes: 0 success, 2 configuration error, 3 non-convergence, 4 resonance.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracle, spectra
from .core import (
    PPW_LIMIT, BoundaryConfig, ConfigurationError, Kind, ResonanceError, SolveReport,
    dirichlet, make_setup, neumann, sommerfeld,
)
from .krylov import METHODS, IterationConfig, psi_from_ratios, sks_contraction, solve
from .operator import apply_A2, apply_A6, assemble_rhs, assemble_rhs2
from .precond import precondition_solve
from .problems import exact_error, get_problem

log = logging.getLogger("compact_helmholtz")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_RESONANCE = 0, 1, 2, 3, 4
GIB = 1 << 30
DEFAULT_MEM_BUDGET = 8 * GIB
BYTES_PER_VALUE = 16  # complex128

# fields a method keeps resident besides the Krylov basis
RESIDENT_FIELDS = {"sks": 3, "chebyshev": 4, "gmres": 3}

TABLE_HEADER = ("problem", "k", "h", "method", "iterations", "status", "final_residual",
                "err6", "err2", "order6", "order2")
PSI_HEADER = ("problem", "k", "h", "gamma", "eps_h", "eps_gamma_h", "psi")
SOLVE_HEADER = ("problem", "k", "h", "method", "iterations", "status", "final_residual", "err6")
SPECTRUM_HEADER = ("row", "k", "h", "lower", "upper", "printed_lower", "printed_upper", "match")
SELFTEST_HEADER = ("check", "config", "shape", "rel_error", "tolerance", "pass")


# ---------------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    """Six significant digits; complex as ``re+imi``; ``None`` as empty."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (complex, np.complexfloating)):
        if x.imag == 0:
            return fmt(float(x.real))
        return f"{x.real:.6g}{x.imag:+.6g}i"
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def parse_k(text: str):
    text = text.strip().replace(" ", "")
    try:
        z = complex(text.replace("i", "j"))
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse wavenumber {text!r}") from exc
    return z.real if z.imag == 0 else z


def parse_h(text: str) -> tuple:
    """``"1/64"`` or ``"0.015625"`` -> (label, value)."""
    text = text.strip()
    try:
        frac = Fraction(text).limit_denominator(1 << 20)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"cannot parse grid size {text!r}") from exc
    if frac <= 0:
        raise ConfigurationError(f"grid size must be positive, got {text!r}")
    label = f"{frac.numerator}/{frac.denominator}" if frac.numerator == 1 else text
    return label, float(frac)


def parse_mem(text) -> int:
    """Bytes from ``"8"`` (GiB), ``"8G"``, ``"512M"`` or ``"1e9B"``."""
    s = str(text).strip().upper()
    scale = GIB
    for suffix, mult in (("GIB", GIB), ("MIB", 1 << 20), ("G", GIB), ("M", 1 << 20), ("B", 1)):
        if s.endswith(suffix):
            s, scale = s[: -len(suffix)], mult
            break
    try:
        value = float(s) * scale
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse memory budget {text!r}") from exc
    if value <= 0:
        raise ConfigurationError("memory budget must be positive")
    return int(value)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off", ""):
        return False
    raise ConfigurationError(f"expected yes/no, got {text!r}")


def _list(text: str) -> list:
    return [p.strip() for p in text.split(",") if p.strip()]


# ---------------------------------------------------------------------------
# experiment specs


@dataclass(frozen=True)
class ExperimentSpec:
    problem: str
    ks: tuple
    grids: tuple  # (label, h) pairs, h descending
    methods: tuple = ("gmres", "sks")
    tol: float = 1e-10
    max_iter: int = 100
    format: Optional[str] = None  # default: csv on stdout, csv and markdown side by side for files
    out: Optional[str] = None
    seed: int = 0
    name: str = "experiment"
    restart: Optional[int] = None
    errors: bool = True
    psi: bool = False
    psi_grids: tuple = ()  # (coarse, fine) labels; default: the last two grids
    underresolved: str = "reject"  # or "skip": report the cell instead of refusing the spec
    mem_budget: int = DEFAULT_MEM_BUDGET

    def __post_init__(self):
        if self.format not in (None, "csv", "markdown", "both"):
            raise ConfigurationError(f"format must be csv, markdown or both, got {self.format!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown methods {bad}; choose from {METHODS}")
        hs = [h for _, h in self.grids]
        if any(a <= b for a, b in zip(hs, hs[1:])):
            raise ConfigurationError("grids must be listed with h strictly decreasing")
        if self.underresolved not in ("reject", "skip"):
            raise ConfigurationError("underresolved must be reject or skip")
        if self.underresolved == "reject":
            for k in self.ks:
                for label, h in self.grids:
                    if abs(k) * h >= PPW_LIMIT:
                        raise ConfigurationError(
                            f"k = {fmt(k)} on h = {label} violates the points-per-wavelength guard "
                            f"(|k| h >= 2 pi / 10); drop the cell or set underresolved = skip")
        if self.psi_grids and len(self.psi_grids) != 2:
            raise ConfigurationError("psi_grids needs exactly two grid sizes")
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigurationError("tol must be positive and max_iter at least 1")

    def config(self, method: str) -> IterationConfig:
        return IterationConfig(tol=self.tol, max_iter=self.max_iter, method=method,
                               gmres_restart=self.restart)


SPEC_KEYS = {
    "name": str, "problem": str,
    "k": lambda v: tuple(parse_k(x) for x in _list(v)),
    "grids": lambda v: tuple(parse_h(x) for x in _list(v)),
    "methods": lambda v: tuple(m.lower() for m in _list(v)),
    "tol": float, "max_iter": int, "format": str, "out": str, "seed": int,
    "restart": lambda v: int(v) if v.strip() else None,
    "errors": _bool, "psi": _bool,
    "psi_grids": lambda v: tuple(parse_h(x) for x in _list(v)),
    "underresolved": str, "mem_budget": parse_mem,
}
FIELD_OF_KEY = {"k": "ks"}


def parse_spec_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SPEC_KEYS:
            raise ConfigurationError(f"line {n}: unknown key {key!r}")
        raw[key] = value
    return raw


def build_spec(raw: dict, overrides: Optional[dict] = None) -> ExperimentSpec:
    merged = dict(raw)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in ("problem", "k", "grids"):
        if key not in merged:
            raise ConfigurationError(f"spec is missing {key!r}")
    kwargs = {}
    for key, value in merged.items():
        conv = SPEC_KEYS[key]
        try:
            kwargs[FIELD_OF_KEY.get(key, key)] = conv(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key!r}: {value!r}") from exc
    if "methods" in merged and isinstance(merged["methods"], str) and not merged["methods"].strip():
        kwargs["methods"] = ()
    try:
        get_problem(kwargs["problem"], 1.0)
    except KeyError as exc:
        raise ConfigurationError(str(exc.args[0])) from exc
    return ExperimentSpec(**kwargs)


def load_spec(path, overrides: Optional[dict] = None) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read spec file {path}: {exc}") from exc
    return build_spec(parse_spec_text(text), overrides)


# ---------------------------------------------------------------------------
# memory guard


def field_bytes(n_unknowns: int) -> int:
    return BYTES_PER_VALUE * n_unknowns


def memory_plan(n_unknowns: int, method: str, budget: int, restart: Optional[int], max_iter: int):
    """``(admitted, basis_cap)``: GMRES restarts early rather than outgrow the budget."""
    per = field_bytes(n_unknowns)
    base = RESIDENT_FIELDS[method] * per
    if method != "gmres":
        return base <= budget, None
    room = (budget - base) // per
    if room < 2:
        return False, None
    wanted = restart or max_iter
    return True, int(min(wanted, room - 1))


# ---------------------------------------------------------------------------
# table runs


@dataclass
class MethodCell:
    method: str
    status: str  # solver status, or "mem" / "ppw" / "n/a"
    report: Optional[SolveReport] = None
    err6: Optional[float] = None
    note: str = ""

    @property
    def label(self) -> str:
        if self.report is not None:
            return self.report.label()
        return self.status


@dataclass
class GridRow:
    k: object
    label: str
    h: float
    cells: list = field(default_factory=list)
    err2: Optional[float] = None
    status: str = "ok"
    wall: float = 0.0
    sks_eps: Optional[float] = None


@dataclass
class PsiRow:
    k: object
    coarse: str
    fine: str
    h_fine: float
    gamma: float
    eps_h: float
    eps_gamma_h: float
    psi: float


@dataclass
class TableResult:
    spec: ExperimentSpec
    rows: list
    psi_rows: list


def _chebyshev_interval(setup, k):
    if abs(np.imag(k)) > 0 or any(setup.bc.face(a, s).kind is not Kind.DIRICHLET
                                  for a in range(setup.dim) for s in (0, 1)):
        return None
    if setup.dim == 1:
        return spectra.spectrum_summary_1d(setup.shape[0], k, setup.h).chebyshev_interval
    if len(set(setup.shape)) != 1:
        return None
    return spectra.spectrum_summary(setup.shape[0], k, setup.h).chebyshev_interval


def _run_cell(spec: ExperimentSpec, problem, setup, F, method: str) -> MethodCell:
    admitted, cap = memory_plan(setup.grid.size, method, spec.mem_budget, spec.restart, spec.max_iter)
    if not admitted:
        need = RESIDENT_FIELDS[method] * field_bytes(setup.grid.size) / GIB
        return MethodCell(method, "mem", note=f"needs ~{need:.1f} GiB > budget {spec.mem_budget / GIB:.1f} GiB")
    config = spec.config(method)
    capped = method == "gmres" and cap is not None and cap < (spec.restart or spec.max_iter)
    if capped:
        config = replace(config, gmres_restart=cap)
    if method == "chebyshev":
        interval = _chebyshev_interval(setup, problem.k)
        if interval is None:
            return MethodCell(method, "n/a", note="no closed-form eigenvalue interval")
        config = replace(config, chebyshev_interval=interval)
    U, rep = solve(setup, F, config)
    err = exact_error(setup, U, problem) if rep.converged else None
    note = f"restarted every {cap} steps to fit the memory budget" if capped and rep.iterations > cap else ""
    return MethodCell(method, rep.status, rep, err, note)


def run_table(spec: ExperimentSpec) -> TableResult:
    rows = []
    for k in spec.ks:
        problem = get_problem(spec.problem, k)
        for label, h in spec.grids:
            row = GridRow(k, label, h)
            rows.append(row)
            if abs(k) * h >= PPW_LIMIT:
                row.status = "ppw"
                row.cells = [MethodCell(m, "ppw") for m in spec.methods]
                continue
            t0 = time.perf_counter()
            setup = problem.setup(h)
            log.info("k=%s h=%s shape=%s", fmt(k), label, setup.shape)
            F = assemble_rhs(setup) if spec.methods else None
            for method in spec.methods:
                cell = _run_cell(spec, problem, setup, F, method)
                row.cells.append(cell)
                if cell.report is not None and method == "sks" and len(cell.report.residual_history) >= 3:
                    hist = cell.report.residual_history
                    row.sks_eps = float(hist[2] / hist[1])
                log.info("  %s: %s (%.1fs)", method, cell.label,
                         cell.report.wall_time if cell.report else 0.0)
            del F
            if spec.errors:
                admitted = 3 * field_bytes(setup.grid.size) <= spec.mem_budget
                if admitted:
                    U2 = precondition_solve(setup, assemble_rhs2(setup))
                    row.err2 = exact_error(setup, U2, problem)
                    del U2
            row.wall = time.perf_counter() - t0
    psi_rows = _psi_rows(spec, rows) if spec.psi else []
    return TableResult(spec, rows, psi_rows)


def _psi_rows(spec: ExperimentSpec, rows) -> list:
    if spec.psi_grids:
        (coarse, hc), (fine, hf) = spec.psi_grids
    elif len(spec.grids) >= 2:
        (coarse, hc), (fine, hf) = spec.grids[-2], spec.grids[-1]
    else:
        return []
    out = []
    for k in spec.ks:
        eps = {}
        for label, h in ((coarse, hc), (fine, hf)):
            if abs(k) * h >= PPW_LIMIT:
                break
            cached = next((r.sks_eps for r in rows if r.k == k and r.label == label), None)
            if cached is None:
                problem = get_problem(spec.problem, k)
                setup = problem.setup(h)
                cached = sks_contraction(setup, assemble_rhs(setup))
            eps[label] = cached
        if len(eps) < 2:
            continue
        gamma = hc / hf
        out.append(PsiRow(k, coarse, fine, hf, gamma, eps[fine], eps[coarse],
                          psi_from_ratios(eps[fine], eps[coarse], gamma)))
    return out


def observed_order(err_coarse, err_fine, h_coarse, h_fine):
    if not err_coarse or not err_fine or err_coarse <= 0 or err_fine <= 0:
        return None
    return math.log(err_coarse / err_fine) / math.log(h_coarse / h_fine)


def table_csv(result: TableResult) -> str:
    spec = result.spec
    out = []
    for method in spec.methods:
        for k in spec.ks:
            prev = None
            for row in (r for r in result.rows if r.k == k):
                cell = next(c for c in row.cells if c.method == method)
                o6 = o2 = None
                if prev is not None:
                    o6 = observed_order(prev[1], cell.err6, prev[0], row.h)
                    o2 = observed_order(prev[2], row.err2, prev[0], row.h)
                rep = cell.report
                out.append((spec.problem, k, row.h, method,
                            rep.iterations if rep else None, cell.status,
                            rep.final_residual if rep else None,
                            cell.err6, row.err2, o6, o2))
                prev = (row.h, cell.err6, row.err2)
    return _csv_text(TABLE_HEADER, out)


def psi_csv(result: TableResult) -> str:
    return _csv_text(PSI_HEADER, [(result.spec.problem, p.k, p.h_fine, p.gamma, p.eps_h, p.eps_gamma_h, p.psi)
                                  for p in result.psi_rows])


def _md_num(x, digits=3) -> str:
    if x is None:
        return "-"
    return f"{x:.{digits}e}" if abs(x) < 1e-2 or abs(x) >= 1e4 else f"{x:.{digits + 1}g}"


def table_markdown(result: TableResult) -> str:
    spec = result.spec
    lines = [f"## {spec.name}: {spec.problem}", ""]
    names = {"gmres": "GMRES", "sks": "SKS", "chebyshev": "CA"}
    for k in spec.ks:
        lines.append(f"### k = {fmt(k)}")
        lines.append("")
        head = ["h"] + [names[m] for m in spec.methods]
        if spec.errors:
            head += ["Err6", "Err2", "order6", "order2"]
        head += ["time (s)"]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        prev = None
        for row in (r for r in result.rows if r.k == k):
            cols = [row.label] + [c.label for c in row.cells]
            err6 = next((c.err6 for c in row.cells if c.err6 is not None), None)
            if spec.errors:
                o6 = observed_order(prev[1], err6, prev[0], row.h) if prev else None
                o2 = observed_order(prev[2], row.err2, prev[0], row.h) if prev else None
                cols += [_md_num(err6), _md_num(row.err2),
                         "-" if o6 is None else f"{o6:.2f}", "-" if o2 is None else f"{o2:.2f}"]
            cols.append(f"{row.wall:.1f}")
            lines.append("| " + " | ".join(cols) + " |")
            prev = (row.h, err6, row.err2)
        notes = [f"{row.label} {c.method}: {c.note}" for row in result.rows if row.k == k
                 for c in row.cells if c.note]
        notes += [f"{row.label}: under-resolved (|k| h >= 2 pi/10), not run" for row in result.rows
                  if row.k == k and row.status == "ppw"]
        if notes:
            lines.append("")
            lines += [f"- {n}" for n in notes]
        lines.append("")
    if result.psi_rows:
        lines.append("| psi | " + " | ".join(f"k = {fmt(p.k)}" for p in result.psi_rows) + " |")
        lines.append("|---|" + "---|" * len(result.psi_rows))
        lines.append("| " + f"{result.psi_rows[0].coarse} -> {result.psi_rows[0].fine} | "
                     + " | ".join(f"{p.psi:.2f}" for p in result.psi_rows) + " |")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# selftest


SELFTEST_TOL = 1e-11
_KINDS = {"D": Kind.DIRICHLET, "N": Kind.NEUMANN, "S": Kind.SOMMERFELD}


def _face(kind: Kind):
    return {Kind.DIRICHLET: dirichlet, Kind.NEUMANN: neumann, Kind.SOMMERFELD: sommerfeld}[kind]()


def bc_combinations():
    """Every lateral/bottom/top closure combination: lateral D|N, z faces D|N|S."""
    for lat, z0, z1 in itertools.product("DN", "DNS", "DNS"):
        lk = _KINDS[lat]
        yield f"{lat}{lat}{z0}{z1}", BoundaryConfig(_face(lk), _face(lk), _face(lk), _face(lk),
                                                    _face(_KINDS[z0]), _face(_KINDS[z1]))


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def run_selftest(seed: int = 0, sizes=range(3, 9)) -> list:
    """Matrix-free kernels, fast solver and closed-form spectra against dense references."""
    rng = np.random.default_rng(seed)
    rows = []

    def rand(shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    def record(check, config, shape, err):
        rows.append((check, config, "x".join(map(str, shape)), err, SELFTEST_TOL, err <= SELFTEST_TOL))

    for (name, bc), n in itertools.product(list(bc_combinations()), sizes):
        k = float(rng.uniform(1.0, 6.0))
        setup = make_setup(1.0 / (n + 1), k, bc, None, dim=3, check_resolution=False)
        U = rand(setup.shape)
        for which, apply in (("A6", apply_A6), ("A2", apply_A2)):
            dense = oracle.assemble_dense(setup, which)
            record(f"apply-{which}", name, setup.shape, _rel(apply(setup, U).ravel(), dense @ U.ravel()))
        dense2 = oracle.assemble_dense(setup, "A2")
        Y = rand(setup.shape)
        record("precond", name, setup.shape,
               _rel(precondition_solve(setup, Y).ravel(), oracle.dense_solve(dense2, Y.ravel())))
    for n in sizes:
        k = float(rng.uniform(1.0, 6.0))
        h = 1.0 / (n + 1)
        bc1 = BoundaryConfig(dirichlet(), dirichlet())
        s1 = make_setup(h, k, bc1, None, dim=1, check_resolution=False)
        bc3 = BoundaryConfig(*(dirichlet() for _ in range(6)))
        s3 = make_setup(h, k, bc3, None, dim=3, check_resolution=False)
        j = np.arange(1, n + 1)
        modes = np.array(list(itertools.product(j, repeat=3)))
        for which, closed in (("A6", "A"), ("A2", "A_p")):
            ev = oracle.dense_eigs(oracle.assemble_dense(s1, which)).real
            cf = np.sort(spectra.eig_1d(j, n, k, h, closed).real)
            record(f"eig1d-{which}", "DD", s1.shape, _rel(np.sort(ev), cf))
            ev = oracle.dense_eigs(oracle.assemble_dense(s3, which)).real
            cf = np.sort(spectra.eig_3d(modes[:, 0], modes[:, 1], modes[:, 2], n, k, h, closed).real)
            record(f"eig3d-{which}", "DDDDDD", s3.shape, _rel(np.sort(ev), cf))
        U = rand(s1.shape)
        for which, apply in (("A6", apply_A6), ("A2", apply_A2)):
            record(f"apply1d-{which}", "DD", s1.shape,
                   _rel(apply(s1, U), oracle.assemble_dense(s1, which) @ U))
        Y = rand(s1.shape)
        record("precond1d", "DD", s1.shape,
               _rel(precondition_solve(s1, Y), oracle.dense_solve(oracle.assemble_dense(s1, "A2"), Y)))
    return rows


# ---------------------------------------------------------------------------
# spectrum table


def spectrum_rows(ks=None, inv_hs=None) -> list:
    ks = tuple(ks) if ks else spectra.TABLE_KS
    inv_hs = tuple(inv_hs) if inv_hs else spectra.TABLE_INV_H
    cells, deltas = spectra.bound_table(ks, inv_hs)
    rows = []
    for c in cells:
        lo, hi = c.summary.table_pair
        printed = c.printed or ("", "")
        rows.append(("bounds", c.k, 1.0 / c.inv_h, lo, hi, printed[0], printed[1],
                     c.matches if c.printed else None))
    if set(inv_hs) >= set(spectra.TABLE_INV_H):
        for d in deltas:
            rows.append(("delta0", d.k, 1.0 / d.inv_h, d.exhaustive, None, d.printed, "", d.matches))
    return rows


def spectrum_markdown(rows) -> str:
    ks = sorted({r[1] for r in rows if r[0] == "bounds"})
    hs = sorted({r[2] for r in rows if r[0] == "bounds"}, reverse=True)
    cell = {(r[1], r[2]): r for r in rows if r[0] == "bounds"}
    lines = ["| | " + " | ".join(f"k = {k}" for k in ks) + " |", "|---|" + "---|" * len(ks)]
    for h in hs:
        parts = []
        for k in ks:
            r = cell.get((k, h))
            if r is None:
                parts.append("")
                continue
            mark = "" if r[7] in (True, None) else " (!)"
            parts.append(f"{r[3]:.3g} / {r[4]:.3g}{mark}")
        lines.append(f"| h = 1/{round(1 / h)} | " + " | ".join(parts) + " |")
    deltas = [r for r in rows if r[0] == "delta0"]
    if deltas:
        lines.append("| delta0 (exhaustive) | " + " | ".join(
            f"{r[3]:.3g} (printed {r[5]}{'' if r[7] else ', flagged'})" for r in deltas) + " |")
        lines.append("| h1 | " + " | ".join(f"1/{round(1 / r[2])}" for r in deltas) + " |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# command line


def _emit(text: str, out: Optional[str], suffix: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.suffix in (".csv", ".md"):
        path = path.with_suffix("")
    path = path.with_name(path.name + suffix)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _emit_table(result: TableResult, fmt_: Optional[str], out: Optional[str]) -> None:
    fmt_ = fmt_ or ("csv" if out is None else "both")
    if fmt_ in ("csv", "both"):
        _emit(table_csv(result), out, ".csv")
        if result.psi_rows:
            _emit(psi_csv(result), out, "_psi.csv")
    if fmt_ in ("markdown", "both"):
        _emit(table_markdown(result), out, ".md")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", type=int)
    common.add_argument("--method")
    common.add_argument("--restart", type=int)
    common.add_argument("--format", choices=("csv", "markdown", "both"))
    common.add_argument("--out")
    common.add_argument("--mem-budget")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="compact_helmholtz", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    t = sub.add_parser("table", parents=[common], help="run an experiment spec file")
    t.add_argument("spec")
    for key in ("problem", "k", "grids", "methods", "name", "errors", "psi", "psi_grids", "underresolved"):
        t.add_argument(f"--{key.replace('_', '-')}", dest=f"spec_{key}")
    s = sub.add_parser("spectrum", parents=[common], help="eigenvalue bound table")
    s.add_argument("--k", action="append", type=int, help="restrict to these k (repeatable)")
    s.add_argument("--inv-h", action="append", type=int, help="restrict to these 1/h (repeatable)")
    q = sub.add_parser("psi", parents=[common], help="preconditioning order estimate")
    q.add_argument("problem")
    q.add_argument("k")
    q.add_argument("h")
    q.add_argument("gamma", type=float)
    v = sub.add_parser("solve", parents=[common], help="solve one manufactured problem")
    v.add_argument("problem")
    v.add_argument("k")
    v.add_argument("h")
    v.add_argument("solver", nargs="?", default=None, metavar="method")
    sub.add_parser("selftest", parents=[common], help="oracle-equivalence suite")
    return p


def _cmd_table(args) -> int:
    overrides = {key: getattr(args, f"spec_{key}") for key in
                 ("problem", "k", "grids", "methods", "name", "errors", "psi", "psi_grids", "underresolved")}
    overrides.update({"tol": args.tol, "max_iter": args.max_iter, "restart": args.restart,
                      "format": args.format, "out": args.out, "seed": args.seed,
                      "mem_budget": args.mem_budget})
    if args.method is not None:
        overrides["methods"] = args.method
    overrides = {k: (str(v) if v is not None else None) for k, v in overrides.items()}
    spec = load_spec(args.spec, overrides)
    result = run_table(spec)
    _emit_table(result, spec.format, spec.out)
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    rows = spectrum_rows(args.k, args.inv_h)
    fmt_ = args.format or ("csv" if args.out is None else "both")
    if fmt_ in ("csv", "both"):
        _emit(_csv_text(SPECTRUM_HEADER, rows), args.out, ".csv")
    if fmt_ in ("markdown", "both"):
        _emit(spectrum_markdown(rows), args.out, ".md")
    return EXIT_OK


def _problem_setup(name: str, k_text: str, h_text: str):
    try:
        problem = get_problem(name, parse_k(k_text))
    except KeyError as exc:
        raise ConfigurationError(str(exc.args[0])) from exc
    label, h = parse_h(h_text)
    return problem, problem.setup(h), h


def _cmd_psi(args) -> int:
    problem, fine, h = _problem_setup(args.problem, args.k, args.h)
    if not args.gamma > 1:
        raise ConfigurationError("gamma must exceed 1")
    coarse = problem.setup(h * args.gamma)
    eps_f = sks_contraction(fine, assemble_rhs(fine))
    eps_c = sks_contraction(coarse, assemble_rhs(coarse))
    psi = psi_from_ratios(eps_f, eps_c, args.gamma)
    _emit(_csv_text(PSI_HEADER, [(problem.name, problem.k, h, args.gamma, eps_f, eps_c, psi)]), args.out, ".csv")
    return EXIT_OK


def _cmd_solve(args) -> int:
    method = (args.solver or args.method or "gmres").lower()
    problem, setup, h = _problem_setup(args.problem, args.k, args.h)
    budget = parse_mem(args.mem_budget) if args.mem_budget else DEFAULT_MEM_BUDGET
    spec = ExperimentSpec(problem.name, (problem.k,), ((args.h, h),), (method,),
                          tol=args.tol or 1e-10, max_iter=args.max_iter or 100,
                          restart=args.restart, mem_budget=budget, underresolved="skip")
    cell = _run_cell(spec, problem, setup, assemble_rhs(setup), method)
    rep = cell.report
    _emit(_csv_text(SOLVE_HEADER, [(problem.name, problem.k, h, method,
                                    rep.iterations if rep else None, cell.status,
                                    rep.final_residual if rep else None, cell.err6)]), args.out, ".csv")
    if cell.status in ("mem", "n/a"):
        log.error("%s", cell.note)
        return EXIT_CONFIG
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def _cmd_selftest(args) -> int:
    rows = run_selftest(seed=args.seed or 0)
    _emit(_csv_text(SELFTEST_HEADER, rows), args.out, ".csv")
    failed = [r for r in rows if not r[5]]
    log.info("%d checks, %d failed", len(rows), len(failed))
    return EXIT_OK if not failed else EXIT_FAIL


COMMANDS = {"table": _cmd_table, "spectrum": _cmd_spectrum, "psi": _cmd_psi,
            "solve": _cmd_solve, "selftest": _cmd_selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.verb](args)
    except ResonanceError as exc:
        log.error("resonance: %s (mode %s)", exc, exc.mode)
        return EXIT_RESONANCE
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
