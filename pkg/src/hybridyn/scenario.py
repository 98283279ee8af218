"""Declarative scenarios: parse a YAML config, validate it, run it, collect outputs.

A scenario never writes anything itself; ``run`` returns the report and a
``{filename: text}`` map that the caller writes once everything succeeded.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi
from typing import Any

import numpy as np
import yaml
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import emit
from .cutshift import (ModeAssignment, check_support, dequantize, mode_grid, quantize_report,
                       robustness_check)
from .errors import ConfigError, HybridError
from .grid import LEAK_TOL, PhaseGrid, ScalarField, gaussian
from .liouvillian import (Generator, HamiltonianTerm, HybridPolynomialHamiltonian, Monitor,
                          compile_hamiltonian, evolve)
from .measurement import (MeasurementConfig, block_norms, kick_closed_form, kick_hamiltonian, kick_numeric,
                          outcome_statistics, projective_oracle)
from .operators import (PAULI, DensityOperator, FockTruncation, ProjectorSet, coherent_state,
                        trace_distance)
from .state import (HybridDensity, conditional_field, conditional_state,
                    hermiticity_error, product_state)

KINDS = ("classical_limit", "quantum_limit", "hybrid_evolve", "measurement_closed",
         "measurement_numeric", "cut_shift_roundtrip", "robustness_sweep")
COND_FLOOR = 1e-8


# -- config access --------------------------------------------------------------

def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _line_map(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (str(i),)
            out[p] = v.start_mark.line + 1
            _line_map(v, p, out)
    return out


class Section:
    """Read-only view of one mapping in the config that knows where it came from."""

    def __init__(self, data: Any, lines: dict, path: tuple = ()):
        self.data, self.lines, self.path = data, lines, path

    def where(self, key=None) -> str:
        p = self.path + ((str(key),) if key is not None else ())
        name = ".".join(p) or "<root>"
        line = self.lines.get(p) or self.lines.get(self.path)
        return f"{name} (line {line})" if line else name

    def error(self, key, msg: str) -> ConfigError:
        return ConfigError(f"{self.where(key)}: {msg}")

    def has(self, key) -> bool:
        return isinstance(self.data, dict) and key in self.data and self.data[key] is not None

    def raw(self, key, default=None):
        return self.data.get(key, default) if isinstance(self.data, dict) else default

    def section(self, key, required: bool = True) -> "Section":
        if not self.has(key):
            if required:
                raise self.error(key, "missing")
            return Section({}, self.lines, self.path + (str(key),))
        return Section(self.data[key], self.lines, self.path + (str(key),))

    def items(self) -> list:
        if not isinstance(self.data, list):
            raise ConfigError(f"{self.where()}: expected a list")
        return [Section(v, self.lines, self.path + (str(i),)) for i, v in enumerate(self.data)]

    def number(self, key, default=None, positive: bool = False, integer: bool = False):
        if not self.has(key):
            if default is None:
                raise self.error(key, "missing")
            return default
        v = self.data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(key, f"expected a number, got {v!r}")
        if integer and int(v) != v:
            raise self.error(key, f"expected an integer, got {v!r}")
        if positive and not v > 0:
            raise self.error(key, f"must be positive, got {v!r}")
        return int(v) if integer else float(v)

    def flag(self, key, default: bool) -> bool:
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise self.error(key, f"expected true/false, got {v!r}")
        return v


def parse_complex(v, where: str) -> complex:
    if isinstance(v, bool):
        raise ConfigError(f"{where}: expected a number")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{where}: expected a number or an [re, im] pair, got {v!r}")


def _matrix(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ConfigError(f"{where}: expected a list of rows")
    m = np.array([[parse_complex(v, where) for v in r] for r in rows])
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{where}: matrix must be square")
    return m


def parse_operator(spec, dim: int, where: str) -> np.ndarray:
    """Named preset, scalar (times identity), {diag}, {proj: k} or {matrix}."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec) * np.eye(dim, dtype=complex)
    if isinstance(spec, str):
        if spec == "identity":
            return np.eye(dim, dtype=complex)
        if spec == "zero":
            return np.zeros((dim, dim), dtype=complex)
        if spec in PAULI:
            if dim != 2:
                raise ConfigError(f"{where}: {spec} needs dim 2, scenario has dim {dim}")
            return PAULI[spec].copy()
        if spec == "number":
            return np.diag(np.arange(dim)).astype(complex)
        raise ConfigError(f"{where}: unknown operator preset {spec!r}")
    if isinstance(spec, dict) and len(spec) == 1:
        (k, v), = spec.items()
        if k == "diag":
            if not isinstance(v, list) or len(v) != dim:
                raise ConfigError(f"{where}: diag needs {dim} entries")
            return np.diag([parse_complex(t, where) for t in v])
        if k == "proj":
            if not isinstance(v, int) or not 0 <= v < dim:
                raise ConfigError(f"{where}: proj index must be an integer in [0, {dim})")
            m = np.zeros((dim, dim), dtype=complex)
            m[v, v] = 1.0
            return m
        if k == "matrix":
            m = _matrix(v, where)
            if m.shape != (dim, dim):
                raise ConfigError(f"{where}: matrix is {m.shape}, scenario has dim {dim}")
            return m
    raise ConfigError(f"{where}: cannot read operator {spec!r}")


def parse_state(spec, where: str) -> DensityOperator:
    """{psi: [...]}, {diag: [...]}, {matrix: [[...]]} or "maximally_mixed:<dim>"."""
    try:
        if isinstance(spec, str) and spec.startswith("maximally_mixed:"):
            return DensityOperator.maximally_mixed(int(spec.split(":", 1)[1]))
        if isinstance(spec, dict) and len(spec) == 1:
            (k, v), = spec.items()
            if k == "psi":
                if not isinstance(v, list) or not v:
                    raise ConfigError(f"{where}: psi must be a non-empty list")
                psi = np.array([parse_complex(t, where) for t in v])
                if np.linalg.norm(psi) == 0:
                    raise ConfigError(f"{where}: psi is the zero vector")
                return DensityOperator.pure(psi)
            if k == "diag":
                w = np.array([float(t) for t in v])
                return DensityOperator(np.diag(w / w.sum()))
            if k == "matrix":
                return DensityOperator(_matrix(v, where))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: cannot read quantum state {spec!r}")


def apply_override(data: dict, item: str) -> None:
    """``a.b.c=value``; the value is read as YAML, list indices are integers."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, text = item.split("=", 1)
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: {exc}") from exc
    parts = key.strip().split(".")
    node = data
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
                node[idx]
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"override {key}: bad list index {part!r}") from exc
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[part] = value
            else:
                node = node.setdefault(part, {})
        else:
            raise ConfigError(f"override {key}: {'.'.join(parts[:i])} is not a mapping")


# -- scenario -------------------------------------------------------------------

@dataclass
class Scenario:
    kind: str
    root: Section
    name: str = "scenario"
    dim: int = 1
    grid: PhaseGrid | None = None
    hamiltonian: HybridPolynomialHamiltonian | None = None
    rho_q: DensityOperator | None = None
    classical: dict = field(default_factory=dict)
    t_final: float = 0.0
    dt: float = 0.0
    snapshots: tuple = ()
    leak_tol: float | None = LEAK_TOL
    measurement: MeasurementConfig | None = None
    mode: ModeAssignment | None = None
    mode_state: np.ndarray | None = None
    observables: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)


def load(text: str, overrides=()) -> Scenario:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    for item in overrides:
        apply_override(data, item)
    return build(Section(data, _line_map(node) if node is not None else {}))


def load_file(path, overrides=()) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load(text, overrides)


def _grid(sec: Section) -> PhaseGrid:
    try:
        if sec.has("half_width"):
            n = sec.number("n", integer=True, positive=True)
            return PhaseGrid.square(sec.number("half_width", positive=True), n)
        return PhaseGrid(sec.number("x_min"), sec.number("x_max"), sec.number("p_min"),
                         sec.number("p_max"), sec.number("n_x", integer=True, positive=True),
                         sec.number("n_p", integer=True, positive=True))
    except ValueError as exc:
        raise ConfigError(f"{sec.where()}: {exc}") from exc


def _hamiltonian(sec: Section, dim: int) -> HybridPolynomialHamiltonian:
    terms = []
    for i, t in enumerate(sec.items()):
        mono = t.raw("monomial")
        if not (isinstance(mono, list) and len(mono) == 2
                and all(isinstance(v, int) and v >= 0 for v in mono)):
            raise t.error("monomial", "expected [a, b] with non-negative integers")
        op_spec = t.raw("op", "identity")
        op = parse_operator(op_spec, dim, t.where("op")) * t.number("coeff", 1.0)
        name = op_spec if isinstance(op_spec, str) else f"M{i}"
        try:
            terms.append(HamiltonianTerm(tuple(mono), op, name))
        except ValueError as exc:
            raise t.error("op", str(exc)) from exc
    return HybridPolynomialHamiltonian(dim, tuple(terms))


def build(root: Section) -> Scenario:
    kind = root.raw("kind")
    if kind not in KINDS:
        raise root.error("kind", f"must be one of {', '.join(KINDS)}; got {kind!r}")
    sc = Scenario(kind, root, name=str(root.raw("name", kind)))
    init = root.section("initial")
    if init.has("quantum"):
        sc.rho_q = parse_state(init.raw("quantum"), init.where("quantum"))
        sc.dim = sc.rho_q.dim
    sc.dim = int(root.number("dim", sc.dim, integer=True, positive=True))
    if sc.rho_q is not None and sc.rho_q.dim != sc.dim:
        raise root.error("dim", f"initial quantum state has dim {sc.rho_q.dim}")
    out = root.section("outputs", required=False)
    sc.outputs = {"state": out.flag("state", False), "fields": out.flag("fields", True)}

    if kind in ("classical_limit", "quantum_limit", "hybrid_evolve"):
        sc.grid = _grid(root.section("grid"))
        if sc.rho_q is None:
            if sc.dim != 1:
                raise init.error("quantum", "missing (needed for dim > 1)")
            sc.rho_q = DensityOperator(np.eye(1))
        c = init.section("classical")
        sc.classical = {"x0": c.number("x0", 0.0), "p0": c.number("p0", 0.0),
                        "var": c.number("var", 1.0, positive=True)}
        hs = (root.section("hamiltonian") if root.has("hamiltonian")
              else Section([], root.lines, ("hamiltonian",)))
        sc.hamiltonian = _hamiltonian(hs, sc.dim)
        tm = root.section("time")
        sc.t_final = tm.number("t_final")
        if sc.t_final < 0:
            raise tm.error("t_final", "must be non-negative")
        sc.dt = tm.number("dt", positive=True)
        snaps = tm.raw("snapshots", []) or []
        if not isinstance(snaps, list) or not all(
                isinstance(s, (int, float)) and 0 <= s <= sc.t_final for s in snaps):
            raise tm.error("snapshots", "must be a list of times in [0, t_final]")
        sc.snapshots = tuple(float(s) for s in snaps)
        opts = root.section("options", required=False)
        periodic = opts.flag("periodic", False)
        sc.leak_tol = None if periodic else opts.number("leak_tol", LEAK_TOL, positive=True)
    elif kind in ("measurement_closed", "measurement_numeric"):
        sc.measurement = _measurement(root, sc)
    else:
        _cut_shift(root, sc)
    validate(sc)
    return sc


def _measurement(root: Section, sc: Scenario) -> MeasurementConfig:
    m = root.section("measurement")
    labels = m.raw("labels")
    if not (isinstance(labels, list) and labels and all(isinstance(v, int) for v in labels)):
        raise m.error("labels", "expected a non-empty list of integers")
    if sc.rho_q is None:
        raise root.section("initial").error("quantum", "missing")
    if len(labels) != sc.dim:
        raise m.error("labels", f"{len(labels)} labels for a dim-{sc.dim} system")
    try:
        ps = ProjectorSet.diagonal(sc.dim, labels)
    except ValueError as exc:
        raise m.error("labels", str(exc)) from exc
    grid = _grid(root.section("grid")) if root.has("grid") else None
    try:
        return MeasurementConfig(ps, m.number("g", positive=True), sc.rho_q,
                                 epsilon=m.number("epsilon", 1e-2, positive=True),
                                 x0=m.number("x0", 0.0), p0=m.number("p0", 0.0),
                                 var=m.number("var", 1.0, positive=True), grid=grid,
                                 strict=m.flag("strict", True))
    except ValueError as exc:
        raise m.error("g", str(exc)) from exc


def _mode_state(spec: Section, trunc: FockTruncation) -> np.ndarray:
    n = trunc.n_max
    where = spec.where()
    d = spec.data
    if not isinstance(d, dict) or len(d) != 1:
        raise ConfigError(f"{where}: expected one of fock, coherent, psi, matrix")
    (k, v), = d.items()
    try:
        if k == "fock":
            if not isinstance(v, dict) or not v:
                raise ConfigError(f"{where}.fock: expected {{level: weight}}")
            w = np.zeros(n)
            for lvl, wt in v.items():
                if not (isinstance(lvl, int) and 0 <= lvl < n):
                    raise ConfigError(f"{where}.fock: level {lvl!r} outside [0, {n})")
                w[lvl] = float(wt)
            if np.any(w < 0) or w.sum() <= 0:
                raise ConfigError(f"{where}.fock: weights must be non-negative, not all zero")
            return np.diag(w / w.sum()).astype(complex)
        if k == "coherent":
            x1, p1 = (float(t) for t in v)
            psi = coherent_state(x1, p1, trunc)
            return np.outer(psi, psi.conj())
        if k == "psi":
            psi = np.zeros(n, dtype=complex)
            vals = [parse_complex(t, where) for t in v]
            if len(vals) > n:
                raise ConfigError(f"{where}.psi: more than n_max={n} amplitudes")
            psi[:len(vals)] = vals
            return DensityOperator.pure(psi).matrix
        if k == "matrix":
            m = _matrix(v, where)
            full = np.zeros((n, n), dtype=complex)
            full[:m.shape[0], :m.shape[0]] = m
            return DensityOperator(full).matrix
    except HybridError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown mode state {k!r}")


def _cut_shift(root: Section, sc: Scenario) -> None:
    c = root.section("cut_shift", required=False)
    trunc = FockTruncation(c.number("n_max", 24, integer=True, positive=True))
    try:
        sc.mode = ModeAssignment(trunc, margin=c.number("margin", 3, integer=True))
    except ValueError as exc:
        raise c.error("margin", str(exc)) from exc
    sc.grid = _grid(root.section("grid")) if root.has("grid") else mode_grid(sc.mode, c.number(
        "spacing", 0.3, positive=True))
    init = root.section("initial")
    if sc.rho_q is None:
        sc.rho_q = DensityOperator(np.eye(1))
    sc.mode_state = np.kron(_mode_state(init.section("mode"), trunc), sc.rho_q.matrix)
    if sc.kind == "robustness_sweep":
        for o in root.section("observables").items():
            name = o.raw("name")
            if not isinstance(name, str):
                raise o.error("name", "expected a string")
            if o.has("poly"):
                poly = {}
                for t in o.section("poly").items():
                    mono = t.raw("monomial")
                    if not (isinstance(mono, list) and len(mono) == 2):
                        raise t.error("monomial", "expected [a, b]")
                    poly[tuple(int(v) for v in mono)] = t.number("coeff", 1.0)
                sc.observables.append((name, "poly", poly))
            elif o.has("bump"):
                b = o.section("bump")
                sig = b.raw("sigma")
                sig = sig if isinstance(sig, list) else [sig]
                if not all(isinstance(s, (int, float)) and s > 0 for s in sig):
                    raise b.error("sigma", "expected positive widths")
                axis = b.raw("axis", "x")
                if axis not in ("x", "p", "both"):
                    raise b.error("axis", "must be x, p or both")
                sc.observables.append((name, "bump", {"sigma": [float(s) for s in sig], "axis": axis,
                                                      "center": b.number("center", 0.0)}))
            else:
                raise o.error("poly", "observable needs poly or bump")


def validate(sc: Scenario) -> None:
    """Module preconditions checked up front, reported as ConfigError."""
    try:
        if sc.kind in ("classical_limit", "quantum_limit", "hybrid_evolve"):
            c = sc.classical
            if not sc.grid.fits(c["x0"], c["p0"], 6 * np.sqrt(c["var"])):
                raise ConfigError(f"initial.classical: 6 sigma around ({c['x0']}, {c['p0']}) leaves the grid")
            h = sc.hamiltonian
            if h.degree > h.max_degree:
                raise ConfigError(f"hamiltonian: degree {h.degree} exceeds {h.max_degree}")
            if sc.kind == "classical_limit" and any(
                    not np.allclose(t.op, t.op[0, 0] * np.eye(sc.dim)) for t in h.terms):
                raise ConfigError("hamiltonian: classical_limit needs identity-proportional terms")
            if sc.kind == "quantum_limit" and any(t.powers != (0, 0) for t in h.terms):
                raise ConfigError("hamiltonian: quantum_limit needs (x, p)-independent terms")
            gen = Generator(compile_hamiltonian(h), sc.grid, sc.leak_tol)
            bound = gen.max_stable_dt()
            if sc.dt > bound:
                raise ConfigError(f"time.dt: {sc.dt} exceeds the RK4 stability bound {bound:.4g}")
        elif sc.measurement is not None:
            cfg = sc.measurement
            s = 6 * np.sqrt(cfg.var)
            for n in cfg.ps.labels:
                if not cfg.grid.fits(cfg.x0 + cfg.g * n, cfg.p0, s):
                    raise ConfigError(f"grid: pointer peak of label {n} does not fit")
            if not cfg.grid.fits(cfg.x0, cfg.p0, s):
                raise ConfigError("grid: initial pointer does not fit")
        elif sc.mode is not None:
            check_support(sc.mode_state, sc.mode)
    except ConfigError:
        raise
    except HybridError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc


# -- running ----------------------------------------------------------------------

@dataclass
class Result:
    report: dict
    files: dict


def _conservation(monitor: Monitor) -> dict:
    return {"norm_drift_rate": monitor.drift_rate(),
            "max_hermiticity_error": float(max(monitor.hermiticity, default=0.0)),
            "final_norm": monitor.norms[-1] if monitor.norms else None}


def _fields(sc: Scenario, files: dict, tag: str, h: HybridDensity) -> None:
    if sc.outputs["fields"]:
        rc = np.trace(h.values, axis1=2, axis2=3).real
        files[f"marginal_{tag}.csv"] = emit.field_csv(ScalarField(h.grid, rc))
    if sc.outputs["state"]:
        files[f"state_{tag}.csv"] = emit.state_csv(h)


def characteristics_oracle(h: HybridPolynomialHamiltonian, grid: PhaseGrid, x0: float, p0: float,
                           var: float, t: float) -> np.ndarray:
    """Gaussian density carried along the Hamiltonian flow of the scalar H (rtol 1e-12)."""
    poly = {}
    for term in h.terms:
        poly[term.powers] = poly.get(term.powers, 0.0) + float(term.op[0, 0].real)

    def rhs(_, y):
        x, p = y[: y.size // 2], y[y.size // 2:]
        dhdx = sum(c * a * x ** (a - 1) * p ** b for (a, b), c in poly.items() if a)
        dhdp = sum(c * b * x ** a * p ** (b - 1) for (a, b), c in poly.items() if b)
        zero = np.zeros_like(x)
        return np.concatenate([dhdp + zero, -dhdx + zero])

    X, P = grid.mesh
    y0 = np.concatenate([X.ravel(), P.ravel()])
    if t == 0:
        yb = y0
    else:
        sol = solve_ivp(rhs, (t, 0.0), y0, method="DOP853", rtol=1e-12, atol=1e-12)
        yb = sol.y[:, -1]
    xb, pb = yb[: yb.size // 2].reshape(X.shape), yb[yb.size // 2:].reshape(X.shape)
    return np.exp(-((xb - x0) ** 2 + (pb - p0) ** 2) / (2 * var)) / (2 * pi * var)


def _evolve_kind(sc: Scenario) -> Result:
    c = sc.classical
    h0 = product_state(sc.rho_q, gaussian(sc.grid, c["x0"], c["p0"], c["var"]))
    tl = compile_hamiltonian(sc.hamiltonian)
    mon = Monitor()
    out = evolve(h0, tl, sc.t_final, sc.dt, monitor=mon, leak_tol=sc.leak_tol, snapshots=sc.snapshots)
    final, snaps = out if sc.snapshots else (out, [])
    report = {"kind": sc.kind, "name": sc.name, "t_final": sc.t_final, "steps": len(mon.times) - 1,
              "conservation": _conservation(mon), "final": final.diagnostics(),
              "max_change": float(np.max(np.abs(final.values - h0.values)))}
    files = {}
    _fields(sc, files, "initial", h0)
    _fields(sc, files, "final", final)
    for t, s in zip(sorted(set(sc.snapshots)), snaps):
        _fields(sc, files, f"t{t:.6g}", s)
    if sc.kind == "classical_limit":
        ref = characteristics_oracle(sc.hamiltonian, sc.grid, c["x0"], c["p0"], c["var"], sc.t_final)
        rc = np.trace(final.values, axis1=2, axis2=3).real
        report["oracle"] = {"method": "characteristics", "linf": float(np.max(np.abs(rc - ref)))}
    elif sc.kind == "quantum_limit":
        hq = sum((t.op for t in sc.hamiltonian.terms), np.zeros((sc.dim, sc.dim), dtype=complex))
        u = expm(-1j * hq * sc.t_final)
        ref = u @ sc.rho_q.matrix @ u.conj().T
        peak = float(np.max(np.trace(final.values, axis1=2, axis2=3).real))
        states, mask = conditional_field(final, COND_FLOOR * peak)
        td = [trace_distance(s, ref) for s in states[mask]]
        report["oracle"] = {"method": "matrix_exponential", "max_trace_distance": float(max(td)),
                            "points": int(mask.sum())}
    return Result(report, files)


def _collapse(final: HybridDensity, cfg: MeasurementConfig) -> list:
    out = []
    for n, pn, post in projective_oracle(cfg.rho_i, cfg.ps):
        st = conditional_state(final, cfg.x0 + cfg.g * n, cfg.p0)
        out.append({"label": n, "p": pn, "trace_distance": trace_distance(st.matrix, post.matrix)})
    return out


def _measurement_kind(sc: Scenario) -> Result:
    cfg = sc.measurement
    h0 = cfg.initial_state()
    files = {}
    if sc.kind == "measurement_closed":
        final = kick_closed_form(cfg)
        cons = {"norm_drift_rate": 0.0, "max_hermiticity_error": hermiticity_error(final.values),
                "final_norm": final.norm()}
        extra = {}
    else:
        mon = Monitor()
        final = kick_numeric(cfg, monitor=mon)
        cons = _conservation(mon)
        closed = kick_closed_form(cfg)
        before = block_norms(h0, cfg.ps)
        after_c = block_norms(closed, cfg.ps)
        extra = {"closed_form": {
            "linf": float(np.max(np.abs(final.values - closed.values))),
            "masses": {str(o.label): o.mass for o in outcome_statistics(closed, cfg, h0).outcomes},
            "block_ratios": {f"{n},{m}": after_c[(n, m)] / before[(n, m)]
                             for (n, m) in before if n < m and before[(n, m)] > 1e-9}}}
    rep = outcome_statistics(final, cfg, h0)
    oracle = {str(n): p for n, p, _ in projective_oracle(cfg.rho_i, cfg.ps)}
    report = {"kind": sc.kind, "name": sc.name, "g": cfg.g, "outcomes": rep.to_dict()["outcomes"],
              "blocks": rep.to_dict()["blocks"], "total_mass": rep.total_mass,
              "projective_probabilities": oracle, "collapse": _collapse(final, cfg),
              "conservation": cons, **extra}
    _fields(sc, files, "initial", h0)
    _fields(sc, files, "final", final)
    return Result(report, files)


def _bump(axis: str, center: float, sigma: float):
    def f(x, p):
        r2 = {"x": (x - center) ** 2, "p": (p - center) ** 2,
              "both": (x - center) ** 2 + (p - center) ** 2}[axis]
        return np.exp(-r2 / (2 * sigma * sigma))
    return f


def _cut_shift_kind(sc: Scenario) -> Result:
    h = dequantize(sc.mode_state, sc.mode, sc.grid)
    rho, diag = quantize_report(h, sc.mode)
    report = {"kind": sc.kind, "name": sc.name, "n_max": sc.mode.n_max, "grid": sc.grid.to_dict(),
              "husimi": {"norm": h.norm(),
                         "min_value": float(np.min(np.trace(h.values, axis1=2, axis2=3).real)),
                         "hermiticity_error": hermiticity_error(h.values)},
              "conservation": {"norm_drift_rate": 0.0, "max_hermiticity_error": hermiticity_error(h.values),
                               "final_norm": h.norm()},
              "roundtrip_trace_distance": trace_distance(rho.matrix, sc.mode_state),
              "residual": diag["residual"], "min_eigenvalue": diag["min_eigenvalue"],
              "clipped_weight": diag["clipped_weight"]}
    files = {}
    _fields(sc, files, "husimi", h)
    if sc.kind == "robustness_sweep":
        sweep = {}
        for name, typ, spec in sc.observables:
            if typ == "poly":
                sweep[name] = robustness_check(h, spec, sc.mode, name).discrepancies[name]
            else:
                rows = []
                for s in spec["sigma"]:
                    d = robustness_check(h, _bump(spec["axis"], spec["center"], s), sc.mode, name)
                    rows.append({"sigma": s, **d.discrepancies[name]})
                for a, b in zip(rows, rows[1:]):
                    b["ratio_to_previous"] = b["weyl"] / a["weyl"] if a["weyl"] else None
                sweep[name] = rows
        report["observables"] = sweep
    return Result(report, files)


def run(sc: Scenario) -> Result:
    if sc.kind in ("classical_limit", "quantum_limit", "hybrid_evolve"):
        res = _evolve_kind(sc)
    elif sc.measurement is not None:
        res = _measurement_kind(sc)
    else:
        res = _cut_shift_kind(sc)
    res.files = {"report.json": emit.to_json(res.report), **res.files}
    return res


def dump_terms(sc: Scenario) -> str:
    if sc.hamiltonian is not None:
        h = sc.hamiltonian
    elif sc.measurement is not None:
        h = kick_hamiltonian(sc.measurement)
    else:
        raise ConfigError(f"kind {sc.kind} has no hybrid Hamiltonian")
    return compile_hamiltonian(h).dump()

