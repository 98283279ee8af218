"""Moving one canonical pair across the quantum-classical boundary.

A quantum mode is made classical through its Husimi function
Q(x, p) = <x, p| rho' |x, p> / (2 pi), evaluated with coherent states on a
phase-space grid; the system factor is carried along unchanged.  The reverse
map solves Q = h for rho' by least squares over the supported Fock levels.
Hamiltonians are quantized in normal order, observables in Weyl order.

Operators on the enlarged space use the ordering mode (x) system, i.e. the
basis index is n * dim + s.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from math import ceil, pi, sqrt
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import eval_genlaguerre, gammaln

from .errors import DomainTooSmall, IllPosedError, TruncationError
from .grid import PhaseGrid, boundary_max, integrate_array
from .liouvillian import D_MAX, HybridPolynomialHamiltonian
from .operators import (DensityOperator, FockTruncation, HermitianOperator, check_polynomial_degree,
                        coherent_amplitudes, order_antinormal, order_normal, order_weyl,
                        trace_distance)
from .state import HybridDensity, HybridObservable, expectation

TAIL_TOL = 1e-10
EDGE_TOL = 1e-10
RESIDUAL_TOL = 1e-6
FIT_TOL = 1e-12
TOL_POS = 1e-8


@dataclass(frozen=True)
class ModeAssignment:
    """The single pair (x1, p1) <-> Fock mode moved across the cut.

    ``margin`` top Fock levels must stay empty for a state to count as
    supported by the truncation; the default admits n <= n_max - 4.
    """

    trunc: FockTruncation = FockTruncation()
    name: str = "x1,p1"
    margin: int = 3

    def __post_init__(self):
        if not 0 <= self.margin < self.trunc.n_max:
            raise ValueError("margin must lie in [0, n_max)")

    @property
    def n_max(self) -> int:
        return self.trunc.n_max


@dataclass
class ShiftReport:
    residual: float
    roundtrip_distance: float
    min_eigenvalue: float
    clipped_weight: float
    discrepancies: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def mode_grid(mode: ModeAssignment, spacing: float = 0.3) -> PhaseGrid:
    """Square grid holding the Husimi function of any state the truncation supports."""
    half = sqrt(2 * mode.n_max) + 7.0
    n = 2 * int(ceil(half / spacing))
    return PhaseGrid.square(half, n)


def _split(rho: np.ndarray, n_max: int) -> tuple[np.ndarray, int]:
    """(n_max * dim)^2 matrix -> array r[n, s, m, t]."""
    size = rho.shape[0]
    if size % n_max:
        raise ValueError(f"operator size {size} is not a multiple of n_max={n_max}")
    dim = size // n_max
    return rho.reshape(n_max, dim, n_max, dim), dim


def fock_populations(rho: np.ndarray, n_max: int) -> np.ndarray:
    r, _ = _split(np.asarray(rho), n_max)
    return np.einsum("nsns->n", r).real


def check_support(rho: np.ndarray, mode: ModeAssignment, tol: float = TAIL_TOL) -> None:
    pop = fock_populations(rho, mode.n_max)
    top = float(np.sum(pop[mode.n_max - mode.margin:])) if mode.margin else 0.0
    if top > tol:
        raise TruncationError(
            f"weight {top:.2e} in the top {mode.margin} Fock levels of n_max={mode.n_max}")


def _amplitudes(grid: PhaseGrid, n_max: int) -> np.ndarray:
    X, P = grid.mesh
    return coherent_amplitudes(X, P, n_max)


def _amplitudes_ext(grid: PhaseGrid, n_max: int) -> np.ndarray:
    """Coherent amplitudes in extended precision, by the recurrence in alpha/sqrt(k)."""
    X, P = grid.mesh
    x, p = X.astype(np.longdouble), P.astype(np.longdouble)
    alpha = (x + 1j * p) / np.sqrt(np.longdouble(2))
    a = np.empty(X.shape + (n_max,), dtype=np.clongdouble)
    a[..., 0] = np.exp(-(x * x + p * p) / 4)
    for k in range(1, n_max):
        a[..., k] = a[..., k - 1] * alpha / np.sqrt(np.longdouble(k))
    return a


def husimi_values(rho: np.ndarray, mode: ModeAssignment, grid: PhaseGrid) -> np.ndarray:
    """<x, p| rho' |x, p> / 2 pi on the grid, shape (n_x, n_p, dim, dim).

    Evaluated in extended precision and rounded once: the inverse map
    amplifies input round-off by up to ~1e9, so the last bits matter.
    """
    r, _ = _split(np.asarray(rho, dtype=complex).astype(np.clongdouble), mode.n_max)
    a = _amplitudes_ext(grid, mode.n_max)
    q = np.einsum("xyn,nsmt,xym->xyst", a.conj(), r, a, optimize=True) / (2 * np.pi)
    return q.astype(complex)


def dequantize(rho_prime: DensityOperator | np.ndarray, mode: ModeAssignment,
               grid: PhaseGrid | None = None) -> HybridDensity:
    """Replace the quantum mode by a classical pair through the Husimi map."""
    rho = rho_prime.matrix if isinstance(rho_prime, HermitianOperator) else np.asarray(rho_prime)
    grid = grid if grid is not None else mode_grid(mode)
    check_support(rho, mode)
    q = husimi_values(rho, mode, grid)
    edge = boundary_max(q)
    if edge > EDGE_TOL:
        raise DomainTooSmall(f"Husimi function reaches {edge:.2e} on the grid boundary")
    h = HybridDensity(grid, 0.5 * (q + np.swapaxes(q, -1, -2).conj()), check=False)
    norm = h.norm()
    if abs(norm - 1.0) > 1e-8:
        raise DomainTooSmall(f"grid quadrature of the Husimi function gives {norm!r}; refine the grid")
    return HybridDensity(grid, h.values)


def _level_order(k: int) -> np.ndarray:
    """Pairs (n, m) ordered so that the first j*j entries have n, m < j."""
    pairs = []
    for lev in range(k):
        pairs += [(lev, m) for m in range(lev + 1)] + [(n, lev) for n in range(lev)]
    return np.array(pairs)


def _solve(h: HybridDensity, mode: ModeAssignment) -> tuple[np.ndarray, float, int]:
    """Least squares over the smallest Fock truncation that reproduces h.

    The Husimi map loses about a decade of conditioning per Fock level
    (condition ~2e9 at 21 levels), so fitting levels a state does not
    occupy only turns input round-off into state error.  One QR of the
    design with columns grouped by level gives the residual of every nested
    truncation j <= n_max - margin; the first one at the round-off floor
    FIT_TOL is used, else the largest.  Returns (rho', relative residual, j).
    """
    n, k = mode.n_max, mode.n_max - mode.margin
    pairs = _level_order(k)
    a = _amplitudes(h.grid, k).reshape(-1, k)
    design = a.conj()[:, pairs[:, 0]] * a[:, pairs[:, 1]] / (2 * pi)
    d = h.dim
    rhs = np.asarray(h.values).reshape(-1, d * d)
    q, r = np.linalg.qr(design)
    y = q.conj().T @ rhs
    scale = float(np.linalg.norm(rhs)) or 1.0
    outside = float(np.linalg.norm(rhs - q @ y)) ** 2
    tail = np.cumsum((np.abs(y[::-1]) ** 2).sum(axis=1))[::-1]  # ||y[i:]||^2
    residuals = [sqrt(outside + (tail[j * j] if j < k else 0.0)) / scale for j in range(1, k + 1)]
    j = next((j for j, res in enumerate(residuals, 1) if res <= FIT_TOL), k)
    m = j * j
    coef = solve_triangular(r[:m, :m], y[:m])
    rho = np.zeros((n, n, d, d), dtype=complex)
    rho[pairs[:m, 0], pairs[:m, 1]] = coef.reshape(m, d, d)
    rho = rho.transpose(0, 2, 1, 3).reshape(n * d, n * d)
    return 0.5 * (rho + rho.conj().T), residuals[j - 1], j


def quantize_report(h: HybridDensity, mode: ModeAssignment, residual_tol: float = RESIDUAL_TOL,
                    tol_pos: float = TOL_POS) -> tuple[DensityOperator, dict]:
    """Least-squares inverse of the Husimi map plus its diagnostics.

    The diagnostics carry the relative residual, the number of Fock levels
    fitted, the smallest eigenvalue before clipping, the clipped weight and
    the unclipped Hermitian solution ``raw``.
    """
    rho, residual, levels = _solve(h, mode)
    if residual > residual_tol:
        raise IllPosedError(
            f"input is not a Husimi function at n_max={mode.n_max} (relative residual {residual:.2e})")
    lam, u = np.linalg.eigh(rho)
    if lam[0] < -tol_pos:
        raise IllPosedError(f"reconstructed state has eigenvalue {lam[0]:.2e} below -{tol_pos:.0e}")
    lam_raw = lam
    clipped = float(-np.sum(lam[lam < 0]))
    lam = np.clip(lam, 0.0, None)
    rho = (u * lam) @ u.conj().T
    rho = rho / np.trace(rho).real
    raw = (u * lam_raw) @ u.conj().T
    return DensityOperator(0.5 * (rho + rho.conj().T)), {
        "residual": residual, "levels": levels, "min_eigenvalue": float(lam_raw[0]),
        "clipped_weight": clipped, "raw": 0.5 * (raw + raw.conj().T)}


def quantize(h: HybridDensity, mode: ModeAssignment, residual_tol: float = RESIDUAL_TOL,
             tol_pos: float = TOL_POS) -> DensityOperator:
    return quantize_report(h, mode, residual_tol, tol_pos)[0]


def quantize_hamiltonian(h: HybridPolynomialHamiltonian, mode: ModeAssignment) -> HermitianOperator:
    """sum :x1^a p1^b: (x) C_ab with the normal order of the mode operators."""
    out = np.zeros((mode.n_max * h.dim,) * 2, dtype=complex)
    for t in h.terms:
        check_polynomial_degree({t.powers: 1.0}, h.max_degree)
        out += np.kron(order_normal({t.powers: 1.0}, mode.trunc).matrix, t.op)
    return HermitianOperator(out)


Observable = Mapping[tuple[int, int], "np.ndarray | float"]


def _ordered(f: Observable, mode: ModeAssignment, dim: int, order) -> np.ndarray:
    check_polynomial_degree({k: 1.0 for k in f}, D_MAX)
    out = np.zeros((mode.n_max * dim,) * 2, dtype=complex)
    for mono, c in f.items():
        c = np.asarray(c, dtype=complex)
        c = c * np.eye(dim) if c.ndim == 0 else c
        out += np.kron(order({mono: 1.0}, mode.trunc).matrix, c)
    return out


def quantize_observable(f: Observable, mode: ModeAssignment, dim: int = 1) -> HermitianOperator:
    """Weyl-symmetrized sum_ab sym(x1^a p1^b) (x) C_ab; scalar C means C times identity."""
    return HermitianOperator(_ordered(f, mode, dim, order_weyl))


def antinormal_observable(f: Observable, mode: ModeAssignment, dim: int = 1) -> HermitianOperator:
    return HermitianOperator(_ordered(f, mode, dim, order_antinormal))


def _fock_wigner(grid: PhaseGrid, n_max: int) -> np.ndarray:
    """W[x, p, m, n]: Wigner function of |m><n|, normalized to integrate to delta_mn."""
    X, P = grid.mesh
    alpha = (X + 1j * P) / sqrt(2)
    r2 = np.abs(alpha) ** 2
    w = np.zeros(grid.shape + (n_max, n_max), dtype=complex)
    for n in range(n_max):
        for m in range(n, n_max):
            d = m - n
            lag = eval_genlaguerre(n, d, 4 * r2)
            log_norm = 0.5 * (gammaln(n + 1) - gammaln(m + 1))
            val = ((-1) ** n / pi) * np.exp(log_norm - 2 * r2) * (2 * alpha.conj()) ** d * lag
            w[..., m, n] = val
            w[..., n, m] = val.conj()
    return w


def wigner_values(rho: np.ndarray, mode: ModeAssignment, grid: PhaseGrid) -> np.ndarray:
    """Operator-valued Wigner function over the mode, shape (n_x, n_p, dim, dim)."""
    r, _ = _split(np.asarray(rho, dtype=complex), mode.n_max)
    return np.einsum("xynm,nsmt->xyst", _fock_wigner(grid, mode.n_max), r, optimize=True)


def weyl_expectation(rho: np.ndarray, f: np.ndarray, mode: ModeAssignment, grid: PhaseGrid) -> float:
    """tr(rho' F) for the Weyl quantization F of the operator-valued grid function f."""
    w = wigner_values(rho, mode, grid)
    f = np.asarray(f)
    tr = np.einsum("xyst,xyts->xy", f, w) if f.ndim == 4 else f * np.trace(w, axis1=2, axis2=3)
    return float(integrate_array(grid, tr).real)


def robustness_check(h: HybridDensity, f: Observable | Callable, mode: ModeAssignment,
                     label: str = "f", residual_tol: float = RESIDUAL_TOL) -> ShiftReport:
    """Compare expectation values before and after quantizing the pair.

    ``f`` is a polynomial {(a, b): C} or a scalar function f(x, p) of the
    pair.  Reported per observable, with <f>_h the hybrid expectation:
    ``weyl`` = |<f>_h - tr(rho' F_weyl)| and, for polynomials,
    ``antinormal`` = |<f>_h - tr(rho' F_antinormal)|, which vanishes
    identically for the Husimi map.  Both use the unclipped least-squares
    inverse: clipping removes weight of order tol_pos from high Fock levels,
    where polynomial observables are large, and shifts expectations by
    roughly that weight times |F|.  ``weyl_clipped`` repeats the Weyl
    comparison on the clipped state returned by ``quantize``.
    """
    rho_p, diag = quantize_report(h, mode, residual_tol)
    raw = diag["raw"]
    grid = h.grid
    back = quantize(dequantize(rho_p, mode, grid), mode, residual_tol)
    report = ShiftReport(diag["residual"], trace_distance(back.matrix, rho_p.matrix),
                         diag["min_eigenvalue"], diag["clipped_weight"])
    if callable(f):
        X, P = grid.mesh
        vals = np.asarray(f(X, P), dtype=float)
        classical = expectation(h, HybridObservable.from_scalar(grid, vals, h.dim))
        report.discrepancies[label] = {
            "classical": classical,
            "weyl": abs(classical - weyl_expectation(raw, vals, mode, grid)),
            "weyl_clipped": abs(classical - weyl_expectation(rho_p.matrix, vals, mode, grid))}
        return report
    classical = expectation(h, HybridObservable.from_polynomial(grid, f, h.dim))
    fw = quantize_observable(f, mode, h.dim).matrix
    fa = antinormal_observable(f, mode, h.dim).matrix
    report.discrepancies[label] = {
        "classical": classical,
        "weyl": abs(classical - float(np.trace(raw @ fw).real)),
        "antinormal": abs(classical - float(np.trace(raw @ fa).real)),
        "weyl_clipped": abs(classical - float(np.trace(rho_p.matrix @ fw).real))}
    return report


def shift_dynamics_check(rho_prime: DensityOperator | np.ndarray, h: HybridPolynomialHamiltonian,
                         mode: ModeAssignment, times, dt: float | None = None,
                         grid: PhaseGrid | None = None) -> list:
    """Does shifting the cut commute with the dynamics?

    Path A evolves rho' exactly under the normal-ordered Hamiltonian and
    de-quantizes at each time; path B de-quantizes once and integrates the
    hybrid equation with the classical Hamiltonian.  Returns the L-infinity
    distance between the two fields at every requested time.  The paths
    agree exactly only when h is at most quadratic in the pair.  ``dt``
    defaults to 0.9 of the stability bound.
    """
    from .liouvillian import Generator, compile_hamiltonian, evolve

    rho = rho_prime.matrix if isinstance(rho_prime, HermitianOperator) else np.asarray(rho_prime)
    grid = grid if grid is not None else mode_grid(mode)
    times = sorted(float(t) for t in times)
    lam, u = np.linalg.eigh(quantize_hamiltonian(h, mode).matrix)
    start = dequantize(rho, mode, grid)
    tl = compile_hamiltonian(h)
    if dt is None:
        dt = 0.9 * Generator(tl, grid).max_stable_dt()
    _, snaps = evolve(start, tl, times[-1], dt, snapshots=times)
    out = []
    for t, b in zip(times, snaps):
        w = (u * np.exp(-1j * lam * t)) @ u.conj().T
        a = husimi_values(w @ rho @ w.conj().T, mode, grid)
        out.append(float(np.max(np.abs(a - b.values))))
    return out
