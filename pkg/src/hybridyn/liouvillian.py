"""Compile the canonical hybrid equation of motion into an applicable term list.

For a Hamiltonian sum_{a,b} x**a p**b C_ab the generator is

    d rho/dt = -i sum C_ab (x + Dx)**a (p + Dp)**b rho + h.c.,
    Dx = (d/dx + i d/dp)/2,   Dp = (d/dp - i d/dx)/2,

with every derivative acting on rho only (multiplicative factors stay to the
left).  The expansion is finite for polynomial Hamiltonians.  Each compiled
term is ``c(x, p) * C @ d^j_x d^k_p rho``; its Hermitian partner
``conj(c) * (d rho) @ C^dagger`` is added when the list is applied.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from math import ceil, comb, pi
from typing import Mapping, Sequence

import numpy as np

from .errors import DegreeError, StabilityError
from .grid import LEAK_TOL, PhaseGrid, check_boundary, integrate_array, spectral_multipliers
from .operators import is_hermitian
from .state import HybridDensity, hermiticity_error

D_MAX = 4
STABILITY_C = 0.5


@dataclass(frozen=True)
class HamiltonianTerm:
    powers: tuple[int, int]
    op: np.ndarray
    name: str = ""

    def __post_init__(self):
        op = np.array(self.op, dtype=complex)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ValueError("Hamiltonian coefficient must be a square matrix")
        if not is_hermitian(op):
            raise ValueError(f"coefficient of x^{self.powers[0]} p^{self.powers[1]} is not Hermitian")
        op.setflags(write=False)
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "powers", (int(self.powers[0]), int(self.powers[1])))


@dataclass(frozen=True)
class HybridPolynomialHamiltonian:
    """H(x, p) = sum over terms of x**a p**b times a Hermitian matrix."""

    dim: int
    terms: tuple = ()
    max_degree: int = D_MAX

    def __post_init__(self):
        terms = tuple(self.terms)
        for t in terms:
            if t.op.shape != (self.dim, self.dim):
                raise ValueError(f"term {t.name!r} has shape {t.op.shape}, expected dim {self.dim}")
        object.__setattr__(self, "terms", terms)

    @property
    def degree(self) -> int:
        return max((sum(t.powers) for t in self.terms), default=0)

    @classmethod
    def scalar(cls, poly: Mapping[tuple[int, int], float], dim: int = 1) -> "HybridPolynomialHamiltonian":
        """Purely classical H_C(x, p) times the identity."""
        eye = np.eye(dim)
        terms = [HamiltonianTerm(k, c * eye, "I") for k, c in poly.items() if c != 0]
        return cls(dim, tuple(terms))

    @classmethod
    def constant(cls, op: np.ndarray, name: str = "H_Q") -> "HybridPolynomialHamiltonian":
        op = np.asarray(op)
        return cls(op.shape[0], (HamiltonianTerm((0, 0), op, name),))

    def __add__(self, other: "HybridPolynomialHamiltonian") -> "HybridPolynomialHamiltonian":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return HybridPolynomialHamiltonian(self.dim, self.terms + other.terms,
                                           max(self.max_degree, other.max_degree))

    def scaled(self, s: float) -> "HybridPolynomialHamiltonian":
        return HybridPolynomialHamiltonian(
            self.dim, tuple(HamiltonianTerm(t.powers, s * t.op, t.name) for t in self.terms),
            self.max_degree)


@dataclass(frozen=True)
class LiouvillianTerm:
    op: np.ndarray
    op_name: str
    poly: dict
    deriv: tuple[int, int]


@dataclass(frozen=True)
class LiouvillianTermList:
    dim: int
    terms: tuple = ()

    def __len__(self):
        return len(self.terms)

    def superoperator_terms(self) -> dict:
        """The list made explicitly closed under h.c.

        Keys are ``(side, op_name, deriv)`` with side "L" for ``C @ d rho`` and
        "R" for ``d rho @ C``; values are coefficient polynomials.
        """
        out: dict = {}
        for t in self.terms:
            out[("L", t.op_name, t.deriv)] = dict(t.poly)
            out[("R", t.op_name, t.deriv)] = {m: complex(c).conjugate() for m, c in t.poly.items()}
        return out

    def scalar_generator(self) -> dict:
        """For identity-proportional coefficients: {deriv: {monomial: real coeff}}."""
        out: dict = defaultdict(lambda: defaultdict(float))
        for t in self.terms:
            s = t.op[0, 0]
            if not np.allclose(t.op, s * np.eye(self.dim), atol=0, rtol=0):
                raise ValueError(f"term {t.op_name!r} is not proportional to the identity")
            for m, c in t.poly.items():
                out[t.deriv][m] += 2 * (c * s).real
        out = {d: {m: float(c) for m, c in p.items() if c != 0} for d, p in out.items()}
        return {d: p for d, p in out.items() if p}

    def dump(self) -> str:
        lines = []
        for t in self.terms:
            lines.append(f"op={t.op_name} d=({t.deriv[0]},{t.deriv[1]}) coeff={format_poly(t.poly)}")
        return "\n".join(lines)


def format_poly(poly: Mapping[tuple[int, int], complex]) -> str:
    parts = []
    for (a, b), c in sorted(poly.items()):
        c = complex(c)
        mono = "*".join(s for s in (f"x^{a}" if a else "", f"p^{b}" if b else "") if s) or "1"
        parts.append(f"({c.real:+.17g}{c.imag:+.17g}j)*{mono}")
    return " + ".join(parts) or "0"


def _d_expansion(j: int, k: int) -> dict:
    """Dx**j Dp**k as {(jx, jp): coeff} over real partial derivatives."""
    out: dict = defaultdict(complex)
    scale = 0.5 ** (j + k)
    for u in range(j + 1):
        # (d_x + i d_p)**j
        cu = comb(j, u) * 1j**u
        for v in range(k + 1):
            # (d_p - i d_x)**k, v factors of d_p
            cv = comb(k, v) * (-1j) ** (k - v)
            out[(j - u + k - v, u + v)] += scale * cu * cv
    return out


def compile_hamiltonian(h: HybridPolynomialHamiltonian) -> LiouvillianTermList:
    if h.degree > h.max_degree:
        raise DegreeError(f"Hamiltonian degree {h.degree} exceeds bound {h.max_degree}")
    ops: list[tuple[np.ndarray, str]] = []
    acc: dict = defaultdict(lambda: defaultdict(complex))

    def op_index(term: HamiltonianTerm) -> int:
        for i, (m, _) in enumerate(ops):
            if np.array_equal(m, term.op):
                return i
        ops.append((term.op, term.name or f"op{len(ops)}"))
        return len(ops) - 1

    for term in h.terms:
        if not np.any(term.op):
            continue
        idx = op_index(term)
        a, b = term.powers
        for j in range(a + 1):
            for k in range(b + 1):
                base = -1j * comb(a, j) * comb(b, k)
                mono = (a - j, b - k)
                for d, c in _d_expansion(j, k).items():
                    acc[(idx, d)][mono] += base * c

    terms = []
    for (idx, d), poly in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        poly = {m: c for m, c in sorted(poly.items()) if c != 0}
        if poly:
            op, name = ops[idx]
            terms.append(LiouvillianTerm(op, name, poly, d))
    return LiouvillianTermList(h.dim, tuple(terms))


class Generator:
    """A term list bound to a grid: precomputed coefficient fields and multipliers.

    Identity-proportional terms are merged with their h.c. partner into one
    real coefficient ``2 Re(c)``; terms whose merged coefficient vanishes are
    dropped.  Terms sharing an operator are summed before the matrix product.
    """

    def __init__(self, tl: LiouvillianTermList, grid: PhaseGrid, leak_tol: float | None = LEAK_TOL):
        self.tl = tl
        self.grid = grid
        self.leak_tol = leak_tol
        X, P = grid.mesh
        eye = np.eye(tl.dim)
        self.groups: list[tuple[np.ndarray | None, list]] = []
        sym: list = []
        for t in tl.terms:
            f = np.zeros(grid.shape, dtype=complex)
            for (a, b), c in t.poly.items():
                f += c * X**a * P**b
            s = t.op[0, 0]
            if np.array_equal(t.op, s * eye):
                f = 2 * (s * f).real
                if np.any(f):
                    sym.append((t.deriv, 0.5 * f[..., None, None]))
                continue
            for op, members in self.groups:
                if op is t.op or np.array_equal(op, t.op):
                    members.append((t.deriv, f[..., None, None]))
                    break
            else:
                self.groups.append((t.op, [(t.deriv, f[..., None, None])]))
        if sym:
            self.groups.append((None, sym))
        self._bound_terms = [(d, f, op) for op, members in self.groups for d, f in members]
        kx, kp = grid.wavenumbers
        self._mult = {}
        for d, _, _ in self._bound_terms:
            if d == (0, 0) or d in self._mult:
                continue
            m = spectral_multipliers(grid, *d)
            if d[1] == 0:
                m = m[:, 0:1]
            elif d[0] == 0:
                m = m[0:1, :]
            self._mult[d] = m[..., None, None]

    def _derivatives(self, values: np.ndarray) -> dict:
        out = {(0, 0): values}
        spec = {}
        for d, m in self._mult.items():
            axes = (0,) if d[1] == 0 else (1,) if d[0] == 0 else (0, 1)
            if axes not in spec:
                spec[axes] = np.fft.fftn(values, axes=axes)
            out[d] = np.fft.ifftn(m * spec[axes], axes=axes)
        return out

    def __call__(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(values.shape, dtype=np.result_type(values.dtype, np.complex128))
        if not self.groups:
            return out
        check_boundary(values, self.leak_tol)
        d_rho = self._derivatives(values)
        for op, members in self.groups:
            acc = sum(f * d_rho[d] for d, f in members)
            out += acc if op is None else np.matmul(op, acc)
        return out + np.swapaxes(out, -1, -2).conj()

    def max_stable_dt(self, c: float = STABILITY_C,
                      cutoff: tuple[float | None, float | None] | None = None) -> float:
        """Largest dt with c*pi >= dt * sum_terms rate * kx^jx kp^jp.

        k is the Nyquist wavenumber pi/dx (pi/dp), or the low-pass cutoff when
        one is in force.  The rate of c(x,p) (C rho + rho C) + h.c. is bounded
        by 2|Re c| ||C|| + |Im c| (spread of C's spectrum).
        """
        kx, kp = pi / self.grid.dx, pi / self.grid.dp
        if cutoff is not None:
            kx = kx if cutoff[0] is None else min(kx, cutoff[0])
            kp = kp if cutoff[1] is None else min(kp, cutoff[1])
        lam = 0.0
        for (jx, jp), f, op in self._bound_terms:
            f = f[..., 0, 0]
            if op is None:
                rate = 2 * np.abs(f)
            else:
                ev = np.linalg.eigvalsh(op)
                rate = 2 * np.abs(f.real) * np.max(np.abs(ev)) + np.abs(f.imag) * (ev[-1] - ev[0])
            lam += float(np.max(rate)) * kx ** jx * kp ** jp
        return np.inf if lam == 0 else c * pi / lam


def apply(tl: LiouvillianTermList, h: HybridDensity, leak_tol: float | None = LEAK_TOL) -> np.ndarray:
    """Right-hand side of the hybrid equation, shape (n_x, n_p, dim, dim)."""
    return Generator(tl, h.grid, leak_tol)(h.values)


@dataclass
class Monitor:
    """Per-step record of normalization and Hermiticity during ``evolve``."""

    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    hermiticity: list = field(default_factory=list)
    min_eigenvalues: list = field(default_factory=list)
    track_positivity: bool = False

    def record(self, t: float, grid: PhaseGrid, values: np.ndarray) -> None:
        self.times.append(t)
        self.norms.append(float(integrate_array(grid, np.trace(values, axis1=2, axis2=3)).real))
        self.hermiticity.append(hermiticity_error(values))
        if self.track_positivity:
            v = 0.5 * (values + np.swapaxes(values, -1, -2).conj())
            self.min_eigenvalues.append(float(np.min(np.linalg.eigvalsh(v))))

    def drift_rate(self) -> float:
        if len(self.times) < 2 or self.times[-1] == self.times[0]:
            return 0.0
        n = np.asarray(self.norms)
        return float(np.max(np.abs(n - n[0])) / (self.times[-1] - self.times[0]))


def rk4_step(gen: Generator, values: np.ndarray, dt: float) -> np.ndarray:
    k1 = gen(values)
    k2 = gen(values + 0.5 * dt * k1)
    k3 = gen(values + 0.5 * dt * k2)
    k4 = gen(values + dt * k3)
    return values + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


class SpectralFilter:
    """Low-pass applied after every RK4 step.

    ``cutoff = (kx_c, kp_c)`` keeps |k| <= k_c on each axis (None: unfiltered).
    Alternatively ``p_mask`` of shape (n_p, dim, dim) gives, per matrix entry
    in the basis ``basis`` (columns), a weight in [0, 1] for every
    p-wavenumber.  ``kmax`` is the largest |k| with weight above one half on
    each axis, used by the stability bound.
    """

    def __init__(self, grid: PhaseGrid, cutoff=(None, None), p_mask: np.ndarray | None = None,
                 basis: np.ndarray | None = None):
        kx, kp = grid.wavenumbers
        self.masks = []
        self.basis = basis
        for axis, (k, kc) in enumerate(zip((kx, kp), cutoff)):
            if kc is not None:
                shape = (-1, 1, 1, 1) if axis == 0 else (1, -1, 1, 1)
                self.masks.append((axis, (np.abs(k) <= kc).astype(float).reshape(shape)))
        kmax = list(cutoff)
        if p_mask is not None:
            m = np.asarray(p_mask, dtype=float)
            if not np.all(m == 1.0):
                self.masks.append((1, m[None]))
            kept = float(np.max(np.abs(kp)[np.any(m > 0.5, axis=(1, 2))], initial=0.0))
            kmax[1] = kept if kmax[1] is None else min(kmax[1], kept)
        self.kmax = tuple(kmax)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if not self.masks:
            return values
        u = self.basis
        if u is not None:
            values = u.conj().T @ values @ u
        for axis, m in self.masks:
            values = np.fft.ifft(m * np.fft.fft(values, axis=axis), axis=axis)
        if u is not None:
            values = u @ values @ u.conj().T
        return 0.5 * (values + np.swapaxes(values, -1, -2).conj())


def evolve(h0: HybridDensity, tl: LiouvillianTermList, t_final: float, dt: float,
           monitor: Monitor | None = None, drift_budget: float = 1e-6,
           leak_tol: float | None = LEAK_TOL, stability_c: float = STABILITY_C,
           snapshots: Sequence[float] = (),
           cutoff: tuple[float | None, float | None] | SpectralFilter | None = None,
           dtype=np.complex128) -> HybridDensity | tuple[HybridDensity, list]:
    """Fixed-step RK4 from 0 to ``t_final``.

    The step is shrunk so that an integer number of steps lands on
    ``t_final``.  With ``snapshots`` (times in [0, t_final]) the states at
    those times are returned as well; snapshot times are hit exactly by
    splitting the run into segments.

    ``cutoff = (kx_c, kp_c)`` zeroes Fourier modes with |k| above the given
    wavenumbers after every step (None leaves an axis alone); a
    ``SpectralFilter`` allows per-entry cutoffs.  ``dtype``
    sets the working precision (e.g. ``np.clongdouble``); the returned state
    is always complex128.
    """
    if t_final < 0 or dt <= 0:
        raise ValueError("need t_final >= 0 and dt > 0")
    gen = Generator(tl, h0.grid, leak_tol)
    lowpass = None
    if cutoff is not None:
        lowpass = cutoff if isinstance(cutoff, SpectralFilter) else SpectralFilter(h0.grid, cutoff)
    bound = gen.max_stable_dt(stability_c, lowpass.kmax if lowpass else None)
    marks = sorted({float(t) for t in snapshots} | {float(t_final)})
    if marks[0] < 0 or marks[-1] > t_final:
        raise ValueError("snapshot times must lie in [0, t_final]")
    values = np.array(h0.values, dtype=dtype)
    norm0 = h0.norm()
    if monitor is not None:
        monitor.record(0.0, h0.grid, values)
    t = 0.0
    snaps = []
    snap_set = {float(s) for s in snapshots}
    for mark in marks:
        span = mark - t
        n = int(ceil(span / dt - 1e-9)) if span > 0 else 0
        step = span / n if n else 0.0
        if step > bound * (1 + 1e-12):
            raise StabilityError(f"dt={step:.3g} exceeds stability bound {bound:.3g}")
        for i in range(n):
            values = rk4_step(gen, values, step)
            if lowpass is not None:
                values = lowpass(values)
            tt = t + (i + 1) * step
            norm = float(integrate_array(h0.grid, np.trace(values, axis1=2, axis2=3)).real)
            if not np.isfinite(norm) or abs(norm - norm0) > drift_budget * max(tt, 1.0):
                raise StabilityError(f"normalization drifted to {norm!r} at t={tt:.4g}")
            if monitor is not None:
                monitor.record(tt, h0.grid, values)
        t = mark
        if mark in snap_set:
            snaps.append(HybridDensity(h0.grid, values.astype(complex), check=False))
    final = HybridDensity(h0.grid, values.astype(complex), check=False)
    return (final, snaps) if snapshots else final
