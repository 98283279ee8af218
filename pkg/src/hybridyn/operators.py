"""Dense operator algebra on small Hilbert spaces and one truncated bosonic mode.

Conventions: hbar = 1, [x, p] = i, a = (x + i p)/sqrt(2).  A coherent state
|x1, p1> is the eigenvector of x + i p with eigenvalue x1 + i p1, i.e.
a|alpha> = alpha|alpha> with alpha = (x1 + i p1)/sqrt(2).

Polynomials in the phase-space pair are plain dicts ``{(a, b): coeff}``
standing for sum coeff * x**a * p**b.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb, sqrt
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import DegreeError, TruncationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10

Poly = Mapping[tuple[int, int], complex]


def _scale(m: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * _scale(m))


@dataclass(frozen=True)
class HermitianOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"operator must be a non-empty square matrix, got shape {m.shape}")
        if not is_hermitian(m):
            raise ValueError("operator is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        flat = self.matrix.reshape(-1)
        return {"dim": self.dim, "entries": [[float(z.real), float(z.imag)] for z in flat]}

    @classmethod
    def from_dict(cls, d: dict):
        dim = int(d["dim"])
        entries = np.asarray(d["entries"], dtype=float)
        if entries.shape != (dim * dim, 2):
            raise ValueError(f"expected {dim * dim} [re, im] pairs, got shape {entries.shape}")
        return cls((entries[:, 0] + 1j * entries[:, 1]).reshape(dim, dim))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DensityOperator(HermitianOperator):
    def __post_init__(self):
        super().__post_init__()
        tr = np.trace(self.matrix).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density operator trace {tr!r} differs from 1")
        lam = np.linalg.eigvalsh(self.matrix)[0]
        if lam < -POSITIVITY_TOL:
            raise ValueError(f"density operator has negative eigenvalue {lam:.3e}")

    @classmethod
    def pure(cls, psi: Sequence[complex]) -> "DensityOperator":
        v = np.asarray(psi, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)


@dataclass(frozen=True)
class ProjectorSet:
    """Complete orthogonal family of Hermitian projectors with integer labels."""

    projectors: tuple
    labels: tuple = ()

    def __post_init__(self):
        ps = tuple(np.array(p, dtype=complex) for p in self.projectors)
        if not ps:
            raise ValueError("empty projector set")
        labels = tuple(int(n) for n in self.labels) or tuple(range(1, len(ps) + 1))
        if len(labels) != len(ps) or len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct and match the projectors")
        dim = ps[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for i, p in enumerate(ps):
            if p.shape != (dim, dim) or not is_hermitian(p):
                raise ValueError(f"projector {i} is not a Hermitian {dim}x{dim} matrix")
            if np.max(np.abs(p @ p - p)) > HERMITIAN_TOL:
                raise ValueError(f"projector {i} is not idempotent")
            for j in range(i):
                if np.max(np.abs(p @ ps[j])) > HERMITIAN_TOL:
                    raise ValueError(f"projectors {j} and {i} are not orthogonal")
            total += p
        if np.max(np.abs(total - np.eye(dim))) > HERMITIAN_TOL:
            raise ValueError("projectors do not sum to the identity")
        for p in ps:
            p.setflags(write=False)
        object.__setattr__(self, "projectors", ps)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    @classmethod
    def diagonal(cls, dim: int, labels: Sequence[int] | None = None) -> "ProjectorSet":
        ps = []
        for i in range(dim):
            p = np.zeros((dim, dim), dtype=complex)
            p[i, i] = 1.0
            ps.append(p)
        return cls(tuple(ps), tuple(labels) if labels is not None else ())

    @classmethod
    def from_basis(cls, basis: np.ndarray, groups: Sequence[Sequence[int]],
                   labels: Sequence[int] | None = None) -> "ProjectorSet":
        """Projectors onto spans of the given columns of a unitary ``basis``."""
        basis = np.asarray(basis, dtype=complex)
        ps = []
        for cols in groups:
            v = basis[:, list(cols)]
            ps.append(v @ v.conj().T)
        return cls(tuple(ps), tuple(labels) if labels is not None else ())


@dataclass(frozen=True)
class FockTruncation:
    n_max: int = 24

    def __post_init__(self):
        if int(self.n_max) < 2:
            raise ValueError("n_max must be at least 2")


def pointer_observable(ps: ProjectorSet, g: float) -> HermitianOperator:
    """g * sum_n n P_n."""
    a = sum(n * p for n, p in zip(ps.labels, ps.projectors))
    return HermitianOperator(g * a)


# -- single bosonic mode -----------------------------------------------------

def annihilation(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def position(n: int) -> np.ndarray:
    a = annihilation(n)
    return (a + a.conj().T) / sqrt(2)


def momentum(n: int) -> np.ndarray:
    a = annihilation(n)
    return (a - a.conj().T) / (1j * sqrt(2))


def coherent_amplitudes(x, p, n: int) -> np.ndarray:
    """Fock components <k|x, p> for k < n, broadcast over array-valued x, p.

    This is the exact projection of the normalized coherent state onto the
    first n Fock states; no tail check is made.
    """
    alpha = (np.asarray(x) + 1j * np.asarray(p)) / sqrt(2)
    k = np.arange(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mod = k * np.log(np.abs(alpha)[..., None]) - 0.5 * gammaln(k + 1)
    log_mod = np.where(k == 0, 0.0, log_mod)
    phase = np.exp(1j * k * np.angle(alpha)[..., None])
    return np.exp(log_mod - 0.5 * np.abs(alpha)[..., None] ** 2) * phase


def coherent_tail_mass(x1: float, p1: float, trunc: FockTruncation) -> float:
    """Probability carried by Fock states k >= n_max (Poisson upper tail)."""
    return float(gammainc(trunc.n_max, 0.5 * (x1 * x1 + p1 * p1)))


def coherent_state(x1: float, p1: float, trunc: FockTruncation = FockTruncation(),
                   tail_tol: float = 1e-10) -> np.ndarray:
    tail = coherent_tail_mass(x1, p1, trunc)
    if tail > tail_tol:
        raise TruncationError(
            f"coherent state at ({x1}, {p1}) leaks {tail:.2e} beyond n_max={trunc.n_max}")
    v = coherent_amplitudes(x1, p1, trunc.n_max)
    return v / np.linalg.norm(v)


# -- orderings ----------------------------------------------------------------

def poly_degree(poly: Poly) -> int:
    return max((a + b for (a, b), c in poly.items() if c != 0), default=0)


def _alpha_expansion(a: int, b: int) -> np.ndarray:
    """Coefficients c[j, k] with x**a p**b = sum c[j, k] conj(alpha)**j alpha**k."""
    s = 1 / sqrt(2)
    # x = (alpha + alpha*)/sqrt2,  p = -i (alpha - alpha*)/sqrt2
    out = np.zeros((a + b + 1, a + b + 1), dtype=complex)
    for i in range(a + 1):
        for j in range(b + 1):
            # choose i factors alpha* from x, j factors alpha* from p
            c = comb(a, i) * comb(b, j) * s ** (a + b) * (-1j) ** b * (-1) ** j
            out[i + j, (a - i) + (b - j)] += c
    return out


def _check_degree(poly: Poly, trunc: FockTruncation) -> int:
    deg = poly_degree(poly)
    if deg >= trunc.n_max:
        raise TruncationError(f"polynomial degree {deg} not below n_max={trunc.n_max}")
    return deg


def _crop_hermitian(m: np.ndarray, n: int) -> HermitianOperator:
    m = m[:n, :n]
    return HermitianOperator(0.5 * (m + m.conj().T))


def order_normal(poly: Poly, trunc: FockTruncation = FockTruncation()) -> HermitianOperator:
    """Normal-ordered operator: creation factors left of annihilation factors."""
    return _order_alpha(poly, trunc, normal=True)


def order_antinormal(poly: Poly, trunc: FockTruncation = FockTruncation()) -> HermitianOperator:
    """Anti-normal-ordered operator: annihilation factors left of creation factors."""
    return _order_alpha(poly, trunc, normal=False)


def _order_alpha(poly: Poly, trunc: FockTruncation, normal: bool) -> HermitianOperator:
    deg = _check_degree(poly, trunc)
    m = trunc.n_max + deg + 1
    a = annihilation(m)
    ad = a.conj().T
    apow = [np.linalg.matrix_power(a, k) for k in range(deg + 1)]
    adpow = [np.linalg.matrix_power(ad, k) for k in range(deg + 1)]
    out = np.zeros((m, m), dtype=complex)
    for (pa, pb), coeff in poly.items():
        if coeff == 0:
            continue
        if np.iscomplexobj(coeff) and np.imag(coeff) != 0:
            raise ValueError("ordering requires real polynomial coefficients")
        c = _alpha_expansion(pa, pb)
        for j, k in zip(*np.nonzero(np.abs(c) > 1e-15)):
            term = adpow[j] @ apow[k] if normal else apow[k] @ adpow[j]
            out += np.real(coeff) * c[j, k] * term
    return _crop_hermitian(out, trunc.n_max)


def order_weyl(poly: Poly, trunc: FockTruncation = FockTruncation()) -> HermitianOperator:
    """Weyl (fully symmetrized) ordering of each monomial.

    Uses McCoy's form sym(x**a p**b) = 2**-a sum_k C(a, k) x**k p**b x**(a-k).
    """
    deg = _check_degree(poly, trunc)
    m = trunc.n_max + deg + 1
    x, p = position(m), momentum(m)
    xpow = [np.linalg.matrix_power(x, k) for k in range(deg + 1)]
    ppow = [np.linalg.matrix_power(p, k) for k in range(deg + 1)]
    out = np.zeros((m, m), dtype=complex)
    for (pa, pb), coeff in poly.items():
        if coeff == 0:
            continue
        if np.iscomplexobj(coeff) and np.imag(coeff) != 0:
            raise ValueError("ordering requires real polynomial coefficients")
        sym = sum(comb(pa, k) * xpow[k] @ ppow[pb] @ xpow[pa - k] for k in range(pa + 1))
        out += np.real(coeff) * sym / 2**pa
    return _crop_hermitian(out, trunc.n_max)


def check_polynomial_degree(poly: Poly, max_degree: int) -> None:
    deg = poly_degree(poly)
    if deg > max_degree:
        raise DegreeError(f"degree {deg} exceeds bound {max_degree}")


# -- misc ---------------------------------------------------------------------

def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2).conj())


PAULI = {
    "identity": np.eye(2, dtype=complex),
    "sigma_x": np.array([[0, 1], [1, 0]], dtype=complex),
    "sigma_y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "sigma_z": np.array([[1, 0], [0, -1]], dtype=complex),
}

