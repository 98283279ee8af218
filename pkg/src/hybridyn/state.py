"""Hybrid densities: operator-valued fields over a classical phase-space grid."""
from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import NormalizationError, PositivityWarning, UnsupportedPoint
from .grid import PhaseGrid, ScalarField, integrate_array
from .operators import DensityOperator, hermitian_part

NORM_TOL = 1e-8
HERMITIAN_FIELD_TOL = 1e-10
POSITIVITY_TOL = 1e-8
COND_EPS = 1e-12


@dataclass(frozen=True)
class HybridDensity:
    """rho(x, p) stored as an array of shape (n_x, n_p, dim, dim).

    Hermiticity and normalization are checked on construction.  Pointwise
    non-negativity is only a diagnostic (see ``min_eigenvalue``).
    """

    grid: PhaseGrid
    values: np.ndarray
    check: bool = True

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim != 4 or v.shape[:2] != self.grid.shape or v.shape[2] != v.shape[3]:
            raise ValueError(f"bad hybrid density shape {v.shape} for grid {self.grid.shape}")
        if self.check:
            err = hermiticity_error(v)
            if err > HERMITIAN_FIELD_TOL:
                raise ValueError(f"hybrid density not Hermitian pointwise (error {err:.2e})")
            n = self.norm()
            if abs(n - 1.0) > NORM_TOL:
                raise NormalizationError(f"hybrid density integrates to {n!r}, not 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def norm(self) -> float:
        tr = np.trace(self.values, axis1=2, axis2=3)
        return float(integrate_array(self.grid, tr).real)

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(hermitian_part(self.values))))

    def diagnostics(self, tol_pos: float = POSITIVITY_TOL) -> dict:
        lam = self.min_eigenvalue()
        return {
            "norm": self.norm(),
            "hermiticity_error": hermiticity_error(self.values),
            "min_eigenvalue": lam,
            "positive": lam >= -tol_pos,
        }

    def to_npz(self) -> bytes:
        buf = io.BytesIO()
        np.savez(buf, values=self.values, grid=json.dumps(self.grid.to_dict()))
        return buf.getvalue()

    @classmethod
    def from_npz(cls, data: bytes) -> "HybridDensity":
        with np.load(io.BytesIO(data)) as z:
            grid = PhaseGrid(**json.loads(str(z["grid"])))
            return cls(grid, z["values"])

    def to_dict(self) -> dict:
        v = self.values
        return {"grid": self.grid.to_dict(), "dim": self.dim,
                "re": v.real.tolist(), "im": v.imag.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HybridDensity":
        v = np.asarray(d["re"]) + 1j * np.asarray(d["im"])
        return cls(PhaseGrid(**d["grid"]), v)


def hermiticity_error(values: np.ndarray) -> float:
    return float(np.max(np.abs(values - np.swapaxes(values, -1, -2).conj()), initial=0.0))


@dataclass(frozen=True)
class HybridObservable:
    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim != 4 or v.shape[:2] != self.grid.shape:
            raise ValueError("observable must have shape (n_x, n_p, dim, dim)")
        if hermiticity_error(v) > HERMITIAN_FIELD_TOL * max(1.0, float(np.max(np.abs(v)))):
            raise ValueError("observable is not Hermitian pointwise")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_polynomial(cls, grid: PhaseGrid, terms: Mapping[tuple[int, int], np.ndarray | float],
                        dim: int) -> "HybridObservable":
        """sum over {(a, b): C} of x**a p**b C; scalar C means C times identity."""
        X, P = grid.mesh
        v = np.zeros(grid.shape + (dim, dim), dtype=complex)
        for (a, b), c in terms.items():
            c = np.asarray(c, dtype=complex)
            c = c * np.eye(dim) if c.ndim == 0 else c
            v += (X**a * P**b)[..., None, None] * c
        return cls(grid, v)

    @classmethod
    def from_scalar(cls, grid: PhaseGrid, f: np.ndarray, dim: int) -> "HybridObservable":
        return cls(grid, np.asarray(f)[..., None, None] * np.eye(dim))


def product_state(rho_q: DensityOperator, rho_c: ScalarField) -> HybridDensity:
    c = np.asarray(rho_c.values)
    if np.iscomplexobj(c):
        c = c.real
    if np.min(c) < -POSITIVITY_TOL:
        raise NormalizationError("classical density has negative values")
    n = float(integrate_array(rho_c.grid, c))
    if abs(n - 1.0) > NORM_TOL:
        raise NormalizationError(f"classical density integrates to {n!r}, not 1")
    return HybridDensity(rho_c.grid, c[..., None, None] * rho_q.matrix)


def classical_marginal(h: HybridDensity) -> ScalarField:
    tr = np.trace(h.values, axis1=2, axis2=3).real
    if np.min(tr) < -POSITIVITY_TOL:
        warnings.warn(f"classical marginal dips to {np.min(tr):.2e}", PositivityWarning)
    return ScalarField(h.grid, tr)


def quantum_marginal(h: HybridDensity) -> DensityOperator:
    return DensityOperator(hermitian_part(integrate_array(h.grid, h.values)))


def _nearest(grid: PhaseGrid, x: float, p: float) -> tuple[int, int]:
    i = int(round((x - grid.x_min) / grid.dx))
    j = int(round((p - grid.p_min) / grid.dp))
    if not (0 <= i < grid.n_x and 0 <= j < grid.n_p):
        raise UnsupportedPoint(f"({x}, {p}) lies outside the grid")
    return i, j


def conditional_state(h: HybridDensity, x: float, p: float, eps: float = COND_EPS,
                      tol_pos: float = POSITIVITY_TOL) -> DensityOperator:
    """rho(x, p) / rho_C(x, p) at the grid point nearest to (x, p).

    Negative eigenvalues are clipped and the trace restored; a warning is
    raised when they are below -tol_pos.
    """
    i, j = _nearest(h.grid, x, p)
    m = h.values[i, j]
    rc = np.trace(m).real
    if rc <= eps:
        raise UnsupportedPoint(f"classical density {rc:.2e} at ({x}, {p}) is below {eps:.0e}")
    m = hermitian_part(m / rc)
    lam, u = np.linalg.eigh(m)
    if lam[0] >= 0:
        return DensityOperator(m)
    # discretization noise can push a conditional slightly out of the cone
    if lam[0] < -tol_pos:
        warnings.warn(f"conditional state at ({x}, {p}) has eigenvalue {lam[0]:.2e}; clipped",
                      PositivityWarning)
    lam = np.clip(lam, 0.0, None)
    return DensityOperator(hermitian_part((u * (lam / lam.sum())) @ u.conj().T))


def conditional_field(h: HybridDensity, eps: float = COND_EPS) -> tuple[np.ndarray, np.ndarray]:
    """All conditional states at once plus the mask of points where they exist."""
    rc = np.trace(h.values, axis1=2, axis2=3).real
    mask = rc > eps
    out = np.zeros_like(h.values)
    out[mask] = h.values[mask] / rc[mask][:, None, None]
    return out, mask


def expectation(h: HybridDensity, f: HybridObservable) -> float:
    if f.grid != h.grid:
        raise ValueError("observable and state live on different grids")
    tr = np.einsum("xyij,xyji->xy", f.values, h.values)
    return float(integrate_array(h.grid, tr).real)
