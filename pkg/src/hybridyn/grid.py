"""Rectangular periodic phase-space grid with Fourier calculus and quadrature."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BoundaryLeakError, DomainTooSmall

LEAK_TOL = 1e-12
AXES = {"x": 0, "p": 1}


@dataclass(frozen=True)
class PhaseGrid:
    """Points x_i = x_min + i*dx for i < n_x (right end excluded), same for p."""

    x_min: float
    x_max: float
    p_min: float
    p_max: float
    n_x: int = 128
    n_p: int = 128

    def __post_init__(self):
        if self.n_x < 16 or self.n_p < 16:
            raise ValueError("grid needs at least 16 points per axis")
        if not (self.x_max > self.x_min and self.p_max > self.p_min):
            raise ValueError("domain lengths must be positive")
        if self.dx * self.dp > 1.0:
            raise ValueError(f"cell area {self.dx * self.dp:.3g} exceeds one Planck cell")

    @classmethod
    def square(cls, half_width: float, n: int = 128) -> "PhaseGrid":
        return cls(-half_width, half_width, -half_width, half_width, n, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_area(self) -> float:
        return self.dx * self.dp

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_p)

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @cached_property
    def p(self) -> np.ndarray:
        return self.p_min + self.dp * np.arange(self.n_p)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.p, indexing="ij")

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        kx = 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)
        kp = 2 * np.pi * np.fft.fftfreq(self.n_p, d=self.dp)
        return kx, kp

    def fits(self, x0: float, p0: float, margin: float) -> bool:
        return (self.x_min + margin <= x0 <= self.x_max - self.dx - margin
                and self.p_min + margin <= p0 <= self.p_max - self.dp - margin)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "p_min": self.p_min,
                "p_max": self.p_max, "n_x": self.n_x, "n_p": self.n_p}


@dataclass(frozen=True)
class ScalarField:
    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_csv(self) -> str:
        return field_to_csv(self)


def boundary_max(values: np.ndarray) -> float:
    """Largest magnitude on the outer rows/columns of the first two axes."""
    edges = [values[0], values[-1], values[:, 0], values[:, -1]]
    return float(max(np.max(np.abs(e)) for e in edges))


def check_boundary(values: np.ndarray, tol: float | None = LEAK_TOL) -> None:
    """Raise unless the field decays at the domain edge; ``tol=None`` means periodic data."""
    if tol is None:
        return
    b = boundary_max(values)
    if b > tol:
        raise BoundaryLeakError(f"field reaches {b:.2e} on the domain boundary (tol {tol:.0e})")


def spectral_multipliers(grid: PhaseGrid, jx: int, jp: int) -> np.ndarray:
    """(i k_x)**jx (i k_p)**jp on the FFT lattice; odd orders drop the Nyquist mode."""
    kx, kp = grid.wavenumbers
    mx = (1j * kx) ** jx
    mp = (1j * kp) ** jp
    if jx % 2 and grid.n_x % 2 == 0:
        mx[grid.n_x // 2] = 0.0
    if jp % 2 and grid.n_p % 2 == 0:
        mp[grid.n_p // 2] = 0.0
    return np.outer(mx, mp)


def derivative_array(grid: PhaseGrid, values: np.ndarray, jx: int, jp: int,
                     leak_tol: float | None = LEAK_TOL) -> np.ndarray:
    """d^jx/dx^jx d^jp/dp^jp of an array whose first two axes are the grid."""
    check_boundary(values, leak_tol)
    if jx == jp == 0:
        return np.array(values, dtype=complex)
    mult = spectral_multipliers(grid, jx, jp)
    mult = mult.reshape(mult.shape + (1,) * (np.ndim(values) - 2))
    out = np.fft.ifft2(mult * np.fft.fft2(values, axes=(0, 1)), axes=(0, 1))
    return out


def derivative(f: ScalarField, axis: str, order: int = 1, leak_tol: float | None = LEAK_TOL) -> ScalarField:
    if order < 1:
        raise ValueError("derivative order must be positive")
    jx, jp = (order, 0) if AXES[axis] == 0 else (0, order)
    out = derivative_array(f.grid, f.values, jx, jp, leak_tol)
    if not np.iscomplexobj(f.values):
        out = out.real
    return ScalarField(f.grid, out)


def integrate_array(grid: PhaseGrid, values: np.ndarray):
    return grid.cell_area * np.sum(values, axis=(0, 1))


def integrate(f: ScalarField):
    return integrate_array(f.grid, f.values)


def gaussian(grid: PhaseGrid, x0: float = 0.0, p0: float = 0.0, var: float = 1.0) -> ScalarField:
    """exp(-((x-x0)^2 + (p-p0)^2) / 2var) / (2 pi var)."""
    if var <= 0:
        raise ValueError("variance must be positive")
    if not grid.fits(x0, p0, 6 * np.sqrt(var)):
        raise DomainTooSmall(f"6 sigma around ({x0}, {p0}) does not fit in the grid")
    return ScalarField(grid, gaussian_values(grid, x0, p0, var))


def gaussian_values(grid: PhaseGrid, x0: float = 0.0, p0: float = 0.0, var: float = 1.0) -> np.ndarray:
    X, P = grid.mesh
    return np.exp(-((X - x0) ** 2 + (P - p0) ** 2) / (2 * var)) / (2 * np.pi * var)


def field_to_csv(f: ScalarField) -> str:
    v = np.asarray(f.values)
    if np.iscomplexobj(v):
        if np.max(np.abs(v.imag), initial=0.0) > 0:
            raise ValueError("CSV export supports real fields only")
        v = v.real
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "p", "value"])
    X, P = f.grid.mesh
    for x, p, val in zip(X.ravel(), P.ravel(), v.ravel()):
        w.writerow([f"{x:.17g}", f"{p:.17g}", f"{val:.17g}"])
    return buf.getvalue()


def field_from_csv(text: str, grid: PhaseGrid) -> ScalarField:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["x", "p", "value"]:
        raise ValueError("missing x,p,value header")
    vals = np.array([float(r[2]) for r in rows[1:]])
    return ScalarField(grid, vals.reshape(grid.shape))
