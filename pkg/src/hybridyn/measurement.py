"""Detector-system interaction: an impulsive coupling p g A between a classical
pointer (x, p) and a quantum observable A = sum_n n P_n.

Two routes to the post-kick hybrid state are provided.  ``kick_closed_form``
solves the kick generator block by block: block P_n rho P_m of a Gaussian
pointer is shifted by (n+m)g/2 in x, picks up the phase exp(-i(n-m)gp/2) and is
damped by exp(-(n-m)^2 g^2/8).  ``kick_numeric`` integrates the compiled
generator with RK4 over a rectangular pulse.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from math import ceil, pi

import numpy as np
from scipy.special import erfc

from .errors import DomainTooSmall, NonGaussianInitial, PeakOverlapWarning
from .grid import PhaseGrid, ScalarField, gaussian, gaussian_values, integrate_array
from .liouvillian import (Generator, HamiltonianTerm, HybridPolynomialHamiltonian, Monitor,
                          SpectralFilter, compile_hamiltonian, evolve)
from .operators import DensityOperator, ProjectorSet, pointer_observable
from .state import HybridDensity, product_state

G_MIN = 4.0
G_COMFORT = 8.0
MASS_FLOOR = 1e-9
KICK_LEAK_TOL = 1e-4
KICK_ROLLOFF = 1.0
KICK_LOG_RANGE = 36.8  # -ln of double-precision round-off


def kick_band(g: float, delta: int, var: float = 1.0) -> tuple[float, float]:
    """p-wavenumbers (k_lo, k_hi) kept for block (n, m), delta = n - m, in the numeric kick.

    Under the kick the block's p-spectrum is carried towards
    -delta*g*|1 - 1/2var| while mode k is amplified at rate delta*g*k/2, so
    content starting at k0 on the growing side gains exp(k0^2/4) before it
    turns.  On a periodic grid the transport also wraps the spectrum around,
    and wrapped round-off then grows without bound.  The band stops on the
    growing side where the Gaussian spectrum exp(-var k^2/2) has fallen as
    far as round-off gets amplified, and on the decaying side a band-width
    past the final centre.  Blocks with |delta| >= 2 get a narrower growing
    side: their fed growth is faster and, for g >= 8, the exact block ends
    below round-off anyway.
    """
    w = np.sqrt(2 * KICK_LOG_RANGE / var) / max(abs(delta), 1)
    reach = abs(delta) * g * abs(1 - 0.5 / var) + w
    if delta > 0:
        return -reach, w
    if delta < 0:
        return -w, reach
    return -np.inf, np.inf


def measurement_grid(labels, g: float, x0: float = 0.0, p0: float = 0.0, var: float = 1.0,
                     n_x: int = 128, n_p: int | None = None) -> PhaseGrid:
    """Grid holding every shifted pointer peak with 8 sigma of margin.

    The p-axis resolves the nearest-neighbour band of ``kick_band``;
    resolving much more only hands the filter more round-off to discard.
    """
    s = np.sqrt(var)
    lo, hi = min(labels), max(labels)
    x_lo = x0 + g * min(lo, 0) - 8 * s
    x_hi = x0 + g * max(hi, 0) + 8 * s
    half = 8 * s
    if n_p is None:
        need = -kick_band(g, 1, var)[0] * 2 * half / pi
        n_p = max(64, 2 * int(ceil(need / 2)))
    return PhaseGrid(float(x_lo), float(x_hi), float(p0 - half), float(p0 + half), n_x, n_p)


@dataclass(frozen=True)
class MeasurementConfig:
    ps: ProjectorSet
    g: float
    rho_i: DensityOperator
    epsilon: float = 1e-2
    x0: float = 0.0
    p0: float = 0.0
    var: float = 1.0
    grid: PhaseGrid | None = None
    rho_c: ScalarField | None = None
    strict: bool = True

    def __post_init__(self):
        if self.rho_i.dim != self.ps.dim:
            raise ValueError("initial state and projectors act on different spaces")
        if self.strict and self.g < G_MIN:
            raise ValueError(f"coupling g={self.g} below the strong-coupling floor {G_MIN}")
        if self.g < 0:
            raise ValueError("coupling must be non-negative")
        if self.strict and self.g < G_COMFORT:
            warnings.warn(f"g={self.g} < {G_COMFORT}: pointer peaks only marginally separated",
                          PeakOverlapWarning)
        if self.epsilon <= 0:
            raise ValueError("kick width epsilon must be positive")
        if self.var < 0.5:
            raise ValueError("pointer variance below half a Planck cell")
        if self.grid is None:
            object.__setattr__(self, "grid", measurement_grid(
                self.ps.labels, self.g, self.x0, self.p0, self.var))

    @property
    def observable(self) -> np.ndarray:
        return pointer_observable(self.ps, self.g).matrix

    def initial_state(self) -> HybridDensity:
        rc = self.rho_c if self.rho_c is not None else gaussian(self.grid, self.x0, self.p0, self.var)
        return product_state(self.rho_i, rc)


@dataclass
class OutcomeEntry:
    label: int
    mass: float
    cell_mass: float
    centroid: float
    width: float


@dataclass
class BlockEntry:
    n: int
    m: int
    norm_before: float
    norm_after: float
    ratio: float
    expected: float


@dataclass
class OutcomeReport:
    g: float
    outcomes: list = field(default_factory=list)
    blocks: list = field(default_factory=list)

    @property
    def masses(self) -> dict:
        return {o.label: o.mass for o in self.outcomes}

    @property
    def total_mass(self) -> float:
        return sum(o.mass for o in self.outcomes)

    def to_dict(self) -> dict:
        return {"g": self.g, "outcomes": [asdict(o) for o in self.outcomes],
                "blocks": [asdict(b) for b in self.blocks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def projective_oracle(rho_i: DensityOperator, ps: ProjectorSet) -> list:
    """[(label, p_n, P_n rho P_n / p_n)] for the outcomes with p_n > 0."""
    out = []
    for n, proj in zip(ps.labels, ps.projectors):
        post = proj @ rho_i.matrix @ proj
        pn = float(np.trace(post).real)
        if pn > MASS_FLOOR:
            out.append((n, pn, DensityOperator(post / pn)))
    return out


def kick_hamiltonian(cfg: MeasurementConfig, height: float = 1.0) -> HybridPolynomialHamiltonian:
    return HybridPolynomialHamiltonian(cfg.ps.dim, (HamiltonianTerm((0, 1), height * cfg.observable, "gA"),))


def block_damping(g: float, n: int, m: int, var: float = 1.0) -> float:
    d2 = (g * (n - m)) ** 2
    return float(np.exp(-d2 / 4 + d2 / (8 * var)))


def kick_closed_form(cfg: MeasurementConfig) -> HybridDensity:
    if cfg.rho_c is not None:
        raise NonGaussianInitial("closed form needs the Gaussian pointer state")
    grid, g, v = cfg.grid, cfg.g, cfg.var
    s = 6 * np.sqrt(v)
    for n in cfg.ps.labels:
        if not grid.fits(cfg.x0 + g * n, cfg.p0, s):
            raise DomainTooSmall(f"pointer peak for label {n} at x={cfg.x0 + g * n} leaves the grid")
    if not grid.fits(cfg.x0, cfg.p0, s):
        raise DomainTooSmall("initial pointer does not fit in the grid")
    P = grid.mesh[1]
    values = np.zeros(grid.shape + (cfg.ps.dim, cfg.ps.dim), dtype=complex)
    for n, pn in zip(cfg.ps.labels, cfg.ps.projectors):
        for m, pm in zip(cfg.ps.labels, cfg.ps.projectors):
            block = pn @ cfg.rho_i.matrix @ pm
            if not np.any(np.abs(block) > 0):
                continue
            d = n - m
            phase = np.exp(-1j * g * d * P + 1j * g * d * (P - cfg.p0) / (2 * v))
            f = block_damping(g, n, m, v) * phase * gaussian_values(
                grid, cfg.x0 + 0.5 * (n + m) * g, cfg.p0, v)
            values += f[..., None, None] * block
    return HybridDensity(grid, values)


def kick_filter(cfg: MeasurementConfig) -> SpectralFilter:
    """Per-block p low-pass in the eigenbasis of the pointer observable."""
    lam, u = np.linalg.eigh(cfg.observable)
    lab = np.rint(lam / cfg.g).astype(int) if cfg.g > 0 else np.zeros(len(lam), dtype=int)
    kp = cfg.grid.wavenumbers[1]
    mask = np.ones((len(kp), len(lam), len(lam)))
    for i, n in enumerate(lab):
        for j, m in enumerate(lab):
            lo, hi = kick_band(cfg.g, int(n - m), cfg.var)
            mask[:, i, j] = 0.25 * erfc((lo - kp) / KICK_ROLLOFF) * erfc((kp - hi) / KICK_ROLLOFF)
    return SpectralFilter(cfg.grid, p_mask=mask, basis=u)


def kick_numeric(cfg: MeasurementConfig, steps: int | None = None,
                 monitor: Monitor | None = None, leak_tol: float | None = KICK_LEAK_TOL) -> HybridDensity:
    """RK4 through a rectangular pulse of width epsilon and height 1/epsilon.

    Every block's p-spectrum is low-passed to ``kick_band`` after each
    step.  The step count depends only on g and the grid, so the result
    does not depend on epsilon beyond round-off.
    """
    h0 = cfg.initial_state()
    tl = compile_hamiltonian(kick_hamiltonian(cfg, 1.0 / cfg.epsilon))
    cutoff = kick_filter(cfg)
    if steps is None:
        bound = Generator(tl, cfg.grid, None).max_stable_dt(cutoff=cutoff.kmax)
        steps = 1 if not np.isfinite(bound) else int(ceil(cfg.epsilon / bound - 1e-9))
    return evolve(h0, tl, cfg.epsilon, cfg.epsilon / steps, monitor=monitor,
                  leak_tol=leak_tol, cutoff=cutoff)


def block_norms(h: HybridDensity, ps: ProjectorSet) -> dict:
    """L2 norm over phase space of the Frobenius norm of every block P_n rho P_m."""
    out = {}
    for n, pn in zip(ps.labels, ps.projectors):
        for m, pm in zip(ps.labels, ps.projectors):
            b = np.einsum("ij,xyjk,kl->xyil", pn, h.values, pm)
            out[(n, m)] = float(np.sqrt(integrate_array(h.grid, np.sum(np.abs(b) ** 2, axis=(2, 3)))))
    return out


def outcome_statistics(final: HybridDensity, cfg: MeasurementConfig,
                       initial: HybridDensity | None = None) -> OutcomeReport:
    """Pointer readout per label.

    ``mass`` is the label weight tr P_n rho integrated over phase space;
    ``cell_mass``, ``centroid`` and ``width`` come from the x-marginal of the
    pointer restricted to the cell between midpoints g(n +- 1/2).
    """
    if cfg.g < G_MIN:
        warnings.warn(f"g={cfg.g} too small for separated peaks", PeakOverlapWarning)
    grid = final.grid
    labels = sorted(cfg.ps.labels)
    proj = dict(zip(cfg.ps.labels, cfg.ps.projectors))
    rc = np.trace(final.values, axis1=2, axis2=3).real
    mx = rc.sum(axis=1) * grid.dp
    x = grid.x
    cuts = [cfg.x0 + 0.5 * cfg.g * (a + b) for a, b in zip(labels[:-1], labels[1:])]
    edges = [-np.inf] + cuts + [np.inf]
    report = OutcomeReport(cfg.g)
    for i, n in enumerate(labels):
        tr_n = np.einsum("ij,xyji->xy", proj[n], final.values).real
        mass = float(integrate_array(grid, tr_n))
        if mass < MASS_FLOOR:
            continue
        sel = (x >= edges[i]) & (x < edges[i + 1])
        w = mx[sel] * grid.dx
        cm = float(w.sum())
        c = float(np.sum(w * x[sel]) / cm) if cm > 0 else float("nan")
        width = float(np.sqrt(np.sum(w * (x[sel] - c) ** 2) / cm)) if cm > 0 else float("nan")
        report.outcomes.append(OutcomeEntry(n, mass, cm, c, width))
    before = block_norms(initial if initial is not None else cfg.initial_state(), cfg.ps)
    after = block_norms(final, cfg.ps)
    for (n, m), b in before.items():
        if n >= m or b < MASS_FLOOR:
            continue
        a = after[(n, m)]
        report.blocks.append(BlockEntry(n, m, b, a, a / b, block_damping(cfg.g, n, m, cfg.var)))
    return report
