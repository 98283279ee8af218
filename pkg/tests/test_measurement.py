import warnings
from math import exp

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridyn.errors import DomainTooSmall, NonGaussianInitial, PeakOverlapWarning
from hybridyn.grid import PhaseGrid, gaussian, gaussian_values
from hybridyn.liouvillian import Generator, compile_hamiltonian
from hybridyn.measurement import (MeasurementConfig, block_damping, block_norms, kick_closed_form,
                                  kick_hamiltonian, kick_numeric, measurement_grid,
                                  outcome_statistics, projective_oracle)
from hybridyn.operators import DensityOperator, ProjectorSet, trace_distance
from hybridyn.state import classical_marginal, conditional_state, quantum_marginal

PLUS = DensityOperator.pure([1, 1])
THREE = DensityOperator.pure(np.sqrt([0.5, 0.3, 0.2]))


def random_density(seed, dim):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = z @ z.conj().T
    return DensityOperator(m / np.trace(m).real)


def config(rho, g=8.0, **kw):
    return MeasurementConfig(ProjectorSet.diagonal(rho.dim), g, rho, **kw)


# -- configuration -----------------------------------------------------------------

def test_config_guards():
    with pytest.raises(ValueError):
        config(PLUS, 3.0)
    with pytest.warns(PeakOverlapWarning):
        config(PLUS, 5.0)
    with pytest.raises(ValueError):
        config(PLUS, var=0.4)
    with pytest.raises(ValueError):
        config(PLUS, epsilon=0.0)
    with pytest.raises(ValueError):
        MeasurementConfig(ProjectorSet.diagonal(3), 8.0, PLUS)


def test_default_grid_holds_all_peaks():
    g = measurement_grid([1, 2, 3], 8.0)
    assert g.x_min <= -8 and g.x_max >= 32 and g.p_min == -8 and g.p_max == 8
    assert g.cell_area <= 1


def test_closed_form_rejects_non_gaussian_pointer():
    grid = measurement_grid([1, 2], 8.0)
    cfg = config(PLUS, rho_c=gaussian(grid), grid=grid)
    with pytest.raises(NonGaussianInitial):
        kick_closed_form(cfg)


def test_closed_form_rejects_small_grid():
    with pytest.raises(DomainTooSmall):
        kick_closed_form(config(PLUS, grid=PhaseGrid(-8, 12, -8, 8, 64, 64)))


# -- projective oracle ---------------------------------------------------------------

def test_projective_mixed_qubit():
    out = projective_oracle(DensityOperator.maximally_mixed(2), ProjectorSet.diagonal(2))
    assert [(n, round(p, 15)) for n, p, _ in out] == [(1, 0.5), (2, 0.5)]
    assert np.allclose(out[0][2].matrix, np.diag([1, 0]))
    assert np.allclose(out[1][2].matrix, np.diag([0, 1]))


def test_projective_eigenstate_single_outcome():
    out = projective_oracle(DensityOperator.pure([1, 0]), ProjectorSet.diagonal(2))
    assert len(out) == 1 and out[0][0] == 1 and abs(out[0][1] - 1) < 1e-15


def test_projective_plus_state():
    out = projective_oracle(PLUS, ProjectorSet.diagonal(2))
    assert [abs(p - 0.5) < 1e-15 for _, p, _ in out] == [True, True]
    for _, _, post in out:
        assert abs(np.trace(post.matrix @ post.matrix).real - 1) < 1e-15


# -- closed form -----------------------------------------------------------------------

def test_damping_value_g4():
    assert abs(block_damping(4.0, 2, 1) - exp(-2)) < 1e-16
    assert abs(block_damping(4.0, 2, 1) - 0.1353352832366127) < 1e-15


def test_diagonal_block_is_pure_shift():
    cfg = config(THREE)
    out = kick_closed_form(cfg)
    for k, n in enumerate(cfg.ps.labels):
        want = THREE.matrix[k, k].real * gaussian_values(cfg.grid, 8.0 * n, 0.0)
        assert np.max(np.abs(out.values[..., k, k] - want)) < 1e-16


def test_commuting_input_gives_shifted_mixture():
    rho = DensityOperator(np.diag([0.2, 0.8]))
    cfg = config(rho)
    out = kick_closed_form(cfg)
    assert np.max(np.abs(out.values[..., 0, 1])) == 0
    assert np.max(np.abs(out.values[..., 1, 1] - 0.8 * gaussian_values(cfg.grid, 16.0, 0.0))) < 1e-16


def test_final_classical_marginal_is_mixture_of_shifted_pointers():
    cfg = config(THREE)
    rc = classical_marginal(kick_closed_form(cfg)).values
    want = sum(p * gaussian_values(cfg.grid, 8.0 * n, 0.0) for n, p in zip((1, 2, 3), (0.5, 0.3, 0.2)))
    assert np.max(np.abs(rc - want)) < 1e-12


def test_quantum_marginal_is_projective_mixture():
    cfg = config(THREE)
    q = quantum_marginal(kick_closed_form(cfg)).matrix
    want = sum(P @ THREE.matrix @ P for P in cfg.ps.projectors)
    assert np.max(np.abs(q - want)) < 1e-6
    # coherences survive integration over the pointer as exp(-g^2 (n-m)^2 / 4) rho_nm
    n, m = np.indices((3, 3))
    exact = THREE.matrix * np.exp(-(8.0 * (n - m)) ** 2 / 4)
    assert np.max(np.abs(q - exact)) < 1e-14


@pytest.mark.parametrize("var,p0", [(1.0, 0.0), (2.0, 0.5), (0.6, -0.3)])
def test_closed_form_solves_the_kick_equation(var, p0):
    """d/ds of the closed form at coupling s*g equals the compiled generator at coupling g."""
    g, s, h = 4.0, 0.5, 1e-3
    grid = measurement_grid([1, 2, 3], g, p0=p0, var=var)
    rho = random_density(3, 3)

    def state(c):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PeakOverlapWarning)
            cfg = MeasurementConfig(ProjectorSet.diagonal(3), c, rho, p0=p0, var=var, grid=grid, strict=False)
        return cfg, kick_closed_form(cfg).values

    cfg_g, _ = state(g)
    gen = Generator(compile_hamiltonian(kick_hamiltonian(cfg_g)), grid)
    _, mid = state(s * g)
    # fourth-order central difference in s
    d = (-state((s + 2 * h) * g)[1] + 8 * state((s + h) * g)[1]
         - 8 * state((s - h) * g)[1] + state((s - 2 * h) * g)[1]) / (12 * h)
    rate = gen(mid)
    assert np.max(np.abs(d - rate)) < 1e-6 * np.max(np.abs(rate))


@given(st.integers(0, 2**31), st.floats(8, 12))
@settings(max_examples=10)
def test_off_diagonal_suppression_closed_form(seed, g):
    rho = random_density(seed, 3)
    cfg = config(rho, g)
    rep = outcome_statistics(kick_closed_form(cfg), cfg)
    for b in rep.blocks:
        assert abs(b.ratio - exp(-((b.n - b.m) * g) ** 2 / 8)) < 1e-6


@given(st.integers(0, 2**31), st.floats(8, 12))
@settings(max_examples=10)
def test_collapse_matches_projective_postulate(seed, g):
    rho = random_density(seed, 3)
    cfg = config(rho, g)
    final = kick_closed_form(cfg)
    for n, pn, post in projective_oracle(rho, cfg.ps):
        c = conditional_state(final, g * n, 0.0)
        assert trace_distance(c.matrix, post.matrix) < 1e-4


@given(st.integers(0, 2**31))
@settings(max_examples=10)
def test_masses_sum_to_one(seed):
    cfg = config(random_density(seed, 3))
    assert abs(outcome_statistics(kick_closed_form(cfg), cfg).total_mass - 1) < 1e-6


# -- outcome statistics -----------------------------------------------------------------

def test_qubit_statistics():
    cfg = config(PLUS)
    rep = outcome_statistics(kick_closed_form(cfg), cfg)
    assert [abs(o.mass - 0.5) < 1e-6 for o in rep.outcomes] == [True, True]
    assert abs(rep.outcomes[0].centroid - 8) < 0.05 and abs(rep.outcomes[1].centroid - 16) < 0.05
    assert all(abs(o.width - 1) < 0.05 for o in rep.outcomes)


def test_three_outcome_masses():
    cfg = config(THREE)
    rep = outcome_statistics(kick_closed_form(cfg), cfg)
    for o, p in zip(rep.outcomes, (0.5, 0.3, 0.2)):
        assert abs(o.mass - p) < 1e-6
        assert abs(o.cell_mass - p) < 1e-4


def test_eigenstate_gives_single_peak():
    rho = DensityOperator(np.diag([0, 1, 0]))
    cfg = config(rho)
    rep = outcome_statistics(kick_closed_form(cfg), cfg)
    assert len(rep.outcomes) == 1 and rep.outcomes[0].label == 2
    assert abs(rep.outcomes[0].mass - 1) < 1e-12 and not rep.blocks


def test_block_norms_of_product_state():
    cfg = config(PLUS)
    norms = block_norms(cfg.initial_state(), cfg.ps)
    assert abs(norms[(1, 2)] - norms[(1, 1)]) < 1e-15


def test_report_serializes():
    cfg = config(PLUS)
    d = outcome_statistics(kick_closed_form(cfg), cfg).to_dict()
    assert d["g"] == 8.0 and len(d["outcomes"]) == 2 and len(d["blocks"]) == 1


# -- numeric kick ----------------------------------------------------------------------

@pytest.mark.slow
def test_numeric_kick_matches_closed_form_qubit():
    cfg = config(PLUS)
    num, closed = kick_numeric(cfg), kick_closed_form(cfg)
    assert np.max(np.abs(num.values - closed.values)) < 1e-4
    rep = outcome_statistics(num, cfg)
    assert abs(rep.blocks[0].ratio - exp(-8)) < 1e-3 * exp(-8) + 1e-9


@pytest.mark.slow
def test_numeric_kick_epsilon_independent():
    a = kick_numeric(config(PLUS, epsilon=1e-2))
    b = kick_numeric(config(PLUS, epsilon=1e-3))
    assert np.max(np.abs(a.values - b.values)) < 1e-8


def test_zero_coupling_is_identity():
    cfg = MeasurementConfig(ProjectorSet.diagonal(2), 0.0, PLUS, strict=False,
                            grid=PhaseGrid.square(9.0, 64))
    out = kick_numeric(cfg)
    assert np.array_equal(out.values, cfg.initial_state().values)
