import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridyn.errors import NormalizationError, PositivityWarning, UnsupportedPoint
from hybridyn.grid import PhaseGrid, ScalarField, gaussian
from hybridyn.operators import DensityOperator, trace_distance
from hybridyn.state import (HybridDensity, HybridObservable, classical_marginal, conditional_field,
                            conditional_state, expectation, product_state, quantum_marginal)

G = PhaseGrid.square(10.0, 64)
PLUS = DensityOperator.pure([1, 1])


def random_density(seed, dim):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = z @ z.conj().T
    return DensityOperator(m / np.trace(m).real)


def test_product_with_ground_gaussian_is_initial_pointer_state():
    h = product_state(DensityOperator.pure([1, 0]), gaussian(G))
    X, P = G.mesh
    want = np.exp(-0.5 * (X**2 + P**2)) / (2 * np.pi)
    assert np.max(np.abs(h.values[..., 0, 0] - want)) < 1e-16
    assert np.max(np.abs(h.values[..., 1, 1])) == 0


def test_mixed_times_box_is_constant():
    box = np.zeros(G.shape)
    box[16:48, 16:48] = 1.0
    box /= box.sum() * G.cell_area
    h = product_state(DensityOperator.maximally_mixed(3), ScalarField(G, box))
    area = 32 * 32 * G.cell_area
    inside = h.values[16:48, 16:48]
    assert np.allclose(inside, np.eye(3) / (3 * area), atol=1e-15)


def test_product_rejects_unnormalized_classical_part():
    with pytest.raises(NormalizationError):
        product_state(PLUS, ScalarField(G, 2 * gaussian(G).values))


def test_density_rejects_non_hermitian_field():
    h = product_state(PLUS, gaussian(G)).values.copy()
    h[..., 0, 1] *= 1j
    with pytest.raises(ValueError):
        HybridDensity(G, h)


@given(st.integers(0, 2**31), st.integers(1, 4), st.floats(-2, 2), st.floats(-2, 2))
def test_marginals_of_product(seed, dim, x0, p0):
    rho = random_density(seed, dim)
    rc = gaussian(G, x0, p0)
    h = product_state(rho, rc)
    assert np.max(np.abs(classical_marginal(h).values - rc.values)) < 1e-12
    assert np.max(np.abs(quantum_marginal(h).matrix - rho.matrix)) < 1e-10
    assert abs(classical_marginal(h).values.sum() * G.cell_area - 1) < 1e-8


@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_conditional_of_product_is_quantum_part(seed, x, p):
    rho = random_density(seed, 3)
    c = conditional_state(product_state(rho, gaussian(G)), x, p)
    assert trace_distance(c.matrix, rho.matrix) < 1e-12
    assert abs(np.trace(c.matrix).real - 1) < 1e-10


def test_conditional_unsupported_point():
    h = product_state(PLUS, gaussian(G))
    with pytest.raises(UnsupportedPoint):
        conditional_state(h, 9.5, 9.5)
    with pytest.raises(UnsupportedPoint):
        conditional_state(h, 50.0, 0.0)


def test_conditional_clips_small_negativity_with_warning():
    v = product_state(PLUS, gaussian(G)).values.copy()
    i, j = 32, 32
    # enlarge the coherence of |+><+| slightly: eigenvalues become (1.0001, -0.0001)
    v[i, j] = np.array([[0.5, 0.5001], [0.5001, 0.5]]) * 2 * v[i, j, 0, 0].real
    h = HybridDensity(G, v, check=False)
    with pytest.warns(PositivityWarning):
        c = conditional_state(h, G.x[i], G.p[j])
    assert np.min(np.linalg.eigvalsh(c.matrix)) >= -1e-15
    assert abs(np.trace(c.matrix).real - 1) < 1e-12


@given(st.integers(0, 2**31))
def test_conditional_reassembles_state(seed):
    rng = np.random.default_rng(seed)
    # a correlated (non-product) state: two Gaussians with different quantum parts
    a, b = random_density(seed, 2), random_density(seed + 1, 2)
    w = rng.uniform(0.2, 0.8)
    v = w * product_state(a, gaussian(G, -2, 0)).values + (1 - w) * product_state(b, gaussian(G, 2, 1)).values
    h = HybridDensity(G, v)
    cond, mask = conditional_field(h)
    rc = classical_marginal(h).values
    assert np.max(np.abs(cond[mask] * rc[mask][:, None, None] - h.values[mask])) < 1e-10
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        c = conditional_state(h, 2.0, 1.0)
    assert abs(np.trace(c.matrix).real - 1) < 1e-10


def test_expectation_examples():
    h = product_state(PLUS, gaussian(G, 2.0, 0.0))
    assert abs(expectation(h, HybridObservable.from_polynomial(G, {(0, 0): 1.0}, 2)) - 1) < 1e-8
    assert abs(expectation(h, HybridObservable.from_polynomial(G, {(1, 0): 1.0}, 2)) - 2) < 1e-8
    A = np.diag([8.0, 16.0])
    want = np.trace(A @ PLUS.matrix).real
    assert abs(expectation(h, HybridObservable.from_polynomial(G, {(0, 0): A}, 2)) - want) < 1e-9


@given(st.integers(0, 2**31), st.floats(-2, 2), st.floats(-2, 2))
def test_scalar_observable_matches_classical_quadrature(seed, x0, p0):
    h = product_state(random_density(seed, 2), gaussian(G, x0, p0))
    X, P = G.mesh
    f = np.cos(X) * P**2 + X
    direct = float(np.sum(f * classical_marginal(h).values) * G.cell_area)
    assert abs(expectation(h, HybridObservable.from_scalar(G, f, 2)) - direct) < 1e-12


def test_diagnostics_and_serialization():
    h = product_state(PLUS, gaussian(G))
    d = h.diagnostics()
    assert abs(d["norm"] - 1) < 1e-12 and d["hermiticity_error"] == 0 and d["positive"]
    assert np.array_equal(HybridDensity.from_dict(h.to_dict()).values, h.values)
    assert np.array_equal(HybridDensity.from_npz(h.to_npz()).values, h.values)
