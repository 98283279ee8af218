import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_hermite, factorial

from hybridyn.cutshift import (ModeAssignment, antinormal_observable, dequantize,
                               mode_grid, quantize, quantize_hamiltonian, quantize_observable,
                               quantize_report, robustness_check, shift_dynamics_check,
                               weyl_expectation, wigner_values)
from hybridyn.errors import DomainTooSmall, IllPosedError, TruncationError
from hybridyn.grid import PhaseGrid, ScalarField, gaussian_values
from hybridyn.liouvillian import HamiltonianTerm, HybridPolynomialHamiltonian
from hybridyn.operators import (DensityOperator, coherent_state, momentum, order_weyl, position,
                                trace_distance)
from hybridyn.state import HybridDensity, HybridObservable, expectation, product_state

MODE = ModeAssignment()
N = MODE.n_max
GRID = mode_grid(MODE)
X, P = GRID.mesh


def fock(n, dim_n=N):
    v = np.zeros(dim_n, complex)
    v[n] = 1
    return np.outer(v, v.conj())


def random_mode_state(seed, levels=N - 4, rank=3, dim=1):
    rng = np.random.default_rng(seed)
    z = np.zeros((N * dim, rank), complex)
    k = levels * dim
    z[:k] = rng.normal(size=(k, rank)) + 1j * rng.normal(size=(k, rank))
    # damp high levels so the Husimi function stays well inside the grid
    z[:k] *= np.repeat(np.exp(-0.1 * np.arange(levels)), dim)[:, None]
    rho = z @ z.conj().T
    return rho / np.trace(rho).real


# -- dequantize -------------------------------------------------------------------

def test_ground_state_gives_unit_gaussian():
    h = dequantize(fock(0), MODE)
    want = np.exp(-0.5 * (X**2 + P**2)) / (2 * np.pi)
    assert np.max(np.abs(h.values[..., 0, 0] - want)) < 1e-16


@given(st.floats(0, 2), st.floats(0, 2 * np.pi))
@settings(max_examples=10)
def test_coherent_state_gives_shifted_gaussian(r, phi):
    x0, p0 = r * np.cos(phi), r * np.sin(phi)
    v = coherent_state(x0, p0, MODE.trunc)
    h = dequantize(np.outer(v, v.conj()), MODE)
    assert np.max(np.abs(h.values[..., 0, 0] - gaussian_values(GRID, x0, p0))) < 1e-11


def test_fock_one_husimi():
    h = dequantize(fock(1), MODE)
    r2 = X**2 + P**2
    assert np.max(np.abs(h.values[..., 0, 0] - 0.5 * r2 * np.exp(-0.5 * r2) / (2 * np.pi))) < 1e-15


@given(st.integers(0, 2**31))
@settings(max_examples=10)
def test_husimi_is_positive_and_broad(seed):
    h = dequantize(random_mode_state(seed), MODE)
    q = h.values[..., 0, 0].real
    assert np.min(q) >= -1e-12
    w = q * GRID.cell_area
    for axis in (X, P):
        mean = np.sum(w * axis)
        assert np.sum(w * (axis - mean) ** 2) >= 0.5


def test_dequantize_guards():
    with pytest.raises(TruncationError):
        dequantize(fock(N - 2), MODE)
    with pytest.raises(DomainTooSmall):
        dequantize(fock(10), MODE, PhaseGrid.square(5.0, 64))


def test_system_factor_is_carried():
    rho = np.kron(fock(0), DensityOperator.pure([1, 1j]).matrix)
    h = dequantize(rho, MODE)
    assert h.dim == 2
    assert np.allclose(h.values, gaussian_values(GRID)[..., None, None] * np.array([[1, -1j], [1j, 1]]) / 2,
                       atol=1e-16)


# -- quantize ----------------------------------------------------------------------

def test_unit_gaussian_quantizes_to_ground_state():
    h = product_state(DensityOperator.pure([1]), ScalarField(GRID, gaussian_values(GRID)))
    assert np.max(np.abs(quantize(h, MODE).matrix - fock(0))) < 1e-8


@given(st.integers(0, 2**31), st.integers(1, 2))
@settings(max_examples=6)
def test_roundtrip(seed, dim):
    rho = random_mode_state(seed, dim=dim)
    back = quantize(dequantize(rho, MODE), MODE)
    assert trace_distance(back.matrix, rho) < 1e-6


@given(st.integers(0, 2**31), st.integers(1, 2))
@settings(max_examples=4)
def test_roundtrip_up_to_level_n_max_minus_4(seed, dim):
    rho = random_mode_state(seed, levels=N - 3, dim=dim)
    back, diag = quantize_report(dequantize(rho, MODE), MODE)
    assert diag["levels"] == N - 3
    assert trace_distance(back.matrix, rho) < 1e-6


def test_level_n_max_minus_3_is_unsupported():
    with pytest.raises(TruncationError):
        dequantize(fock(N - 3), MODE)


@pytest.mark.parametrize("n", [0, 1, 4])
def test_fit_uses_smallest_truncation(n):
    back, diag = quantize_report(dequantize(fock(n), MODE), MODE)
    assert diag["levels"] == n + 1
    assert trace_distance(back.matrix, fock(n)) < 1e-12


def test_level_order_nests():
    from hybridyn.cutshift import _level_order
    pairs = _level_order(6)
    assert len({tuple(q) for q in pairs}) == 36
    for j in range(1, 7):
        assert pairs[: j * j].max() == j - 1


def test_roundtrip_classical_side():
    h = dequantize(random_mode_state(5), MODE)
    again = dequantize(quantize(h, MODE), MODE)
    assert np.max(np.abs(again.values - h.values)) < 1e-8 * np.max(np.abs(h.values))


def test_sub_planck_spike_is_ill_posed():
    v = np.zeros(GRID.shape)
    v[GRID.n_x // 2, GRID.n_p // 2] = 1 / GRID.cell_area
    with pytest.raises(IllPosedError):
        quantize(HybridDensity(GRID, v[..., None, None]), MODE)


def test_narrow_gaussian_is_ill_posed():
    h = HybridDensity(GRID, gaussian_values(GRID, 0, 0, 0.2)[..., None, None])
    with pytest.raises(IllPosedError):
        quantize(h, MODE)


def test_report_diagnostics():
    _, diag = quantize_report(dequantize(fock(3), MODE), MODE)
    assert diag["residual"] < 1e-12 and diag["min_eigenvalue"] > -1e-8 and diag["clipped_weight"] < 1e-8


# -- operator maps ------------------------------------------------------------------

def test_quantize_hamiltonian_examples():
    x_op = quantize_hamiltonian(HybridPolynomialHamiltonian.scalar({(1, 0): 1.0}), MODE).matrix
    assert np.allclose(x_op, position(N + 2)[:N, :N], atol=1e-13)
    osc = quantize_hamiltonian(HybridPolynomialHamiltonian.scalar({(2, 0): 0.5, (0, 2): 0.5}), MODE).matrix
    assert np.allclose(osc, np.diag(np.arange(N)), atol=1e-12)
    gA = 8.0 * np.diag([1.0, 2.0])
    kick = quantize_hamiltonian(HybridPolynomialHamiltonian(2, (HamiltonianTerm((0, 1), gA),)), MODE).matrix
    assert np.allclose(kick, np.kron(momentum(N + 2)[:N, :N], gA), atol=1e-12)


def test_quantize_observable_examples():
    x, p = position(N + 4), momentum(N + 4)
    assert np.allclose(quantize_observable({(1, 0): 1.0}, MODE).matrix, x[:N, :N], atol=1e-13)
    assert np.allclose(quantize_observable({(1, 1): 1.0}, MODE).matrix, ((x @ p + p @ x) / 2)[:N, :N],
                       atol=1e-12)
    assert np.allclose(quantize_observable({(2, 0): 1.0}, MODE).matrix, (x @ x)[:N, :N], atol=1e-12)
    diff = antinormal_observable({(2, 0): 1.0}, MODE).matrix - quantize_observable({(2, 0): 1.0}, MODE).matrix
    assert np.allclose(diff, 0.5 * np.eye(N), atol=1e-12)


# -- Wigner route ---------------------------------------------------------------------

def hermite_function(n, x):
    return np.exp(-x * x / 2) * eval_hermite(n, x) / np.sqrt(2.0**n * factorial(n) * np.sqrt(np.pi))


@pytest.mark.parametrize("coeffs", [[1.0], [0, 1.0], [1.0, 1j], [0.6, 0, -0.8j], [0.5, 0.5j, 0, 0.5 + 0.5j]])
def test_wigner_against_quadrature(coeffs):
    c = np.array(coeffs, complex)
    c /= np.linalg.norm(c)
    psi = np.zeros(N, complex)
    psi[:len(c)] = c
    grid = PhaseGrid.square(4.0, 16)
    y = np.linspace(-12, 12, 4001)
    dy = y[1] - y[0]

    def wave(x):
        return sum(ck * hermite_function(k, x) for k, ck in enumerate(c))

    want = np.zeros(grid.shape)
    for i, xv in enumerate(grid.x):
        corr = np.conj(wave(xv + y)) * wave(xv - y)
        want[i] = (np.exp(2j * np.outer(grid.p, y)) @ corr).real * dy / np.pi
    got = wigner_values(np.outer(psi, psi.conj()), MODE, grid)[..., 0, 0]
    assert np.max(np.abs(got - want)) < 1e-10


@given(st.integers(0, 2**31), st.sampled_from([(1, 0), (0, 1), (1, 1), (2, 1), (2, 2), (0, 3)]))
@settings(max_examples=10)
def test_wigner_expectation_matches_weyl_operator(seed, mono):
    rho = random_mode_state(seed, levels=12)
    f = X ** mono[0] * P ** mono[1]
    want = np.trace(rho @ order_weyl({mono: 1.0}, MODE.trunc).matrix).real
    assert abs(weyl_expectation(rho, f, MODE, GRID) - want) < 1e-9


# -- robustness -------------------------------------------------------------------------

polys = st.dictionaries(
    st.tuples(st.integers(0, 4), st.integers(0, 4)).filter(lambda k: sum(k) <= 4),
    st.floats(-2, 2, allow_nan=False), min_size=1, max_size=4)


@given(polys, st.integers(0, 2**31))
@settings(max_examples=8)
def test_antinormal_identity(poly, seed):
    rho = random_mode_state(seed, levels=10)
    h = dequantize(rho, MODE)
    classical = expectation(h, HybridObservable.from_polynomial(GRID, poly, 1))
    quantum = np.trace(rho @ antinormal_observable(poly, MODE).matrix).real
    assert abs(classical - quantum) < 1e-9 * max(1.0, abs(classical))


def test_robustness_examples():
    h = dequantize(fock(0), MODE)
    lin = robustness_check(h, {(1, 0): 1.0, (0, 1): -2.0}, MODE, "lin").discrepancies["lin"]
    assert lin["weyl"] < 1e-9
    quad = robustness_check(h, {(2, 0): 1.0}, MODE, "x2").discrepancies["x2"]
    assert abs(quad["weyl"] - 0.5) < 1e-8 and quad["antinormal"] < 1e-9
    quart = robustness_check(h, {(4, 0): 1.0}, MODE, "x4").discrepancies["x4"]
    assert abs(quart["weyl"] - 2.25) < 1e-8  # 3 - 3/4


@given(st.integers(0, 2**31))
@settings(max_examples=4)
def test_quadratic_offset_is_exactly_half(seed):
    rho = random_mode_state(seed, levels=10)
    rep = robustness_check(dequantize(rho, MODE), {(0, 2): 1.0}, MODE, "p2")
    assert abs(rep.discrepancies["p2"]["weyl"] - 0.5) < 1e-8
    assert rep.roundtrip_distance < 1e-6


def test_bump_discrepancy_decays():
    h = dequantize(fock(0), MODE)
    deltas = []
    for sigma in (2.0, 4.0):
        f = lambda x, p, s=sigma: np.exp(-x**2 / (2 * s * s))
        deltas.append(robustness_check(h, f, MODE, "bump").discrepancies["bump"]["weyl"])
    assert abs(deltas[0] - 0.04838185) < 1e-7 and abs(deltas[1] - 0.01458943) < 1e-7
    assert abs(deltas[1] / deltas[0] - 0.25) < 0.3 * 0.25


def test_report_json():
    rep = robustness_check(dequantize(fock(0), MODE), {(1, 0): 1.0}, MODE, "x")
    assert '"x"' in rep.to_json()


# -- dynamics ------------------------------------------------------------------------------

def test_shift_commutes_with_harmonic_dynamics():
    v = coherent_state(2.0, 0.0, MODE.trunc)
    osc = HybridPolynomialHamiltonian.scalar({(2, 0): 0.5, (0, 2): 0.5})
    errs = shift_dynamics_check(np.outer(v, v.conj()), osc, MODE, np.linspace(0, 2 * np.pi, 5))
    assert max(errs) < 1e-4
