import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.sparse.linalg import expm_multiply

from bosonldp import ComplexField, GridSpec, Observable, ParameterError, Potential, evolve_hartree, plane_wave
from bosonldp.errors import BasisSizeError
from bosonldp.ldp import iid_lmgf
from bosonldp.observables import expectation
from bosonldp.oracle import (
    ManyBodyState, basis_dimension, build_basis, build_hamiltonian, empirical_lmgf, evolve_dense, evolve_exact,
    krylov_step, observable_moments, observable_statistics, product_state, reduced_density, run_oracle,
    second_quantize, spectral_laplacian_matrix, tail_probability,
)

from conftest import mixture_state, random_field
from test_potentials_observables import random_hermitian


def test_basis_examples():
    b = build_basis(2, 2)
    assert [b.state(i) for i in range(b.dim)] == [(2, 0), (1, 1), (0, 2)]
    assert build_basis(6, 4).dim == 126
    assert build_basis(8, 5).dim == 792
    assert basis_dimension(8, 5) == math.comb(12, 5)
    with pytest.raises(BasisSizeError, match=str(math.comb(21, 10))):
        build_basis(12, 10, cap=200_000)


@pytest.mark.parametrize("M,N", [(4, 3), (6, 4), (5, 5)])
def test_basis_bijection_and_order(M, N):
    b = build_basis(M, N)
    occ = b.occupations
    assert np.all(occ.sum(axis=1) == N)
    assert len({tuple(r) for r in occ}) == b.dim
    np.testing.assert_array_equal(b.index(occ), np.arange(b.dim))
    rows = [tuple(r) for r in occ]
    assert rows == sorted(rows, reverse=True)
    with pytest.raises(ParameterError):
        b.index([N + 1] + [0] * (M - 1))


def first_quantized(grid, v, N):
    """N-particle Hamiltonian on the full tensor space and the symmetrizer's range."""
    M = grid.n_points
    T = spectral_laplacian_matrix(grid)
    eye = np.eye(M)
    H = np.zeros((M ** N, M ** N), dtype=complex)
    for j in range(N):
        ops = [eye] * N
        ops[j] = T
        term = ops[0]
        for o in ops[1:]:
            term = np.kron(term, o)
        H += term
    table = v.matrix(grid)
    idx = np.array(list(itertools.product(range(M), repeat=N)))
    pair = np.zeros(M ** N)
    for i, j in itertools.combinations(range(N), 2):
        pair += table[idx[:, i], idx[:, j]]
    H += np.diag(pair / N)
    # orthonormal basis of symmetric tensors: one per occupation vector
    basis = build_basis(M, N)
    cols = []
    for occ in basis.occupations:
        vec = np.zeros(M ** N)
        mask = np.all(np.stack([(idx == p).sum(axis=1) == occ[p] for p in range(M)]), axis=0)
        vec[mask] = 1.0
        cols.append(vec / np.linalg.norm(vec))
    S = np.stack(cols, axis=1)
    return S.conj().T @ H @ S


@pytest.mark.parametrize("N", [2, 3])
def test_hamiltonian_matches_first_quantization(small_grid, N):
    v = Potential("soft-coulomb", 0.8, epsilon=0.4)
    ref = first_quantized(small_grid, v, N)
    H = build_hamiltonian(small_grid, v, N)
    np.testing.assert_allclose(H.matrix.toarray(), ref, atol=1e-12)


def test_free_spectra():
    g = GridSpec(1, 4, 3.0)
    one = np.linalg.eigvalsh(spectral_laplacian_matrix(g))
    H1 = build_hamiltonian(g, Potential("zero"), 1)
    np.testing.assert_allclose(np.linalg.eigvalsh(H1.matrix.toarray()), one, atol=1e-12)
    H2 = build_hamiltonian(g, Potential("zero"), 2)
    pairs = sorted(one[i] + one[j] for i in range(4) for j in range(i, 4))
    np.testing.assert_allclose(np.linalg.eigvalsh(H2.matrix.toarray()), pairs, atol=1e-12)


def test_constant_potential_shift(small_grid, rng):
    c, N = 0.9, 4
    H0 = build_hamiltonian(small_grid, Potential("zero"), N)
    Hc = build_hamiltonian(small_grid, Potential("constant", c), N)
    psi = rng.normal(size=H0.basis.dim) + 1j * rng.normal(size=H0.basis.dim)
    shift = c / (2 * N) * (N ** 2 - N)
    np.testing.assert_allclose(Hc.apply(psi) - H0.apply(psi), shift * psi, atol=1e-12)


def test_hamiltonian_hermitian(small_grid, weak_v, rng):
    H = build_hamiltonian(small_grid, weak_v, 4)
    a = rng.normal(size=H.basis.dim) + 1j * rng.normal(size=H.basis.dim)
    b = rng.normal(size=H.basis.dim) + 1j * rng.normal(size=H.basis.dim)
    assert abs(np.vdot(a, H.apply(b)) - np.vdot(H.apply(a), b)) <= 1e-10


def test_hamiltonian_is_d1_only():
    with pytest.raises(ParameterError):
        build_hamiltonian(GridSpec(2, 4, 1.0), Potential("zero"), 2)


def test_product_state_examples():
    g = GridSpec(1, 4, 1.0)
    b = build_basis(4, 3)
    one = ComplexField(g, np.array([0, 1.0, 0, 0]) / np.sqrt(g.h))
    psi = product_state(one, b)
    assert abs(psi.amplitudes[b.index([0, 3, 0, 0])[0]]) == pytest.approx(1.0)
    assert np.count_nonzero(np.abs(psi.amplitudes) > 1e-15) == 1
    half = ComplexField(g, np.array([1, 1, 0, 0]) / np.sqrt(2 * g.h))
    b2 = build_basis(4, 2)
    amps = product_state(half, b2).amplitudes
    got = [amps[b2.index(o)[0]] for o in ([2, 0, 0, 0], [1, 1, 0, 0], [0, 2, 0, 0])]
    np.testing.assert_allclose(got, [0.5, 1 / np.sqrt(2), 0.5], atol=1e-15)
    assert np.linalg.norm(amps) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ParameterError):
        product_state(half.replace(2 * half.values), b2)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_product_state_first_quantized_expectation(seed, N):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 4, 2.0)
    phi = random_field(g, rng).normalized()
    O = Observable(g, random_hermitian(4, rng))
    psi = product_state(phi, build_basis(4, N))
    assert psi.norm() == pytest.approx(1.0, abs=1e-10)
    dg = second_quantize(O, psi.basis)
    val = np.vdot(psi.amplitudes, dg @ psi.amplitudes)
    assert val.real == pytest.approx(N * expectation(O, phi), abs=1e-9)


def test_krylov_against_expm(small_grid, weak_v, ref_phi):
    H = build_hamiltonian(small_grid, weak_v, 4)
    psi = product_state(ref_phi, H.basis)
    out = evolve_exact(psi, H, 1.0, 0.05)
    ref = expm_multiply(-1j * H.matrix, psi.amplitudes, start=0, stop=1.0, num=2, endpoint=True)[-1]
    np.testing.assert_allclose(out.amplitudes, ref, atol=1e-9)
    np.testing.assert_allclose(evolve_dense(psi, H, 1.0).amplitudes, ref, atol=1e-9)


def test_krylov_eigenstate_phase(small_grid):
    N = 3
    H = build_hamiltonian(small_grid, Potential("zero"), N)
    pw = plane_wave(small_grid, 1)
    psi = product_state(pw, H.basis)
    E = N * (2 * np.pi / small_grid.L) ** 2
    out = evolve_exact(psi, H, 0.7, 0.05)
    np.testing.assert_allclose(out.amplitudes, np.exp(-1j * E * 0.7) * psi.amplitudes, atol=1e-13)


def test_krylov_reversal_and_conservation(small_grid, weak_v, ref_phi):
    H = build_hamiltonian(small_grid, weak_v, 6)
    psi = product_state(ref_phi, H.basis)
    fwd = evolve_exact(psi, H, 1.0, 0.05)
    back = evolve_exact(fwd, H, -1.0, 0.05)
    assert np.linalg.norm(back.amplitudes - psi.amplitudes) <= 1e-7
    assert abs(fwd.norm() - 1.0) <= 1e-9
    e0, e1 = H.energy(psi), H.energy(fwd)
    assert abs(e1 - e0) <= 1e-8 * max(1.0, abs(e0))


def test_krylov_step_refinement_reported(small_grid, weak_v, ref_phi):
    H = build_hamiltonian(small_grid, weak_v, 5)
    psi = product_state(ref_phi, H.basis)
    report = {}
    out = evolve_exact(psi, H, 1.0, 1.0, krylov_dim=6, tol=1e-12, report=report)
    assert report["krylov_refinements"] > 0
    ref = evolve_dense(psi, H, 1.0)
    assert np.linalg.norm(out.amplitudes - ref.amplitudes) <= 1e-9
    _, err = krylov_step(H.apply, psi.amplitudes, 1.0, 4)
    assert err > 1e-6
    with pytest.raises(ParameterError):
        evolve_exact(psi, H, 1.0, -0.1)


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_free_product_preserved(small_grid, ref_phi, N):
    free = Potential("zero")
    H = build_hamiltonian(small_grid, free, N)
    psi = evolve_exact(product_state(ref_phi, H.basis), H, 1.0, 0.05)
    phit = evolve_hartree(ref_phi, free, 1.0, 1e-3).final
    np.testing.assert_allclose(psi.amplitudes, product_state(phit, H.basis).amplitudes, atol=1e-8)


def aggregate(values, weights, digits=10):
    out = {}
    for v, w in zip(np.round(values, digits), weights):
        out[v] = out.get(v, 0.0) + w
    return {k: w for k, w in out.items() if w > 1e-14}


def test_statistics_identity():
    g = GridSpec(1, 4, 1.0)
    phi = random_field(g, np.random.default_rng(3)).normalized()
    m = observable_statistics(product_state(phi, build_basis(4, 3)), Observable.identity(g), 0.25)
    np.testing.assert_allclose(m.values, 0.75, atol=1e-15)
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("structured", [True, False])
def test_statistics_product_is_convolution(structured):
    g = GridSpec(1, 4, 1.0)
    rng = np.random.default_rng(11)
    phi = random_field(g, rng).normalized()
    if structured:
        O = Observable.multiplication(g, [0.3, -1.0, 0.7, 0.3])
    else:
        O = Observable(g, np.round(random_hermitian(4, rng), 1))
    ref = expectation(O, phi)
    m = observable_statistics(product_state(phi, build_basis(4, 3)), O, ref)
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-10)
    evals, evecs = np.linalg.eigh(O.matrix)
    w1 = g.h * np.abs(evecs.conj().T @ phi.values) ** 2
    law = {}
    for ks in itertools.product(range(4), repeat=3):
        val = sum(evals[k] for k in ks) / 3 - ref
        law[round(val, 10)] = law.get(round(val, 10), 0.0) + np.prod([w1[k] for k in ks])
    got = aggregate(m.values, m.weights)
    law = {k: w for k, w in law.items() if w > 1e-14}
    assert sorted(got) == pytest.approx(sorted(law), abs=1e-10)
    for k in law:
        assert got[k] == pytest.approx(law[k], abs=1e-10)


def test_statistics_cap_and_moments(small_grid, weak_v, ref_phi, cos_obs):
    H = build_hamiltonian(small_grid, weak_v, 5)
    psi = evolve_exact(product_state(ref_phi, H.basis), H, 0.5, 0.05)
    with pytest.raises(BasisSizeError, match="observable_moments"):
        observable_statistics(psi, cos_obs, 0.0, cap=100)
    m = observable_statistics(psi, cos_obs, 0.1)
    mom = observable_moments(psi, cos_obs, 0.1, order=4)
    exact = [np.dot(m.weights, m.values ** k) for k in range(1, 5)]
    np.testing.assert_allclose(mom, exact, atol=1e-12)
    # the eigen-decomposition route agrees with the diagonal shortcut
    dense = Observable(small_grid, cos_obs.matrix)
    m2 = observable_statistics(psi, dense, 0.1)
    assert m2.variance() == pytest.approx(m.variance(), abs=1e-12)
    assert empirical_lmgf(m2, 0.7) == pytest.approx(empirical_lmgf(m, 0.7), abs=1e-12)


def test_lmgf_and_tail_examples(small_grid, ref_phi, cos_obs):
    psi = product_state(ref_phi, build_basis(6, 3))
    m = observable_statistics(psi, cos_obs, expectation(cos_obs, ref_phi))
    assert empirical_lmgf(m, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert tail_probability(m, m.values.min() - 1e-3) == pytest.approx(1.0, abs=1e-12)
    assert tail_probability(m, m.values.max() + 1e-3) == 0.0


@given(st.lists(st.floats(0, 3), min_size=1, max_size=6), st.floats(-0.5, 1.0))
def test_chebyshev_inequality(lams, x):
    g = GridSpec(1, 6, 2 * np.pi)
    phi = mixture_state(g)
    O = Observable.cosine(g)
    H = build_hamiltonian(g, Potential("gaussian", 0.25, 1.0), 4)
    psi = evolve_exact(product_state(phi, H.basis), H, 0.5, 0.05)
    m = observable_statistics(psi, O, expectation(O, phi))
    p = tail_probability(m, x)
    if p > 0:
        for lam in lams:
            assert math.log(p) / 4 <= empirical_lmgf(m, lam) - lam * x + 1e-12


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_free_lmgf_is_iid(small_grid, ref_phi, cos_obs, N):
    free = Potential("zero")
    run = run_oracle(ref_phi, free, N, [1.0])
    phit = evolve_hartree(ref_phi, free, 1.0, 1e-3).final
    m = observable_statistics(run.states[0], cos_obs, expectation(cos_obs, phit))
    lam = np.linspace(0, 2, 21)
    np.testing.assert_allclose(empirical_lmgf(m, lam), iid_lmgf(phit, cos_obs, lam), atol=1e-8)


def test_reduced_density_examples(small_grid, ref_phi):
    b = build_basis(6, 4)
    gamma = reduced_density(product_state(ref_phi, b))
    mode = np.sqrt(small_grid.h) * ref_phi.values
    np.testing.assert_allclose(gamma, np.outer(mode, mode.conj()), atol=1e-12)
    amps = np.zeros(b.dim, dtype=complex)
    occ = np.array([2, 0, 1, 0, 1, 0])
    amps[b.index(occ)[0]] = 1.0
    np.testing.assert_allclose(reduced_density(ManyBodyState(b, amps)), np.diag(occ / 4), atol=1e-15)


def test_reduced_density_trace_psd_and_condensation(small_grid, weak_v, ref_phi):
    phit = evolve_hartree(ref_phi, weak_v, 1.0, 1e-3).final
    mode = np.sqrt(small_grid.h) * phit.values
    fractions = []
    for N in range(2, 7):
        psi = run_oracle(ref_phi, weak_v, N, [1.0]).states[0]
        gamma = reduced_density(psi)
        assert np.trace(gamma).real == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(gamma, gamma.conj().T, atol=1e-14)
        assert np.linalg.eigvalsh(gamma).min() >= -1e-10
        fractions.append(np.vdot(mode, gamma @ mode).real)
    assert np.all(np.diff(fractions) > 0) and fractions[-1] < 1
