"""Exact finite-N dynamics in the occupation-number basis.

Single-particle vectors use the orthonormal mode convention
``phi_mode = sqrt(h) * phi_field`` (d = 1 only).  The Hamiltonian is

    H = sum_pq h_pq a+_p a_q + (1/2N) sum_xy v(x-y) (n_x n_y - delta_xy n_x),

the exact second quantization of ``sum_j -Delta_j + N^{-1} sum_{i<j} v(x_i-x_j)``
with the same spectral Laplacian as the mean-field solvers.  Exchange
symmetry is built into the basis.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal, expm
from scipy.special import gammaln, logsumexp

from .errors import BasisSizeError, ParameterError
from .grid import ComplexField, GridSpec
from .observables import Observable
from .potentials import Potential

BASIS_CAP = 200_000
DENSE_CAP = 5_000


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation vectors with ``sum(n) = N`` in descending lexicographic order."""

    M: int
    N: int
    occupations: np.ndarray = field(repr=False)  # (dim, M) int
    _keys: np.ndarray = field(repr=False)  # ascending keys
    _order: np.ndarray = field(repr=False)  # basis index of each sorted key

    @property
    def dim(self) -> int:
        return len(self.occupations)

    def encode(self, occ: np.ndarray) -> np.ndarray:
        weights = (self.N + 1) ** np.arange(self.M - 1, -1, -1, dtype=np.int64)
        return np.asarray(occ, dtype=np.int64) @ weights

    def index(self, occ) -> np.ndarray:
        """Basis indices of occupation vectors (rows)."""
        keys = self.encode(np.atleast_2d(occ))
        pos = np.searchsorted(self._keys, keys)
        if np.any(pos >= len(self._keys)) or np.any(self._keys[np.minimum(pos, len(self._keys) - 1)] != keys):
            raise ParameterError("occupation vector not in this sector")
        return self._order[pos]

    def state(self, i: int) -> tuple:
        return tuple(int(n) for n in self.occupations[i])


def basis_dimension(M: int, N: int) -> int:
    return math.comb(N + M - 1, N)


def build_basis(M: int, N: int, cap: int = BASIS_CAP) -> FockBasis:
    if M < 1 or N < 1:
        raise ParameterError("need M >= 1 modes and N >= 1 particles")
    dim = basis_dimension(M, N)
    if dim > cap:
        raise BasisSizeError(f"sector dimension {dim} exceeds cap {cap}")
    if (N + 1) ** M >= 2 ** 62:
        raise BasisSizeError("occupation keys would overflow int64")
    # stars and bars: bar positions in lexicographic order give ascending
    # occupations; reversing yields descending lexicographic order
    bars = np.array(list(combinations(range(N + M - 1), M - 1)), dtype=np.int64).reshape(-1, M - 1)
    edges = np.hstack([np.full((dim, 1), -1), bars, np.full((dim, 1), N + M - 1)])
    occ = (np.diff(edges, axis=1) - 1)[::-1].copy()
    occ.setflags(write=False)
    weights = (N + 1) ** np.arange(M - 1, -1, -1, dtype=np.int64)
    keys = occ @ weights
    order = np.argsort(keys)
    return FockBasis(M, N, occ, keys[order], order)


def _hops(basis: FockBasis, p: int, q: int):
    """Source indices, target indices and amplitudes of ``a+_p a_q``."""
    occ = basis.occupations
    src = np.nonzero(occ[:, q] > 0)[0]
    if p == q:
        return src, src, occ[src, q].astype(float)
    new = occ[src].copy()
    amp = np.sqrt(new[:, q].astype(float))
    new[:, q] -= 1
    amp = amp * np.sqrt(new[:, p] + 1.0)
    new[:, p] += 1
    return src, basis.index(new), amp


def one_body_operator(basis: FockBasis, A: np.ndarray) -> sp.csr_matrix:
    """Sector matrix of ``sum_pq A[p, q] a+_p a_q``."""
    A = np.asarray(A)
    rows, cols, data = [], [], []
    for p in range(basis.M):
        for q in range(basis.M):
            if A[p, q] == 0:
                continue
            src, dst, amp = _hops(basis, p, q)
            rows.append(dst)
            cols.append(src)
            data.append(A[p, q] * amp)
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    mat = sp.coo_matrix(
        (np.concatenate(data).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    )
    return mat.tocsr()


def spectral_laplacian_matrix(grid: GridSpec) -> np.ndarray:
    """Dense ``-Delta`` on the grid (real symmetric circulant)."""
    eye = np.eye(grid.n_points)
    m = np.stack([grid.fourier_multiplier(grid.k2, eye[:, j]).real for j in range(grid.n_points)], axis=1)
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class SecondQuantizedHamiltonian:
    basis: FockBasis
    grid: GridSpec
    potential: Potential
    one_body: np.ndarray = field(repr=False)
    interaction_matrix: np.ndarray = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def N(self) -> int:
        return self.basis.N

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def energy(self, state: "ManyBodyState") -> float:
        return float(np.vdot(state.amplitudes, self.apply(state.amplitudes)).real)


def interaction_diagonal(basis: FockBasis, v_matrix: np.ndarray) -> np.ndarray:
    """``(1/2N) sum_xy v(x-y) (n_x n_y - delta_xy n_x)`` per basis state."""
    n = basis.occupations.astype(float)
    pair = np.einsum("ix,xy,iy->i", n, v_matrix, n) - n @ np.diag(v_matrix)
    return pair / (2 * basis.N)


def build_hamiltonian(grid: GridSpec, v: Potential, N: int, basis: FockBasis | None = None) -> SecondQuantizedHamiltonian:
    if grid.d != 1:
        raise ParameterError("the many-body oracle supports d=1 only")
    basis = basis or build_basis(grid.M, N)
    if basis.N != N or basis.M != grid.M:
        raise ParameterError("basis does not match (M, N)")
    t = spectral_laplacian_matrix(grid)
    vm = v.matrix(grid)
    mat = one_body_operator(basis, t) + sp.diags(interaction_diagonal(basis, vm).astype(complex))
    return SecondQuantizedHamiltonian(basis, grid, v, t, vm, mat.tocsr())


@dataclass(frozen=True, eq=False)
class ManyBodyState:
    basis: FockBasis
    amplitudes: np.ndarray = field(repr=False)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "ManyBodyState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def product_state(phi: ComplexField, basis: FockBasis) -> ManyBodyState:
    """``phi^{tensor N}``: amplitude ``sqrt(N!/prod n!) prod phi_x**n_x``."""
    if phi.grid.n_points != basis.M:
        raise ParameterError("field and basis have different mode counts")
    mode = np.sqrt(phi.grid.cell_volume) * phi.values
    if abs(np.linalg.norm(mode) - 1.0) > 1e-10:
        raise ParameterError("phi is not normalized")
    occ = basis.occupations
    log_mult = 0.5 * (gammaln(basis.N + 1) - np.sum(gammaln(occ + 1), axis=1))
    amps = np.exp(log_mult) * np.prod(mode[None, :] ** occ, axis=1)
    return ManyBodyState(basis, amps)


# -- Krylov propagation -------------------------------------------------------

def _lanczos(apply, v, m):
    beta0 = np.linalg.norm(v)
    n = len(v)
    m = min(m, n)
    V = np.zeros((m, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v / beta0
    k = m
    for j in range(m):
        w = apply(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j > 0 else 0)
        # full reorthogonalization; m is small
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if j + 1 < m:
            if beta[j] < 1e-14 * max(1.0, abs(alpha[j])):
                k = j + 1
                break
            V[j + 1] = w / beta[j]
    return V[:k], alpha[:k], beta[:k], beta0


def krylov_step(apply, psi: np.ndarray, dt: float, m: int = 20):
    """``exp(-i H dt) psi`` and an a-posteriori error estimate."""
    V, alpha, beta, beta0 = _lanczos(apply, psi, m)
    k = len(alpha)
    if k == 1:
        w, u = alpha, np.ones((1, 1))
    else:
        w, u = eigh_tridiagonal(alpha, beta[: k - 1])
    coeff = u @ (np.exp(-1j * dt * w) * u[0])
    err = beta0 * beta[k - 1] * abs(coeff[-1]) if k == m else 0.0
    return beta0 * (V.T @ coeff), float(err)


def evolve_exact(psi: ManyBodyState, H: SecondQuantizedHamiltonian, T: float, tau: float, *,
                 krylov_dim: int = 20, tol: float = 1e-10, report: dict | None = None) -> ManyBodyState:
    """Propagate to time ``T`` (negative runs backwards) with Lanczos steps.

    Steps whose error estimate exceeds ``tol`` are halved until accepted;
    the number of refinements is recorded in ``report``.
    """
    if tau <= 0:
        raise ParameterError("tau must be positive")
    if T == 0:
        return psi
    n = max(1, int(math.ceil(abs(T) / tau - 1e-9)))
    dt = T / n
    amps = psi.amplitudes.astype(complex)
    refinements = 0
    stack = [dt] * n
    while stack:
        h = stack.pop()
        new, err = krylov_step(H.apply, amps, h, krylov_dim)
        if err > tol and abs(h) > 1e-12:
            refinements += 1
            stack.extend([h / 2, h / 2])
            continue
        amps = new
    if report is not None:
        report["krylov_refinements"] = report.get("krylov_refinements", 0) + refinements
    return ManyBodyState(psi.basis, amps)


def evolve_dense(psi: ManyBodyState, H: SecondQuantizedHamiltonian, T: float) -> ManyBodyState:
    """Reference propagation with a dense matrix exponential (small sectors)."""
    if H.basis.dim > DENSE_CAP:
        raise BasisSizeError(f"dense propagation limited to dim {DENSE_CAP}")
    return ManyBodyState(psi.basis, expm(-1j * T * H.matrix.toarray()) @ psi.amplitudes)


# -- counting statistics ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Law of ``O_{N,t}``: atoms ``values`` with probabilities ``weights``."""

    values: np.ndarray
    weights: np.ndarray
    N: int
    mean_ref: float

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot(self.weights, (self.values - m) ** 2))


def second_quantize(O: Observable, basis: FockBasis) -> sp.csr_matrix:
    """``dGamma(O)`` on the sector."""
    if O.grid.n_points != basis.M:
        raise ParameterError("observable and basis have different mode counts")
    return one_body_operator(basis, O.matrix)


def observable_statistics(psi: ManyBodyState, O: Observable, mean_ref: float,
                          cap: int = DENSE_CAP) -> SpectralMeasure:
    """Exact law of ``N^{-1} sum_j (O^{(j)} - mean_ref)`` in ``psi``."""
    basis = psi.basis
    if basis.dim > cap:
        raise BasisSizeError(
            f"dimension {basis.dim} exceeds {cap} for dense diagonalization; "
            "use observable_moments instead"
        )
    dg = second_quantize(O, basis)
    if hasattr(O, "multiplier"):
        evals = dg.diagonal().real
        weights = np.abs(psi.amplitudes) ** 2
    else:
        evals, evecs = np.linalg.eigh(dg.toarray())
        weights = np.abs(evecs.conj().T @ psi.amplitudes) ** 2
    weights = weights / weights.sum()
    return SpectralMeasure(evals / basis.N - mean_ref, weights, basis.N, float(mean_ref))


def observable_moments(psi: ManyBodyState, O: Observable, mean_ref: float, order: int = 4) -> np.ndarray:
    """Raw moments ``E[O_{N,t}**k]``, ``k = 1..order``, by repeated sparse application."""
    basis = psi.basis
    shifted = (second_quantize(O, basis) - sp.identity(basis.dim) * basis.N * mean_ref) / basis.N
    # E[X^k] = <X^{a} psi, X^{b} psi> with a + b = k
    powers = [psi.amplitudes]
    for _ in range(order):
        powers.append(shifted @ powers[-1])
    return np.array([np.vdot(powers[k // 2], powers[k - k // 2]).real for k in range(1, order + 1)])


def empirical_lmgf(measure: SpectralMeasure, lam):
    """``N^{-1} log sum_k w_k exp(lam N o_k)``."""
    N = measure.N
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    out = logsumexp(np.outer(lam_arr * N, measure.values), b=measure.weights[None, :], axis=1) / N
    return out if np.ndim(lam) else float(out[0])


def tail_probability(measure: SpectralMeasure, x) -> float:
    """``P[O_{N,t} > x]``."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.array([measure.weights[measure.values > xi].sum() for xi in x_arr])
    return out if np.ndim(x) else float(out[0])


def reduced_density(psi: ManyBodyState) -> np.ndarray:
    """``gamma[p, q] = <psi, a+_q a_p psi> / N`` (mode convention)."""
    basis = psi.basis
    amps = psi.amplitudes
    gamma = np.zeros((basis.M, basis.M), dtype=complex)
    for p in range(basis.M):
        for q in range(basis.M):
            src, dst, amp = _hops(basis, q, p)  # a+_q a_p
            gamma[p, q] = np.sum(amps[dst].conj() * amp * amps[src])
    return gamma / basis.N


@dataclass
class OracleRun:
    """Per-N oracle results at a list of times."""

    N: int
    dim: int
    times: list
    states: list = field(repr=False)
    energies: list = field(default_factory=list)
    runtime: float = 0.0
    report: dict = field(default_factory=dict)


def run_oracle(phi0: ComplexField, v: Potential, N: int, times, *, tau: float = 0.05,
               krylov_dim: int = 20, tol: float = 1e-10) -> OracleRun:
    """Evolve ``phi0^{tensor N}`` and keep the state at each requested time."""
    start = time.perf_counter()
    H = build_hamiltonian(phi0.grid, v, N)
    psi = product_state(phi0, H.basis)
    now = 0.0
    states, energies = [], []
    report = {}
    for t in sorted(times):
        psi = evolve_exact(psi, H, t - now, tau, krylov_dim=krylov_dim, tol=tol, report=report)
        now = t
        states.append(psi)
        energies.append(H.energy(psi))
    return OracleRun(N, H.basis.dim, sorted(times), states, energies,
                     time.perf_counter() - start, report)
