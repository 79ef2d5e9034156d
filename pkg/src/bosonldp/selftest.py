"""Reduced-size invariant suite behind the ``self-test`` subcommand."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BosonLDPError, NumericalConsistencyError
from .fluctuation import build_kernels, check_kernels, solve_backward
from .grid import ComplexField, GridSpec, fourier_coefficients, gaussian, inner_product, kinetic_apply, l2_norm
from .hartree import evolve_hartree
from .ldp import (
    MgfCurve, chebyshev_envelope, iid_lmgf, iid_spectral_measure, legendre_fenchel, tilted_measure,
)
from .observables import Observable, expectation, triple_norm, variance
from .oracle import (
    build_hamiltonian, empirical_lmgf, evolve_exact, observable_statistics, product_state, tail_probability,
)
from .potentials import Potential

FAULTS = ("k2-symmetry",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class SelfTestReport:
    results: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list:
        return [r.name for r in self.results if not r.passed]

    def lines(self) -> list:
        out = [f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}" for r in self.results]
        out.append(f"{len(self.results) - len(self.failures)}/{len(self.results)} checks passed "
                   f"in {self.runtime:.1f}s")
        return out


def _random_field(grid, rng):
    return ComplexField(grid, rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points))


def _mixture(grid):
    x = grid.coords[0]
    vals = 1.0 + (0.5 + 0.2j) * np.exp(1j * x) + 0.3 * np.exp(-1j * x)
    return ComplexField(grid, vals).normalized()


def _checks(inject):
    rng = np.random.default_rng(0)
    big = GridSpec(1, 128, 20.0)
    small = GridSpec(1, 6, 2 * np.pi)
    v = Potential("gaussian", 0.25, 1.0)
    O = Observable.cosine(small, 1.0, 1)
    phi = _mixture(small)

    def parseval():
        f = _random_field(big, rng)
        err = abs(l2_norm(f) - np.linalg.norm(fourier_coefficients(f)))
        return err <= 1e-12 * l2_norm(f), f"defect {err:.2e}"

    def laplacian_hermitian():
        a, b = _random_field(big, rng), _random_field(big, rng)
        err = abs(inner_product(a, kinetic_apply(b)) - inner_product(kinetic_apply(a), b))
        return err <= 1e-11 * max(1.0, abs(inner_product(a, kinetic_apply(b)))), f"defect {err:.2e}"

    def triple_norm_identity():
        err = abs(triple_norm(Observable.identity(big)) - 1.0)
        return err <= 1e-10, f"|||1||| - 1 = {err:.2e}"

    def hartree_conservation():
        phi0 = gaussian(big, width=1.0, momentum=[1.0])
        traj = evolve_hartree(phi0, Potential("soft-coulomb", 1.0, epsilon=0.5), 0.2, 1e-3)
        d = traj.diagnostics
        ok = d["max_norm_drift"] <= 1e-9 and d["relative_energy_drift"] <= 1e-6
        return ok, f"norm {d['max_norm_drift']:.1e}, energy {d['relative_energy_drift']:.1e}"

    def hartree_reversibility():
        phi0 = gaussian(big, width=1.0, momentum=[1.0])
        fwd = evolve_hartree(phi0, v, 0.1, 1e-3).final
        back = evolve_hartree(fwd, v, -0.1, -1e-3).final
        err = l2_norm(back.replace(back.values - phi0.values))
        return err <= 1e-10, f"round trip {err:.2e}"

    def kernel_symmetry():
        kp = build_kernels(phi, v)
        if "k2-symmetry" in inject:
            K2 = kp.K2.copy()
            K2[0, 1] += 1e-6
            object.__setattr__(kp, "K2", K2)
        check_kernels(kp)
        return True, "K1 Hermitian, K2 symmetric"

    traj = evolve_hartree(phi, v, 0.5, 1e-3)

    def orthogonality():
        sol = solve_backward(traj, O, 0.5)
        d = sol.diagnostics["max_orthogonality_defect"]
        return d <= 1e-7, f"max |<phi_s, f_s>| = {d:.1e}"

    def variance_identity():
        sol = solve_backward(traj, O, 0.0)
        err = abs(sol.sigma2 - variance(O, phi))
        return err <= 1e-10, f"defect {err:.1e}"

    def oracle_unitarity():
        H = build_hamiltonian(small, v, 3)
        herm = abs(H.matrix - H.matrix.getH()).max()
        psi = evolve_exact(product_state(phi, H.basis), H, 0.5, 0.05)
        back = evolve_exact(psi, H, -0.5, 0.05)
        rev = np.linalg.norm(back.amplitudes - product_state(phi, H.basis).amplitudes)
        ok = herm <= 1e-13 and abs(psi.norm() - 1) <= 1e-10 and rev <= 1e-7
        return ok, f"hermiticity {herm:.1e}, reversal {rev:.1e}"

    def free_factorization():
        free = Potential("zero")
        H = build_hamiltonian(small, free, 3)
        psi = evolve_exact(product_state(phi, H.basis), H, 0.5, 0.05)
        phit = evolve_hartree(phi, free, 0.5, 1e-3).final
        err = np.linalg.norm(psi.amplitudes - product_state(phit, H.basis).amplitudes)
        return err <= 1e-8, f"defect {err:.1e}"

    def chebyshev():
        H = build_hamiltonian(small, v, 4)
        psi = evolve_exact(product_state(phi, H.basis), H, 0.5, 0.05)
        m = observable_statistics(psi, O, expectation(O, phi))
        lam = np.linspace(0.05, 1.0, 8)
        lm = empirical_lmgf(m, lam)
        worst = -np.inf
        for x in (0.01, 0.05, 0.1):
            p = tail_probability(m, x)
            if p > 0:
                worst = max(worst, np.max(np.log(p) / 4 - (lm - lam * x)))
        return worst <= 1e-12, f"worst gap {worst:.2e}"

    def tilting():
        values, weights = iid_spectral_measure(phi, O)
        worst = max(abs(tilted_measure(values, weights, lam)[1].sum() - 1) for lam in (0.1, 1.0, 5.0))
        return worst <= 1e-12, f"normalization defect {worst:.1e}"

    def duality():
        lam = np.linspace(0.0, 3.0, 601)
        curve = MgfCurve(lam, iid_lmgf(phi, O, lam))
        x = float(curve.spline().derivative()(1.0))
        err = abs(abs(legendre_fenchel(curve, x)) - abs(chebyshev_envelope(curve, x)))
        return err <= 1e-6, f"|LF - envelope| = {err:.1e}"

    return [
        ("parseval", parseval),
        ("laplacian-hermitian", laplacian_hermitian),
        ("triple-norm-identity", triple_norm_identity),
        ("hartree-conservation", hartree_conservation),
        ("hartree-reversibility", hartree_reversibility),
        ("K2-symmetry", kernel_symmetry),
        ("fluctuation-orthogonality", orthogonality),
        ("variance-identity", variance_identity),
        ("oracle-unitarity", oracle_unitarity),
        ("free-factorization", free_factorization),
        ("chebyshev-audit", chebyshev),
        ("tilted-normalization", tilting),
        ("conjugate-duality", duality),
    ]


def self_test(inject=()) -> SelfTestReport:
    """Run every check; ``inject`` names deliberate faults (test hook)."""
    unknown = set(inject) - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown faults {sorted(unknown)}; known: {FAULTS}")
    start = time.perf_counter()
    report = SelfTestReport()
    for name, fn in _checks(set(inject)):
        try:
            ok, detail = fn()
        except (BosonLDPError, NumericalConsistencyError) as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        report.results.append(CheckResult(name, bool(ok), detail))
    report.runtime = time.perf_counter() - start
    return report
