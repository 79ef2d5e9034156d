"""Bogoliubov fluctuation function and its variance.

For ``0 <= s <= t`` the field ``f_{s;t}`` solves the backward problem

    i d/ds f = (h_H(s) + q K1 q - q K2 J q) f,   f_{t;t} = q_t O phi_t,

where ``q = 1 - |phi_s><phi_s|``, ``J`` is complex conjugation and
``K1(x, y) = v(x-y) phi(x) conj(phi(y))``, ``K2(x, y) = v(x-y) phi(x) phi(y)``.
The pairing term is projected as a two-particle kernel, ``(q x q) K2``, which
as an operator reads ``q K2 J q``.  ``||f_{0;t}||**2`` is the asymptotic
variance of the fluctuations of ``O``.

Because of ``J`` the generator is real-linear only; it is integrated with
classical RK4, whose real coefficients make complex arithmetic on ``f``
identical to RK4 on the doubled real system ``(Re f, Im f)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalConsistencyError, ParameterError, SolverDriftError
from .grid import ComplexField, GridSpec, inner_product, l2_norm
from .hartree import HartreeTrajectory, _Stepper
from .observables import Observable
from .potentials import Potential

KERNEL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KernelPair:
    """Dense ``K1`` (Hermitian) and ``K2`` (symmetric) with quadrature weight."""

    K1: np.ndarray = field(repr=False)
    K2: np.ndarray = field(repr=False)
    phi: ComplexField = field(repr=False)
    potential: Potential
    s: float | None = None

    @property
    def hs_norms(self) -> tuple:
        """Hilbert-Schmidt norms; the matrices already carry the ``h**d`` weight."""
        return float(np.linalg.norm(self.K1)), float(np.linalg.norm(self.K2))


def build_kernels(phi_s: ComplexField, v: Potential, s: float | None = None) -> KernelPair:
    """``K1[x, y] = h**d v(x-y) phi(x) conj(phi(y))``, ``K2`` likewise without conj."""
    grid = phi_s.grid
    vm = grid.cell_volume * v.matrix(grid)
    p = phi_s.values
    k1 = vm * np.outer(p, p.conj())
    k2 = vm * np.outer(p, p)
    return KernelPair(k1, k2, phi_s, v, s)


def check_kernels(kp: KernelPair, tol: float = KERNEL_TOL):
    """Raise :class:`NumericalConsistencyError` naming the violated symmetry."""
    scale = max(1.0, float(np.max(np.abs(kp.K1))) if kp.K1.size else 1.0)
    d1 = float(np.max(np.abs(kp.K1 - kp.K1.conj().T)))
    if d1 > tol * scale:
        raise NumericalConsistencyError(f"K1-hermiticity violated (defect {d1:.3e})")
    d2 = float(np.max(np.abs(kp.K2 - kp.K2.T)))
    if d2 > tol * scale:
        raise NumericalConsistencyError(f"K2-symmetry violated (defect {d2:.3e})")


def project_out(phi: ComplexField, g: ComplexField) -> ComplexField:
    """``q g = g - <phi, g> phi``."""
    nrm = l2_norm(phi)
    if abs(nrm - 1.0) > 1e-8:
        raise ParameterError(f"phi is not normalized (norm {nrm:.12f})")
    return g.replace(g.values - inner_product(phi, g) * phi.values)


def rhs_backward(f: ComplexField, phi_s: ComplexField, kernels: KernelPair,
                 check: bool = True) -> ComplexField:
    """``d/ds f = -i [h_H(s) f + q K1 q f - q K2 J q f]`` using dense kernels."""
    grid = f.grid
    dv = grid.cell_volume
    p = phi_s.values
    if check:
        defect = abs(inner_product(phi_s, f))
        if defect > 1e-6:
            raise ParameterError(f"f is not orthogonal to phi_s (|<phi, f>| = {defect:.3e})")

    def q(u):
        return u - dv * np.vdot(p, u) * p

    v = kernels.potential
    pot = v.mean_field(np.abs(p) ** 2, grid)
    hf = grid.fourier_multiplier(grid.k2, f.values) + pot * f.values
    u = q(f.values)
    pair = q(kernels.K1 @ u) - q(kernels.K2 @ u.conj())
    return ComplexField(grid, -1j * (hf + pair))


class _Generator:
    """Matrix-free application of the projected fluctuation generator."""

    def __init__(self, grid: GridSpec, v: Potential):
        self.grid = grid
        self.v = v
        self.dv = grid.cell_volume
        self.vhat = v.table_hat(grid)
        self.interacting = not v.is_zero()

    def conv(self, u):
        g = self.grid
        return self.dv * g.ifft(self.vhat * g.fft(u))

    def pair(self, g, phi):
        """``q K1 q g - q K2 J q g``."""
        if not self.interacting:
            return np.zeros_like(g)
        dv = self.dv
        u = g - dv * np.vdot(phi, g) * phi
        w = phi * self.conv(phi.conj() * u) - phi * self.conv(phi * u.conj())
        return w - dv * np.vdot(phi, w) * phi

    def mean_field(self, phi):
        if not self.interacting:
            return np.zeros(self.grid.n_points)
        return self.v.mean_field(np.abs(phi) ** 2, self.grid)


def _rk4(rhs, y, s, ds):
    k1 = rhs(s, y)
    k2 = rhs(s + ds / 2, y + ds / 2 * k1)
    k3 = rhs(s + ds / 2, y + ds / 2 * k2)
    k4 = rhs(s + ds, y + ds * k3)
    return y + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True, eq=False)
class FluctuationSolution:
    trajectory: HartreeTrajectory = field(repr=False)
    observable: Observable = field(repr=False)
    t: float
    s: np.ndarray = field(repr=False)  # ascending solver times
    fields: np.ndarray = field(repr=False)  # fields[i] = f_{s[i]; t}
    sigma2: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def terminal(self) -> ComplexField:
        return ComplexField(self.trajectory.grid, self.fields[-1])

    @property
    def initial(self) -> ComplexField:
        return ComplexField(self.trajectory.grid, self.fields[0])

    @property
    def norms(self) -> np.ndarray:
        return self.diagnostics["norms"]

    @property
    def orthogonality(self) -> np.ndarray:
        return self.diagnostics["orthogonality"]


def _growth_rate(s, norms, t):
    """Smallest ``C`` with ``log||f_s|| - log||f_t|| <= C (t - s)`` on the samples."""
    if norms[-1] == 0 or len(s) < 2:
        return 0.0
    gap = t - s[:-1]
    rates = (np.log(np.maximum(norms[:-1], 1e-300)) - np.log(norms[-1])) / gap
    return float(max(0.0, np.max(rates)))


def solve_backward(traj: HartreeTrajectory, O: Observable, t: float, *,
                   method: str = "split", stride: int = 1,
                   drift_tol: float = 1e-6) -> FluctuationSolution:
    """Integrate ``f_{s;t}`` from ``s = t`` down to ``s = 0``.

    ``method="split"`` (default) mirrors the Strang step of the trajectory:
    the kinetic half steps are applied exactly and the interaction part is
    advanced with RK4, rebuilding the kernels at every stage from the exact
    phase-rotated condensate of that sub-step.  The pair ``(phi, f)`` then
    follows one consistent discrete flow, which keeps ``<phi_s, f_{s;t}>`` at
    round-off level.  Overall order is 2, inherited from the trajectory.

    ``method="rk4"`` applies RK4 to the full generator with step
    ``stride * tau``, taking ``phi`` at stage times from stored snapshots
    (exact for even ``stride``, linear interpolation otherwise).
    """
    if traj.tau <= 0:
        raise ParameterError("trajectory must run forward in time")
    if O.grid != traj.grid:
        raise ParameterError("observable and trajectory live on different grids")
    kt = traj.index_of(t)
    grid = traj.grid
    dv = grid.cell_volume
    gen = _Generator(grid, traj.potential)
    states = traj.states

    phi_t = states[kt]
    o_phi = O.apply(phi_t)
    f = o_phi - dv * np.vdot(phi_t, o_phi) * phi_t

    if method == "split":
        idx = np.arange(kt, -1, -1)
        step = _Stepper(grid, traj.potential, traj.tau)
        tau = traj.tau
        back_half = step.half_kinetic.conj()

        def advance(f, k):
            chi, pot = step.mid(states[k])
            rot = -1j * pot

            def rhs(sig, g):
                phi = np.exp(rot * sig) * chi
                return -1j * (pot * g + gen.pair(g, phi))

            g = grid.ifft(back_half * grid.fft(f))
            g = _rk4(rhs, g, tau, -tau)
            return grid.ifft(back_half * grid.fft(g))
    elif method == "rk4":
        if stride < 1 or kt % stride:
            raise ParameterError(f"stride {stride} must divide the step count {kt}")
        idx = np.arange(kt, -1, -stride)
        tau = traj.tau
        H = stride * tau

        def phi_at(sig):
            x = sig / tau
            lo = int(np.floor(x + 1e-9))
            w = x - lo
            if w < 1e-9 or lo + 1 >= len(states):
                return states[min(lo, len(states) - 1)]
            p = (1 - w) * states[lo] + w * states[lo + 1]
            return p / (np.sqrt(dv) * np.linalg.norm(p))

        def rhs(sig, g):
            phi = phi_at(sig)
            hf = grid.fourier_multiplier(grid.k2, g) + gen.mean_field(phi) * g
            return -1j * (hf + gen.pair(g, phi))

        def advance(f, k):
            return _rk4(rhs, f, (k + stride) * tau, -H)
    else:
        raise ParameterError(f"unknown method {method!r}")

    fields = np.empty((len(idx), grid.n_points), dtype=complex)
    ortho = np.empty(len(idx))
    fields[-1] = f
    ortho[-1] = abs(dv * np.vdot(states[kt], f))
    for j, k in enumerate(idx[1:], start=1):
        f = advance(f, k)
        pos = len(idx) - 1 - j
        fields[pos] = f
        ortho[pos] = abs(dv * np.vdot(states[k], f))
        if ortho[pos] > drift_tol:
            raise SolverDriftError(
                f"orthogonality defect {ortho[pos]:.3e} at s={k * traj.tau:.6g}; "
                "reduce the time step"
            )

    s = traj.times[idx[::-1]]
    norms = np.sqrt(dv) * np.linalg.norm(fields, axis=1)
    sigma2 = float(norms[0] ** 2)
    diagnostics = {
        "method": method,
        "step": float(traj.tau * (stride if method == "rk4" else 1)),
        "orthogonality": ortho,
        "max_orthogonality_defect": float(np.max(ortho)),
        "norms": norms,
        "growth_rate": _growth_rate(s, norms, t),
    }
    return FluctuationSolution(traj, O, float(t), s, fields, sigma2, diagnostics)


def variance_curve(traj: HartreeTrajectory, O: Observable, times, **kwargs) -> list:
    """``[(t, sigma_t**2), ...]`` from one backward solve per time."""
    return [(float(t), solve_backward(traj, O, t, **kwargs).sigma2) for t in times]
