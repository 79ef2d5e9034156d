"""Time evolution of the condensate wave function under the Hartree equation.

``i d/dt phi = (-Delta + v * |phi|**2) phi`` is integrated with Strang
splitting: half a kinetic step in Fourier space, a full nonlinear phase using
the density of the mid-step field, and another half kinetic step.  The
modulus is invariant under the phase sub-flow, so the scheme is exactly
time-reversible and unitary.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, PropagationError
from .grid import ComplexField, GridSpec, l2_norm, sobolev_norm
from .potentials import Potential


@dataclass(frozen=True, eq=False)
class HartreeTrajectory:
    grid: GridSpec
    potential: Potential
    tau: float
    times: np.ndarray
    states: np.ndarray = field(repr=False)  # shape (K+1, n_points)
    energies: np.ndarray = field(repr=False)
    initial_energy: float
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> ComplexField:
        return ComplexField(self.grid, self.states[k])

    def index_of(self, t: float) -> int:
        k = int(round(t / self.tau))
        if k < 0 or k >= len(self.times) or abs(k * self.tau - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"t={t} is not a trajectory time (tau={self.tau})")
        return k

    def at(self, t: float) -> ComplexField:
        return self.state(self.index_of(t))

    @property
    def final(self) -> ComplexField:
        return self.state(len(self.times) - 1)


def _energy(values: np.ndarray, grid: GridSpec, v: Potential) -> float:
    dv = grid.cell_volume
    fhat = grid.fft(values)
    kinetic = dv / grid.n_points * np.sum(grid.k2 * np.abs(fhat) ** 2)
    rho = np.abs(values) ** 2
    interaction = 0.5 * dv * np.sum(v.mean_field(rho, grid) * rho)
    return float(kinetic + interaction)


def hartree_energy(phi: ComplexField, v: Potential) -> float:
    """``<phi, -Delta phi> + 1/2 <phi, (v * |phi|**2) phi>``."""
    norm = l2_norm(phi)
    if abs(norm - 1.0) > 1e-8:
        raise ParameterError(f"state is not normalized (norm {norm:.12f})")
    return _energy(phi.values, phi.grid, v)


class _Stepper:
    """Strang step with cached propagators for a fixed (grid, v, tau)."""

    def __init__(self, grid: GridSpec, v: Potential, tau: float):
        self.grid = grid
        self.v = v
        self.tau = tau
        self.half_kinetic = np.exp(-0.5j * tau * grid.k2)
        self.interacting = not v.is_zero()

    def mid(self, values):
        """First half kinetic step and the mean field of the result."""
        g = self.grid
        chi = g.ifft(self.half_kinetic * g.fft(values))
        if self.interacting:
            pot = self.v.mean_field(np.abs(chi) ** 2, g)
        else:
            pot = np.zeros(g.n_points)
        return chi, pot

    def __call__(self, values):
        g = self.grid
        chi, pot = self.mid(values)
        chi = np.exp(-1j * self.tau * pot) * chi
        return g.ifft(self.half_kinetic * g.fft(chi)), pot


def hartree_step(phi: ComplexField, v: Potential, tau: float) -> ComplexField:
    """One second-order Strang step of length ``tau``."""
    if tau == 0:
        raise ParameterError("tau must be non-zero")
    out, _ = _Stepper(phi.grid, v, tau)(phi.values)
    return ComplexField(phi.grid, out)


def _n_steps(T: float, tau: float) -> int:
    if tau == 0 or T / tau <= 0:
        raise ParameterError("T and tau must be non-zero with the same sign")
    n = int(round(T / tau))
    if abs(n * tau - T) > 1e-9 * max(1.0, abs(T)):
        raise ParameterError(f"tau={tau} does not divide T={T}")
    return n


def evolve_hartree(phi0: ComplexField, v: Potential, T: float, tau: float, *,
                   check: bool = True, norm_tol: float = 1e-8,
                   energy_rtol: float = 1e-6, mean_field_factor: float = 10.0) -> HartreeTrajectory:
    """Propagate ``phi0`` to time ``T`` storing every step.

    A negative ``tau`` (with negative ``T``) runs the equation backwards.
    With ``check`` enabled the run aborts with :class:`PropagationError` as
    soon as the norm or energy leaves its tolerance, or the sup norm of the
    mean field exceeds ``mean_field_factor`` times its initial value.
    """
    norm0 = l2_norm(phi0)
    if abs(norm0 - 1.0) > 1e-10:
        raise ParameterError(f"initial state is not normalized (norm {norm0:.14f})")
    grid = phi0.grid
    n = _n_steps(T, tau)
    step = _Stepper(grid, v, tau)

    states = np.empty((n + 1, grid.n_points), dtype=complex)
    energies = np.empty(n + 1)
    h2 = np.empty(n + 1)
    mf_sup = np.empty(n + 1)
    states[0] = phi0.values
    energies[0] = e0 = _energy(phi0.values, grid, v)
    h2[0] = sobolev_norm(phi0, 2)
    mf_sup[0] = np.max(np.abs(v.mean_field(np.abs(phi0.values) ** 2, grid))) if step.interacting else 0.0
    scale = max(1.0, abs(e0))

    for k in range(n):
        nxt, pot = step(states[k])
        states[k + 1] = nxt
        energies[k + 1] = _energy(nxt, grid, v)
        f = ComplexField(grid, nxt)
        h2[k + 1] = sobolev_norm(f, 2)
        mf_sup[k + 1] = np.max(np.abs(pot)) if step.interacting else 0.0
        if check:
            nrm = l2_norm(f)
            if abs(nrm - 1.0) > norm_tol:
                raise PropagationError(f"step {k + 1}: norm drift {nrm - 1.0:.3e}")
            drift = abs(energies[k + 1] - e0)
            if drift > energy_rtol * scale:
                raise PropagationError(f"step {k + 1}: energy drift {drift:.3e} exceeds {energy_rtol * scale:.1e}")
            if mf_sup[0] > 0 and mf_sup[k + 1] > mean_field_factor * mf_sup[0]:
                raise PropagationError(f"step {k + 1}: mean field sup norm {mf_sup[k + 1]:.3e} blew up")

    times = tau * np.arange(n + 1)
    norms = np.sqrt(grid.cell_volume) * np.linalg.norm(states, axis=1)
    # exponential growth rate of the H2 norm (diagnostic only)
    growth = float(np.polyfit(times, np.log(h2), 1)[0]) if n >= 1 else 0.0
    diagnostics = {
        "max_norm_drift": float(np.max(np.abs(norms - 1.0))),
        "max_energy_drift": float(np.max(np.abs(energies - e0))),
        "relative_energy_drift": float(np.max(np.abs(energies - e0)) / scale),
        "mean_field_sup_max": float(np.max(mf_sup)),
        "h2_norm": h2,
        "h2_growth_rate": growth,
    }
    return HartreeTrajectory(grid, v, float(tau), times, states, energies, e0, diagnostics)


def observed_order(phi0: ComplexField, v: Potential, T: float, tau: float) -> float:
    """Richardson estimate of the convergence order from ``tau, tau/2, tau/4``."""
    finals = [evolve_hartree(phi0, v, T, tau / 2 ** j, check=False).final.values for j in range(3)]
    dv = np.sqrt(phi0.grid.cell_volume)
    e1 = dv * np.linalg.norm(finals[0] - finals[1])
    e2 = dv * np.linalg.norm(finals[1] - finals[2])
    return float(np.log2(e1 / e2))
