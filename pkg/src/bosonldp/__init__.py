"""Mean-field bosonic dynamics, Bogoliubov fluctuations and large-deviation checks on periodic grids."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .grid import (  # noqa: F401
    ComplexField, GridSpec, convolve, fourier_coefficients, gaussian, inner_product, kinetic_apply,
    l2_norm, laplacian_apply, plane_wave, sobolev_norm,
)
from .potentials import Potential, potential_bound_constant  # noqa: F401
from .observables import Observable, expectation, triple_norm, variance  # noqa: F401
from .hartree import HartreeTrajectory, evolve_hartree, hartree_energy, hartree_step  # noqa: F401
from .fluctuation import KernelPair, build_kernels, check_kernels, rhs_backward, solve_backward, variance_curve  # noqa: F401
from .ldp import (  # noqa: F401
    MgfCurve, RateEnvelope, chebyshev_envelope, legendre_fenchel, quadratic_rate, theorem_envelopes,
    tilted_measure,
)
