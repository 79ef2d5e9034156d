"""Log-MGF curves, convex conjugation, rate predictions and tilting.

Sign convention: rates are non-negative,
``I(x) = -lim N^{-1} log P[O_{N,t} > x]``, so the Bogoliubov prediction is
``I(x) ~ x**2 / (2 sigma_t**2)`` and ``I = sup_lambda [lambda x - Lambda]``.
Log-probabilities are ``-I``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

from .errors import DegenerateObservableError, DomainError, ParameterError
from .grid import ComplexField
from .observables import Observable, expectation

PROVENANCES = ("analytic-iid", "oracle-N", "bogoliubov-quadratic", "extrapolated", "analytic")


@dataclass(frozen=True, eq=False)
class MgfCurve:
    """Sampled log-moment generating function ``Lambda(lambda)``."""

    lambdas: np.ndarray
    values: np.ndarray
    provenance: str = "analytic"

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        val = np.asarray(self.values, dtype=float)
        if lam.shape != val.shape or lam.ndim != 1 or lam.size < 4:
            raise ParameterError("need matching 1-d arrays with at least 4 samples")
        if np.any(np.diff(lam) <= 0):
            raise ParameterError("lambda grid must be strictly increasing")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "values", val)

    def spline(self) -> CubicSpline:
        if "_spline" not in self.__dict__:
            self.__dict__["_spline"] = CubicSpline(self.lambdas, self.values)
        return self.__dict__["_spline"]

    def second_differences(self) -> np.ndarray:
        """Divided second differences (non-uniform grid safe)."""
        lam, val = self.lambdas, self.values
        d1 = np.diff(val) / np.diff(lam)
        return 2 * np.diff(d1) / (lam[2:] - lam[:-2])

    def is_convex(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.second_differences() >= -tol))

    def check(self, tol0: float = 1e-12, convex_tol: float = 1e-9):
        """Raise if ``Lambda(0) != 0`` (when 0 is sampled) or convexity fails."""
        if self.lambdas[0] == 0.0 and abs(self.values[0]) > tol0:
            raise ParameterError(f"Lambda(0) = {self.values[0]:.3e} != 0")
        if not self.is_convex(convex_tol):
            raise ParameterError(f"curve is not convex (min second difference {self.second_differences().min():.3e})")


def geometric_grid(lam_min: float, ratio: float, count: int, include_zero: bool = True) -> np.ndarray:
    """``lam_min * ratio**k`` for ``k < count``, optionally preceded by 0."""
    if lam_min <= 0 or ratio <= 1 or count < 1:
        raise ParameterError("geometric grid needs lam_min > 0, ratio > 1, count >= 1")
    g = lam_min * ratio ** np.arange(count)
    return np.concatenate([[0.0], g]) if include_zero else g


# -- i.i.d. (Cramer) baseline ---------------------------------------------

def iid_spectral_measure(phi: ComplexField, O: Observable):
    """Law of one particle: centered eigenvalues of ``O`` and Born weights."""
    evals, evecs = np.linalg.eigh(O.matrix)
    amps = evecs.conj().T @ phi.values
    weights = phi.grid.cell_volume * np.abs(amps) ** 2
    weights = weights / weights.sum()
    mean = expectation(O, phi)
    return evals - mean, weights


def iid_lmgf(phi: ComplexField, O: Observable, lam):
    """``log <phi, exp(lam (O - <O>)) phi>``; scalar or array ``lam``."""
    values, weights = iid_spectral_measure(phi, O)
    return measure_lmgf(values, weights, lam)


def measure_lmgf(values, weights, lam, scale: float = 1.0):
    """``scale**-1 log sum_k w_k exp(lam * scale * o_k)`` (max-shifted)."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    out = logsumexp(np.outer(lam_arr * scale, values), b=weights[None, :], axis=1) / scale
    return out if np.ndim(lam) else float(out[0])


def iid_curve(phi: ComplexField, O: Observable, lambdas) -> MgfCurve:
    return MgfCurve(np.asarray(lambdas, float), iid_lmgf(phi, O, np.asarray(lambdas, float)),
                    "analytic-iid")


# -- convex conjugation ----------------------------------------------------

def legendre_fenchel(curve: MgfCurve, x: float, tol: float = 1e-14) -> float:
    """``sup_lambda [lambda x - Lambda(lambda)]`` over the sampled range.

    Solves ``Lambda'(lambda) = x`` on the cubic-spline interpolant by
    bisection, polishes with Newton steps and returns ``lambda x - Lambda``.
    """
    sp = curve.spline()
    d1 = sp.derivative(1)
    d2 = sp.derivative(2)
    lo, hi = curve.lambdas[0], curve.lambdas[-1]
    dlo, dhi = float(d1(lo)), float(d1(hi))
    if not dlo - 1e-12 <= x <= dhi + 1e-12:
        raise DomainError(f"x={x} outside the achievable slope interval [{dlo:.6g}, {dhi:.6g}]")
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if d1(mid) < x:
            a = mid
        else:
            b = mid
        if b - a < 1e-10 * max(1.0, abs(b)):
            break
    lam = 0.5 * (a + b)
    for _ in range(20):
        curv = float(d2(lam))
        if curv <= 0:
            break
        step = (float(d1(lam)) - x) / curv
        new = min(max(lam - step, lo), hi)
        if abs(new - lam) < tol:
            lam = new
            break
        lam = new
    return float(lam * x - sp(lam))


def chebyshev_envelope(curve: MgfCurve, x: float) -> float:
    """``min_lambda [Lambda(lambda) - lambda x]`` over the grid.

    Best exponential bound ``N^{-1} log P[O > x] <= Lambda(lambda) - lambda x``
    available from the sampled curve.
    """
    return float(np.min(curve.values - curve.lambdas * x))


# -- Bogoliubov predictions and theorem envelopes -----------------------------

def quadratic_rate(sigma2: float, x):
    """``x**2 / (2 sigma2)``."""
    if sigma2 <= 0:
        raise DegenerateObservableError("fluctuation variance is zero; no quadratic rate")
    return np.asarray(x, dtype=float) ** 2 / (2 * sigma2) if np.ndim(x) else x ** 2 / (2 * sigma2)


def _double_exp(c: float, t: float) -> float:
    return float(np.exp(np.exp(c * t)))


def lmgf_window(t: float, triple: float, c: float = 1.0) -> float:
    """Largest ``lambda`` covered by the log-MGF bounds: ``exp(-exp(c t)) / |||O|||``."""
    return 1.0 / (_double_exp(c, t) * triple)


@dataclass(frozen=True, eq=False)
class RateEnvelope:
    """Quadratic rate with the two theorem-shaped corrections.

    ``rate_lower`` follows from the upper bound on log-probabilities
    (cubic correction) and ``rate_upper`` from the lower bound (``x**2.5``
    correction); on the joint window ``rate_lower <= quadratic <= rate_upper``.
    """

    x: np.ndarray
    quadratic: np.ndarray
    rate_lower: np.ndarray
    rate_upper: np.ndarray
    x_max_upper_bound: float
    x_max_lower_bound: float
    constants: dict = field(default_factory=dict)

    @property
    def x_max(self) -> float:
        return min(self.x_max_upper_bound, self.x_max_lower_bound)

    @property
    def valid(self) -> np.ndarray:
        return (self.x >= 0) & (self.x <= self.x_max)

    @property
    def log_prob_upper(self) -> np.ndarray:
        return -self.rate_lower

    @property
    def log_prob_lower(self) -> np.ndarray:
        return -self.rate_upper


def theorem_envelopes(sigma2: float, triple: float, C1: float, C2: float, t: float, x) -> RateEnvelope:
    if C1 <= 0 or C2 <= 0:
        raise ParameterError("envelope constants must be positive")
    if sigma2 <= 0:
        raise DegenerateObservableError("fluctuation variance is zero")
    x = np.asarray(x, dtype=float)
    q = x ** 2 / (2 * sigma2)
    upper_corr = x ** 3 * C1 * _double_exp(C1, t) * triple ** 3 / sigma2 ** 3
    lower_corr = np.abs(x) ** 2.5 * C2 * _double_exp(C2, t) * triple ** 1.5 / sigma2 ** 2
    return RateEnvelope(
        x=x,
        quadratic=q,
        rate_lower=q - upper_corr,
        rate_upper=q + lower_corr,
        x_max_upper_bound=sigma2 / (_double_exp(C1, t) * triple),
        x_max_lower_bound=sigma2 ** 2 / (_double_exp(C2, t) * C2 * triple ** 3),
        constants={"C1": C1, "C2": C2, "t": t, "sigma2": sigma2, "triple_norm": triple},
    )


def minimal_lmgf_constants(lambdas, lmgf, sigma2: float, triple: float, t: float) -> dict:
    """Smallest ``C1, C2`` for which the sampled ``Lambda`` obeys the log-MGF bounds.

    Upper: ``Lambda <= lam**2 sigma2/2 + C1 e^{e^{C1 t}} lam**3 |||O|||**3``,
    lower: ``Lambda >= lam**2 sigma2/2 - C2 e^{e^{C2 t}} lam**3 |||O|||**3``,
    each on its window ``lam <= e^{-e^{C t}} / |||O|||``.  Feasibility is
    monotone in ``C`` (the bound grows, the window shrinks), so bisection
    applies.  Returns 0 when every positive constant works.
    """
    lam = np.asarray(lambdas, dtype=float)
    resid = np.asarray(lmgf, dtype=float) - lam ** 2 * sigma2 / 2
    pos = lam > 0

    def ok(c, sign):
        inside = pos & (lam <= lmgf_window(t, triple, c))
        if not inside.any():
            return True
        bound = c * _double_exp(c, t) * lam[inside] ** 3 * triple ** 3
        return bool(np.all(sign * resid[inside] <= bound))

    out = {}
    for name, sign in (("C1", 1.0), ("C2", -1.0)):
        if ok(1e-12, sign):
            out[name] = 0.0
            continue
        lo, hi = 1e-12, 1.0
        while not ok(hi, sign):
            hi *= 2
            if hi > 1e3:
                break
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if ok(mid, sign):
                hi = mid
            else:
                lo = mid
        out[name] = hi
    return out


# -- exponential tilting ------------------------------------------------------

def tilted_measure(values, weights, lam: float):
    """Reweight ``w_k`` by ``exp(lam o_k)`` and renormalize."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ParameterError("weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-10:
        raise ParameterError(f"weights sum to {weights.sum():.12f}, not 1")
    logw = np.full(weights.shape, -np.inf)
    nz = weights > 0
    logw[nz] = np.log(weights[nz]) + lam * values[nz]
    tilted = np.exp(logw - logsumexp(logw))
    return values, tilted


def tilted_mean(values, weights, lam: float) -> float:
    v, w = tilted_measure(values, weights, lam)
    return float(np.dot(v, w))


# -- fits used by the comparison tables ---------------------------------------

def extrapolate_inverse_n(ns, values, degree: int = 3):
    """Value at ``1/N = 0`` of a least-squares polynomial in ``1/N``.

    ``values`` may be 2-d with one row per ``N``; columns are fitted jointly.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    degree = min(degree, len(ns) - 1)
    if degree < 0:
        raise ParameterError("need at least one N value")
    coeffs = np.polyfit(1.0 / ns, values, degree)
    return coeffs[-1]


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log|y|`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
