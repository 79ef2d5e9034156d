"""Two-body interaction potentials on the torus."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .errors import ParameterError
from .grid import GridSpec

KINDS = ("zero", "constant", "gaussian", "soft-coulomb", "cosine")


@dataclass(frozen=True)
class Potential:
    """Even, real interaction ``v`` described by kind and parameters.

    Kinds and parameters:

    * ``zero``
    * ``constant``: ``alpha``
    * ``gaussian``: ``alpha * exp(-|x|**2 / (2 sigma**2))``
    * ``soft-coulomb``: ``alpha / sqrt(|x|**2 + epsilon**2)``, ``epsilon > 0``
    * ``cosine``: ``alpha * cos(2*pi*k0*|x|/L)`` with integer ``k0`` (d=1)

    ``|x|`` is the periodic distance, so the displacement table is exactly
    symmetric under ``x -> -x``.
    """

    kind: str = "zero"
    alpha: float = 0.0
    sigma: float = 1.0
    epsilon: float = 0.1
    k0: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown potential kind {self.kind!r}")
        if self.kind == "soft-coulomb" and not self.epsilon > 0:
            raise ParameterError("soft-coulomb requires epsilon > 0")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ParameterError("gaussian potential requires sigma > 0")

    def table(self, grid: GridSpec) -> np.ndarray:
        """Values ``v(x)`` at every displacement point (flat, read-only)."""
        if grid not in self._cache:
            r2 = grid.displacement_sq
            if self.kind == "zero":
                v = np.zeros_like(r2)
            elif self.kind == "constant":
                v = np.full_like(r2, self.alpha)
            elif self.kind == "gaussian":
                v = self.alpha * np.exp(-r2 / (2 * self.sigma ** 2))
            elif self.kind == "soft-coulomb":
                v = self.alpha / np.sqrt(r2 + self.epsilon ** 2)
            else:
                if grid.d != 1:
                    raise ParameterError("cosine potential is defined for d=1 only")
                v = self.alpha * np.cos(2 * np.pi * self.k0 * np.sqrt(r2) / grid.L)
            v.setflags(write=False)
            self._cache[grid] = v
        return self._cache[grid]

    def table_hat(self, grid: GridSpec) -> np.ndarray:
        """FFT of the displacement table, used by convolutions."""
        key = (grid, "hat")
        if key not in self._cache:
            self._cache[key] = grid.fft(self.table(grid))
        return self._cache[key]

    def matrix(self, grid: GridSpec) -> np.ndarray:
        """Dense ``v(x - y)`` over flat grid indices."""
        return self.table(grid)[grid.displacement_index()]

    def mean_field(self, density: np.ndarray, grid: GridSpec) -> np.ndarray:
        """``v * density`` (real), with the ``h**d`` quadrature weight."""
        out = grid.cell_volume * grid.ifft(self.table_hat(grid) * grid.fft(density))
        return out.real

    def is_zero(self) -> bool:
        return self.kind == "zero" or self.alpha == 0.0

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind != "zero":
            out["alpha"] = self.alpha
        if self.kind == "gaussian":
            out["sigma"] = self.sigma
        if self.kind == "soft-coulomb":
            out["epsilon"] = self.epsilon
        if self.kind == "cosine":
            out["k0"] = self.k0
        return out


def potential_bound_constant(v: Potential, grid: GridSpec) -> float:
    """Smallest ``C`` with ``v**2 <= C (1 - Delta)`` on the grid.

    Top eigenvalue of ``(1-Delta)^{-1/2} v(.)**2 (1-Delta)^{-1/2}``.  On the
    torus every translate ``v(. - y)**2`` is unitarily equivalent, so the
    untranslated table is used.
    """
    table = v.table(grid)
    if not np.any(table):
        return 0.0
    n = grid.n_points
    # (1 - Delta)^{-1/2} as a dense matrix: F^{-1} diag(w) F
    w = 1.0 / np.sqrt(1.0 + grid.k2)
    eye = np.eye(n)
    s = np.stack([grid.fourier_multiplier(w, eye[:, j]) for j in range(n)], axis=1)
    a = s.conj().T @ (table[:, None] ** 2 * s)
    a = 0.5 * (a + a.conj().T)
    top = eigh(a, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
    return float(top)
