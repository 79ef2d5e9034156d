"""Bounded self-adjoint one-particle observables and their norms."""
from __future__ import annotations

import csv
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, NumericalConsistencyError, ParameterError
from .grid import ComplexField, GridSpec, inner_product, l2_norm

HERMITIAN_TOL = 1e-13


def _dense_fourier_multiplier(grid: GridSpec, symbol: np.ndarray) -> np.ndarray:
    eye = np.eye(grid.n_points)
    cols = [grid.fourier_multiplier(symbol, eye[:, j]) for j in range(grid.n_points)]
    return np.stack(cols, axis=1)


class Observable:
    """Self-adjoint operator on grid fields.

    The dense matrix acts on flat field vectors.  Because the inner product
    is a scalar multiple of the Euclidean one, Hermitian matrices are exactly
    the self-adjoint operators, and the same matrix is valid in the
    orthonormal mode basis used by the many-body oracle.

    Structured observables (multiplication, Fourier multiplier, rank-one
    projector) apply themselves without forming the matrix; the matrix is
    built lazily when a norm or a second quantization needs it.
    """

    def __init__(self, grid: GridSpec, matrix=None, *, kind="matrix", apply=None, params=None):
        self.grid = grid
        self.kind = kind
        self.params = dict(params or {})
        self._apply = apply
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=complex)
            n = grid.n_points
            if matrix.shape != (n, n):
                raise GridMismatchError(f"matrix shape {matrix.shape} does not match grid ({n}, {n})")
            defect = np.max(np.abs(matrix - matrix.conj().T)) if n else 0.0
            if defect > HERMITIAN_TOL * max(1.0, np.max(np.abs(matrix))):
                raise ParameterError(f"observable matrix is not Hermitian (defect {defect:.3e})")
            matrix = 0.5 * (matrix + matrix.conj().T)
            matrix.setflags(write=False)
            self.__dict__["matrix"] = matrix

    # -- constructors -----------------------------------------------------
    @classmethod
    def identity(cls, grid: GridSpec) -> "Observable":
        return cls.multiplication(grid, np.ones(grid.n_points), kind="identity")

    @classmethod
    def multiplication(cls, grid: GridSpec, g, kind="multiplication", params=None) -> "Observable":
        g = np.asarray(g, dtype=float).ravel()
        if g.size != grid.n_points:
            raise GridMismatchError("multiplier has the wrong number of samples")
        obs = cls(grid, kind=kind, apply=lambda f: g * f, params=params)
        obs.multiplier = g
        return obs

    @classmethod
    def cosine(cls, grid: GridSpec, amplitude: float = 1.0, mode: int = 1) -> "Observable":
        """Multiplication by ``amplitude * cos(2*pi*mode*x/L)`` along the first axis."""
        g = amplitude * np.cos(2 * np.pi * mode * grid.coords[0] / grid.L)
        return cls.multiplication(
            grid, g, kind="cosine", params={"amplitude": amplitude, "mode": mode}
        )

    @classmethod
    def gaussian_bump(cls, grid: GridSpec, amplitude=1.0, center=None, width=1.0) -> "Observable":
        center = np.full(grid.d, grid.L / 2) if center is None else np.atleast_1d(center)
        r2 = np.zeros(grid.n_points)
        for c, x in zip(center, grid.coords):
            dx = (x - c + grid.L / 2) % grid.L - grid.L / 2
            r2 = r2 + dx ** 2
        g = amplitude * np.exp(-r2 / (2 * width ** 2))
        return cls.multiplication(
            grid, g, kind="gaussian-bump",
            params={"amplitude": amplitude, "center": list(map(float, center)), "width": width},
        )

    @classmethod
    def fourier_multiplier(cls, grid: GridSpec, symbol, params=None) -> "Observable":
        """``f(-Delta)`` given the real symbol sampled in FFT order."""
        symbol = np.asarray(symbol, dtype=float).ravel()
        obs = cls(grid, kind="fourier-multiplier",
                  apply=lambda f: grid.fourier_multiplier(symbol, f), params=params)
        obs.symbol = symbol
        return obs

    @classmethod
    def projector(cls, chi: ComplexField) -> "Observable":
        """Rank-one projector ``|chi><chi|`` onto the normalized ``chi``."""
        chi = chi.normalized()
        grid = chi.grid
        vec = chi.values
        obs = cls(grid, kind="projector",
                  apply=lambda f: vec * (grid.cell_volume * np.vdot(vec, f)))
        obs.state = chi
        return obs

    # -- action and cached norms -----------------------------------------
    def apply(self, values: np.ndarray) -> np.ndarray:
        if self._apply is not None:
            return self._apply(values)
        return self.matrix @ values

    def __call__(self, f: ComplexField) -> ComplexField:
        if f.grid != self.grid:
            raise GridMismatchError("observable and field live on different grids")
        return ComplexField(self.grid, self.apply(f.values))

    @cached_property
    def matrix(self) -> np.ndarray:
        n = self.grid.n_points
        if hasattr(self, "multiplier"):
            m = np.diag(self.multiplier).astype(complex)
        elif hasattr(self, "symbol"):
            m = _dense_fourier_multiplier(self.grid, self.symbol).astype(complex)
        else:
            eye = np.eye(n, dtype=complex)
            m = np.stack([self.apply(eye[:, j]) for j in range(n)], axis=1)
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        return m

    @cached_property
    def operator_norm(self) -> float:
        if hasattr(self, "multiplier"):
            return float(np.max(np.abs(self.multiplier)))
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix))))

    @cached_property
    def triple_norm(self) -> float:
        return triple_norm(self)

    def scaled(self, factor: float) -> "Observable":
        return Observable(self.grid, factor * self.matrix, kind=f"scaled-{self.kind}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def triple_norm(O: Observable) -> float:
    """Operator norm of ``(1 - Delta) O (1 - Delta)^{-1}``.

    Computed as the square root of the top eigenvalue of ``B^* B``.
    """
    grid = O.grid
    sym = 1.0 + grid.k2
    # columns of O (1-Delta)^{-1}, then (1-Delta) applied on the left
    inv = _dense_fourier_multiplier(grid, 1.0 / sym)
    right = O.matrix @ inv
    b = np.stack([grid.fourier_multiplier(sym, right[:, j]) for j in range(grid.n_points)], axis=1)
    gram = b.conj().T @ b
    top = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))[-1]
    return float(np.sqrt(max(top, 0.0)))


def expectation(O: Observable, phi: ComplexField, tol: float = 1e-10) -> float:
    """``<phi, O phi>`` for normalized ``phi``; must be real to ``tol``."""
    norm = l2_norm(phi)
    if abs(norm - 1.0) > 1e-8:
        raise ParameterError(f"state is not normalized (norm {norm:.12f})")
    val = inner_product(phi, O(phi))
    if abs(val.imag) > tol:
        raise NumericalConsistencyError(
            f"expectation has imaginary part {val.imag:.3e}; observable is not Hermitian"
        )
    return val.real


def variance(O: Observable, phi: ComplexField) -> float:
    """``<phi, O**2 phi> - <phi, O phi>**2 = ||q O phi||**2``."""
    o_phi = O(phi)
    mean = inner_product(phi, o_phi).real
    return float(l2_norm(o_phi) ** 2 - mean ** 2)


def load_matrix_csv(path, grid: GridSpec) -> Observable:
    """Read a Hermitian matrix from CSV rows ``re, im`` in row-major order.

    A non-numeric first row is treated as a header.
    """
    entries = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                re_, im_ = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise ParameterError(f"{path}: bad row {i}: {row}") from None
            entries.append(complex(re_, im_))
    n = grid.n_points
    if len(entries) != n * n:
        raise GridMismatchError(f"{path}: expected {n * n} entries, found {len(entries)}")
    matrix = np.array(entries).reshape(n, n)
    return Observable(grid, matrix, kind="matrix-csv", params={"path": str(path)})


def save_matrix_csv(path, O: Observable):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for z in O.matrix.ravel():
            w.writerow([repr(float(z.real)), repr(float(z.imag))])
