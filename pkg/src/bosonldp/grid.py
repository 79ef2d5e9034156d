"""Periodic grids, Fourier calculus and discrete norms.

Fields are stored as flat complex vectors of length ``M**d`` (C order over
the axes).  The inner product is the Riemann sum ``h**d * sum(conj(a) * b)``
and every norm in the package refers to that convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, ParameterError


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the torus ``[0, L)**d``."""

    d: int
    M: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ParameterError(f"dimension must be 1 or 2, got {self.d}")
        if self.M < 4 or self.M % 2:
            raise ParameterError(f"M must be even and >= 4, got {self.M}")
        if not self.L > 0:
            raise ParameterError(f"box length must be positive, got {self.L}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def n_points(self) -> int:
        return self.M ** self.d

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    # cached_property needs a __dict__; frozen dataclasses still have one.
    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.M) * self.h

    @cached_property
    def coords(self) -> tuple:
        """Flat coordinate arrays, one per axis."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return tuple(m.ravel() for m in mesh)

    @cached_property
    def wavenumbers(self) -> tuple:
        """Flat angular wavenumbers ``2*pi*k/L`` per axis, in FFT order."""
        k = 2 * np.pi * np.fft.fftfreq(self.M, d=self.h)
        mesh = np.meshgrid(*([k] * self.d), indexing="ij")
        return tuple(m.ravel() for m in mesh)

    @cached_property
    def k2(self) -> np.ndarray:
        """Symbol of ``-Delta``: ``|2*pi*k/L|**2`` in FFT order (flat)."""
        return sum(kk ** 2 for kk in self.wavenumbers)

    @cached_property
    def displacement_sq(self) -> np.ndarray:
        """Squared periodic distance of every displacement index (flat).

        Index ``j`` along an axis is the displacement ``j*h`` wrapped to
        ``min(j, M - j) * h`` so that paired indices give bit-identical values.
        """
        j = np.arange(self.M)
        dist = np.minimum(j, self.M - j) * self.h
        mesh = np.meshgrid(*([dist] * self.d), indexing="ij")
        return sum(m.ravel() ** 2 for m in mesh)

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values.reshape(self.shape)).ravel()

    def ifft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(values.reshape(self.shape)).ravel()

    def fourier_multiplier(self, symbol: np.ndarray, values: np.ndarray) -> np.ndarray:
        return self.ifft(symbol * self.fft(values))

    def displacement_index(self) -> np.ndarray:
        """Matrix of flat displacement indices ``(x - y) mod M`` per axis."""
        idx = np.indices(self.shape).reshape(self.d, -1)
        diff = (idx[:, :, None] - idx[:, None, :]) % self.M
        return np.ravel_multi_index(tuple(diff), self.shape)

    def to_dict(self) -> dict:
        return {"d": self.d, "M": self.M, "L": self.L}


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex function sampled on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).ravel()
        if vals.size != self.grid.n_points:
            raise GridMismatchError(
                f"expected {self.grid.n_points} samples, got {vals.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ParameterError("field contains non-finite samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        return l2_norm(self)

    def normalized(self) -> "ComplexField":
        return ComplexField(self.grid, self.values / self.norm())

    def replace(self, values) -> "ComplexField":
        return ComplexField(self.grid, values)


def _check_same_grid(a: ComplexField, b: ComplexField):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


def inner_product(a: ComplexField, b: ComplexField) -> complex:
    """Discrete L2 inner product, conjugate-linear in ``a``."""
    _check_same_grid(a, b)
    return complex(a.grid.cell_volume * np.vdot(a.values, b.values))


def l2_norm(f: ComplexField) -> float:
    return float(np.sqrt(f.grid.cell_volume) * np.linalg.norm(f.values))


def fourier_coefficients(f: ComplexField) -> np.ndarray:
    """FFT coefficients scaled so that ``sum |c|**2 == l2_norm(f)**2``."""
    g = f.grid
    return g.fft(f.values) * np.sqrt(g.cell_volume / g.n_points)


def laplacian_apply(f: ComplexField) -> ComplexField:
    """Spectral Laplacian: mode ``k`` is multiplied by ``-|2*pi*k/L|**2``."""
    g = f.grid
    return ComplexField(g, g.fourier_multiplier(-g.k2, f.values))


def kinetic_apply(f: ComplexField) -> ComplexField:
    """``-Delta f``, the kinetic operator of the Hamiltonian."""
    g = f.grid
    return ComplexField(g, g.fourier_multiplier(g.k2, f.values))


def convolve(kernel: np.ndarray, density: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Circular convolution ``h**d * sum_y kernel(x - y) density(y)``.

    ``kernel`` is sampled at displacement points (index 0 is the origin,
    wrapped periodically).  Real inputs give a real result.
    """
    kernel = np.asarray(kernel)
    density = np.asarray(density)
    out = grid.cell_volume * grid.ifft(grid.fft(kernel) * grid.fft(density))
    if np.isrealobj(kernel) and np.isrealobj(density):
        return out.real
    return out


def sobolev_norm(f: ComplexField, k: int) -> float:
    """``H^k`` norm with weight ``(1 + |2*pi*k/L|**2)**k``, ``k`` in {0, 1, 2}."""
    if k not in (0, 1, 2):
        raise ParameterError(f"unsupported Sobolev index {k}")
    c = fourier_coefficients(f)
    weight = (1.0 + f.grid.k2) ** k
    return float(np.sqrt(np.sum(weight * np.abs(c) ** 2)))


def plane_wave(grid: GridSpec, mode) -> ComplexField:
    """Normalized plane wave ``exp(2*pi*i*mode.x/L) / sqrt(L**d)``."""
    mode = np.atleast_1d(mode)
    if mode.size != grid.d:
        raise ParameterError("mode must have one entry per dimension")
    phase = sum(2 * np.pi * m * x / grid.L for m, x in zip(mode, grid.coords))
    return ComplexField(grid, np.exp(1j * phase) / np.sqrt(grid.L ** grid.d))


def gaussian(grid: GridSpec, center=None, width: float = 1.0, momentum=None) -> ComplexField:
    """Normalized Gaussian wave packet with periodic distance to ``center``."""
    center = np.full(grid.d, grid.L / 2) if center is None else np.atleast_1d(center)
    r2 = np.zeros(grid.n_points)
    for c, x in zip(center, grid.coords):
        dx = (x - c + grid.L / 2) % grid.L - grid.L / 2
        r2 = r2 + dx ** 2
    values = np.exp(-r2 / (4 * width ** 2)).astype(complex)
    if momentum is not None:
        momentum = np.atleast_1d(momentum)
        values = values * np.exp(1j * sum(p * x for p, x in zip(momentum, grid.coords)))
    return ComplexField(grid, values).normalized()
