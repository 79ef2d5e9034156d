import numpy as np
import pytest
from hypothesis import given, strategies as st

from bosonldp import (
    ComplexField, GridSpec, GridMismatchError, ParameterError, convolve, fourier_coefficients, gaussian,
    inner_product, kinetic_apply, l2_norm, laplacian_apply, plane_wave, sobolev_norm,
)

from conftest import random_field

seeds = st.integers(0, 2 ** 32 - 1)
sizes = st.sampled_from([4, 6, 8, 16, 64, 128])


def test_gridspec_validation():
    for bad in [(3, 8, 1.0), (1, 5, 1.0), (1, 2, 1.0), (1, 8, 0.0), (1, 8, -2.0)]:
        with pytest.raises(ParameterError):
            GridSpec(*bad)
    g = GridSpec(2, 8, 4.0)
    assert g.h == 0.5 and g.n_points == 64 and g.cell_volume == 0.25


def test_complex_field_rejects_bad_values():
    g = GridSpec(1, 8, 1.0)
    with pytest.raises(GridMismatchError):
        ComplexField(g, np.ones(7))
    with pytest.raises(ParameterError):
        ComplexField(g, np.array([np.nan] + [0.0] * 7))


def test_inner_product_examples():
    g = GridSpec(1, 8, 1.0)
    c = ComplexField(g, np.full(8, 1 / np.sqrt(g.L)))
    assert inner_product(c, c) == pytest.approx(1.0, abs=1e-15)
    x = g.coords[0]
    a = ComplexField(g, np.exp(2j * np.pi * x / g.L))
    b = ComplexField(g, np.exp(4j * np.pi * x / g.L))
    assert abs(inner_product(a, b)) <= 1e-14


def test_inner_product_grid_mismatch():
    a = ComplexField(GridSpec(1, 8, 1.0), np.ones(8))
    b = ComplexField(GridSpec(1, 8, 2.0), np.ones(8))
    with pytest.raises(GridMismatchError):
        inner_product(a, b)


@given(seeds, sizes)
def test_inner_product_conjugate_symmetry_and_linearity(seed, M):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, M, 3.0)
    a, b = random_field(g, rng), random_field(g, rng)
    assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)), rel=1e-13, abs=1e-13)
    z = 0.3 - 1.7j
    za = a.replace(z * a.values)
    assert inner_product(za, b) == pytest.approx(np.conj(z) * inner_product(a, b), rel=1e-12)


def test_laplacian_examples():
    g = GridSpec(1, 32, 3.0)
    x = g.coords[0]
    f = ComplexField(g, np.exp(2j * np.pi * x / g.L))
    k2 = (2 * np.pi / g.L) ** 2
    np.testing.assert_allclose(kinetic_apply(f).values, k2 * f.values, atol=1e-12)
    np.testing.assert_allclose(laplacian_apply(f).values, -k2 * f.values, atol=1e-12)
    np.testing.assert_allclose(laplacian_apply(ComplexField(g, np.ones(32))).values, 0, atol=1e-13)
    g2 = GridSpec(1, 32, 2 * np.pi)
    c = ComplexField(g2, np.cos(4 * np.pi * g2.coords[0] / g2.L))
    np.testing.assert_allclose(kinetic_apply(c).values, 4 * c.values, atol=1e-12)


def test_laplacian_2d_plane_wave():
    g = GridSpec(2, 16, 2.0)
    pw = plane_wave(g, [1, -2])
    k2 = (2 * np.pi / g.L) ** 2 * 5
    np.testing.assert_allclose(kinetic_apply(pw).values, k2 * pw.values, atol=1e-11)


@given(seeds, sizes)
def test_parseval(seed, M):
    f = random_field(GridSpec(1, M, 2.5), np.random.default_rng(seed))
    assert np.linalg.norm(fourier_coefficients(f)) == pytest.approx(l2_norm(f), rel=1e-12)


@given(seeds, st.sampled_from([4, 64, 256, 1024]))
def test_fft_round_trip(seed, M):
    g = GridSpec(1, M, 1.0)
    f = random_field(g, np.random.default_rng(seed))
    back = g.ifft(g.fft(f.values))
    assert np.linalg.norm(back - f.values) <= 1e-12 * np.linalg.norm(f.values)


@given(seeds, sizes)
def test_laplacian_hermitian(seed, M):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, M, 2.0)
    a, b = random_field(g, rng), random_field(g, rng)
    lhs = inner_product(a, laplacian_apply(b))
    rhs = inner_product(laplacian_apply(a), b)
    assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(lhs))


def test_convolve_identities():
    g = GridSpec(1, 64, 4.0)
    rng = np.random.default_rng(0)
    rho = rng.random(64)
    delta = np.zeros(64)
    delta[0] = 1 / g.h
    np.testing.assert_allclose(convolve(delta, rho, g), rho, atol=1e-12)
    out = convolve(np.full(64, 2.5), rho, g)
    np.testing.assert_allclose(out, 2.5 * g.h * rho.sum(), rtol=1e-12)
    assert np.isrealobj(out)


def test_convolve_gaussians_against_direct_sum():
    g = GridSpec(1, 128, 20.0)
    r = np.sqrt(g.displacement_sq)
    k = np.exp(-r ** 2 / (2 * 0.7 ** 2))
    x = g.coords[0]
    rho = np.exp(-((x - 10.0) ** 2) / (2 * 1.1 ** 2))
    idx = g.displacement_index()
    direct = g.h * (k[idx] @ rho)
    np.testing.assert_allclose(convolve(k, rho, g), direct, atol=1e-10)
    # summed variances: the profile is Gaussian with variance 0.7**2 + 1.1**2
    prof = convolve(k, rho, g)
    s2 = 0.7 ** 2 + 1.1 ** 2
    expected = 2 * np.pi * 0.7 * 1.1 / np.sqrt(2 * np.pi * s2) * np.exp(-((x - 10.0) ** 2) / (2 * s2))
    np.testing.assert_allclose(prof, expected, atol=1e-10)


def test_sobolev_examples():
    g = GridSpec(1, 32, 3.0)
    rng = np.random.default_rng(3)
    f = random_field(g, rng)
    assert sobolev_norm(f, 0) == pytest.approx(l2_norm(f), rel=1e-14)
    c = ComplexField(g, np.full(32, 0.7))
    for k in (0, 1, 2):
        assert sobolev_norm(c, k) == pytest.approx(sobolev_norm(c, 0), rel=1e-14)
    pw = plane_wave(g, 3)
    k2 = (2 * np.pi * 3 / g.L) ** 2
    assert sobolev_norm(pw, 1) ** 2 == pytest.approx((1 + k2) * sobolev_norm(pw, 0) ** 2, rel=1e-13)
    with pytest.raises(ParameterError):
        sobolev_norm(f, 3)


def test_gaussian_and_plane_wave_normalized():
    g = GridSpec(1, 64, 10.0)
    assert l2_norm(gaussian(g, width=0.8, momentum=[2.0])) == pytest.approx(1.0, abs=1e-14)
    assert l2_norm(plane_wave(g, 5)) == pytest.approx(1.0, abs=1e-14)
    g2 = GridSpec(2, 16, 8.0)
    assert l2_norm(gaussian(g2, width=1.0)) == pytest.approx(1.0, abs=1e-14)
