import numpy as np
import pytest

from rthdg.angular import (TWO_PI, build_angular_grid, hg_normalization, hg_phase,
                           scattering_kernel_matrix)


def test_quadrant_boundaries():
    grid = build_angular_grid(4)
    np.testing.assert_allclose(grid.boundaries,
                               [0, np.pi / 2, np.pi, 3 * np.pi / 2, 2 * np.pi])


def test_divisibility_precondition():
    for bad in (6, 3, 2, 0, 14):
        with pytest.raises(ValueError):
            build_angular_grid(bad)


def test_measures_sum():
    grid = build_angular_grid(28)
    assert abs(grid.widths.sum() - TWO_PI) < 1e-13
    assert abs(grid.mean_weights.sum() - 1.0) < 1e-14


def test_outflow_classification_28():
    grid = build_angular_grid(28)
    out = grid.outflow_mask((1.0, 0.0))
    expected = np.cos(grid.midpoints) > 0
    assert np.array_equal(out, expected)
    assert out.sum() == 14


def test_classification_partitions_into_halves():
    grid = build_angular_grid(12)
    for normal in ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)):
        out = grid.outflow_mask(normal)
        assert out.sum() == 6
        # inflow/outflow sets partition the elements
        assert np.array_equal(~out, grid.outflow_mask((-normal[0], -normal[1])))


def test_flux_integrals_are_exact():
    grid = build_angular_grid(8)
    # integral of cos over (0, pi/4) is sin(pi/4)
    assert abs(grid.cos_int[0] - np.sin(np.pi / 4)) < 1e-15
    assert abs(grid.cos_int.sum()) < 1e-13
    assert abs(grid.sin_int.sum()) < 1e-13


def test_oblique_normal_straddle_rejected():
    # an oblique face normal whose transition angles fall inside elements
    grid = build_angular_grid(8)
    with pytest.raises(ValueError):
        grid.outflow_mask((np.cos(0.3), np.sin(0.3)))


def test_hg_normalization_isotropic():
    assert abs(hg_normalization(0.0) - TWO_PI) < 1e-14


def test_hg_normalization_quadrature_oracle():
    # 1e4-point trapezoid integral of the normalized kernel must be 1
    alpha = np.linspace(0.0, TWO_PI, 10001)
    for g in (0.3, 0.8, 0.9):
        vals = hg_phase(g, alpha)
        integral = np.trapezoid(vals, alpha)
        assert abs(integral - 1.0) < 1e-8


def test_hg_forward_peak():
    c = hg_normalization(0.8)
    assert hg_phase(0.8, 0.0, c) > hg_phase(0.8, np.pi, c)


def test_hg_invalid_asymmetry():
    with pytest.raises(ValueError):
        hg_normalization(1.0)
    with pytest.raises(ValueError):
        hg_normalization(-0.1)


def test_isotropic_transfer_matrix():
    grid = build_angular_grid(4)
    kernel = scattering_kernel_matrix(grid, 0.0)
    np.testing.assert_allclose(kernel.transfer, 0.25, atol=1e-14)


def test_transfer_rows_sum_to_one():
    grid = build_angular_grid(28)
    kernel = scattering_kernel_matrix(grid, 0.8)
    np.testing.assert_allclose(kernel.transfer.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(kernel.kernel.sum(axis=1), grid.widths, atol=1e-13)


def test_kernel_symmetry_and_positivity():
    grid = build_angular_grid(28)
    kernel = scattering_kernel_matrix(grid, 0.8)
    assert np.abs(kernel.kernel - kernel.kernel.T).max() < 1e-12
    assert kernel.kernel.min() > 0


def test_kernel_circulant():
    grid = build_angular_grid(16)
    k = scattering_kernel_matrix(grid, 0.7).transfer
    n = grid.n_elems
    for shift in range(1, n):
        np.testing.assert_allclose(k[shift], np.roll(k[0], shift), atol=1e-12)


def test_kernel_quadrature_oracle():
    # entry (a, a') must equal a fine trapezoid double integral of the kernel
    grid = build_angular_grid(8)
    kernel = scattering_kernel_matrix(grid, 0.8)
    a, b = 1, 4
    t1 = np.linspace(grid.boundaries[a], grid.boundaries[a + 1], 1501)
    t2 = np.linspace(grid.boundaries[b], grid.boundaries[b + 1], 1501)
    vals = hg_phase(0.8, t1[:, None] - t2[None, :], kernel.norm_const)
    inner = np.trapezoid(vals, t2, axis=1)
    ref = np.trapezoid(inner, t1)
    assert abs(kernel.kernel[a, b] - ref) < 1e-9
