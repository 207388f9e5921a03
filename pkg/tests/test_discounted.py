import numpy as np
from numpy.testing import assert_allclose

from ebsde.discounted import DriverSpec, lipschitz_diagnostic, solve_discounted
from ebsde.geometry import ball_domain
from ebsde.ergodic import solve_ergodic
from ebsde.presets import (constant_driver, cos_driver,
                           degenerate_linear_model, kolmogorov_model,
                           quadratic_potential, zero_driver)


def test_constant_driver_flat_value(interval, std_model):
    # psi = kappa, g = 0: the discounted value is the constant kappa/alpha
    for alpha in (0.5, 0.1):
        v = solve_discounted(std_model, interval, constant_driver(2.0), alpha,
                             spacing=1e-3)
        assert_allclose(v.values, 2.0 / alpha, atol=1e-8)


def test_sup_norm_discount_product(interval, std_model, cosdrv):
    # alpha sup|v| <= M_psi, saturated for the constant driver
    v = solve_discounted(std_model, interval, constant_driver(1.0), 0.2,
                         spacing=1e-3)
    assert abs(0.2 * np.abs(v.values).max() - 1.0) < 1e-8
    v2 = solve_discounted(std_model, interval, cosdrv, 0.2, spacing=1e-3)
    assert 0.2 * np.abs(v2.values).max() <= 1.0 + 1e-8


def test_gradient_bound(interval, std_model, cosdrv):
    # |v'| <= K_psi_x / |eta| uniformly in alpha
    for alpha in (0.4, 0.1, 0.02):
        v = solve_discounted(std_model, interval, cosdrv, alpha, spacing=1e-3)
        assert lipschitz_diagnostic(v) <= 1.0 * 1.05


def test_discount_times_value_approaches_ergodic_constant(interval, std_model,
                                                          cosdrv):
    lam = solve_ergodic(std_model, interval, cosdrv, 0.0, scheme="direct",
                        spacing=1e-3).lam
    gaps = []
    for alpha in (0.4, 0.2, 0.1):
        v = solve_discounted(std_model, interval, cosdrv, alpha, spacing=1e-3)
        k = v.mesh.ref_index()
        gaps.append(abs(alpha * v.values[k] - lam))
    assert gaps[2] < gaps[1] < gaps[0]
    assert gaps[2] < 0.1


def test_constant_driver_flat_in_2d():
    model = kolmogorov_model(quadratic_potential(), dim=2, eta_hint=-1.0)
    dom = ball_domain(1.0, 2)
    v = solve_discounted(model, dom, constant_driver(1.0), 0.5, spacing=0.05)
    assert_allclose(v.values, 2.0, atol=1e-8)


def test_z_dependent_driver_fixed_point(interval, std_model):
    drv = DriverSpec(psi=lambda x, z: np.cos(x[0]) + 0.3 * z[0],
                     g=None, K_psi_x=1.0, K_psi_z=0.3, M_psi=1.0,
                     psi_vec=lambda X, Z: np.cos(X[:, 0]) + 0.3 * Z[:, 0],
                     name="cos+z")
    v1 = solve_discounted(std_model, interval, drv, 0.2, spacing=1e-3)
    v2 = solve_discounted(std_model, interval, drv, 0.2, spacing=1e-3,
                          tol=1e-10)
    assert np.max(np.abs(v1.values - v2.values)) < 1e-6
    assert np.all(np.isfinite(v1.values))


def test_degenerate_diffusion_trivial_data(interval):
    # a(x) = x^2 vanishes at the centroid: the viscosity pair still returns
    # the exact flat solution when psi and g vanish
    v = solve_discounted(degenerate_linear_model(), interval, zero_driver(),
                         0.25, spacing=1e-3)
    assert np.max(np.abs(v.values)) < 1e-8
