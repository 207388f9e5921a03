import numpy as np
import pytest

import conftest as refs
from ebsde.errors import SingularSigma
from ebsde.ergodic import solve_ergodic
from ebsde.presets import (constant_driver, cos_driver,
                           degenerate_linear_model, zero_driver)
from ebsde.verification import (bsde_residual, drift_shift_equivalence,
                                pde_residual, shifted_problem)


def test_flat_solution_zero_residuals(interval, std_model):
    # psi = kappa, mu = 0 solves exactly with v = 0; both residuals vanish
    sol = solve_ergodic(std_model, interval, constant_driver(0.4), 0.0,
                        scheme="direct", spacing=1e-3)
    pde = pde_residual(sol, std_model, interval, constant_driver(0.4))
    assert pde["interior_max"] < 1e-8
    assert pde["boundary_max"] < 1e-8
    res = bsde_residual(sol, std_model, interval, constant_driver(0.4),
                        paths=50, T=1.0, h=1e-2, seed=0)
    assert abs(res.mean) < 1e-10
    assert res.stderr < 1e-10


def test_flat_solution_with_boundary_cost(interval, std_model):
    # kappa = 0.3, mu = 0.4: v stays flat, lambda = kappa - mu * flux, and
    # the backward residual must see the local-time term with the right sign
    sol = solve_ergodic(std_model, interval, constant_driver(0.3), 0.4,
                        scheme="direct", spacing=1e-3)
    assert abs(sol.lam - (0.3 - 0.4 * refs.FLUX_RATE)) < 2e-3
    res = bsde_residual(sol, std_model, interval, constant_driver(0.3),
                        paths=800, T=4.0, h=1e-3, seed=3)
    assert abs(res.mean) <= 3 * res.stderr + 1e-3


def test_pde_residual_of_solved_problem(interval, std_model, cosdrv):
    sol = solve_ergodic(std_model, interval, cosdrv, 0.0, scheme="direct",
                        spacing=1e-3)
    pde = pde_residual(sol, std_model, interval, cosdrv)
    assert pde["interior_max"] < 1e-3
    assert pde["boundary_max"] < 1e-3


def test_backward_partials_stay_centered(interval, std_model, cosdrv):
    sol = solve_ergodic(std_model, interval, cosdrv, 0.2, scheme="direct",
                        spacing=1e-3)
    res = bsde_residual(sol, std_model, interval, cosdrv, paths=1200, T=2.0,
                        h=1e-2, seed=14)
    assert len(res.partial_means) == len(res.partial_times)
    # intermediate defects are martingale increments: all near zero on the
    # scale of the terminal standard error
    for m in res.partial_means:
        assert abs(m) <= 4 * res.stderr + 2e-3


def test_shifted_problem_identities(interval, std_model, cosdrv):
    model2, driver2 = shifted_problem(std_model, cosdrv, 0.5, interval)
    for t in (-0.8, 0.1, 0.9):
        x = np.array([t])
        assert abs(model2.b(x)[0] - (-t - 0.5 * t)) < 1e-12
        for zv in (-1.0, 0.0, 2.0):
            z = np.array([zv])
            want = np.cos(t) + 0.5 * zv * t / np.sqrt(2.0)
            assert abs(driver2.psi(x, z) - want) < 1e-12
    assert driver2.K_psi_z > cosdrv.K_psi_z
    assert model2.eta_hint == -1.5


def test_shift_leaves_constants_invariant(interval, std_model, cosdrv):
    out = drift_shift_equivalence(std_model, interval, cosdrv, 0.25,
                                  mu=0.0, scheme="direct", spacing=1e-3)
    assert out["lambda_gap"] < 2e-3
    assert out["eta_identity_gap"] < 1e-9


def test_shift_needs_invertible_sigma(interval):
    with pytest.raises(SingularSigma):
        shifted_problem(degenerate_linear_model(), zero_driver(), 0.5,
                        interval)
