import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

import conftest as refs
from ebsde.errors import FlatCurve
from ebsde.ergodic import (lambda_of_mu, lambda_time_average,
                           solve_boundary_cost, solve_ergodic)
from ebsde.presets import (constant_driver, degenerate_linear_model,
                           zero_driver)


def test_constant_driver_exact_constant(interval, std_model):
    # psi = kappa, mu = 0: lambda = kappa and v = 0
    sol = solve_ergodic(std_model, interval, constant_driver(0.7), 0.0,
                        scheme="direct", spacing=1e-3)
    assert abs(sol.lam - 0.7) < 1e-10
    assert np.max(np.abs(sol.v.values)) < 1e-10


def test_value_pinned_at_reference_node(interval, std_model, cosdrv):
    sol = solve_ergodic(std_model, interval, cosdrv, 0.5, scheme="direct",
                        spacing=1e-3)
    assert abs(sol.v.values[sol.v.mesh.ref_index()]) < 1e-12


def test_boundary_cost_enters_affinely(interval, std_model, cosdrv):
    # z-free driver: lambda(mu) = E_nu[cos] - mu * flux exactly
    curve = lambda_of_mu(std_model, interval, cosdrv, [-1.0, 0.0, 1.0, 2.0],
                         scheme="direct", spacing=1e-3)
    assert curve.non_increasing()
    lam0 = curve.lams[1]
    assert abs(lam0 - refs.MEAN_COS) < 2e-3  # first-order upwind bias
    for mu, lam in zip(curve.mus, curve.lams):
        assert abs((lam - lam0) + mu * refs.FLUX_RATE) < 2e-3 * max(1.0, abs(mu))
    assert abs(curve.slope_modulus() - refs.FLUX_RATE) < 2e-3


def test_scheme_agreement(interval, std_model, cosdrv):
    direct = solve_ergodic(std_model, interval, cosdrv, 0.0, scheme="direct",
                           spacing=1e-3)
    vd = solve_ergodic(std_model, interval, cosdrv, 0.0,
                       scheme="vanishing_discount", spacing=1e-3)
    assert abs(direct.lam - vd.lam) < 5e-4
    both = solve_ergodic(std_model, interval, cosdrv, 0.0, scheme="both",
                         spacing=1e-3)
    assert both.diagnostics["scheme_gap"] < 1e-3
    assert "alpha_sequence" in vd.diagnostics


def test_unknown_scheme_rejected(interval, std_model, cosdrv):
    with pytest.raises(ValueError, match="direct"):
        solve_ergodic(std_model, interval, cosdrv, 0.0, scheme="vanishing")


def test_round_trip_inversion(interval, std_model, cosdrv):
    target = solve_ergodic(std_model, interval, cosdrv, 0.7, scheme="direct",
                           spacing=1e-3).lam
    sol = solve_boundary_cost(std_model, interval, cosdrv, target, tol=1e-3,
                              scheme="direct", spacing=1e-3)
    assert abs(sol.lam - target) < 1e-3
    assert abs(sol.mu - 0.7) < 5e-3


def test_flat_curve_not_identifiable(interval):
    with pytest.raises(FlatCurve):
        solve_boundary_cost(degenerate_linear_model(), interval, zero_driver(),
                            0.0, tol=1e-3, scheme="direct", spacing=1e-3)


def test_time_average_agrees_with_grid_constant(interval, std_model, cosdrv):
    sol = solve_ergodic(std_model, interval, cosdrv, 0.4, scheme="direct",
                        spacing=1e-3)
    est, se = lambda_time_average(std_model, interval, cosdrv, sol, T=50.0,
                                  h=1e-3, paths=64, seed=6)
    assert abs(est - sol.lam) < 3 * se + 5e-3


def test_zeta_is_scaled_value_gradient(interval, std_model, cosdrv):
    # constant sigma = sqrt(2): zeta = sqrt(2) v' along the grid
    sol = solve_ergodic(std_model, interval, cosdrv, 0.0, scheme="direct",
                        spacing=1e-3)
    grad = sol.v.gradient()[:, 0]
    zeta = sol.zeta_at(sol.v.nodes)[:, 0]
    assert np.max(np.abs(zeta - np.sqrt(2.0) * grad)) < 1e-9


def test_solution_save_layout(tmp_path, interval, std_model, cosdrv):
    sol = solve_ergodic(std_model, interval, cosdrv, 0.25, scheme="direct",
                        spacing=1e-2)
    sol.save(str(tmp_path / "sol"))
    meta = json.loads((tmp_path / "sol.json").read_text())
    assert abs(meta["lambda"] - sol.lam) < 1e-15
    assert abs(meta["mu"] - 0.25) < 1e-15
    header = (tmp_path / "sol.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["x0", "value"]
