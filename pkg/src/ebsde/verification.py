"""Independent consistency checks for ergodic solutions.

Three checks, each through a different pipeline than the solvers:

* ``pde_residual`` re-evaluates the stationary equation with wide-offset
  finite differences (stride-2 stencils and second-order one-sided
  boundary rows, deliberately different from the solver's).
* ``bsde_residual`` replays the solution along simulated reflected paths
  and forms the pathwise backward-equation defect, which must vanish in
  mean and shrink with the time step.
* ``drift_shift_equivalence`` re-solves after moving a linear term from
  the drift into the driver, which leaves the equation invariant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dynamics, hypotheses
from .discounted import DriverSpec
from .dynamics import SdeModel
from .ergodic import ErgodicSolution, solve_ergodic
from .errors import SingularSigma
from .geometry import DomainSpec
from .grids import GridFunction

__all__ = ["pde_residual", "bsde_residual", "BsdeResidual",
           "shifted_problem", "drift_shift_equivalence"]


def pde_residual(solution: ErgodicSolution, model: SdeModel, domain: DomainSpec,
                 driver: DriverSpec, exclude: Optional[Callable] = None) -> dict:
    """Max interior and boundary residuals with solver-independent stencils.

    Interior: |(1/2) a v'' + b v' + psi(x, grad v sigma) - lambda| using
    stride-2 centered differences. Boundary: |grad v . n + g - mu| using
    three-point one-sided differences. ``exclude`` drops nodes (e.g. near
    points where the exact solution is not twice differentiable).
    """
    mesh = solution.v.mesh
    v = solution.v.values
    h = mesh.spacing
    lam, mu = solution.lam, solution.mu
    interior_max = 0.0
    boundary_max = 0.0
    if domain.dim == 1:
        x = mesh.nodes[:, 0]
        N = x.size
        for i in range(2, N - 2):
            if exclude is not None and exclude(mesh.nodes[i]):
                continue
            d1 = (v[i + 2] - v[i - 2]) / (4 * h)
            d2 = (v[i + 2] - 2 * v[i] + v[i - 2]) / (4 * h * h)
            sig = float(np.atleast_2d(model.sigma(mesh.nodes[i]))[0, 0])
            bv = float(np.atleast_1d(model.b(mesh.nodes[i]))[0])
            res = 0.5 * sig ** 2 * d2 + bv * d1 \
                + driver.psi(mesh.nodes[i], np.array([d1 * sig])) - lam
            interior_max = max(interior_max, abs(res))
        dl = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        dr = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
        # inward normal points right at the left end, left at the right end
        boundary_max = max(abs(dl + driver.g_at(x[0]) - mu),
                           abs(-dr + driver.g_at(x[-1]) - mu))
        return {"interior_max": interior_max, "boundary_max": boundary_max}
    # 2-d: stride-2 in each axis where available
    for k in range(mesh.n_nodes):
        p = mesh.nodes[k]
        if exclude is not None and exclude(p):
            continue
        if mesh.boundary[k]:
            nvec = domain.grad_phi(p)
            nvec = nvec / np.linalg.norm(nvec)
            acc = 0.0
            usable = True
            for ax in range(2):
                side = 1 if nvec[ax] >= 0 else -1
                j1 = mesh.neighbor(k, ax, side)
                j2 = mesh.neighbor(j1, ax, side) if j1 >= 0 else -1
                if j2 >= 0:
                    acc += nvec[ax] * side * (-3 * v[k] + 4 * v[j1] - v[j2]) / (2 * h)
                elif j1 >= 0:
                    acc += nvec[ax] * side * (v[j1] - v[k]) / h
                else:
                    usable = False
            if usable:
                boundary_max = max(boundary_max, abs(acc + driver.g_at(p) - mu))
            continue
        ok = True
        d1 = np.zeros(2)
        d2 = np.zeros(2)
        for ax in range(2):
            jp = mesh.neighbor(k, ax, +1)
            jm = mesh.neighbor(k, ax, -1)
            jpp = mesh.neighbor(jp, ax, +1) if jp >= 0 else -1
            jmm = mesh.neighbor(jm, ax, -1) if jm >= 0 else -1
            if jpp < 0 or jmm < 0:
                ok = False
                break
            d1[ax] = (v[jpp] - v[jmm]) / (4 * h)
            d2[ax] = (v[jpp] - 2 * v[k] + v[jmm]) / (4 * h * h)
        if not ok:
            continue
        sig = np.atleast_2d(model.sigma(p))
        amat = sig @ sig.T
        bvec = np.atleast_1d(model.b(p))
        res = 0.5 * (amat[0, 0] * d2[0] + amat[1, 1] * d2[1]) + bvec @ d1 \
            + driver.psi(p, d1 @ sig) - lam
        interior_max = max(interior_max, abs(res))
    return {"interior_max": interior_max, "boundary_max": boundary_max}


@dataclass
class BsdeResidual:
    mean: float
    stderr: float
    variance: float
    paths: int
    partial_times: np.ndarray
    partial_means: np.ndarray


def bsde_residual(solution, model: SdeModel, domain: DomainSpec,
                  driver: DriverSpec, paths: int = 1000, T: float = 4.0,
                  h: float = 1e-2, seed: int = 0, x0=None,
                  placement: str = "symmetrize",
                  n_partial: int = 8) -> BsdeResidual:
    """Pathwise defect of the backward equation along simulated paths.

    Per path: value at the start minus value at the end, minus the
    accumulated driver (net of lambda) and boundary cost (net of mu),
    plus the replayed stochastic integral of zeta. The mean must vanish
    within Monte Carlo error and shrink as the step is refined.
    ``solution`` needs fields/methods lam, mu, v (interpolating grid
    function) and zeta_at; partial means over [0, t] are returned on a
    coarse time grid as a martingale diagnostic.
    """
    lam, mu = solution.lam, solution.mu
    if x0 is None:
        x0 = domain.centroid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    X0 = np.tile(x0, (paths, 1))
    n = round(T / h)
    sh = np.sqrt(h)
    R = solution.v.interp_many(X0).copy()
    marks = np.unique(np.linspace(n // n_partial, n, n_partial, dtype=int))
    partial_means = []
    partial_times = []
    for i, X, X_new, dK, xi in dynamics.ensemble_steps(model, domain, X0, n, h,
                                                       seed, placement):
        Z = solution.zeta_at(X)
        R -= (driver.psi_at(X, Z) - lam) * h
        if np.any(dK > 0):
            g_here = (np.zeros(paths) if driver.g is None
                      else np.array([driver.g(x) for x in X_new]))
            R -= (g_here - mu) * dK
        R += (Z * xi).sum(axis=1) * sh
        if i + 1 in marks:
            partial_times.append((i + 1) * h)
            partial_means.append(float((R - solution.v.interp_many(X_new)).mean()))
        if i == n - 1:
            R -= solution.v.interp_many(X_new)
    return BsdeResidual(float(R.mean()),
                        float(R.std(ddof=1) / np.sqrt(paths)),
                        float(R.var(ddof=1)), paths,
                        np.array(partial_times), np.array(partial_means))


# ---------------------------------------------------------------------------
# drift shift


def _sigma_inverse_x(model: SdeModel, domain: DomainSpec) -> float:
    """sup |sigma(x)^{-1} x| over a grid; raises if sigma is singular."""
    from .geometry import domain_grid
    s_sup = 0.0
    for p in domain_grid(domain, 33):
        sig = np.atleast_2d(model.sigma(p))
        if np.linalg.cond(sig) > 1e12:
            raise SingularSigma("diffusion matrix is singular on the closure")
        s_sup = max(s_sup, float(np.linalg.norm(np.linalg.solve(sig, p))))
    return s_sup


def shifted_problem(model: SdeModel, driver: DriverSpec, xi: float,
                    domain: DomainSpec):
    """Move a linear term from the drift into the driver.

    Returns (model', driver') with drift b - xi x and driver
    psi + xi z sigma^{-1} x. The generator-plus-driver combination, hence
    the stationary equation, is unchanged; the dissipativity constant
    drops by exactly xi while the z-Lipschitz constant grows by at most
    xi sup|sigma^{-1} x|. The declared x-modulus is kept nominal (after
    the shift it holds only locally in z).
    """
    s_sup = _sigma_inverse_x(model, domain)

    def b2(x, _b=model.b):
        return np.atleast_1d(_b(x)) - xi * np.atleast_1d(x)

    b2_vec = None
    if model.b_vec is not None:
        def b2_vec(X, _bv=model.b_vec):
            return _bv(X) - xi * X

    # the shifted dynamics stay a gradient system when the base one is
    pot2 = None
    if model.kolmogorov_potential is not None:
        p0 = model.kolmogorov_potential
        pot2 = dynamics.Potential(
            value=lambda x, _v=p0.value: _v(x) + 0.5 * xi * float(np.atleast_1d(x) @ np.atleast_1d(x)),
            grad=lambda x, _g=p0.grad: np.atleast_1d(_g(x)) + xi * np.atleast_1d(x),
            hess=lambda x, _h=p0.hess: np.atleast_2d(_h(x)) + xi * np.eye(len(np.atleast_1d(x))),
            value_vec=None if p0.value_vec is None
            else (lambda X, _vv=p0.value_vec: _vv(X) + 0.5 * xi * (X * X).sum(axis=1)),
            grad_vec=None if p0.grad_vec is None
            else (lambda X, _gv=p0.grad_vec: _gv(X) + xi * X))

    model2 = SdeModel(
        b=b2, sigma=model.sigma,
        kolmogorov_potential=pot2,
        b_vec=b2_vec,
        sigma_constant=model.sigma_constant,
        sigma_diag_vec=model.sigma_diag_vec,
        eta_hint=None if model.eta_hint is None else model.eta_hint - xi,
        name=model.name + f"+shift{xi:g}")

    def psi2(x, z, _psi=driver.psi, _sig=model.sigma):
        x = np.atleast_1d(x)
        corr = float(np.atleast_1d(z) @ np.linalg.solve(np.atleast_2d(_sig(x)), x))
        return _psi(x, z) + xi * corr

    psi2_vec = None
    if model.sigma_constant is not None and driver.psi_vec is not None:
        sig_inv = np.linalg.inv(model.sigma_constant)

        def psi2_vec(X, Z, _pv=driver.psi_vec):
            return _pv(X, Z) + xi * (Z * (X @ sig_inv.T)).sum(axis=1)

    driver2 = DriverSpec(
        psi=psi2, g=driver.g,
        K_psi_x=driver.K_psi_x,
        K_psi_z=driver.K_psi_z + xi * s_sup,
        M_psi=driver.M_psi,
        psi_vec=psi2_vec, g_c2lip=driver.g_c2lip,
        psi_bounded=driver.psi_bounded and xi == 0.0,
        name=driver.name + f"+shift{xi:g}")
    return model2, driver2


def drift_shift_equivalence(model: SdeModel, domain: DomainSpec,
                            driver: DriverSpec, xi: float, mu: float = 0.0,
                            **solve_kw) -> dict:
    """Solve before and after the drift shift and compare.

    The two solves discretize different-looking problems whose continuum
    equations coincide, so lambda and v must agree within combined grid
    tolerance. Also reports the dissipativity constants, whose difference
    must equal the shift.
    """
    base = solve_ergodic(model, domain, driver, mu, **solve_kw)
    model2, driver2 = shifted_problem(model, driver, xi, domain)
    shifted = solve_ergodic(model2, domain, driver2, mu, **solve_kw)
    eta_base = hypotheses.estimate_eta(model, domain, 32)
    eta_shift = hypotheses.estimate_eta(model2, domain, 32)
    return {
        "xi": xi,
        "lambda_base": base.lam,
        "lambda_shifted": shifted.lam,
        "lambda_gap": abs(base.lam - shifted.lam),
        "v_gap_max": float(np.max(np.abs(base.v.values - shifted.v.values))),
        "eta_base": eta_base,
        "eta_shifted": eta_shift,
        "eta_identity_gap": abs(eta_shift - (eta_base - xi)),
    }
