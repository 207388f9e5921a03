"""Long-run solvers: ergodic value function, cost constants, and inversion.

Two routes produce the pair (v, lambda) at a fixed boundary constant mu:

* vanishing discount: solve the discounted problem along a geometrically
  decreasing discount sequence; the discount times the value at a
  reference node converges to lambda and is Richardson-extrapolated.
* direct: one bordered linear system (or Picard sweeps of it when the
  driver reads the gradient) with unknowns (v at the nodes, lambda) and
  the normalization v(x_ref) = 0.

On top of these sit the sampled curve mu -> lambda(mu), which is
non-increasing, and a bisection that inverts it to find the boundary
constant matching a prescribed lambda.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import dynamics, hypotheses
from .discounted import (DriverSpec, _banded_1d, _diffusion_1d, _needs_viscosity,
                         _picard, _solve_linear_1d, _assemble_2d, solve_discounted)
from .dynamics import SdeModel
from .errors import BracketFailure, FlatCurve, NoConvergence, SchemeMismatch
from .geometry import DomainSpec
from .grids import GridFunction, build_mesh

__all__ = ["ErgodicSolution", "LambdaOfMuCurve", "solve_ergodic",
           "lambda_of_mu", "solve_boundary_cost", "lambda_time_average",
           "curve_to_csv"]


@dataclass
class ErgodicSolution:
    """Normalized value function, its gradient field times sigma, and the
    two ergodic constants. ``zeta`` rows are the z arguments the driver
    sees along the solution."""

    v: GridFunction
    zeta: np.ndarray
    lam: float
    mu: float
    diagnostics: Dict = field(default_factory=dict)

    def zeta_at(self, X: np.ndarray) -> np.ndarray:
        """Interpolate the zeta field at a batch of states (P, d) -> (P, d)."""
        nodes = self.v.nodes
        if nodes.shape[1] == 1:
            return np.interp(X[:, 0], nodes[:, 0], self.zeta[:, 0])[:, None]
        out = np.empty((len(X), nodes.shape[1]))
        for k in range(nodes.shape[1]):
            gf = GridFunction(self.v.mesh, self.zeta[:, k])
            out[:, k] = gf.interp_many(X)
        return out

    def save(self, prefix: str) -> None:
        """Write <prefix>.json (constants, diagnostics) and <prefix>.csv (v)."""
        with open(prefix + ".json", "w") as fh:
            json.dump({"lambda": self.lam, "mu": self.mu,
                       "diagnostics": _jsonable(self.diagnostics)}, fh, indent=2)
        self.v.to_csv(prefix + ".csv")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


@dataclass
class LambdaOfMuCurve:
    mus: np.ndarray
    lams: np.ndarray
    tol: float

    def non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.lams) <= self.tol))

    def slope_modulus(self) -> float:
        """Largest |d lambda / d mu| between consecutive samples."""
        return float(np.max(np.abs(np.diff(self.lams) / np.diff(self.mus))))


def curve_to_csv(curve: LambdaOfMuCurve, fname: str) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mu", "lambda", "tol"])
        for m, l in zip(curve.mus, curve.lams):
            w.writerow([f"{m:.17g}", f"{l:.17g}", f"{curve.tol:.3g}"])


# ---------------------------------------------------------------------------
# direct scheme


def _direct_1d(mesh, model, driver, mu, tol, max_sweeps, viscosity):
    x = mesh.nodes[:, 0]
    a_diag = _diffusion_1d(model, x)
    bdrift = np.array([float(np.atleast_1d(model.b(np.array([t])))[0]) for t in x])
    gl, gr = driver.g_at(x[0]), driver.g_at(x[-1])
    iref = mesh.ref_index()
    N = x.size
    use_visc = (viscosity == "force"
                or (viscosity == "auto" and _needs_viscosity(a_diag, mesh.spacing)))
    eps_list = [mesh.spacing, mesh.spacing / 2] if use_visc else [0.0]
    outs = []
    for eps in eps_list:
        ab, rhs = _banded_1d(x, a_diag + 0.5 * eps ** 2, bdrift, 0.0, gl, gr, mu)
        # bordered sparse system: tridiagonal block, -1 lambda column on
        # interior rows, and the normalization row v(x_ref) = 0
        A = sparse.lil_matrix((N + 1, N + 1))
        A[np.arange(N), np.arange(N)] = ab[1]
        A[np.arange(N - 1), np.arange(1, N)] = ab[0, 1:]
        A[np.arange(1, N), np.arange(N - 1)] = ab[2, :-1]
        A[np.arange(1, N - 1), N] = -1.0
        A[N, iref] = 1.0
        A = sparse.csc_matrix(A)

        def lin(pv, A=A, rhs=rhs):
            b = np.concatenate([rhs, [0.0]])
            b[1:N - 1] -= pv[1:N - 1]
            sol = spsolve(A, b)
            lin.lam = sol[N]
            return sol[:N]

        v = _picard(mesh, model, driver, lin, tol, max_sweeps)
        outs.append((v, lin.lam))
    if use_visc:
        v = 2 * outs[1][0] - outs[0][0]
        lam = 2 * outs[1][1] - outs[0][1]
    else:
        v, lam = outs[0]
    v = v - v[iref]
    return v, float(lam), {"viscosity_eps": eps_list}


def _direct_2d(mesh, model, driver, mu, tol, max_sweeps):
    A0, rhs, psi_rows = _assemble_2d(mesh, model, 0.0, mu, driver, 0.0)
    n = mesh.n_nodes
    iref = mesh.ref_index()
    A = sparse.lil_matrix((n + 1, n + 1))
    A[:n, :n] = A0
    A[np.nonzero(psi_rows)[0], n] = -1.0
    A[n, iref] = 1.0
    A = sparse.csc_matrix(A)

    def lin(pv):
        b = np.concatenate([rhs, [0.0]])
        b[:n][psi_rows] -= pv[psi_rows]
        sol = spsolve(A, b)
        lin.lam = sol[n]
        return sol[:n]

    v = _picard(mesh, model, driver, lin, tol, max_sweeps)
    v = v - v[iref]
    return v, float(lin.lam), {}


def _zeta_field(mesh, model, v: np.ndarray) -> np.ndarray:
    gf = GridFunction(mesh, v)
    sig = np.stack([np.atleast_2d(model.sigma(p)) for p in mesh.nodes])
    return np.einsum("nd,nde->ne", gf.gradient(), sig)


def _alpha0(model: SdeModel, domain: DomainSpec) -> float:
    eta = model.eta_hint
    if eta is None:
        eta = hypotheses.estimate_eta(model, domain, 16)
    if eta >= 0:
        return 0.25
    return abs(eta) / 4.0


def solve_ergodic(model: SdeModel, domain: DomainSpec, driver: DriverSpec,
                  mu: float, scheme: str = "direct", spacing: float = 1e-3,
                  tol: float = 1e-3, picard_tol: float = 1e-10,
                  max_sweeps: int = 80, viscosity: str = "auto",
                  max_halvings: int = 40) -> ErgodicSolution:
    """Solve the ergodic problem at fixed mu; returns (v, zeta, lambda).

    scheme is one of "direct", "vanishing_discount", or "both"; with
    "both" the two lambdas must agree within 5 tol or SchemeMismatch is
    raised. The value function is normalized to vanish at the node
    nearest the centroid.
    """
    if scheme not in ("direct", "vanishing_discount", "both"):
        raise ValueError(f"unknown scheme {scheme!r}; use 'direct', "
                         "'vanishing_discount', or 'both'")
    mesh = build_mesh(domain, spacing)
    diagnostics: Dict = {"scheme": scheme, "spacing": mesh.spacing}
    v_dir = lam_dir = None
    if scheme in ("direct", "both"):
        if domain.dim == 1:
            v_dir, lam_dir, extra = _direct_1d(mesh, model, driver, mu,
                                               picard_tol, max_sweeps, viscosity)
        elif domain.dim == 2:
            v_dir, lam_dir, extra = _direct_2d(mesh, model, driver, mu,
                                               picard_tol, max_sweeps)
        else:
            raise NotImplementedError("grid solves are 1-d and 2-d only")
        diagnostics.update(extra)
        diagnostics["lambda_direct"] = lam_dir
    v_vd = lam_vd = None
    if scheme in ("vanishing_discount", "both"):
        alpha = _alpha0(model, domain)
        iref = mesh.ref_index()
        seq = []
        lam_prev = None
        for k in range(max_halvings):
            gf = solve_discounted(model, domain, driver, alpha, mu,
                                  spacing=spacing, tol=picard_tol,
                                  max_sweeps=max_sweeps, viscosity=viscosity)
            lam_k = alpha * gf.values[iref]
            seq.append((alpha, lam_k))
            if lam_prev is not None and abs(lam_k - lam_prev) < tol / 2:
                break
            lam_prev = lam_k
            alpha /= 2
        else:
            raise NoConvergence(
                f"discount sequence exhausted after {max_halvings} halvings")
        lam_vd = 2 * lam_k - lam_prev
        v_vd = gf.values - gf.values[iref]
        diagnostics["alpha_sequence"] = [a for a, _ in seq]
        diagnostics["lambda_vd"] = lam_vd
        diagnostics["extrapolation_gap"] = abs(lam_k - lam_prev)
    if scheme == "both":
        if abs(lam_dir - lam_vd) > 5 * tol:
            raise SchemeMismatch(
                f"direct and vanishing-discount constants differ by "
                f"{abs(lam_dir - lam_vd):.3e} (> 5 tol = {5 * tol:.1e}); "
                "the grid is too coarse")
        diagnostics["scheme_gap"] = abs(lam_dir - lam_vd)
    if v_dir is not None:
        v, lam = v_dir, lam_dir
    else:
        v, lam = v_vd, lam_vd
    zeta = _zeta_field(mesh, model, v)
    return ErgodicSolution(GridFunction(mesh, v), zeta, float(lam), float(mu),
                           diagnostics)


def lambda_of_mu(model: SdeModel, domain: DomainSpec, driver: DriverSpec,
                 mus: Sequence[float], **solve_kw) -> LambdaOfMuCurve:
    """Sample the boundary-constant-to-ergodic-constant map."""
    mus = np.asarray(sorted(mus), dtype=float)
    lams = np.array([solve_ergodic(model, domain, driver, m, **solve_kw).lam
                     for m in mus])
    return LambdaOfMuCurve(mus, lams, float(solve_kw.get("tol", 1e-3)))


def solve_boundary_cost(model: SdeModel, domain: DomainSpec, driver: DriverSpec,
                        lambda_target: float, tol: float = 1e-3,
                        slope_floor: float = 1e-2, flat_tol: float = 1e-6,
                        max_expansions: int = 8, max_bisect: int = 60,
                        **solve_kw) -> ErgodicSolution:
    """Find mu with lambda(mu) = lambda_target by monotone bisection.

    The initial bracket half-width combines the distance to lambda(0) and
    the driver bound, scaled by the stationary boundary-flux magnitude
    (floored for safety); it doubles on straddle failure. FlatCurve means
    the sampled curve cannot identify mu; BracketFailure means the target
    was never straddled.
    """
    lam0 = solve_ergodic(model, domain, driver, 0.0, **solve_kw).lam
    flux, _ = hypotheses.stationary_generator_phi(model, domain)
    B = (abs(lambda_target - lam0) + 2 * driver.M_psi) / max(abs(flux), slope_floor)
    B = max(B, 10 * tol)
    for _ in range(max_expansions):
        lam_lo = solve_ergodic(model, domain, driver, -B, **solve_kw).lam
        lam_hi = solve_ergodic(model, domain, driver, +B, **solve_kw).lam
        if abs(lam_hi - lam_lo) / (2 * B) < flat_tol:
            raise FlatCurve(
                f"sampled slope {(lam_hi - lam_lo) / (2 * B):.2e} over "
                f"[-{B:.3g}, {B:.3g}]; the boundary constant is not identifiable")
        if lam_lo >= lambda_target >= lam_hi:
            break
        B *= 2
    else:
        raise BracketFailure(
            f"target {lambda_target:.4g} never straddled; last bracket "
            f"half-width {B / 2:.3g} with curve values "
            f"[{lam_hi:.4g}, {lam_lo:.4g}]")
    lo, hi = -B, B
    sol = None
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        sol = solve_ergodic(model, domain, driver, mid, **solve_kw)
        if abs(sol.lam - lambda_target) < tol / 2:
            return sol
        if sol.lam > lambda_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, B):
            break
    if sol is None or abs(sol.lam - lambda_target) > tol:
        raise NoConvergence("bisection failed to reach the target constant")
    return sol


def lambda_time_average(model: SdeModel, domain: DomainSpec, driver: DriverSpec,
                        solution: ErgodicSolution, T: float = 100.0,
                        h: float = 1e-3, paths: int = 64, seed: int = 0):
    """Third, simulation-based estimate of the ergodic constant.

    Averages the driver along reflected paths, evaluated at the solved
    zeta field, plus the boundary-cost flux; returns (estimate, stderr).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 77_777]))
    X0 = dynamics.stationary_start(model, domain, paths, rng, h, seed, "symmetrize")
    n = round(T / h)
    acc = np.zeros(paths)
    mu = solution.mu
    for i, X, X_new, dK, xi in dynamics.ensemble_steps(model, domain, X0, n, h,
                                                       seed, "symmetrize"):
        Z = solution.zeta_at(X)
        acc += driver.psi_at(X, Z) * h
        if np.any(dK > 0):
            gvals = (np.zeros(paths) if driver.g is None
                     else np.array([driver.g(x) if k > 0 else 0.0
                                    for x, k in zip(X_new, dK)]))
            acc += (gvals - mu) * dK
    vals = acc / T
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(paths))
