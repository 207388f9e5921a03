"""Finite-difference solver for the discounted semilinear Neumann problem.

Solves  (1/2) Tr(sigma sigma^T hess v) + b . grad v + psi(x, grad v sigma)
        - alpha v = 0   inside,
        dv/dn + g = mu  on the boundary (n the inward unit normal),

on structured grids, with upwinded drift, centered diffusion, one-sided
Neumann rows, and a frozen-gradient Picard iteration for the z dependence
of the driver. Degenerate diffusion is handled by adding a small viscosity
eps^2/2 at two values of eps and extrapolating linearly to eps = 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from .dynamics import SdeModel
from .errors import PicardDiverged
from .geometry import DomainSpec
from .grids import GridFunction, Mesh, build_mesh

__all__ = ["DriverSpec", "solve_discounted", "lipschitz_diagnostic"]


@dataclass
class DriverSpec:
    """Driver of the backward equation and boundary running cost.

    ``psi(x, z)`` takes the state and a z row vector; ``g`` is the boundary
    cost (None means identically zero). The declared constants bound the
    x- and z-Lipschitz moduli and |psi(., 0)|; ``psi_bounded`` asserts
    |psi| <= M_psi globally (automatic when K_psi_z = 0). ``psi_vec`` is an
    optional vectorized form psi(X (M,d), Z (M,d)) -> (M,).
    """

    psi: Callable
    g: Optional[Callable] = None
    K_psi_x: float = 0.0
    K_psi_z: float = 0.0
    M_psi: float = 0.0
    psi_vec: Optional[Callable] = None
    g_c2lip: bool = True
    psi_bounded: bool = False
    control: Optional[object] = None
    name: str = "driver"

    def g_at(self, x) -> float:
        return 0.0 if self.g is None else float(self.g(np.atleast_1d(x)))

    def psi_at(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        if self.psi_vec is not None:
            return self.psi_vec(X, Z)
        return np.array([self.psi(x, z) for x, z in zip(X, Z)])


# ---------------------------------------------------------------------------
# 1-d tridiagonal core


def _banded_1d(x: np.ndarray, a: np.ndarray, bdrift: np.ndarray, alpha: float,
               gl: float, gr: float, mu: float):
    """Banded operator and boundary right-hand side for the 1-d problem."""
    N = x.size
    h = x[1] - x[0]
    main = np.zeros(N)
    lower = np.zeros(N - 1)
    upper = np.zeros(N - 1)
    rhs = np.zeros(N)
    i = np.arange(1, N - 1)
    main[i] = -2 * a[i] / h ** 2 - alpha
    lower[i - 1] = a[i] / h ** 2
    upper[i] = a[i] / h ** 2
    pos = bdrift[i] >= 0
    main[i] += np.where(pos, -bdrift[i], bdrift[i]) / h
    upper[i] += np.where(pos, bdrift[i], 0.0) / h
    lower[i - 1] += np.where(pos, 0.0, -bdrift[i]) / h
    # inward-normal Neumann rows: (v_1 - v_0)/h = mu - g at the left end,
    # -(v_N - v_{N-1})/h = mu - g at the right end
    main[0] = -1 / h
    upper[0] = 1 / h
    rhs[0] = mu - gl
    main[-1] = -1 / h
    lower[-1] = 1 / h
    rhs[-1] = mu - gr
    ab = np.zeros((3, N))
    ab[0, 1:] = upper
    ab[1, :] = main
    ab[2, :-1] = lower
    return ab, rhs


def _solve_linear_1d(ab, rhs, psi_vals):
    b = rhs.copy()
    b[1:-1] -= psi_vals[1:-1]
    return solve_banded((1, 1), ab, b)


def _picard(mesh: Mesh, model: SdeModel, driver: DriverSpec,
            linear_solve, tol: float, max_sweeps: int) -> np.ndarray:
    """Frozen-gradient fixed point: repeat linear solves with psi at the
    previous sweep's z field until the sup-norm update stalls below tol."""
    nodes = mesh.nodes
    sig = np.stack([np.atleast_2d(model.sigma(p)) for p in nodes])
    v = np.zeros(mesh.n_nodes)
    if driver.K_psi_z == 0.0:
        Z = np.zeros_like(nodes)
        return linear_solve(driver.psi_at(nodes, Z))
    delta_prev = np.inf
    for sweep in range(max_sweeps):
        gf = GridFunction(mesh, v)
        Z = np.einsum("nd,nde->ne", gf.gradient(), sig)
        v_new = linear_solve(driver.psi_at(nodes, Z))
        delta = float(np.max(np.abs(v_new - v)))
        if delta > delta_prev:
            v_new = 0.5 * (v_new + v)   # damp oscillating sweeps
            delta = float(np.max(np.abs(v_new - v)))
        if delta < tol:
            return v_new
        v, delta_prev = v_new, delta
    raise PicardDiverged(
        f"gradient fixed point did not stall below {tol:.1e} in {max_sweeps} "
        "sweeps; refine the grid or increase the discount")


def _diffusion_1d(model: SdeModel, x: np.ndarray) -> np.ndarray:
    return np.array([0.5 * float(np.atleast_2d(model.sigma(np.array([t])))[0, 0] ** 2)
                     for t in x])


def _needs_viscosity(a_diag: np.ndarray, h: float) -> bool:
    return float(a_diag.min()) < 10.0 * h


# ---------------------------------------------------------------------------
# 2-d sparse core


def _assemble_2d(mesh: Mesh, model: SdeModel, alpha: float, mu: float,
                 driver: DriverSpec, eps: float):
    """Five-point rows inside, one-sided inward-normal Neumann rows at
    boundary nodes. Diffusion must have a diagonal sigma sigma^T."""
    domain = mesh.domain
    n = mesh.n_nodes
    h = mesh.spacing
    A = sparse.lil_matrix((n, n))
    rhs = np.zeros(n)
    psi_rows = np.zeros(n, bool)
    for k in range(n):
        p = mesh.nodes[k]
        if mesh.boundary[k]:
            nvec = domain.grad_phi(p)
            nvec = nvec / np.linalg.norm(nvec)
            for ax in range(2):
                side = 1 if nvec[ax] >= 0 else -1
                j = mesh.neighbor(k, ax, side)
                if j < 0:
                    j = mesh.neighbor(k, ax, -side)
                    side = -side
                if j < 0:
                    continue
                A[k, j] += nvec[ax] * side / h
                A[k, k] -= nvec[ax] * side / h
            rhs[k] = mu - driver.g_at(p)
            continue
        sig = np.atleast_2d(model.sigma(p))
        amat = sig @ sig.T
        if abs(amat[0, 1]) > 1e-12 * (1 + abs(amat[0, 0])):
            raise NotImplementedError("off-diagonal diffusion is not supported on 2-d grids")
        bvec = np.atleast_1d(model.b(p))
        psi_rows[k] = True
        A[k, k] -= alpha
        for ax in range(2):
            aval = 0.5 * amat[ax, ax] + 0.5 * eps ** 2
            kp, km = mesh.neighbor(k, ax, +1), mesh.neighbor(k, ax, -1)
            A[k, k] += -2 * aval / h ** 2
            A[k, kp] += aval / h ** 2
            A[k, km] += aval / h ** 2
            if bvec[ax] >= 0:
                A[k, k] += -bvec[ax] / h
                A[k, kp] += bvec[ax] / h
            else:
                A[k, k] += bvec[ax] / h
                A[k, km] += -bvec[ax] / h
    return sparse.csc_matrix(A), rhs, psi_rows


def solve_discounted(model: SdeModel, domain: DomainSpec, driver: DriverSpec,
                     alpha: float, mu: float = 0.0, spacing: float = 1e-3,
                     tol: float = 1e-10, max_sweeps: int = 80,
                     viscosity: str = "auto") -> GridFunction:
    """Grid solution of the discounted problem at discount alpha.

    ``viscosity``: "auto" adds the two-level vanishing-viscosity
    extrapolation when the diffusion degenerates somewhere on the grid,
    "off" never does, "force" always does.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    mesh = build_mesh(domain, spacing)
    if domain.dim == 1:
        x = mesh.nodes[:, 0]
        a_diag = _diffusion_1d(model, x)
        bdrift = np.array([float(np.atleast_1d(model.b(np.array([t])))[0]) for t in x])
        gl, gr = driver.g_at(x[0]), driver.g_at(x[-1])
        use_visc = (viscosity == "force"
                    or (viscosity == "auto" and _needs_viscosity(a_diag, mesh.spacing)))
        eps_list = [mesh.spacing, mesh.spacing / 2] if use_visc else [0.0]
        sols = []
        for eps in eps_list:
            ab, rhs = _banded_1d(x, a_diag + 0.5 * eps ** 2, bdrift, alpha, gl, gr, mu)
            sols.append(_picard(mesh, model, driver,
                                lambda pv, ab=ab, rhs=rhs: _solve_linear_1d(ab, rhs, pv),
                                tol, max_sweeps))
        v = 2 * sols[1] - sols[0] if use_visc else sols[0]
        return GridFunction(mesh, v)
    if domain.dim == 2:
        A, rhs, psi_rows = _assemble_2d(mesh, model, alpha, mu, driver, 0.0)
        lu = splu(A)

        def lin(pv):
            b = rhs.copy()
            b[psi_rows] -= pv[psi_rows]
            return lu.solve(b)

        return GridFunction(mesh, _picard(mesh, model, driver, lin, tol, max_sweeps))
    raise NotImplementedError("grid solves are 1-d and 2-d only")


def lipschitz_diagnostic(v: GridFunction, chunk: int = 512) -> float:
    """Largest difference quotient |v(x)-v(y)|/|x-y| over all node pairs."""
    pts, vals = v.nodes, v.values
    best = 0.0
    for i0 in range(0, len(pts), chunk):
        blk_p = pts[i0:i0 + chunk]
        blk_v = vals[i0:i0 + chunk]
        dx = blk_p[:, None, :] - pts[None, :, :]
        r = np.sqrt((dx * dx).sum(axis=2))
        r[r == 0] = np.inf
        q = np.abs(blk_v[:, None] - vals[None, :]) / r
        best = max(best, float(q.max()))
    return best
