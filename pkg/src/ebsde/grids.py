"""Structured grids over the domain closure and functions living on them.

One-dimensional domains use the full interval grid. Two-dimensional ones
embed the closure in its bounding box, keep the nodes where the defining
function is non-negative, and treat inside nodes with an outside neighbor
as boundary nodes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .geometry import DomainSpec

__all__ = ["GridFunction", "Mesh", "build_mesh"]


@dataclass
class Mesh:
    """Node layout over the closure; shared by grid functions and solvers.

    ``nodes`` lists the kept nodes (M, d); ``shape`` is the full box shape;
    ``flat_index`` maps each kept node to its position in the flattened box
    mesh; ``compact_of_flat`` inverts that (-1 where the box node is
    outside); ``boundary`` marks kept nodes with at least one outside or
    out-of-box neighbor.
    """

    domain: DomainSpec
    axes: List[np.ndarray]
    spacing: float
    nodes: np.ndarray
    flat_index: np.ndarray
    compact_of_flat: np.ndarray
    boundary: np.ndarray

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def ref_index(self) -> int:
        """Index of the kept node nearest the domain centroid."""
        d2 = ((self.nodes - self.domain.centroid) ** 2).sum(axis=1)
        return int(np.argmin(d2))

    def neighbor(self, k: int, axis: int, side: int) -> int:
        """Compact index of the neighbor of node k along axis (+1/-1), or -1."""
        shape = self.shape
        idx = list(np.unravel_index(self.flat_index[k], shape))
        idx[axis] += side
        if idx[axis] < 0 or idx[axis] >= shape[axis]:
            return -1
        return int(self.compact_of_flat[np.ravel_multi_index(idx, shape)])


def build_mesh(domain: DomainSpec, spacing: float) -> Mesh:
    """Tensor mesh with the given target spacing, snapped to the box."""
    axes = []
    for lo, hi in domain.bounding_box:
        n = max(2, round((hi - lo) / spacing))
        axes.append(np.linspace(lo, hi, n + 1))
    eff = axes[0][1] - axes[0][0]
    if domain.dim == 1:
        nodes = axes[0][:, None]
        flat = np.arange(len(nodes))
        compact = flat.copy()
        boundary = np.zeros(len(nodes), bool)
        boundary[0] = boundary[-1] = True
        return Mesh(domain, axes, eff, nodes, flat, compact, boundary)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    inside = np.array([domain.phi(p) >= -domain.boundary_tol for p in pts])
    flat = np.nonzero(inside)[0]
    compact = np.full(len(pts), -1, dtype=int)
    compact[flat] = np.arange(len(flat))
    shape = tuple(len(a) for a in axes)
    boundary = np.zeros(len(flat), bool)
    for k, f in enumerate(flat):
        idx = np.unravel_index(f, shape)
        for ax in range(domain.dim):
            for side in (-1, 1):
                j = list(idx)
                j[ax] += side
                if j[ax] < 0 or j[ax] >= shape[ax]:
                    boundary[k] = True
                    continue
                if compact[np.ravel_multi_index(j, shape)] < 0:
                    boundary[k] = True
    return Mesh(domain, axes, eff, pts[flat], flat, compact, boundary)


@dataclass
class GridFunction:
    """Scalar values on a mesh with difference-quotient gradients.

    The gradient uses centered differences where both neighbors exist and
    one-sided differences at boundary nodes, matching the discrete Neumann
    rows of the solvers.
    """

    mesh: Mesh
    values: np.ndarray
    _grad: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def spacing(self) -> float:
        return self.mesh.spacing

    def gradient(self) -> np.ndarray:
        if self._grad is not None:
            return self._grad
        m, v, h = self.mesh, self.values, self.mesh.spacing
        if m.domain.dim == 1:
            g = np.gradient(v, m.nodes[:, 0])[:, None]
        else:
            g = np.zeros((m.n_nodes, m.domain.dim))
            for k in range(m.n_nodes):
                for ax in range(m.domain.dim):
                    kp = m.neighbor(k, ax, +1)
                    km = m.neighbor(k, ax, -1)
                    if kp >= 0 and km >= 0:
                        g[k, ax] = (v[kp] - v[km]) / (2 * h)
                    elif kp >= 0:
                        g[k, ax] = (v[kp] - v[k]) / h
                    elif km >= 0:
                        g[k, ax] = (v[k] - v[km]) / h
        self._grad = g
        return g

    def __call__(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.mesh.domain.dim == 1:
            return float(np.interp(x[0], self.mesh.nodes[:, 0], self.values))
        # nearest kept node plus a linear correction from its gradient
        k = int(np.argmin(((self.mesh.nodes - x) ** 2).sum(axis=1)))
        return float(self.values[k] + self.gradient()[k] @ (x - self.mesh.nodes[k]))

    def interp_many(self, X: np.ndarray) -> np.ndarray:
        if self.mesh.domain.dim == 1:
            return np.interp(X[:, 0], self.mesh.nodes[:, 0], self.values)
        return np.array([self(x) for x in X])

    def to_csv(self, fname: str) -> None:
        g = self.gradient()
        d = self.mesh.domain.dim
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k}" for k in range(d)] + ["value"]
                       + [f"grad{k}" for k in range(d)])
            for i in range(self.mesh.n_nodes):
                w.writerow([f"{c:.17g}" for c in self.mesh.nodes[i]]
                           + [f"{self.values[i]:.17g}"]
                           + [f"{c:.17g}" for c in g[i]])
