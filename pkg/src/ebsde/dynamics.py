"""Reflected and penalized diffusion simulation with boundary local time.

The reflected process dX = b dt + sigma dW + grad(phi) dK is discretized by
an Euler proposal followed by a boundary repair step. Two repair placements
are provided:

* ``project``: place the state at the closest point of the closure. This is
  the simplest scheme but it parks an atom of occupation mass exactly on
  the boundary and underestimates the local time at rate sqrt(h).
* ``symmetrize``: reflect the overshoot across the boundary (mirror the
  proposal at its projection). Occupation statistics and the local-time
  rate are then accurate to first order in h, so every distributional
  estimator in this module defaults to it.

In both variants the local-time increment is the length of the repair
displacement |X_new - proposal|, which matches the continuous local time
because the defining function has a unit gradient on the boundary.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import NotKolmogorov, StepTooLarge
from .geometry import DomainSpec, project

__all__ = [
    "Potential", "SdeModel", "ReflectedPath", "GeneratorEval",
    "step_reflected", "simulate", "step_penalized", "invariant_density",
    "sample_invariant", "generator_apply", "expected_K_rate",
    "occupation_histogram", "ensemble_average", "penalized_moments", "stationary_start",
    "path_to_csv", "histogram_to_csv",
]


@dataclass
class Potential:
    """Scalar potential with first and second derivatives.

    ``grad_vec`` and ``value_vec`` are optional vectorized forms used by the
    ensemble simulator and the rejection sampler; the point-wise callables
    are always authoritative.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    value_vec: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grad_vec: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass
class SdeModel:
    """Drift and diffusion of the state equation, plus optional structure.

    When ``kolmogorov_potential`` is present the model is understood as the
    gradient system b = -grad(U), sigma = sqrt(2) I, whose stationary law
    has the explicit density exp(-U)/N on the domain closure.

    ``b_vec`` (shape (P,d) -> (P,d)), ``sigma_constant`` ((d,d) matrix) and
    ``sigma_diag_vec`` ((P,d) -> (P,d) diagonal entries) are optional fast
    paths for ensemble simulation; absent them the simulator falls back on
    a per-point loop.
    """

    b: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]
    kolmogorov_potential: Optional[Potential] = None
    b_vec: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sigma_constant: Optional[np.ndarray] = None
    sigma_diag_vec: Optional[Callable[[np.ndarray], np.ndarray]] = None
    eta_hint: Optional[float] = None
    name: str = "model"

    def drift_at(self, X: np.ndarray) -> np.ndarray:
        if self.b_vec is not None:
            return self.b_vec(X)
        return np.stack([np.atleast_1d(self.b(x)) for x in X])

    def noise_term(self, X: np.ndarray, dW: np.ndarray) -> np.ndarray:
        """sigma(X_p) dW_p for a batch of states and increments."""
        if self.sigma_constant is not None:
            return dW @ self.sigma_constant.T
        if self.sigma_diag_vec is not None:
            return self.sigma_diag_vec(X) * dW
        return np.stack([np.atleast_2d(self.sigma(x)) @ w for x, w in zip(X, dW)])


@dataclass
class GeneratorEval:
    """Value of the generator applied to a test function at one point."""

    value: float


@dataclass
class ReflectedPath:
    """Discrete reflected trajectory with its cumulative boundary local time.

    ``local_time`` is the running total K, starting at 0; ``noises`` stores
    the driving standard normal increments so that pathwise identities can
    be replayed without re-simulating.
    """

    times: np.ndarray
    states: np.ndarray
    local_time: np.ndarray
    reflection_events: np.ndarray
    noises: np.ndarray
    h: float

    def check_invariants(self, domain: DomainSpec, event_tol: Optional[float] = None) -> None:
        """Assert the structural path properties; raises AssertionError.

        ``event_tol``: how close to the boundary a state must be at a
        reflection event. Defaults to one noise scale (the symmetrized
        placement leaves the state within the overshoot distance of the
        boundary rather than exactly on it).
        """
        phi_vals = np.array([domain.phi(x) for x in self.states])
        assert phi_vals.min() >= -domain.boundary_tol, "state left the closure"
        dK = np.diff(self.local_time)
        assert self.local_time[0] == 0.0
        assert dK.min() >= -1e-15, "local time must be non-decreasing"
        if event_tol is None:
            event_tol = 6.0 * np.sqrt(self.h) * (1.0 + np.abs(self.states).max())
        for i in self.reflection_events:
            assert phi_vals[i] <= event_tol, (
                f"reflection event at index {i} but phi = {phi_vals[i]:.3e}")


# ---------------------------------------------------------------------------
# stepping


def _repair(domain: DomainSpec, x_pre: np.ndarray, placement: str):
    """Boundary repair of a single proposal; returns (state, dK)."""
    if domain.phi(x_pre) >= 0:
        return x_pre, 0.0
    p = project(domain, x_pre)
    if placement == "project":
        return p, float(np.linalg.norm(p - x_pre))
    if placement == "symmetrize":
        mirrored = 2.0 * p - x_pre
        if domain.phi(mirrored) < 0:    # very deep overshoot: fall back
            mirrored = project(domain, mirrored)
        return mirrored, float(np.linalg.norm(mirrored - x_pre))
    raise ValueError(f"unknown placement {placement!r}")


def step_reflected(model: SdeModel, domain: DomainSpec, x, h: float, noise,
                   placement: str = "project"):
    """One Euler step of the reflected equation.

    Proposes x + b(x) h + sigma(x) sqrt(h) noise and repairs it back into
    the closure, returning ``(new_state, dK)`` where dK is the length of
    the repair displacement (zero for interior proposals).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    noise = np.atleast_1d(np.asarray(noise, dtype=float))
    if h <= 0:
        raise ValueError("h must be positive")
    x_pre = x + np.atleast_1d(model.b(x)) * h \
        + np.atleast_2d(model.sigma(x)) @ noise * np.sqrt(h)
    if np.linalg.norm(x_pre - x) > domain.diameter_hint:
        raise StepTooLarge(
            f"proposal moved {np.linalg.norm(x_pre - x):.3g}, beyond the domain "
            f"diameter {domain.diameter_hint:.3g}; decrease h")
    return _repair(domain, x_pre, placement)


def simulate(model: SdeModel, domain: DomainSpec, x0, T: float, h: float,
             seed: int, placement: str = "symmetrize") -> ReflectedPath:
    """Simulate one reflected path on [0, T] with step h.

    T/h must be integral. The driving noise comes from the stream derived
    from (seed, 0), matching path index 0 of the ensemble helpers.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = round(T / h) if h > 0 else 0
    if T > 0 and abs(n * h - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T/h = {T / h} is not integral")
    if not domain.contains(x0, tol=domain.boundary_tol):
        raise ValueError("x0 outside the domain closure")
    d = domain.dim
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    states = np.empty((n + 1, d)); states[0] = x0
    K = np.zeros(n + 1)
    noises = rng.standard_normal((n, d)) if n else np.zeros((0, d))
    events = []
    x = x0
    for i in range(n):
        x, dK = step_reflected(model, domain, x, h, noises[i], placement)
        states[i + 1] = x
        K[i + 1] = K[i] + dK
        if dK > 0:
            events.append(i + 1)
    times = np.arange(n + 1) * h
    return ReflectedPath(times, states, K, np.array(events, dtype=int), noises, h)


def step_penalized(model: SdeModel, domain: DomainSpec, n: float, x, h: float, noise):
    """One unreflected Euler step of the penalized gradient system.

    The potential is U + n dist(., closure)^2, so the extra drift outside
    the domain is -2 n (x - proj(x)).
    """
    pot = model.kolmogorov_potential
    if pot is None:
        raise NotKolmogorov("penalized stepping needs a potential")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    noise = np.atleast_1d(np.asarray(noise, dtype=float))
    grad_pen = np.zeros_like(x)
    if domain.phi(x) < 0:
        grad_pen = 2.0 * n * (x - project(domain, x))
    return x - (np.atleast_1d(pot.grad(x)) + grad_pen) * h + np.sqrt(2.0 * h) * noise


# ---------------------------------------------------------------------------
# vectorized ensembles

_BLOCK_NUMBERS = 1 << 22     # noise buffer size (numbers per block)


def _ensemble_noise_blocks(seed: int, P: int, d: int, n_steps: int):
    """Yield (start, block) noise arrays of shape (L, P, d).

    Path p consumes the stream seeded by SeedSequence([seed, p]), drawn in
    time blocks so memory stays bounded while keeping one stream per path.
    """
    rngs = [np.random.default_rng(np.random.SeedSequence([seed, p])) for p in range(P)]
    L = max(1, min(n_steps, _BLOCK_NUMBERS // max(P * d, 1)))
    start = 0
    while start < n_steps:
        size = min(L, n_steps - start)
        block = np.empty((size, P, d))
        for p, rng in enumerate(rngs):
            block[:, p, :] = rng.standard_normal((size, d))
        yield start, block
        start += size


class _IntervalKernel:
    """Fast repair for 1-d intervals [-r, r]."""

    def __init__(self, domain: DomainSpec):
        self.r = float(getattr(domain, "radius"))

    def __call__(self, x_pre: np.ndarray, placement: str):
        r = self.r
        if placement == "project":
            x_new = np.clip(x_pre, -r, r)
        else:
            folded = x_pre - 2.0 * np.maximum(x_pre - r, 0.0) \
                + 2.0 * np.maximum(-r - x_pre, 0.0)
            x_new = np.clip(folded, -r, r)
        dK = np.abs(x_new - x_pre).sum(axis=1)
        return x_new, dK


class _BallKernel:
    """Fast repair for balls of radius r about the origin."""

    def __init__(self, domain: DomainSpec):
        self.r = float(getattr(domain, "radius"))

    def __call__(self, x_pre: np.ndarray, placement: str):
        r = self.r
        norms = np.linalg.norm(x_pre, axis=1)
        out = norms > r
        x_new = x_pre.copy()
        if np.any(out):
            if placement == "project":
                scale = r / norms[out]
            else:
                scale = np.maximum(2.0 * r / norms[out] - 1.0, 0.0)
                scale = np.minimum(scale * norms[out], r) / norms[out]
            x_new[out] = x_pre[out] * scale[:, None]
        dK = np.linalg.norm(x_new - x_pre, axis=1)
        return x_new, dK


class _GenericKernel:
    def __init__(self, domain: DomainSpec):
        self.domain = domain

    def __call__(self, x_pre: np.ndarray, placement: str):
        x_new = np.empty_like(x_pre)
        dK = np.empty(len(x_pre))
        for i, xp in enumerate(x_pre):
            x_new[i], dK[i] = _repair(self.domain, xp, placement)
        return x_new, dK


def _make_kernel(domain: DomainSpec):
    if hasattr(domain, "radius"):
        return _IntervalKernel(domain) if domain.dim == 1 else _BallKernel(domain)
    return _GenericKernel(domain)


def ensemble_steps(model: SdeModel, domain: DomainSpec, X0: np.ndarray, n_steps: int,
                   h: float, seed: int, placement: str = "symmetrize"):
    """Generator over vectorized reflected Euler steps.

    Yields (step_index, X_before, X_after, dK, xi) with arrays of shape
    (P, d) / (P,). The caller owns all accumulation; X_after must not be
    mutated (it becomes the next X_before).
    """
    X = np.array(X0, dtype=float)
    P, d = X.shape
    kernel = _make_kernel(domain)
    sh = np.sqrt(h)
    diam = domain.diameter_hint
    for start, block in _ensemble_noise_blocks(seed, P, d, n_steps):
        for j in range(block.shape[0]):
            xi = block[j]
            x_pre = X + model.drift_at(X) * h + model.noise_term(X, xi) * sh
            if np.linalg.norm(x_pre - X, axis=1).max() > diam:
                raise StepTooLarge("ensemble proposal beyond domain diameter; decrease h")
            X_new, dK = kernel(x_pre, placement)
            yield start + j, X, X_new, dK, xi
            X = X_new


def ensemble_average(model: SdeModel, domain: DomainSpec, X0: np.ndarray,
                     T: float, h: float, seed: int, f_vec,
                     placement: str = "symmetrize"):
    """Per-path time averages (1/T) sum f(X_i) h over [0, T].

    Returns the (P,) array of path averages of the state functional.
    """
    n = round(T / h)
    P = X0.shape[0]
    acc = np.zeros(P)
    for i, X, X_new, dK, xi in ensemble_steps(model, domain, X0, n, h, seed, placement):
        acc += f_vec(X)
    return acc * h / T


# ---------------------------------------------------------------------------
# invariant measure utilities (gradient systems)


@dataclass
class InvariantDensity:
    """Gibbs density exp(-U)/N sampled on a grid over the domain closure."""

    nodes: np.ndarray
    values: np.ndarray
    normalizer: float
    cell_volume: float

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)


def _potential_or_raise(model: SdeModel) -> Potential:
    if model.kolmogorov_potential is None:
        raise NotKolmogorov("model carries no potential; stationary density unknown")
    return model.kolmogorov_potential


def invariant_density(model: SdeModel, domain: DomainSpec,
                      resolution: int = 2001) -> InvariantDensity:
    """Stationary density of the reflected gradient system on a grid.

    The normalizer is computed by quadrature over the closure; the returned
    grid values integrate to one up to quadrature error.
    """
    pot = _potential_or_raise(model)
    if domain.dim == 1:
        lo, hi = domain.bounding_box[0]
        N, _ = integrate.quad(lambda t: np.exp(-pot.value(np.array([t]))), lo, hi)
        xs = np.linspace(lo, hi, resolution)
        vals = np.array([np.exp(-pot.value(np.array([t]))) / N for t in xs])
        return InvariantDensity(xs[:, None], vals, N, (hi - lo) / (resolution - 1))
    # d >= 2: midpoint rule on a tensor grid masked to the closure
    axes = [np.linspace(lo, hi, resolution) for lo, hi in domain.bounding_box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    inside = np.array([domain.phi(p) >= 0 for p in pts])
    raw = np.zeros(len(pts))
    raw[inside] = np.array([np.exp(-pot.value(p)) for p in pts[inside]])
    cell = np.prod([(a[1] - a[0]) for a in axes])
    N = raw.sum() * cell
    return InvariantDensity(pts[inside], raw[inside] / N, N, cell)


def sample_invariant(model: SdeModel, domain: DomainSpec, size: int, rng) -> np.ndarray:
    """Rejection sample from the Gibbs law on the closure.

    Proposals are uniform on the bounding box; the acceptance envelope uses
    the grid minimum of U, so acceptance is exact for the returned points.
    """
    pot = _potential_or_raise(model)
    box = domain.bounding_box
    probe = np.linspace(0, 1, 257)[:, None] * (box[:, 1] - box[:, 0]) + box[:, 0]
    if domain.dim == 1:
        u_min = min(pot.value(np.array([t])) for t in probe[:, 0])
    else:
        u_min = min(pot.value(p) for p in
                    np.stack(np.meshgrid(*[probe[:, k] for k in range(domain.dim)],
                                         indexing="ij"), axis=-1).reshape(-1, domain.dim)
                    if domain.phi(p) >= 0)
    out = np.empty((size, domain.dim))
    have = 0
    while have < size:
        m = 4 * (size - have) + 16
        cand = rng.uniform(box[:, 0], box[:, 1], size=(m, domain.dim))
        if pot.value_vec is not None and domain.dim == 1:
            dens = np.exp(-(pot.value_vec(cand) - u_min))
            ok = (rng.uniform(size=m) < dens)
            r = getattr(domain, "radius", None)
            if r is not None:
                ok &= (np.abs(cand[:, 0]) <= r)
            else:
                ok &= np.array([domain.phi(c) >= 0 for c in cand])
        else:
            dens = np.array([np.exp(-(pot.value(c) - u_min)) if domain.phi(c) >= 0 else 0.0
                             for c in cand])
            ok = rng.uniform(size=m) < dens
        acc = cand[ok]
        take = min(size - have, len(acc))
        out[have:have + take] = acc[:take]
        have += take
    return out


# ---------------------------------------------------------------------------
# generator and local-time statistics


def _fields_of(f):
    """Accept (value, grad, hess) triples or objects with those attributes."""
    if isinstance(f, (tuple, list)) and len(f) == 3:
        return f
    return f.value, f.grad, f.hess


def generator_apply(model: SdeModel, f, x) -> float:
    """Apply L f = (1/2) Tr(sigma sigma^T hess f) + b . grad f at x."""
    _, grad_f, hess_f = _fields_of(f)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sig = np.atleast_2d(model.sigma(x))
    H = np.atleast_2d(hess_f(x))
    return float(0.5 * np.trace(sig @ sig.T @ H) + np.atleast_1d(model.b(x)) @ np.atleast_1d(grad_f(x)))


@dataclass
class KRateEstimate:
    rate: float
    stderr: float
    paths: int
    horizon: float


def stationary_start(model: SdeModel, domain: DomainSpec, paths: int, rng,
                      h: float, seed: int, placement: str):
    """Stationary initial states: exact Gibbs draw, or burn-in otherwise."""
    if model.kolmogorov_potential is not None:
        return sample_invariant(model, domain, paths, rng)
    eta = model.eta_hint
    if eta is None or eta >= 0:
        raise ValueError("non-gradient model needs a negative eta_hint for burn-in length")
    burn = 10.0 / abs(eta)
    X = np.stack([domain.centroid] * paths)
    n = round(burn / h)
    for i, Xb, X_new, dK, xi in ensemble_steps(model, domain, X, n, h, seed + 1_000_003,
                                               placement):
        X = X_new
    return X


def expected_K_rate(model: SdeModel, domain: DomainSpec, T: float, h: float,
                    paths: int, seed: int, placement: str = "symmetrize") -> KRateEstimate:
    """Monte Carlo estimate of E[K_T] / T from a stationary start.

    Returns the ensemble mean of K_T/T with its standard error over paths.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 999_983]))
    X0 = stationary_start(model, domain, paths, rng, h, seed, placement)
    n = round(T / h)
    K = np.zeros(paths)
    for i, X, X_new, dK, xi in ensemble_steps(model, domain, X0, n, h, seed, placement):
        K += dK
    rates = K / T
    return KRateEstimate(float(rates.mean()),
                         float(rates.std(ddof=1) / np.sqrt(paths)), paths, T)


def local_time_growth(model: SdeModel, domain: DomainSpec, t_grid: Sequence[float],
                      h: float, paths: int, seed: int) -> np.ndarray:
    """E[K_t] along a time grid (stationary start); for linear-growth checks."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 999_983]))
    X0 = stationary_start(model, domain, paths, rng, h, seed, "symmetrize")
    t_grid = np.asarray(t_grid, dtype=float)
    n = round(float(t_grid.max()) / h)
    marks = np.minimum((t_grid / h).round().astype(int), n)
    K = np.zeros(paths)
    out = np.zeros(len(t_grid))
    for i, X, X_new, dK, xi in ensemble_steps(model, domain, X0, n, h, seed, "symmetrize"):
        K += dK
        hit = (marks == i + 1)
        if hit.any():
            out[hit] = K.mean()
    return out


def occupation_histogram(model: SdeModel, domain: DomainSpec, T_total: float,
                         h: float, bins: int, paths: int, seed: int,
                         placement: str = "symmetrize"):
    """Occupation histogram of the reflected process on a 1-d interval.

    Splits the total horizon across a path ensemble started from the
    stationary law, and returns (bin_edges, density) with the histogram
    normalized as a probability density.
    """
    if domain.dim != 1:
        raise NotImplementedError("occupation histograms are 1-d only")
    lo, hi = domain.bounding_box[0]
    edges = np.linspace(lo, hi, bins + 1)
    width = edges[1] - edges[0]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 999_983]))
    X0 = stationary_start(model, domain, paths, rng, h, seed, placement)
    n = round(T_total / paths / h)
    counts = np.zeros(bins)
    for i, X, X_new, dK, xi in ensemble_steps(model, domain, X0, n, h, seed, placement):
        idx = np.minimum(((X_new[:, 0] - lo) / width).astype(int), bins - 1)
        np.add.at(counts, idx, 1)
    density = counts / (counts.sum() * width)
    return edges, density


def penalized_moments(model: SdeModel, domain: DomainSpec, n_penalty: float,
                      T: float, h: float, paths: int, seed: int,
                      burn: float = 4.0):
    """First two moments of the penalized stationary law by time averaging.

    Simulates the unreflected gradient system with the quadratic distance
    penalty and averages x and x^2 (componentwise) after a burn-in.
    Returns (mean_vector, second_moment_vector, stderr_pair).
    """
    pot = _potential_or_raise(model)
    d = domain.dim
    rngs = [np.random.default_rng(np.random.SeedSequence([seed, p])) for p in range(paths)]
    X = np.stack([domain.centroid] * paths)
    nb, n = round(burn / h), round(T / h)
    m1 = np.zeros((paths, d)); m2 = np.zeros((paths, d))
    s2h = np.sqrt(2.0 * h)
    if hasattr(domain, "radius") and d == 1:
        r = domain.radius
        clipper = lambda Y: np.clip(Y, -r, r)
    else:
        clipper = lambda Y: np.stack([project(domain, y) if domain.phi(y) < 0 else y for y in Y])
    L = max(1, min(nb + n, _BLOCK_NUMBERS // max(paths * d, 1)))
    done = 0
    while done < nb + n:
        size = min(L, nb + n - done)
        block = np.empty((size, paths, d))
        for p, rng in enumerate(rngs):
            block[:, p, :] = rng.standard_normal((size, d))
        for j in range(size):
            if pot.grad_vec is not None:
                gU = pot.grad_vec(X)
            else:
                gU = np.stack([np.atleast_1d(pot.grad(x)) for x in X])
            pen = 2.0 * n_penalty * (X - clipper(X))
            X = X - (gU + pen) * h + s2h * block[j]
            if done + j >= nb:
                m1 += X
                m2 += X * X
        done += size
    steps = n
    m1 /= steps; m2 /= steps
    se = (m1.std(axis=0, ddof=1) / np.sqrt(paths),
          m2.std(axis=0, ddof=1) / np.sqrt(paths))
    return m1.mean(axis=0), m2.mean(axis=0), se


# ---------------------------------------------------------------------------
# export


def path_to_csv(path: ReflectedPath, fname: str) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        d = path.states.shape[1]
        w.writerow(["t"] + [f"x{k}" for k in range(d)] + ["K"])
        for i in range(len(path.times)):
            w.writerow([f"{path.times[i]:.17g}"]
                       + [f"{v:.17g}" for v in path.states[i]]
                       + [f"{path.local_time[i]:.17g}"])


def histogram_to_csv(edges: np.ndarray, density: np.ndarray, fname: str) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center", "density"])
        centers = (edges[:-1] + edges[1:]) / 2
        for c, v in zip(centers, density):
            w.writerow([f"{c:.17g}", f"{v:.17g}"])
