"""Quasi-potentials by minimum-action paths, attractor cost graphs and W-graphs.

A path is a polyline with fixed endpoints.  Each segment's duration is
eliminated exactly (see :func:`crnldp.lagrangian.segment_costs`), so the
optimiser only moves interior nodes.  Gradients come from the envelope
theorem: the derivative of a segment cost in its displacement is the dual
maximiser ``theta``, and in ``lambda_r`` it is ``s (1 - exp(<theta, c^r>))``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .kinetics import BlowupDetected, find_attractors, integrate_ode
from .lagrangian import DiscretePath, segment_costs
from .network import Network
from .ssa import DomainSpec, thread_count

__all__ = [
    "NotConverged",
    "TooManyAttractors",
    "NoStableAttractor",
    "QPotResult",
    "AttractorGraph",
    "quasipotential",
    "attractor_graph",
    "stability_check",
    "w_graph_min",
    "exit_exponent",
    "boundary_targets",
]

MAX_GRAPH_NODES = 7  # six attractors plus the boundary
PENALTY = 1e6
_BIG = 1e12
_FLOOR = 1e-9  # values below this count as zero for the convergence test


class NotConverged(RuntimeWarning):
    pass


class TooManyAttractors(ValueError):
    pass


class NoStableAttractor(ValueError):
    pass


@dataclass
class QPotResult:
    value: float
    path: DiscretePath
    restarts_used: int
    converged: bool
    restart_values: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "restart_values": self.restart_values,
            "segments": self.path.segments,
            "total_time": self.path.total_time,
        }


# --- objective ---------------------------------------------------------------------

def _rates_and_grads(net: Network, X: np.ndarray):
    """``lambda(X)`` of shape (n, m) and its Jacobian (n, m, d) for a batch of points."""
    c = net.inputs[None, :, :]
    Xb = X[:, None, :]
    powers = Xb ** c
    lam = net.rates[None, :] * np.prod(powers, axis=2)
    n, d = X.shape
    grads = np.empty((n, net.m, d))
    for j in range(d):
        p = powers.copy()
        cj = net.inputs[:, j]
        p[:, :, j] = np.where(cj > 0, Xb[:, :, j] ** np.maximum(cj - 1, 0), 0.0)
        grads[:, :, j] = net.rates[None, :] * cj[None, :] * np.prod(p, axis=2)
    return lam, grads


class _Action:
    """Duration-free path action and its gradient in the interior nodes."""

    def __init__(self, net: Network, x, y, N: int, domain: DomainSpec, spacing: float = 1.0):
        self.net = net
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.N = N
        self.d = net.d
        self.domain = domain
        self.C = net.vectors.astype(float)
        self._warm = None
        # Free nodes let one long segment straddle a saddle, where the
        # midpoint rule sees zero cost.  Unequal spacing is penalised, scaled
        # by the straight-line action so the term is unit-free.
        self.spacing_weight = 0.0
        if spacing > 0:
            line = np.linspace(self.x, self.y, N + 1)
            ref = float(np.sum(self.evaluate(line)[4]))
            self.spacing_weight = spacing * max(ref if np.isfinite(ref) else 1.0, 1e-8)

    def nodes(self, z: np.ndarray) -> np.ndarray:
        inner = z.reshape(self.N - 1, self.d)
        return np.vstack([self.x, inner, self.y])

    def evaluate(self, nodes: np.ndarray):
        mids = 0.5 * (nodes[1:] + nodes[:-1])
        disp = np.diff(nodes, axis=0)
        lam, dlam = _rates_and_grads(self.net, np.maximum(mids, 0.0))
        cost, dur, theta, ok = segment_costs(lam, disp, self.C, warm=self._warm)
        if np.all(np.isfinite(theta)) and np.all(np.isfinite(dur)):
            self._warm = (dur, theta)
        return mids, disp, lam, dlam, cost, dur, theta, ok

    def __call__(self, z: np.ndarray):
        nodes = self.nodes(z)
        _, disp, lam, dlam, cost, dur, theta, ok = self.evaluate(nodes)
        value = float(np.sum(cost))
        # a failed dual solve means the displacement left the velocity cone
        if not np.isfinite(value) or not ok.all():
            return _BIG, np.zeros_like(z)
        # d cost_k / d lambda_r = s_k (1 - exp(<theta_k, c^r>))
        expo = np.exp(np.clip(theta @ self.C.T, -700, 700))
        g_lam = dur[:, None] * (1.0 - expo)
        g_mid = np.einsum("km,kmd->kd", g_lam, dlam)
        grad_nodes = np.zeros_like(nodes)
        grad_nodes[1:] += theta + 0.5 * g_mid
        grad_nodes[:-1] += -theta + 0.5 * g_mid
        if self.spacing_weight:
            sq = np.sum(disp**2, axis=1)
            mean = sq.mean()
            if mean > 0:
                r = sq / mean - 1.0
                value += self.spacing_weight * float(np.mean(r**2))
                # d/d sq_k of mean((sq/mean - 1)^2)
                g_sq = (2.0 / self.N) * (r / mean - np.sum(r * sq) / (self.N * mean**2))
                g_disp = 2.0 * self.spacing_weight * g_sq[:, None] * disp
                grad_nodes[1:] += g_disp
                grad_nodes[:-1] -= g_disp
        grad = grad_nodes[1:-1].ravel()
        A, b = self.domain.A, self.domain.b
        if A.shape[0]:
            inner = nodes[1:-1]
            viol = np.maximum(inner @ A.T - b[None, :], 0.0)
            value += PENALTY * float(np.sum(viol**2))
            grad = grad + (2 * PENALTY * viol @ A).ravel()
        if not np.all(np.isfinite(grad)):
            return _BIG, np.zeros_like(z)
        return value, grad


def _reparametrise(nodes: np.ndarray, N: int) -> np.ndarray:
    """Resample a polyline at ``N + 1`` points equally spaced in arc length."""
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(nodes[:1], N + 1, axis=0)
    t = np.linspace(0.0, s[-1], N + 1)
    out = np.column_stack([np.interp(t, s, nodes[:, j]) for j in range(nodes.shape[1])])
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def _project_box(nodes, lo, hi):
    return np.clip(nodes, lo, hi)


def _reversed_ode_guess(net: Network, x, y, N: int, lo, hi):
    """Relaxation path from just off ``y`` towards ``x``, reversed in time."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    gap = np.linalg.norm(y - x)
    start = y + 1e-3 * (x - y)
    scale = max(np.abs(x).max(), np.abs(y).max(), 1.0)
    try:
        traj = integrate_ode(net, np.maximum(start, 0.0), 200.0, tol=1e-8, blowup_cap=1e3 * scale)
    except (BlowupDetected, RuntimeError):
        return None
    states = traj.states
    dist = np.linalg.norm(states - x, axis=1)
    k = int(np.argmin(dist))
    if dist[k] > 0.5 * gap:
        return None
    piece = np.vstack([y, states[: k + 1], x])[::-1]
    return _project_box(_reparametrise(piece, N), lo, hi)


def _starts(net, x, y, N, lo, hi, restarts, seed):
    line = np.linspace(x, y, N + 1)
    starts = [line]
    guess = _reversed_ode_guess(net, x, y, N, lo, hi)
    if guess is not None:
        starts.append(guess)
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    amp = max(np.linalg.norm(y - x), 1e-3)
    while len(starts) < restarts:
        modes = rng.normal(size=(3, x.size)) * 0.2 * amp
        bump = sum(np.sin((k + 1) * np.pi * s) * modes[k] for k in range(3))
        # stay strictly inside the box: boundary faces can make segments infeasible
        floor = lo + 0.1 * (line - lo)
        finite = np.isfinite(hi)
        ceil = np.where(finite, np.where(finite, hi, 0.0) - 0.1 * (np.where(finite, hi, 0.0) - line), np.inf)
        starts.append(np.clip(line + bump, floor, ceil))
    return starts[:max(restarts, 1)]


def _minimise(action: _Action, nodes0, lo, hi, tol, max_outer, inner_iter):
    N, d = action.N, action.d
    bounds = [(lo[j], None if np.isinf(hi[j]) else hi[j]) for _ in range(N - 1) for j in range(d)]
    z = nodes0[1:-1].ravel().copy()
    best_val, best_z = action(z)[0], z.copy()
    prev = best_val
    converged = False
    for _ in range(max_outer):
        history: list[float] = []

        def stop_when_flat(intermediate_result):
            history.append(float(intermediate_result.fun))
            if len(history) > 10:
                old = history[-11]
                if old - history[-1] <= tol * max(abs(history[-1]), _FLOOR):
                    raise StopIteration

        res = minimize(action, z, jac=True, method="L-BFGS-B", bounds=bounds,
                       callback=stop_when_flat, options={"maxiter": inner_iter, "maxcor": 20})
        z = res.x
        val = float(res.fun)
        if val < best_val:
            best_val, best_z = val, z.copy()
        if prev - val <= tol * max(abs(val), _FLOOR):
            converged = True
            break
        prev = val
        z = _project_box(_reparametrise(action.nodes(z), N), lo, hi)[1:-1].ravel()
        rz = action(z)[0]
        if rz < best_val:
            best_val, best_z = rz, z.copy()
    return best_val, best_z, converged


def _domain_bounds(domain: DomainSpec):
    return np.maximum(domain.lower, 0.0), domain.upper


def quasipotential(net: Network, x, y, domain: DomainSpec | None = None, segments: int = 32,
                   restarts: int = 4, seed: int = 0, tol: float = 1e-6, *, max_outer: int = 20,
                   inner_iter: int = 200, threads: int | None = None) -> QPotResult:
    """Approximate ``V_D(x, y)`` by minimising the action over ``segments``-piece paths.

    Starts: the straight line, the time-reversed relaxation path from ``y``
    and seeded sinusoidal perturbations of the line, ``restarts`` in total.
    The lowest value wins, ties broken by start index.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    domain = DomainSpec.orthant(net.d) if domain is None else domain
    if segments < 8:
        raise ValueError("segments must be >= 8")
    for p, name in ((x, "x"), (y, "y")):
        if p.shape != (net.d,) or not domain.contains(p) or np.any(p < 0):
            raise ValueError(f"{name} must be a point of the domain")
    if np.array_equal(x, y):
        path = DiscretePath(np.vstack([x, y]), np.array([1e-12]))
        return QPotResult(0.0, path, 0, True, [0.0])
    lo, hi = _domain_bounds(domain)
    action = _Action(net, x, y, segments, domain)
    starts = _starts(net, x, y, segments, lo, hi, restarts, seed)
    threads = threads or thread_count()

    def run(nodes0):
        # each restart owns its action (the warm-start cache is stateful)
        own = _Action(net, x, y, segments, domain)
        return _minimise(own, nodes0, lo, hi, tol, max_outer, inner_iter)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]
    # selection uses the penalised objective; reported numbers are pure action
    k = min(range(len(results)), key=lambda i: (results[i][0], i))
    _, z, converged = results[k]
    nodes = action.nodes(z)
    *_, cost, dur, _, _ = action.evaluate(nodes)
    value = float(np.sum(cost))
    pure = [float(np.sum(action.evaluate(action.nodes(r[1]))[4])) for r in results]
    dur = np.where(dur > 0, dur, 1e-12)
    if not converged:
        warnings.warn(f"quasipotential did not meet tol={tol:g}; best value {value:.6g}", NotConverged,
                      stacklevel=2)
    return QPotResult(max(value, 0.0), DiscretePath(nodes, dur), len(starts), converged, pure)


# --- attractor graphs ------------------------------------------------------------------

@dataclass
class AttractorGraph:
    """Cost matrix over attractors plus a trailing boundary node.

    ``costs[i, j]`` is ``V_D(K_i, K_j)``; column ``-1`` holds ``V_D(K_i, dD)``.
    The boundary row is ``inf`` off the diagonal (the boundary is absorbing).
    """

    net: Network
    domain: DomainSpec
    attractors: list[np.ndarray]
    costs: np.ndarray
    segments: int = 32
    restarts: int = 4
    seed: int = 0
    boundary_points: list = field(default_factory=list)  # argmin target per attractor

    @property
    def size(self) -> int:
        return len(self.attractors)

    @property
    def boundary(self) -> int:
        return self.size

    def to_dict(self) -> dict:
        def enc(v):
            return "inf" if math.isinf(v) else float(v)

        return {
            "attractors": [[float(v) for v in a] for a in self.attractors],
            "costs": [[enc(v) for v in row] for row in self.costs],
            "boundary_points": [None if p is None else [float(v) for v in p] for p in self.boundary_points],
        }


def boundary_targets(domain: DomainSpec, per_face: int = 32, seed: int = 0, scale: float = 1.0):
    """Sample points on each face of the domain through which a path can leave.

    Faces on the orthant boundary ``x_i = 0`` are skipped since the count
    process cannot leave there.  Unbounded box directions are truncated at
    ``scale``.
    """
    lo = np.maximum(domain.lower, 0.0)
    hi = np.where(np.isfinite(domain.upper), domain.upper, np.maximum(lo, 0) + scale)
    d = lo.size
    unit = qmc.LatinHypercube(d=d, seed=seed).random(per_face) if d > 1 else np.zeros((per_face, 1))
    faces = []
    for i in range(d):
        for bound, finite in ((domain.lower[i], domain.lower[i] > 0), (domain.upper[i], np.isfinite(domain.upper[i]))):
            if not finite:
                continue
            pts = lo + unit * (hi - lo)
            pts[:, i] = bound
            faces.append(pts)
    for a, b in zip(domain.A, domain.b):
        pts = lo + unit * (hi - lo)
        norm2 = float(a @ a)
        if norm2 == 0:
            continue
        pts = pts - np.outer(pts @ a - b, a) / norm2
        faces.append(pts)
    out = []
    for pts in faces:
        for p in pts:
            p = np.maximum(p, 0.0)
            if domain.contains(p + 0.0) or _near_domain(domain, p):
                if not any(np.array_equal(p, q) for q in out):
                    out.append(p)
    return out


def _near_domain(domain: DomainSpec, p, eps: float = 1e-9) -> bool:
    return bool(np.all(p >= domain.lower - eps) and np.all(p <= domain.upper + eps)
                and np.all(domain.A @ p <= domain.b + eps))


def _to_boundary(net, domain, a, segments, restarts, seed, per_face, n_refine=3):
    scale = 2.0 * max(float(np.max(a)), 1.0)
    targets = [t for t in boundary_targets(domain, per_face, seed, scale) if domain.contains(t)]
    if not targets:
        return math.inf, None
    coarse = [quasipotential(net, a, t, domain, segments=max(8, segments // 4), restarts=1,
                             seed=seed, max_outer=3).value for t in targets]
    order = np.argsort(coarse, kind="stable")[:n_refine]
    best = (math.inf, None)
    for k in order:
        val = quasipotential(net, a, targets[k], domain, segments, restarts, seed).value
        if val < best[0]:
            best = (val, targets[k])
    return best


def attractor_graph(net: Network, domain: DomainSpec, attractors, segments: int = 32, restarts: int = 4,
                    seed: int = 0, *, per_face: int = 32) -> AttractorGraph:
    pts = [np.asarray(getattr(a, "point", a), dtype=float) for a in attractors]
    for p in pts:
        if not domain.contains(p):
            raise ValueError(f"attractor {p} lies outside the domain")
    n = len(pts)
    costs = np.full((n + 1, n + 1), math.inf)
    np.fill_diagonal(costs, 0.0)
    bpts = []
    for i, a in enumerate(pts):
        for j, b in enumerate(pts):
            if i != j:
                costs[i, j] = quasipotential(net, a, b, domain, segments, restarts, seed).value
        val, where = _to_boundary(net, domain, a, segments, restarts, seed, per_face)
        costs[i, n] = val
        bpts.append(where)
    return AttractorGraph(net, domain, pts, costs, segments, restarts, seed, bpts)


def _shell(center, delta, count, seed):
    d = center.size
    dirs = [s * e for e in np.eye(d) for s in (1.0, -1.0)]
    rng = np.random.default_rng(seed)
    while len(dirs) < count:
        w = rng.normal(size=d)
        dirs.append(w / np.abs(w).sum())
    return [center + delta * np.asarray(w) / np.abs(w).sum() for w in dirs]


def stability_check(graph: AttractorGraph, i: int, delta: float, *, samples: int = 8,
                    threshold: float = 1e-6) -> bool:
    """Whether leaving the l1 ball of radius ``delta`` around attractor ``i`` costs more than ``threshold``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    center = graph.attractors[i]
    best = math.inf
    for p in _shell(center, delta, max(samples, 2 * center.size), graph.seed):
        if np.any(p < 0) or not graph.domain.contains(p):
            continue
        val = quasipotential(graph.net, center, p, graph.domain, max(8, graph.segments // 2),
                             min(graph.restarts, 2), graph.seed).value
        best = min(best, val)
    return best > threshold


# --- W-graphs --------------------------------------------------------------------------

def w_graph_min(costs, root):
    """Minimum total cost over graphs in which every non-root node leads into ``root``.

    ``root`` is a node index or a collection of them.  Returns
    ``(value, {node: successor})``.
    """
    costs = np.asarray(costs, dtype=float)
    n = costs.shape[0]
    if costs.shape != (n, n):
        raise ValueError("cost matrix must be square")
    if n > MAX_GRAPH_NODES:
        raise TooManyAttractors(f"w_graph_min handles at most {MAX_GRAPH_NODES} nodes, got {n}")
    roots = {int(root)} if np.isscalar(root) else {int(r) for r in root}
    if not roots or not roots <= set(range(n)):
        raise ValueError("root must name existing nodes")
    free = [k for k in range(n) if k not in roots]
    best_val, best_g = math.inf, None
    choices = [[j for j in range(n) if j != k] for k in free]
    for targets in itertools.product(*choices):
        g = dict(zip(free, targets))
        if not _reaches_root(g, roots, n):
            continue
        val = sum(costs[k, t] for k, t in g.items())
        if val < best_val:
            best_val, best_g = val, g
    if best_g is None:
        best_g = {}
        best_val = 0.0 if not free else math.inf
    return float(best_val), best_g


def _reaches_root(g, roots, n):
    for start in g:
        k = start
        for _ in range(n):
            if k in roots:
                break
            k = g[k]
        if k not in roots:
            return False
    return True


def _basin_of(net, point, attractors):
    try:
        end = integrate_ode(net, point, 500.0, tol=1e-9).final
    except (BlowupDetected, RuntimeError):
        end = np.asarray(point, float)
    return int(np.argmin([np.abs(end - a).sum() for a in attractors]))


def exit_exponent(net: Network, domain: DomainSpec, segments: int = 32, restarts: int = 4, seed: int = 0,
                  start=None, *, attractors=None, n_starts: int = 32, per_face: int = 32) -> float:
    """Predicted ``lim (1/v) log E[tau_D]`` for a start in the basin of ``start``.

    Nodes are the stable fixed points inside ``domain`` (at most three).  The
    value is ``W(root = dD) - W(root = dD + start)`` over the attractor graph,
    which is ``V_D(K_1, dD)`` when there is a single attractor.  ``start`` is
    an attractor index or a point whose forward orbit picks the attractor.
    """
    if attractors is None:
        hi = np.where(np.isfinite(domain.upper), domain.upper, np.maximum(domain.lower, 1.0) * 10)
        found = find_attractors(net, (np.maximum(domain.lower, 0.0), hi), n_starts=n_starts, seed=seed)
        attractors = [a.point for a in found if a.stable and domain.contains(a.point)]
    attractors = [np.asarray(getattr(a, "point", a), dtype=float) for a in attractors]
    if not attractors:
        raise NoStableAttractor("no stable fixed point inside the domain")
    if len(attractors) > 3:
        raise TooManyAttractors(f"exit_exponent supports at most 3 attractors, got {len(attractors)}")
    if start is None:
        if len(attractors) > 1:
            raise ValueError("start is required when the domain holds several attractors")
        start = 0
    elif not np.isscalar(start):
        start = _basin_of(net, start, attractors)
    graph = attractor_graph(net, domain, attractors, segments, restarts, seed, per_face=per_face)
    b = graph.boundary
    W, _ = w_graph_min(graph.costs, b)
    M, _ = w_graph_min(graph.costs, {b, int(start)})
    return float(W - M)
