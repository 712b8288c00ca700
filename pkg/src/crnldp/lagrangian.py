"""Local Lagrangian ``L(lambda, xi)`` and the path rate functional.

``L`` has two representations that this module evaluates independently:

* dual: ``sup_theta <theta, xi> - H(lambda, theta)`` with the Hamiltonian
  ``H = sum_r lambda_r (exp<theta, c^r> - 1)``, solved by damped Newton ascent;
* primal: ``inf sum_r lambda_r - q_r + q_r log(q_r / lambda_r)`` over fluxes
  ``q >= 0`` with ``sum_r q_r c^r = xi``, solved by Newton in the null space
  of the flux constraints.

The primal value is authoritative: it is an upper bound, it handles velocities
on the boundary of the velocity cone, and it returns ``inf`` for infeasible
velocities.  Conventions: ``0 log 0 = 0`` and ``q log(q / 0) = inf`` for
``q > 0``, so reactions with ``lambda_r = 0`` carry no flux.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .kinetics import asymptotic_rates
from .network import Network

__all__ = [
    "Status",
    "LagrangianResult",
    "DiscretePath",
    "hamiltonian",
    "lagrangian_dual",
    "lagrangian_primal",
    "lagrangian",
    "path_rate",
    "segment_costs",
]

RIDGE = 1e-10
ARMIJO = 1e-4
BACKTRACK = 0.5
MAX_NEWTON = 200
_EXP_MAX = 700.0


class Status(str, enum.Enum):
    FINITE = "Finite"
    INFEASIBLE = "Infeasible"
    AT_INFINITY = "BoundaryAttainedAtInfinity"


@dataclass
class LagrangianResult:
    value: float
    theta_star: np.ndarray | None = None
    q_star: np.ndarray | None = None
    duality_gap: float = float("nan")
    status: Status = Status.FINITE

    def to_dict(self) -> dict:
        return {
            "value": "inf" if math.isinf(self.value) else self.value,
            "theta_star": None if self.theta_star is None else self.theta_star.tolist(),
            "q_star": None if self.q_star is None else self.q_star.tolist(),
            "gap": None if math.isnan(self.duality_gap) else self.duality_gap,
            "status": self.status.value,
        }


def hamiltonian(lam, theta, vectors) -> float:
    """``sum_r lambda_r (exp<theta, c^r> - 1)``."""
    lam = np.asarray(lam, dtype=float)
    z = np.asarray(vectors, dtype=float) @ np.asarray(theta, dtype=float)
    return float(np.sum(lam * np.expm1(z)))


# --- dual route ---------------------------------------------------------------

def _dual_terms(theta, lam, xi, C):
    z = np.clip(theta @ C.T, -_EXP_MAX, _EXP_MAX)
    e = np.exp(z)
    w = lam * e
    phi = np.sum(theta * xi, axis=1) - np.sum(lam * np.expm1(z), axis=1)
    grad = xi - w @ C
    return phi, grad, w


def _newton_matrix(w, C):
    M = np.einsum("nr,ri,rj->nij", w, C, C)
    tr = np.trace(M, axis1=1, axis2=2)
    ridge = RIDGE * tr + 1e-300
    return M + ridge[:, None, None] * np.eye(C.shape[1])[None]


def _dual_batch(lam, xi, C, theta0=None, max_iter=MAX_NEWTON):
    """Newton ascent on ``theta -> <theta, xi> - H`` for a batch of instances.

    Returns ``(theta, value, status)`` where status is 0 (converged),
    1 (stalled with a non-vanishing gradient: sup attained at infinity) or
    2 (iteration cap hit).
    """
    N, d = xi.shape
    theta = np.zeros((N, d)) if theta0 is None else np.array(theta0, dtype=float)
    status = np.full(N, 2, dtype=np.int8)
    scale = 1.0 + np.abs(xi).sum(1) + (lam * np.abs(C).sum(1)[None, :]).sum(1)
    gtol = 1e-12 * scale
    stall = np.zeros(N, dtype=np.int64)
    active = np.ones(N, dtype=bool)
    phi = np.full(N, np.nan)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        th, lm, xx = theta[idx], lam[idx], xi[idx]
        ph, g, w = _dual_terms(th, lm, xx, C)
        phi[idx] = ph
        done = np.max(np.abs(g), axis=1) <= gtol[idx]
        status[idx[done]] = 0
        active[idx[done]] = False
        keep = ~done
        if not keep.any():
            break
        idx, th, lm, xx, ph, g, w = idx[keep], th[keep], lm[keep], xx[keep], ph[keep], g[keep], w[keep]
        p = np.linalg.solve(_newton_matrix(w, C), g[:, :, None])[:, :, 0]
        slope = np.sum(g * p, axis=1)
        t = np.ones(idx.size)
        new_th = th + p
        new_ph = _dual_terms(new_th, lm, xx, C)[0]
        # Near the optimum the Armijo increment drops below the resolution of
        # phi; there a full step that shrinks the gradient is accepted.
        full_g = _dual_terms(new_th, lm, xx, C)[1]
        rounding = (np.abs(new_ph - ph) <= 1e-13 * np.maximum(1.0, np.abs(ph))) & (
            np.max(np.abs(full_g), axis=1) < np.max(np.abs(g), axis=1))
        for _ in range(60):
            bad = ~(new_ph >= ph + ARMIJO * t * slope) & ~rounding
            if not bad.any():
                break
            t[bad] *= BACKTRACK
            new_th[bad] = th[bad] + t[bad, None] * p[bad]
            new_ph[bad] = _dual_terms(new_th[bad], lm[bad], xx[bad], C)[0]
        improved = (new_ph >= ph) | rounding
        inc = np.where(improved, new_ph - ph, 0.0)
        theta[idx[improved]] = new_th[improved]
        phi[idx[improved]] = new_ph[improved]
        stalled = (inc < 1e-12 * np.maximum(1.0, np.abs(ph))) & ~rounding
        stall[idx] = np.where(stalled, stall[idx] + 1, 0)
        gone = stall[idx] >= 5
        status[idx[gone]] = 1
        active[idx[gone]] = False
    return theta, phi, status


def _feasible_flux(lam, xi, C):
    """LP pre-check of ``{q >= 0 : C^T q = xi, q_r = 0 where lambda_r = 0}``.

    Returns ``(support, q0)`` with ``q0 > 0`` on ``support`` and zero
    elsewhere, ``support`` being the reactions not forced to zero flux, or
    ``None`` when ``xi`` is infeasible.
    """
    m, d = C.shape
    allowed = np.nonzero(lam > 0)[0]
    tol = 1e-9 * (1.0 + np.abs(xi).sum())
    if allowed.size == 0:
        return (allowed, np.zeros(m)) if np.all(np.abs(xi) <= tol) else None
    A = C[allowed].T.astype(float)

    def most_interior(cols):
        k = cols.size
        A_k = C[cols].T.astype(float)
        # variables (q_cols, t): maximise t subject to q - t >= 0, t <= 1
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_eq = np.hstack([A_k, np.zeros((d, 1))])
        A_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=xi,
                      bounds=[(0, None)] * k + [(0, 1)], method="highs")
        return res

    res = most_interior(allowed)
    if res.status != 0:
        return None
    q = np.zeros(m)
    if res.x[-1] > 1e-9:
        q[allowed] = res.x[:-1]
        return allowed, q
    # Identify fluxes forced to vanish, then retry on the rest.
    free = []
    for j, r in enumerate(allowed):
        c = np.zeros(allowed.size)
        c[j] = -1.0
        bounds = [(0, None)] * allowed.size
        bounds[j] = (0, 1)
        rj = linprog(c, A_eq=A, b_eq=xi, bounds=bounds, method="highs")
        if rj.status == 0 and -rj.fun > 1e-9:
            free.append(r)
    free = np.array(free, dtype=int)
    if free.size == 0:
        return (free, q) if np.all(np.abs(xi) <= tol) else None
    res = most_interior(free)
    if res.status != 0:
        return None
    q[free] = res.x[:-1]
    return free, q


def lagrangian_dual(lam, xi, vectors) -> LagrangianResult:
    """``L`` by Newton ascent on the concave dual from ``theta = 0``."""
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=float)
    C = np.asarray(vectors, dtype=float)
    if np.any(lam < 0):
        raise ValueError("rates must be nonnegative")
    if _feasible_flux(lam, xi, C) is None:
        return LagrangianResult(math.inf, status=Status.INFEASIBLE)
    theta, phi, st = _dual_batch(lam[None], xi[None], C)
    status = Status.FINITE if st[0] == 0 else Status.AT_INFINITY
    return LagrangianResult(
        value=max(float(phi[0]), 0.0),
        theta_star=theta[0] if status is Status.FINITE else None,
        status=status,
    )


# --- primal route ---------------------------------------------------------------

def _entropy(q, lam):
    out = lam - q
    pos = q > 0
    out[pos] += q[pos] * np.log(q[pos] / lam[pos])
    return out.sum()


def lagrangian_primal(lam, xi, vectors, *, max_iter: int = 100) -> LagrangianResult:
    """``L`` as the minimal flux entropy over ``Q_R(xi)``.

    Starts from the most interior LP-feasible flux and takes damped Newton
    steps in the null space of the flux constraints, never letting a flux
    reach zero; the ``q log q`` term blows up its own gradient at the
    boundary, so the iterates stay interior.
    """
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=float)
    C = np.asarray(vectors, dtype=float)
    if np.any(lam < 0):
        raise ValueError("rates must be nonnegative")
    found = _feasible_flux(lam, xi, C)
    if found is None:
        return LagrangianResult(math.inf, status=Status.INFEASIBLE)
    support, q = found
    status = Status.FINITE if support.size == np.count_nonzero(lam > 0) else Status.AT_INFINITY
    if support.size:
        A = C[support].T
        qs = q[support]
        # polish feasibility to machine precision
        corr = np.linalg.lstsq(A, xi - A @ qs, rcond=None)[0]
        if np.all(qs + corr > 0):
            qs = qs + corr
        _, sv, vt = np.linalg.svd(A)
        r = int(np.sum(sv > 1e-12 * max(sv.max(), 1.0))) if sv.size else 0
        Z = vt[r:].T  # null-space basis, (k, k - r)
        ls = lam[support]
        if Z.shape[1]:
            for _ in range(max_iter):
                g = Z.T @ np.log(qs / ls)
                Hz = Z.T @ (Z / qs[:, None])
                step = -np.linalg.solve(Hz, g)
                dq = Z @ step
                decrement = -g @ step
                if decrement < 1e-24:
                    break
                t = 1.0
                neg = dq < 0
                if neg.any():
                    t = min(1.0, 0.99 * np.min(-qs[neg] / dq[neg]))
                f0 = _entropy(qs, ls)
                while t > 1e-16:
                    trial = qs + t * dq
                    if np.all(trial > 0) and _entropy(trial, ls) <= f0 - ARMIJO * t * decrement:
                        break
                    t *= BACKTRACK
                else:
                    break
                qs = trial
        q = np.zeros_like(lam)
        q[support] = qs
    value = _entropy(q, lam.copy())
    return LagrangianResult(max(float(value), 0.0), q_star=q, status=status)


def lagrangian(lam, xi, vectors, tol: float = 1e-8) -> LagrangianResult:
    """Primal value with the dual run as a certificate; ``duality_gap = |primal - dual|``."""
    primal = lagrangian_primal(lam, xi, vectors)
    if primal.status is Status.INFEASIBLE:
        return primal
    C = np.asarray(vectors, dtype=float)
    theta, phi, st = _dual_batch(np.asarray(lam, float)[None], np.asarray(xi, float)[None], C)
    dual_value = float(phi[0])
    status = primal.status if st[0] == 0 else Status.AT_INFINITY
    return LagrangianResult(
        value=primal.value,
        theta_star=theta[0] if st[0] == 0 else None,
        q_star=primal.q_star,
        duality_gap=abs(primal.value - max(dual_value, 0.0)),
        status=status,
    )


# --- paths ---------------------------------------------------------------------

@dataclass
class DiscretePath:
    """Polygonal path: ``nodes`` (N+1, d) traversed with per-segment ``durations`` (N,)."""

    nodes: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.durations = np.atleast_1d(np.asarray(self.durations, dtype=float))
        if self.durations.shape != (self.nodes.shape[0] - 1,):
            raise ValueError("need exactly one duration per segment")
        if np.any(self.nodes < 0):
            raise ValueError("path leaves the nonnegative orthant")
        if not np.all(self.durations > 0):
            raise ValueError("segment durations must be positive")

    @property
    def segments(self) -> int:
        return self.durations.size

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def displacements(self) -> np.ndarray:
        return np.diff(self.nodes, axis=0)

    @classmethod
    def from_samples(cls, times, states) -> "DiscretePath":
        times = np.asarray(times, dtype=float)
        return cls(np.asarray(states, dtype=float), np.diff(times))


def path_rate(net: Network, path: DiscretePath) -> float:
    """Midpoint-rule action ``sum_i dt_i L(lambda(mid_i), dx_i / dt_i)``."""
    total = 0.0
    C = net.vectors
    for mid, dx, dt in zip(path.midpoints, path.displacements, path.durations):
        res = lagrangian_primal(asymptotic_rates(net, mid), dx / dt, C)
        if math.isinf(res.value):
            return math.inf
        total += dt * res.value
    return total


def segment_costs(lam, disp, vectors, *, u_min=-40.0, u_max=40.0, max_iter=100, warm=None):
    """Per-segment action minimised over the segment duration.

    For each row solves ``min_s s * L(lambda, disp / s)``.  The derivative in
    ``s`` is ``-H(lambda, theta*)``, so the optimal duration is the root of
    the Hamiltonian along the dual solution; it is found by safeguarded
    Newton iteration in ``log s``.  Returns ``(cost, duration, theta, ok)``;
    ``theta`` is the gradient of the cost with respect to ``disp``.
    Zero-length segments cost nothing and get zero duration.  ``warm`` may
    hold ``(duration, theta)`` from a nearby call to start the iterations.
    """
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    disp = np.atleast_2d(np.asarray(disp, dtype=float))
    C = np.asarray(vectors, dtype=float)
    N, d = disp.shape
    cost = np.zeros(N)
    dur = np.zeros(N)
    theta = np.zeros((N, d))
    ok = np.ones(N, dtype=bool)
    norms = np.abs(disp).sum(1)
    live = np.nonzero(norms > 0)[0]
    if live.size == 0:
        return cost, dur, theta, ok
    L, D = lam[live], disp[live]
    drift = L @ C
    speed = np.abs(drift).sum(1)
    total_rate = (L * np.abs(C).sum(1)[None, :]).sum(1) + 1e-300
    aligned = np.sum(drift * D, axis=1) > 0
    s0 = np.where(aligned & (speed > 0), norms[live] / np.maximum(speed, 1e-300), norms[live] / total_rate)
    th = np.zeros((live.size, d))
    if warm is not None:
        w_dur, w_th = (np.asarray(a, dtype=float) for a in warm)
        if w_dur.shape == (N,) and w_th.shape == (N, d):
            reuse = w_dur[live] > 0
            s0 = np.where(reuse, w_dur[live], s0)
            th[reuse] = w_th[live][reuse]
    u = np.clip(np.log(s0), u_min, u_max)
    lo = np.full(live.size, -np.inf)
    hi = np.full(live.size, np.inf)
    active = np.ones(live.size, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xi = D[idx] * np.exp(-u[idx])[:, None]
        t_new, _, st = _dual_batch(L[idx], xi, C, theta0=th[idx])
        th[idx] = t_new
        z = np.clip(t_new @ C.T, -_EXP_MAX, _EXP_MAX)
        H = np.sum(L[idx] * np.expm1(z), axis=1)
        w = L[idx] * np.exp(z)
        M = _newton_matrix(w, C)
        dphi = np.einsum("ni,ni->n", xi, np.linalg.solve(M, xi[:, :, None])[:, :, 0])
        phi = -H
        neg = phi < 0
        lo[idx[neg]] = u[idx[neg]]
        hi[idx[~neg]] = u[idx[~neg]]
        conv = np.abs(H) <= 1e-13 * (1.0 + L[idx].sum(1))
        step = -phi / np.maximum(dphi, 1e-300)
        u_new = u[idx] + np.clip(step, -4.0, 4.0)
        out = ~((u_new > lo[idx]) & (u_new < hi[idx]))
        both = np.isfinite(lo[idx]) & np.isfinite(hi[idx])
        u_new = np.where(out & both, 0.5 * (lo[idx] + hi[idx]), u_new)
        u_new = np.where(out & ~both & neg, u[idx] + 2.0, u_new)
        u_new = np.where(out & ~both & ~neg, u[idx] - 2.0, u_new)
        small = np.abs(u_new - u[idx]) < 1e-12
        edge = (u_new > u_max) | (u_new < u_min)
        ok[live[idx[st == 2]]] = False
        u_new = np.clip(u_new, u_min, u_max)
        finish = conv | small | edge
        u[idx[~finish]] = u_new[~finish]
        active[idx[finish]] = False
    s = np.exp(u)
    xi = D / s[:, None]
    t_fin, phi_fin, st = _dual_batch(L, xi, C, theta0=th)
    ok[live[st == 2]] = False
    cost[live] = s * np.maximum(phi_fin, 0.0)
    dur[live] = s
    theta[live] = t_fin
    return cost, dur, theta, ok
