"""Mass-action kinetics: jump rates, the deterministic drift and its flow.

Two rate laws live here.  ``asymptotic_rate`` is the mass-action monomial
``k_r * prod_i x_i**(c_in)_i`` driving the ODE, and ``volume_rate`` is the
falling-factorial propensity of the volume-``v`` jump process, normalised so
that ``v * volume_rate`` is the Gillespie propensity.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .network import CountState, Network

log = logging.getLogger(__name__)

__all__ = [
    "BlowupDetected",
    "ODETrajectory",
    "Attractor",
    "asymptotic_rate",
    "asymptotic_rates",
    "rate_gradients",
    "volume_rate",
    "volume_rates",
    "drift_field",
    "jacobian",
    "integrate_ode",
    "lyapunov_U",
    "generator_drift",
    "find_attractors",
]


class BlowupDetected(RuntimeError):
    """The ODE solution left the ``||x||_1 <= cap`` ball before ``t_end``."""


def asymptotic_rates(net: Network, x) -> np.ndarray:
    """All ``lambda_r(x)`` at once (``0**0 == 1``)."""
    x = np.asarray(x, dtype=float)
    return net.rates * np.prod(x[None, :] ** net.inputs, axis=1)


def asymptotic_rate(net: Network, r: int, x) -> float:
    return float(asymptotic_rates(net, x)[r])


def rate_gradients(net: Network, x) -> np.ndarray:
    """``(m, d)`` matrix of ``d lambda_r / d x_j``.

    The entry is zero whenever ``(c_in^r)_j == 0``; otherwise the exponent is
    lowered by one, so it stays finite at ``x_j == 0``.
    """
    x = np.asarray(x, dtype=float)
    c = net.inputs
    lowered = np.where(c > 0, c - 1, 0)
    out = np.empty(c.shape, dtype=float)
    for j in range(net.d):
        powers = x[None, :] ** c
        powers[:, j] = x[j] ** lowered[:, j]
        out[:, j] = net.rates * c[:, j] * np.prod(powers, axis=1)
    return out


def volume_rates(net: Network, s: CountState) -> np.ndarray:
    """``Lambda_r^(v)`` for every reaction at count state ``s``."""
    n = s.as_array()
    v = s.volume
    out = net.rates.copy()
    for r, c in enumerate(net.inputs):
        for i in np.nonzero(c)[0]:
            ci = int(c[i])
            if n[i] < ci:
                out[r] = 0.0
                break
            # binom(N, c) * c! / v**c is the falling factorial N (N-1) ... / v**c
            for j in range(ci):
                out[r] *= (n[i] - j) / v
    return out


def volume_rate(net: Network, r: int, s: CountState) -> float:
    return float(volume_rates(net, s)[r])


def drift_field(net: Network, x) -> np.ndarray:
    """Right-hand side ``sum_r lambda_r(x) c^r`` of the mass-action ODE."""
    return asymptotic_rates(net, x) @ net.vectors


def jacobian(net: Network, x) -> np.ndarray:
    """Analytic Jacobian ``J_ij = d (drift_field)_i / d x_j``."""
    return net.vectors.T.astype(float) @ rate_gradients(net, x)


# --- ODE integration ------------------------------------------------------

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class ODETrajectory:
    """Accepted steps of an adaptive integration (``states[i]`` at ``times[i]``)."""

    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    rejected_steps: int = 0

    def __call__(self, t) -> np.ndarray:
        """Cubic Hermite interpolation between accepted steps."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ts = self.times
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        t0, t1 = ts[idx], ts[idx + 1]
        h = (t1 - t0)[:, None]
        s = ((t - t0) / (t1 - t0))[:, None]
        y0, y1 = self.states[idx], self.states[idx + 1]
        f0, f1 = self.derivatives[idx], self.derivatives[idx + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        y = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
        y = np.maximum(y, 0.0)
        return y[0] if scalar else y

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate_ode(
    net: Network,
    x0,
    t_end: float,
    tol: float = 1e-8,
    *,
    t_start: float = 0.0,
    blowup_cap: float = 1e9,
    max_steps: int = 1_000_000,
    h0: float | None = None,
    reverse: bool = False,
) -> ODETrajectory:
    """Integrate the mass-action ODE with an adaptive Dormand-Prince 5(4) scheme.

    A step is rejected when its error estimate exceeds ``tol`` (scaled by
    ``1 + |x|``) or when the trial state has a negative component, so every
    emitted state stays in the nonnegative orthant.  ``reverse=True``
    integrates the time-reversed field ``-f``.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (net.d,) or np.any(x < 0):
        raise ValueError("x0 must be a nonnegative vector of length d")
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    sign = -1.0 if reverse else 1.0
    V = net.vectors.astype(float)

    def f(y):
        return sign * (asymptotic_rates(net, y) @ V)

    t = float(t_start)
    fx = f(x)
    times, states, derivs = [t], [x.copy()], [fx.copy()]
    span = t_end - t_start
    if h0 is None:
        scale = 1.0 + np.abs(x)
        d1 = np.max(np.abs(fx) / scale)
        h = 0.01 * span if d1 == 0 else min(0.01 / d1, span)
        h = max(h, 1e-12 * span)
    else:
        h = h0
    rejected = 0
    k = np.empty((7, net.d))
    for _ in range(max_steps):
        if t >= t_end:
            break
        h = min(h, t_end - t)
        k[0] = fx
        for i in range(1, 7):
            yi = x + h * (np.asarray(_A[i]) @ k[:i])
            k[i] = f(np.maximum(yi, 0.0))
        y_new = x + h * (_B5 @ k)
        err_vec = h * (_E @ k)
        err = np.max(np.abs(err_vec) / (1.0 + np.maximum(np.abs(x), np.abs(y_new))))
        floor = 1e-13 * (1.0 + np.abs(x))
        negative = np.any(y_new < -floor)
        if err <= tol and not negative:
            t += h
            x = np.maximum(y_new, 0.0)
            fx = k[6] if np.all(y_new >= 0) else f(x)
            times.append(t)
            states.append(x.copy())
            derivs.append(fx.copy())
            if np.sum(x) > blowup_cap:
                raise BlowupDetected(f"||x||_1 exceeded {blowup_cap:g} at t={t:g}")
            factor = 5.0 if err == 0 else min(5.0, 0.9 * (tol / err) ** 0.2)
            h *= max(factor, 0.2)
        else:
            rejected += 1
            if negative and err <= tol:
                h *= 0.5
            else:
                h *= max(0.2, 0.9 * (tol / err) ** 0.25)
            if h < 1e-14 * max(1.0, abs(t)):
                raise RuntimeError(f"step size underflow at t={t:g}")
    else:
        raise RuntimeError(f"integrate_ode exceeded {max_steps} steps")
    return ODETrajectory(np.array(times), np.array(states), np.array(derivs), rejected)


# --- Lyapunov function and generator drift ---------------------------------

def _xlogx_minus_x(x: np.ndarray) -> np.ndarray:
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * (np.log(safe) - 1.0), 0.0)


def lyapunov_U(x) -> float:
    """Chemical Lyapunov function ``d + 1 + sum_i x_i (log x_i - 1)`` (>= 1)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("lyapunov_U is defined on the nonnegative orthant")
    return float(x.size + 1 + np.sum(_xlogx_minus_x(x)))


def generator_drift(net: Network, s: CountState) -> float:
    """Normalised generator drift ``a^(v)(x)`` of ``U**v``.

    Equals ``sum_r Lambda_r (x) U(x) (Q_r - 1)`` with
    ``Q_r = (U(x + c^r/v) / U(x))**v`` evaluated as
    ``expm1(v * (log U(x + c^r/v) - log U(x)))``.  Reactions that cannot fire
    (zero propensity, i.e. the jump would leave the orthant) contribute
    nothing.
    """
    v = s.volume
    x = s.concentration
    lam = volume_rates(net, s)
    u = lyapunov_U(x)
    log_u = np.log(u)
    total = 0.0
    for r in np.nonzero(lam > 0)[0]:
        y = x + net.vectors[r] / v
        if np.any(y < 0):
            continue
        q_minus_1 = np.expm1(v * (np.log(lyapunov_U(np.maximum(y, 0.0))) - log_u))
        total += lam[r] * u * q_minus_1
    return float(total)


# --- Attractors ---------------------------------------------------------------

@dataclass(frozen=True)
class Attractor:
    point: np.ndarray
    stable: bool
    eigenvalues: np.ndarray

    def __iter__(self):
        yield self.point
        yield self.stable


def _newton_root(net: Network, x, lower, upper, iters: int = 60):
    x = np.array(x, dtype=float)
    for _ in range(iters):
        fx = drift_field(net, x)
        if np.sum(np.abs(fx)) < 1e-13 * (1 + np.sum(np.abs(x))):
            return x
        J = jacobian(net, x)
        try:
            step = np.linalg.solve(J, -fx)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -fx, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            return None
        lam = 1.0
        base = np.sum(np.abs(fx))
        while lam > 1e-6:
            trial = np.clip(x + lam * step, lower, upper)
            if np.sum(np.abs(drift_field(net, trial))) < base:
                break
            lam *= 0.5
        x = trial
    fx = drift_field(net, x)
    return x if np.sum(np.abs(fx)) < 1e-9 * (1 + np.sum(np.abs(x))) else None


def find_attractors(
    net: Network,
    box,
    n_starts: int = 32,
    seed: int = 0,
    *,
    t_budget: float = 200.0,
    stability_tol: float = 1e-9,
) -> list[Attractor]:
    """Hyperbolic fixed points of the drift inside an axis-aligned box.

    ``box`` is a pair ``(lower, upper)`` of length-``d`` arrays (``inf``
    allowed in ``upper``).  Each start is integrated forward until the drift
    is below ``1e-10`` (or the time budget runs out) and Newton-polished; an
    undamped Newton run from the raw start is added as well so that saddles,
    which forward flow never reaches, are found.  Points within ``1e-6`` in
    l1 are merged; Newton also runs from midpoints of found pairs.  Results are sorted lexicographically.
    """
    lower = np.asarray(box[0], dtype=float)
    upper = np.asarray(box[1], dtype=float)
    if np.any(lower < 0) or np.any(upper < lower):
        raise ValueError("box must lie within the nonnegative orthant")
    finite_hi = np.where(np.isfinite(upper), upper, np.maximum(lower, 1.0) * 10.0)
    unit = qmc.LatinHypercube(d=net.d, seed=seed).random(n_starts)
    starts = lower + unit * (finite_hi - lower)
    found: list[np.ndarray] = []

    def keep(c):
        root = _newton_root(net, c, 0.0, np.inf)
        if root is None:
            return
        if np.any(root < lower - 1e-9) or np.any(root > upper + 1e-9):
            return
        if not any(np.sum(np.abs(root - p)) < 1e-6 for p in found):
            found.append(root)

    for x0 in starts:
        candidates = [x0]
        try:
            traj = integrate_ode(net, x0, t_budget, tol=1e-9, blowup_cap=1e6)
            ends = traj.states
            hit = np.nonzero(np.sum(np.abs(traj.derivatives), axis=1) < 1e-10)[0]
            candidates.append(ends[hit[0]] if hit.size else ends[-1])
        except (BlowupDetected, RuntimeError):
            pass
        for c in candidates:
            keep(c)
    # Saddles tend to sit between wells.
    for a, b in itertools.combinations(list(found), 2):
        keep(0.5 * (a + b))
    found.sort(key=lambda p: tuple(p))
    out = []
    for p in found:
        eig = np.linalg.eigvals(jacobian(net, p))
        out.append(Attractor(p, bool(np.all(eig.real < -stability_tol)), eig))
    return out
