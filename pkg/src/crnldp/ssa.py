"""Exact stochastic simulation (Gillespie direct method) and exit-time ensembles.

Random numbers come from numpy's Philox4x64 counter-based generator.  Stream
``(seed, replica)`` is the key, and the third counter word carries a
per-call stream index (the position in a volume grid), so every replica of
every volume draws from its own reproducible stream no matter how the work
is scheduled.  Uniforms are generated in chunks and consumed by a compiled
kernel that releases the GIL, which lets replicas run on a thread pool.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy import stats

from .network import CountState, Network

__all__ = [
    "EventCap",
    "AllCensored",
    "DomainSpec",
    "JumpTrajectory",
    "ExitRecord",
    "ExitRow",
    "SlopeFit",
    "EnsembleSummary",
    "simulate",
    "exit_time",
    "hitting_time",
    "ensemble_exit",
    "sup_distance",
    "rng_stream",
    "thread_count",
]

log = logging.getLogger(__name__)

DEFAULT_EVENT_CAP = 10**8
CENSOR_LIMIT = 0.01

# kernel status codes
_NEED_MORE, _TIME_UP, _ABSORBED, _STOPPED, _CAPPED = 0, 1, 2, 3, 4
_MODE_FREE, _MODE_EXIT, _MODE_HIT = 0, 1, 2


class EventCap(RuntimeError):
    """More jumps than the configured cap; usually runaway growth."""


class AllCensored(RuntimeError):
    pass


def thread_count() -> int:
    """Worker threads, capped by ``CRNLDP_THREADS`` when set."""
    n = os.cpu_count() or 1
    env = os.environ.get("CRNLDP_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            log.warning("ignoring non-integer CRNLDP_THREADS=%r", env)
    return n


def rng_stream(seed: int, replica: int = 0, stream: int = 0) -> np.random.Generator:
    """Philox generator for ``(seed, replica)``; ``stream`` selects a disjoint counter block."""
    mask = (1 << 64) - 1
    key = np.array([int(seed) & mask, int(replica) & mask], dtype=np.uint64)
    counter = np.array([0, 0, int(stream) & mask, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


# --- domains -------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Closed set ``{lo <= x <= hi} ∩ {A x <= b}`` of concentrations.

    ``interior`` is an optional declared point that must lie in the set.
    """

    lower: np.ndarray
    upper: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None
    interior: np.ndarray | None = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        d = lo.size
        A = np.zeros((0, d)) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.zeros(0) if self.b is None else np.atleast_1d(np.asarray(self.b, dtype=float))
        if hi.shape != lo.shape or A.shape[1] != d or A.shape[0] != b.size:
            raise ValueError("inconsistent domain dimensions")
        if np.any(hi < lo):
            raise ValueError("empty box")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.interior is not None:
            p = np.asarray(self.interior, dtype=float)
            object.__setattr__(self, "interior", p)
            if not self.contains(p):
                raise ValueError(f"declared interior point {p} is outside the domain")

    @property
    def d(self) -> int:
        return self.lower.size

    @classmethod
    def orthant(cls, d: int) -> "DomainSpec":
        return cls(np.zeros(d), np.full(d, np.inf))

    @classmethod
    def box(cls, lower, upper, interior=None) -> "DomainSpec":
        return cls(np.asarray(lower, float), np.asarray(upper, float), interior=interior)

    @classmethod
    def l1_ball(cls, center, delta: float) -> "DomainSpec":
        """``{x >= 0 : |x - center|_1 <= delta}`` written as ``2**d`` half-spaces."""
        c = np.asarray(center, dtype=float)
        d = c.size
        signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
        return cls(np.zeros(d), np.full(d, np.inf), signs, delta + signs @ c, interior=c)

    def intersect(self, other: "DomainSpec") -> "DomainSpec":
        return DomainSpec(
            np.maximum(self.lower, other.lower),
            np.minimum(self.upper, other.upper),
            np.vstack([self.A, other.A]),
            np.concatenate([self.b, other.b]),
        )

    def with_halfspace(self, a, b: float) -> "DomainSpec":
        return DomainSpec(self.lower, self.upper, np.vstack([self.A, np.asarray(a, float)[None]]),
                          np.append(self.b, b), self.interior)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.lower) and np.all(x <= self.upper) and np.all(self.A @ x <= self.b)
        )


# --- kernel --------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _inside(counts, v, lo, hi, A, b):
    d = counts.shape[0]
    for i in range(d):
        x = counts[i] / v
        if x < lo[i] or x > hi[i]:
            return False
    for k in range(A.shape[0]):
        s = 0.0
        for i in range(d):
            s += A[k, i] * (counts[i] / v)
        if s > b[k]:
            return False
    return True


@numba.njit(cache=True, nogil=True)
def _gillespie_chunk(counts, t, inputs, vectors, rates, v, t_end, u, mode, lo, hi, A, b,
                     rec_t, rec_r, record, n_done, event_cap, props):
    """Advance until the uniforms ``u`` run out or a stopping rule fires.

    Returns ``(status, t, n_recorded, n_done)``; ``counts`` is updated in place.
    """
    m, d = inputs.shape
    pos = 0
    n_rec = 0
    while True:
        total = 0.0
        for r in range(m):
            a = rates[r] * v
            for i in range(d):
                c = inputs[r, i]
                if c > 0:
                    if counts[i] < c:
                        a = 0.0
                        break
                    for j in range(c):
                        a *= (counts[i] - j) / v
            props[r] = a
            total += a
        if total <= 0.0:
            return _ABSORBED, t, n_rec, n_done
        if pos + 2 > u.shape[0]:
            return _NEED_MORE, t, n_rec, n_done
        if n_done >= event_cap:
            return _CAPPED, t, n_rec, n_done
        dt = -np.log(1.0 - u[pos]) / total
        target = u[pos + 1] * total
        pos += 2
        if t + dt > t_end:
            return _TIME_UP, t_end, n_rec, n_done
        t += dt
        acc = 0.0
        chosen = m - 1
        for r in range(m):
            acc += props[r]
            if target < acc and props[r] > 0.0:
                chosen = r
                break
        # guard against round-off choosing a zero-propensity tail reaction
        while props[chosen] <= 0.0:
            chosen -= 1
        for i in range(d):
            counts[i] += vectors[chosen, i]
        n_done += 1
        if record:
            rec_t[n_rec] = t
            rec_r[n_rec] = chosen
            n_rec += 1
        if mode == 1 and not _inside(counts, v, lo, hi, A, b):
            return _STOPPED, t, n_rec, n_done
        if mode == 2 and _inside(counts, v, lo, hi, A, b):
            return _STOPPED, t, n_rec, n_done


@dataclass
class _RunResult:
    status: int
    t: float
    counts: np.ndarray
    n_events: int
    times: np.ndarray | None
    reactions: np.ndarray | None


def _run(net: Network, v: float, counts0, t_end: float, rng: np.random.Generator, *,
         mode: int = _MODE_FREE, domain: DomainSpec | None = None, record: bool = True,
         event_cap: int = DEFAULT_EVENT_CAP, chunk: int = 4096, max_chunk: int = 1 << 20) -> _RunResult:
    counts = np.array(counts0, dtype=np.int64)
    if domain is None:
        domain = DomainSpec.orthant(net.d)
    inputs = np.ascontiguousarray(net.inputs)
    vectors = np.ascontiguousarray(net.vectors)
    rates = np.ascontiguousarray(net.rates, dtype=float)
    props = np.empty(net.m)
    t = 0.0
    n_done = 0
    times, reacts = [], []
    while True:
        u = rng.random(chunk)
        half = chunk // 2 if record else 1
        rec_t = np.empty(half)
        rec_r = np.empty(half, dtype=np.int64)
        status, t, n_rec, n_done = _gillespie_chunk(
            counts, t, inputs, vectors, rates, float(v), float(t_end), u, mode,
            domain.lower, domain.upper, domain.A, domain.b, rec_t, rec_r, record,
            n_done, int(event_cap), props,
        )
        if record and n_rec:
            times.append(rec_t[:n_rec])
            reacts.append(rec_r[:n_rec])
        if status == _CAPPED:
            raise EventCap(f"more than {event_cap} events by t={t:.6g}")
        if status != _NEED_MORE:
            break
        chunk = min(2 * chunk, max_chunk)
    if record:
        tt = np.concatenate(times) if times else np.empty(0)
        rr = np.concatenate(reacts) if reacts else np.empty(0, dtype=np.int64)
    else:
        tt = rr = None
    return _RunResult(status, t, counts, n_done, tt, rr)


# --- trajectories ----------------------------------------------------------------

@dataclass
class JumpTrajectory:
    volume: float
    initial: CountState
    times: np.ndarray  # event times, strictly increasing
    reactions: np.ndarray  # reaction index of each event
    final_time: float
    absorbed: bool = False

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.reactions.tolist()))

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    def replay(self, net: Network) -> np.ndarray:
        """Counts after each event, with the initial state first; shape ``(n+1, d)``."""
        jumps = net.vectors[self.reactions]
        steps = np.vstack([self.initial.as_array()[None, :], jumps])
        return np.cumsum(steps, axis=0)

    def final_state(self, net: Network) -> CountState:
        return CountState(self.volume, self.replay(net)[-1])

    def to_csv(self, net: Network, path_or_file) -> None:
        """Header ``t,reaction,<species>``; the initial row has ``reaction = -1``."""
        states = self.replay(net)
        t = np.concatenate([[0.0], self.times])
        r = np.concatenate([[-1], self.reactions])

        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "reaction", *net.species])
            for k in range(states.shape[0]):
                w.writerow([repr(float(t[k])), int(r[k]), *(int(n) for n in states[k])])

        if hasattr(path_or_file, "write"):
            write(path_or_file)
        else:
            with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
                write(fh)


def _as_counts(net: Network, v: float, x0) -> np.ndarray:
    if isinstance(x0, CountState):
        if x0.volume != float(v):
            raise ValueError(f"initial state has volume {x0.volume}, expected {v}")
        counts = x0.as_array()
    else:
        counts = np.asarray(x0, dtype=np.int64)
    if counts.shape != (net.d,):
        raise ValueError(f"initial counts must have length {net.d}")
    if np.any(counts < 0):
        raise ValueError("negative initial counts")
    return counts


def simulate(net: Network, v: float, x0, t_end: float, seed: int, replica: int = 0, *,
             stream: int = 0, event_cap: int = DEFAULT_EVENT_CAP) -> JumpTrajectory:
    """One Gillespie path of the count process at volume ``v`` up to ``t_end``.

    ``x0`` is a :class:`CountState` (or a count vector).  Raises
    :class:`EventCap` when the number of jumps exceeds ``event_cap``.
    """
    if v < 1:
        raise ValueError("volume must be >= 1")
    counts = _as_counts(net, v, x0)
    res = _run(net, v, counts, t_end, rng_stream(seed, replica, stream), event_cap=event_cap)
    return JumpTrajectory(
        volume=float(v),
        initial=CountState(v, counts),
        times=res.times,
        reactions=res.reactions,
        final_time=float(t_end),
        absorbed=res.status == _ABSORBED,
    )


@dataclass
class ExitRecord:
    tau: float
    exit_state: CountState
    censored: bool
    absorbed: bool = False
    n_events: int = 0


def _stopping_time(net, v, x0, region: DomainSpec, t_max, seed, replica, stream, mode, event_cap):
    counts = _as_counts(net, v, x0)
    inside = region.contains(counts / v)
    if mode == _MODE_HIT and inside:
        return ExitRecord(0.0, CountState(v, counts), False)
    if mode == _MODE_EXIT and not inside:
        raise ValueError("initial state lies outside the domain")
    res = _run(net, v, counts, t_max, rng_stream(seed, replica, stream), mode=mode, domain=region,
               record=False, event_cap=event_cap)
    stopped = res.status == _STOPPED
    return ExitRecord(
        tau=res.t if stopped else float(t_max),
        exit_state=CountState(v, res.counts),
        censored=not stopped,
        absorbed=res.status == _ABSORBED,
        n_events=res.n_events,
    )


def exit_time(net: Network, v: float, x0, domain: DomainSpec, t_max: float, seed: int,
              replica: int = 0, *, stream: int = 0, event_cap: int = DEFAULT_EVENT_CAP) -> ExitRecord:
    """First time the path leaves ``domain``; censored at ``t_max`` (also when absorbed inside)."""
    return _stopping_time(net, v, x0, domain, t_max, seed, replica, stream, _MODE_EXIT, event_cap)


def hitting_time(net: Network, v: float, x0, target: DomainSpec, t_max: float, seed: int,
                 replica: int = 0, *, stream: int = 0, event_cap: int = DEFAULT_EVENT_CAP) -> ExitRecord:
    """First time the path enters ``target`` (``0`` if it starts there)."""
    return _stopping_time(net, v, x0, target, t_max, seed, replica, stream, _MODE_HIT, event_cap)


# --- ensembles --------------------------------------------------------------------

@dataclass
class ExitRow:
    volume: float
    replicas: int
    mean_tau: float
    log_mean: float  # (1/v) log(mean tau)
    ci: tuple[float, float]  # 95% bootstrap interval of log_mean
    n_censored: int
    all_censored: bool

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.replicas

    def to_dict(self) -> dict:
        return {
            "volume": self.volume,
            "replicas": self.replicas,
            "mean_tau": self.mean_tau,
            "log_mean": self.log_mean,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "n_censored": self.n_censored,
            "censored_fraction": self.censored_fraction,
            "all_censored": self.all_censored,
        }


@dataclass
class SlopeFit:
    slope: float | None
    intercept: float | None
    volumes: list[float]
    refused: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "volumes": self.volumes,
                "refused": self.refused, "reason": self.reason}


@dataclass
class EnsembleSummary:
    rows: list[ExitRow]
    fit: SlopeFit
    taus: dict = field(default_factory=dict, repr=False)  # volume -> array of tau
    censored: dict = field(default_factory=dict, repr=False)


def _bootstrap_log_mean(tau: np.ndarray, v: float, rng: np.random.Generator, n_resamples: int):
    if tau.size < 2 or np.all(tau == tau[0]):
        val = np.log(tau.mean()) / v
        return (val, val)
    res = stats.bootstrap((tau,), np.mean, n_resamples=n_resamples, confidence_level=0.95,
                          method="percentile", random_state=rng)
    lo, hi = res.confidence_interval
    return (float(np.log(lo) / v), float(np.log(hi) / v))


def fit_slope(rows: Sequence[ExitRow], censor_limit: float = CENSOR_LIMIT) -> SlopeFit:
    """Least-squares slope of ``log(mean tau)`` against ``v`` over the usable rows."""
    used = [r for r in rows if not r.all_censored]
    vols = [r.volume for r in used]
    heavy = [r.volume for r in used if r.censored_fraction > censor_limit]
    if heavy:
        return SlopeFit(None, None, vols, True,
                        f"censoring above {censor_limit:.0%} at v={heavy}")
    if len(used) < 2:
        return SlopeFit(None, None, vols, True, "fewer than two uncensored volumes")
    x = np.array(vols)
    y = np.log([r.mean_tau for r in used])
    slope, intercept = np.polyfit(x, y, 1)
    return SlopeFit(float(slope), float(intercept), vols)


def ensemble_exit(net: Network, v_grid: Sequence[float], x0_conc, domain: DomainSpec,
                  replicas: int, t_max: float, seed: int, *, threads: int | None = None,
                  n_bootstrap: int = 2000, event_cap: int = DEFAULT_EVENT_CAP) -> EnsembleSummary:
    """Exit-time statistics over a grid of volumes.

    Replica ``k`` at grid position ``j`` uses stream ``(seed, k)`` with
    counter block ``j``.  Censored replicas enter the mean as ``t_max``.
    """
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    threads = threads or thread_count()
    x0_conc = np.asarray(x0_conc, dtype=float)
    rows, taus, cens = [], {}, {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for j, v in enumerate(v_grid):
            start = CountState.from_concentration(x0_conc, v)
            recs = list(pool.map(
                lambda k: exit_time(net, v, start, domain, t_max, seed, k, stream=j, event_cap=event_cap),
                range(replicas),
            ))
            tau = np.array([r.tau for r in recs])
            c = np.array([r.censored for r in recs])
            taus[v], cens[v] = tau, c
            all_c = bool(c.all())
            if all_c:
                log.warning("all %d replicas censored at v=%s", replicas, v)
            mean = float(tau.mean())
            ci = _bootstrap_log_mean(tau, v, rng_stream(seed, 2**63 + j, 1), n_bootstrap)
            rows.append(ExitRow(float(v), replicas, mean, float(np.log(mean) / v), ci, int(c.sum()), all_c))
    return EnsembleSummary(rows, fit_slope(rows), taus, cens)


# --- law of large numbers helper -----------------------------------------------------

def sup_distance(net: Network, traj: JumpTrajectory, ode, t_end: float | None = None,
                 grid: int = 1000) -> float:
    """``sup_t |X_t - z(t)|_inf`` between a jump path (in concentrations) and an ODE solution.

    ``ode`` is a callable ``t -> z(t)`` accepting arrays.  The sup is taken
    over both one-sided limits at every event time and a uniform grid.
    """
    t_end = traj.final_time if t_end is None else t_end
    states = traj.replay(net) / traj.volume
    ev = traj.times[traj.times <= t_end]
    n = ev.size
    tg = np.linspace(0.0, t_end, grid)
    # state just before event k is states[k], just after is states[k+1]
    z_ev = ode(ev) if n else np.empty((0, net.d))
    best = 0.0
    if n:
        best = max(np.max(np.abs(states[:n] - z_ev)), np.max(np.abs(states[1:n + 1] - z_ev)))
    idx = np.searchsorted(traj.times, tg, side="right")
    best = max(best, float(np.max(np.abs(states[idx] - ode(tg)))))
    return float(best)
