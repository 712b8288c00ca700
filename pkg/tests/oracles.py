"""Ground truth built without the library's solvers.

Everything here uses plain quadrature, brute-force enumeration or direct
linear algebra, so tests can compare the optimisers against them.
"""

import itertools
import math

import numpy as np
from scipy.integrate import quad

SCHLOGL_K = (6.0, 11.0, 6.0, 1.0)


def schlogl_birth(u, k=SCHLOGL_K):
    return k[0] + k[2] * u**2


def schlogl_death(u, k=SCHLOGL_K):
    return k[1] * u + k[3] * u**3


def birth_death_action(birth, death, a, b):
    """1-d quasi-potential from ``a`` to ``b``: integral of the uphill log-ratio.

    Moving up costs ``log(d/b)`` where it is positive, moving down costs
    ``log(b/d)`` where that is positive; the downhill stretches are free.
    """
    sign = 1.0 if b >= a else -1.0

    def integrand(u):
        r = math.log(death(u) / birth(u))
        return max(sign * r, 0.0)

    lo, hi = min(a, b), max(a, b)
    val, _ = quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def schlogl_V(a, b):
    return birth_death_action(schlogl_birth, schlogl_death, a, b)


def exact_mean_exit(birth_count, death_count, n0: int, n_max: int) -> float:
    """Mean time for a birth-death chain started at ``n0`` to reach ``n_max + 1``.

    ``birth_count(n)`` and ``death_count(n)`` are jump propensities in counts.
    Uses the one-step passage times ``t_n = (1 + d_n t_{n-1}) / b_n`` from
    ``n`` to ``n + 1``, which stays accurate when the answer is astronomically
    large.
    """
    total, t_prev = 0.0, 0.0
    for n in range(n_max + 1):
        d = death_count(n) if n > 0 else 0.0
        t_prev = (1.0 + d * t_prev) / birth_count(n)
        if n >= n0:
            total += t_prev
    return total


def mean_exit_linear_solve(birth_count, death_count, n0: int, n_max: int) -> float:
    """Same quantity from the tridiagonal first-step equations (small chains only)."""
    M = n_max + 1
    A = np.zeros((M, M))
    rhs = np.ones(M)
    for n in range(M):
        b = birth_count(n)
        d = death_count(n) if n > 0 else 0.0
        A[n, n] = b + d
        if n + 1 < M:
            A[n, n + 1] = -b
        if n > 0:
            A[n, n - 1] = -d
    return float(np.linalg.solve(A, rhs)[n0])


def schlogl_propensities(v, k=SCHLOGL_K):
    """Count-level birth and death propensities of the Schlögl chain."""

    def birth(n):
        return v * k[0] + k[2] * n * (n - 1) / v

    def death(n):
        return k[1] * n + k[3] * n * (n - 1) * (n - 2) / v**2

    return birth, death


def all_functional_graphs(n, roots):
    """Every map from non-root nodes to other nodes whose orbits end in ``roots``."""
    free = [k for k in range(n) if k not in roots]
    for targets in itertools.product(range(n), repeat=len(free)):
        g = dict(zip(free, targets))
        if any(g[k] == k for k in free):
            continue
        good = True
        for s in free:
            seen = set()
            k = s
            while k not in roots:
                if k in seen:
                    good = False
                    break
                seen.add(k)
                k = g[k]
            if not good:
                break
        if good:
            yield g


def brute_w_graph(costs, roots):
    costs = np.asarray(costs, dtype=float)
    best = math.inf
    for g in all_functional_graphs(costs.shape[0], set(roots)):
        best = min(best, sum(costs[k, t] for k, t in g.items()))
    return best


def sampled_w_maximal_subsets(points, n_dirs=20000, seed=0):
    """w-maximal subsets hit by random integer directions (a subset of all faces)."""
    rng = np.random.default_rng(seed)
    P = np.asarray(points)
    found = set()
    for _ in range(n_dirs):
        w = rng.integers(-6, 7, size=P.shape[1])
        if not w.any():
            continue
        s = P @ w
        found.add(tuple(np.nonzero(s == s.max())[0]))
    return found
