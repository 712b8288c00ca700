"""Exact rational linear programming and face enumeration of integer point sets.

Everything here works on :class:`fractions.Fraction`; there are no tolerances.
The simplex solver is a dense two-phase tableau method with Bland's rule,
which is slow but terminates and is easy to audit at the sizes the
certificates need (tens of rows).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

__all__ = [
    "DimensionMismatch",
    "TooManyPoints",
    "LinearProgram",
    "Optimal",
    "Unbounded",
    "Infeasible",
    "lp_solve",
    "Face",
    "maximal_subsets",
    "w_maximal_subset",
    "nullspace",
    "rank",
]

MAX_POINTS = 16


class DimensionMismatch(ValueError):
    pass


class TooManyPoints(ValueError):
    pass


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass
class LinearProgram:
    """``maximize <objective, x>`` subject to ``<a, x> rel b`` rows.

    Variables are free unless ``bounds`` supplies ``(lower, upper)`` pairs,
    either of which may be ``None``.  Set ``sense="min"`` to minimise.
    """

    objective: Sequence
    constraints: list = field(default_factory=list)  # (coeffs, "<=" | "=" | ">=", rhs)
    bounds: Sequence | None = None
    sense: str = "max"

    def __post_init__(self):
        n = len(self.objective)
        for row, rel, _ in self.constraints:
            if len(row) != n:
                raise DimensionMismatch(f"row of length {len(row)} in an LP with {n} variables")
            if rel not in ("<=", "=", ">="):
                raise ValueError(f"unknown relation {rel!r}")
        if self.bounds is not None and len(self.bounds) != n:
            raise DimensionMismatch("bounds length does not match objective")
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")


@dataclass(frozen=True)
class Optimal:
    value: Fraction
    point: tuple[Fraction, ...]


@dataclass(frozen=True)
class Unbounded:
    ray: tuple[Fraction, ...]
    point: tuple[Fraction, ...]


@dataclass(frozen=True)
class Infeasible:
    pass


def _pivot(T: list[list[Fraction]], basis: list[int], row: int, col: int):
    piv = T[row][col]
    T[row] = [v / piv for v in T[row]]
    pr = T[row]
    for i, r in enumerate(T):
        if i != row and r[col] != 0:
            f = r[col]
            T[i] = [a - f * b for a, b in zip(r, pr)]
    basis[row] = col


def _simplex(T, basis, allowed: int):
    """Bland's-rule maximisation of the last tableau row's negated costs.

    The objective row ``T[-1]`` stores reduced costs ``z_j - c_j``; a column
    with a negative entry improves the objective.  Returns ``None`` on
    optimality or the entering column of an unbounded direction.
    """
    m = len(T) - 1
    while True:
        obj = T[-1]
        col = next((j for j in range(allowed) if obj[j] < 0), None)
        if col is None:
            return None
        best = None
        for i in range(m):
            a = T[i][col]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return col
        _pivot(T, basis, best[1], col)


def lp_solve(lp: LinearProgram):
    """Solve ``lp`` exactly; returns :class:`Optimal`, :class:`Unbounded` or :class:`Infeasible`."""
    n = len(lp.objective)
    bounds = lp.bounds if lp.bounds is not None else [(None, None)] * n
    # Substitute x = shift + sum_k sign_k * y_k with y >= 0.
    columns: list[tuple[int, int]] = []  # (original var, sign)
    shift = [Fraction(0)] * n
    rows: list[tuple[list[Fraction], str, Fraction]] = []
    for j, (lo, hi) in enumerate(bounds):
        lo = None if lo is None else _q(lo)
        hi = None if hi is None else _q(hi)
        if lo is not None:
            shift[j] = lo
            columns.append((j, 1))
            if hi is not None:
                rows.append(({j: Fraction(1)}, "<=", hi - lo))
        elif hi is not None:
            shift[j] = hi
            columns.append((j, -1))
        else:
            columns.append((j, 1))
            columns.append((j, -1))
    for coeffs, rel, rhs in lp.constraints:
        c = [_q(a) for a in coeffs]
        b = _q(rhs) - sum(ci * s for ci, s in zip(c, shift))
        rows.append(({j: cj for j, cj in enumerate(c) if cj != 0}, rel, b))

    def expand(sparse: dict[int, Fraction]) -> list[Fraction]:
        return [sgn * sparse.get(j, Fraction(0)) for j, sgn in columns]

    ny = len(columns)
    m = len(rows)
    n_slack = sum(1 for _, rel, _ in rows if rel != "=")
    width = ny + n_slack + m  # structural, slack, artificial
    T: list[list[Fraction]] = []
    basis: list[int] = []
    slack_at = ny
    for i, (sparse, rel, b) in enumerate(rows):
        row = expand(sparse) + [Fraction(0)] * (n_slack + m) + [b]
        if rel == "<=":
            row[slack_at] = Fraction(1)
            slack_at += 1
        elif rel == ">=":
            row[slack_at] = Fraction(-1)
            slack_at += 1
        if row[-1] < 0:
            row = [-v for v in row]
        row[ny + n_slack + i] = Fraction(1)
        T.append(row)
        basis.append(ny + n_slack + i)

    art0 = ny + n_slack
    # Phase 1: maximise -sum(artificials).
    phase1 = [Fraction(0)] * (width + 1)
    for j in range(art0, width):
        phase1[j] = Fraction(1)
    for r in T:
        phase1 = [a - b for a, b in zip(phase1, r)]
    T.append(phase1)
    _simplex(T, basis, width)
    if T[-1][-1] != 0:
        return Infeasible()
    T.pop()
    # Drive zero-level artificials out of the basis (or drop redundant rows).
    i = 0
    while i < len(T):
        if basis[i] >= art0:
            col = next((j for j in range(art0) if T[i][j] != 0), None)
            if col is None:
                T.pop(i)
                basis.pop(i)
                continue
            _pivot(T, basis, i, col)
        i += 1
    T = [r[:art0] + [r[-1]] for r in T]

    sign = 1 if lp.sense == "max" else -1
    cost = expand({j: sign * _q(c) for j, c in enumerate(lp.objective)}) + [Fraction(0)] * n_slack
    obj = [-c for c in cost] + [Fraction(0)]
    for i, bcol in enumerate(basis):
        cb = cost[bcol]
        if cb != 0:
            obj = [a + cb * b for a, b in zip(obj, T[i])]
    T.append(obj)
    entering = _simplex(T, basis, art0)

    y = [Fraction(0)] * art0
    for i, bcol in enumerate(basis):
        y[bcol] = T[i][-1]

    def to_x(yv, with_shift=True):
        x = list(shift) if with_shift else [Fraction(0)] * n
        for k, (j, sgn) in enumerate(columns):
            x[j] += sgn * yv[k]
        return tuple(x)

    point = to_x(y)
    if entering is not None:
        dy = [Fraction(0)] * art0
        dy[entering] = Fraction(1)
        for i, bcol in enumerate(basis):
            dy[bcol] = -T[i][entering]
        return Unbounded(ray=to_x(dy, with_shift=False), point=point)
    value = sum(_q(c) * x for c, x in zip(lp.objective, point))
    return Optimal(value=Fraction(value), point=point)


# --- exact linear algebra helpers -------------------------------------------

def _rref(rows: list[list[Fraction]]):
    M = [list(r) for r in rows]
    pivots = []
    r = 0
    ncols = len(M[0]) if M else 0
    for c in range(ncols):
        p = next((i for i in range(r, len(M)) if M[i][c] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        pv = M[r][c]
        M[r] = [v / pv for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == len(M):
            break
    return M[:r], pivots


def rank(rows) -> int:
    rows = [[_q(v) for v in r] for r in rows]
    if not rows:
        return 0
    return len(_rref(rows)[1])


def nullspace(rows, n: int) -> list[tuple[Fraction, ...]]:
    """Exact basis of ``{w : <row, w> = 0 for every row}`` in ``Q^n``."""
    rows = [[_q(v) for v in r] for r in rows]
    if not rows:
        return [tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n)]
    R, pivots = _rref(rows)
    free = [j for j in range(n) if j not in pivots]
    basis = []
    for f in free:
        w = [Fraction(0)] * n
        w[f] = Fraction(1)
        for row, pc in zip(R, pivots):
            w[pc] = -row[f]
        basis.append(tuple(w))
    return basis


# --- faces -----------------------------------------------------------------------

@dataclass(frozen=True)
class Face:
    """A ``w``-maximal subset of a point set, with an exact exposing direction."""

    member_indices: tuple[int, ...]
    witness_w: tuple[Fraction, ...]


def w_maximal_subset(points, w) -> tuple[int, ...]:
    """Indices of the points maximising ``<w, c>`` (computed exactly)."""
    w = [_q(v) for v in w]
    scores = [sum(wi * ci for wi, ci in zip(w, c)) for c in points]
    best = max(scores)
    return tuple(i for i, s in enumerate(scores) if s == best)


def _diff(a, b):
    return [Fraction(x - y) for x, y in zip(a, b)]


def exposure_constraints(points, members):
    """Rows of ``{w : <w, c - c'> = 0 on the face, <w, c - c''> >= 1 off it}``."""
    members = list(members)
    anchor = points[members[0]]
    cons = [(_diff(points[i], anchor), "=", 0) for i in members[1:]]
    others = [i for i in range(len(points)) if i not in set(members)]
    cons += [(_diff(anchor, points[i]), ">=", 1) for i in others]
    return cons


def _affine_closure(points, subset) -> tuple[int, ...]:
    anchor = points[subset[0]]
    basis = [_diff(points[i], anchor) for i in subset[1:]]
    r = rank(basis) if basis else 0
    out = []
    for i, p in enumerate(points):
        if i in subset or rank(basis + [_diff(p, anchor)]) == r:
            out.append(i)
    return tuple(out)


def maximal_subsets(points, cap: int = MAX_POINTS) -> list[Face]:
    """Every distinct ``Q_w`` over nonzero ``w``, each with an exact witness.

    Candidate subsets are filtered by affine closure (a face equals the set of
    points in its affine hull) before the exact LP feasibility test.  The
    whole set is a face exactly when the points do not affinely span the
    space; its witness is then a nonzero vector orthogonal to their affine
    hull.  Output is ordered by size, then lexicographically.
    """
    pts = [tuple(int(v) for v in p) for p in points]
    if not pts:
        raise ValueError("maximal_subsets needs at least one point")
    if len(set(pts)) != len(pts):
        raise ValueError("points must be pairwise distinct")
    if len(pts) > cap:
        raise TooManyPoints(f"{len(pts)} points exceeds the configured cap of {cap}")
    d = len(pts[0])
    n = len(pts)
    faces: list[Face] = []
    for size in range(1, n):
        for subset in itertools.combinations(range(n), size):
            if _affine_closure(pts, subset) != subset:
                continue
            lp = LinearProgram([0] * d, exposure_constraints(pts, subset))
            res = lp_solve(lp)
            if isinstance(res, Optimal):
                faces.append(Face(subset, res.point))
    ns = nullspace([_diff(p, pts[0]) for p in pts[1:]], d)
    if ns:
        faces.append(Face(tuple(range(n)), ns[0]))
    return faces
