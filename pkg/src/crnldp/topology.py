"""Topological certificates: siphons, strong endotacticity and friends.

All verdicts are exact.  Face enumeration and the cone LPs run in rational
arithmetic via :mod:`crnldp.rational`.

Audit note on directions ``w``: the endotactic condition quantifies over every
nonzero ``w``.  Each such ``w`` exposes exactly one member of
``maximal_subsets(C_in)``, including the whole set when ``C_in`` lies in a
proper affine subspace and ``w`` is orthogonal to it, so iterating over faces
covers all directions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .network import Network
from .rational import (
    Face,
    LinearProgram,
    Optimal,
    exposure_constraints,
    lp_solve,
    maximal_subsets,
    nullspace,
)

__all__ = [
    "TooManySpecies",
    "Verdict",
    "EndotacticResult",
    "ConicHullResult",
    "ReachabilityResult",
    "CertificateReport",
    "is_siphon",
    "siphon_refutation",
    "all_siphons",
    "find_siphons",
    "is_strongly_endotactic",
    "is_strongly_P_endotactic",
    "conic_hull_full",
    "reachability_chain",
    "full_report",
]

MAX_SPECIES = 20


class TooManySpecies(ValueError):
    pass


class Verdict(str, enum.Enum):
    TRUE = "true"
    FALSE = "false"
    NOT_APPLICABLE = "not_applicable"

    def __bool__(self):
        return self is Verdict.TRUE


# --- siphons -------------------------------------------------------------------

def _masks(net: Network):
    in_m = [sum(1 << i for i in r.input.support) for r in net.reactions]
    out_m = [sum(1 << i for i in r.output.support) for r in net.reactions]
    return in_m, out_m


def is_siphon(net: Network, P) -> bool:
    """Every reaction producing a species of ``P`` also consumes one."""
    P = set(P)
    if not P:
        return False
    return all(not (r.output.support & P) or bool(r.input.support & P) for r in net.reactions)


def siphon_refutation(net: Network, P) -> int | None:
    """Index of a reaction that feeds ``P`` without consuming from it, if any."""
    P = set(P)
    for k, r in enumerate(net.reactions):
        if r.output.support & P and not r.input.support & P:
            return k
    return None


def all_siphons(net: Network) -> list[frozenset[int]]:
    d = net.d
    if d > MAX_SPECIES:
        raise TooManySpecies(f"siphon search is capped at {MAX_SPECIES} species, got {d}")
    in_m, out_m = _masks(net)
    P = np.arange(1, 1 << d, dtype=np.int64)
    ok = np.ones(P.shape, dtype=bool)
    for a, b in zip(in_m, out_m):
        ok &= ((P & b) == 0) | ((P & a) != 0)
    return [frozenset(i for i in range(d) if (int(p) >> i) & 1) for p in P[ok]]


def find_siphons(net: Network) -> list[frozenset[int]]:
    """Inclusion-minimal siphons (empty list means the network is asiphonic)."""
    sips = sorted(all_siphons(net), key=lambda s: (len(s), sorted(s)))
    minimal: list[frozenset[int]] = []
    for s in sips:
        if not any(m <= s for m in minimal):
            minimal.append(s)
    return minimal


# --- endotactic checks ----------------------------------------------------------

@dataclass
class EndotacticResult:
    verdict: Verdict
    face: tuple | None = None  # input complexes of the violating face
    reaction: int | None = None  # violating reaction (None for an all-null face)
    witness_w: tuple | None = None
    reason: str = ""

    def __bool__(self):
        return bool(self.verdict)


def _box(d):
    return [(-1, 1)] * d


def _face_constraints(points, face: Face, whole: bool):
    if whole:
        anchor = points[0]
        return [([Fraction(p - a) for p, a in zip(pt, anchor)], "=", 0) for pt in points[1:]]
    return exposure_constraints(points, face.member_indices)


def _check_faces(points, reactions_at, vectors, external=frozenset()):
    """Shared face loop for the strongly (P-)endotactic test.

    ``reactions_at[i]`` lists reactions whose (projected) input is
    ``points[i]``; reactions in ``external`` count as dissipative for every
    ``w``.  Returns ``None`` on success, or a failing ``EndotacticResult``.
    """
    d = len(points[0])
    n = len(points)
    for face in maximal_subsets(points):
        whole = len(face.member_indices) == n
        base = _face_constraints(points, face, whole)
        members = [r for i in face.member_indices for r in reactions_at[i]]
        internal = [r for r in members if r not in external]
        # (i) no reaction may point outward anywhere on the exposure cone.
        for r in internal:
            res = lp_solve(LinearProgram([Fraction(c) for c in vectors[r]], base, bounds=_box(d)))
            if isinstance(res, Optimal) and res.value > 0:
                return EndotacticResult(
                    Verdict.FALSE,
                    face=tuple(points[i] for i in face.member_indices),
                    reaction=r,
                    witness_w=res.point,
                    reason="outward reaction on an exposed face",
                )
        if any(r in external for r in members):
            continue
        # (ii) some exposing w must see a strictly inward reaction.
        null_rows = [([Fraction(c) for c in vectors[r]], "=", 0) for r in internal]
        if whole:
            ns = nullspace([row for row, _, _ in base + null_rows], d)
            w = ns[0] if ns else None
        else:
            res = lp_solve(LinearProgram([0] * d, base + null_rows))
            w = res.point if isinstance(res, Optimal) else None
        if w is not None:
            return EndotacticResult(
                Verdict.FALSE,
                face=tuple(points[i] for i in face.member_indices),
                reaction=None,
                witness_w=tuple(w),
                reason="every reaction on an exposed face is null",
            )
    return None


def _index_inputs(inputs):
    points: list[tuple[int, ...]] = []
    reactions_at: list[list[int]] = []
    for r, c in enumerate(inputs):
        c = tuple(int(v) for v in c)
        if c not in points:
            points.append(c)
            reactions_at.append([])
        reactions_at[points.index(c)].append(r)
    return points, reactions_at


def is_strongly_endotactic(net: Network) -> EndotacticResult:
    """Exact test that every exposed face of ``C_in`` has an inward and no outward reaction."""
    points, reactions_at = _index_inputs(net.inputs)
    failure = _check_faces(points, reactions_at, [tuple(v) for v in net.vectors])
    return failure if failure is not None else EndotacticResult(Verdict.TRUE)


def is_strongly_P_endotactic(net: Network, P) -> EndotacticResult:
    """Endotactic test of the sub-network ``R(P)`` with inputs supported in ``P``.

    Inputs and reaction vectors are projected onto the ``P`` coordinates.
    Reactions with a product outside ``P`` are dissipative for every ``w``.
    """
    P = sorted(set(P))
    if not P:
        raise ValueError("P must be non-empty")
    Pset = set(P)
    sub = [k for k, r in enumerate(net.reactions) if r.input.support <= Pset]
    if not sub:
        return EndotacticResult(Verdict.NOT_APPLICABLE, reason="R(P) is empty")
    proj_in = [tuple(int(net.inputs[k][i]) for i in P) for k in sub]
    proj_vec = [tuple(int(net.vectors[k][i]) for i in P) for k in sub]
    external = frozenset(j for j, k in enumerate(sub) if not net.reactions[k].output.support <= Pset)
    points, reactions_at = _index_inputs(proj_in)
    failure = _check_faces(points, reactions_at, proj_vec, external)
    if failure is None:
        return EndotacticResult(Verdict.TRUE)
    if failure.reaction is not None:
        failure.reaction = sub[failure.reaction]
    return failure


# --- conic hull -------------------------------------------------------------------

@dataclass
class ConicHullResult:
    full: bool
    witness_w: tuple | None = None

    def __bool__(self):
        return self.full


def conic_hull_full(net: Network) -> ConicHullResult:
    """Whether the reaction vectors positively span ``R^d``.

    On failure ``witness_w`` is a nonzero ``w`` with ``<w, c^r> >= 0`` for all
    reactions.
    """
    d = net.d
    cons = [([Fraction(int(c)) for c in vec], ">=", 0) for vec in net.vectors]
    for i in range(d):
        for s in (1, -1):
            obj = [Fraction(0)] * d
            obj[i] = Fraction(s)
            res = lp_solve(LinearProgram(obj, cons, bounds=_box(d)))
            if isinstance(res, Optimal) and res.value != 0:
                return ConicHullResult(False, res.point)
    return ConicHullResult(True)


# --- reachability ---------------------------------------------------------------

@dataclass
class ReachabilityResult:
    success: bool
    shells: list[frozenset[int]] = field(default_factory=list)  # dS_1, dS_2, ...
    reactions: list[list[int]] = field(default_factory=list)  # reactions realising each shell
    unreached: frozenset[int] = frozenset()

    @property
    def chain(self) -> list[frozenset[int]]:
        out, acc = [], frozenset()
        for s in self.shells:
            acc = acc | s
            out.append(acc)
        return out

    def __bool__(self):
        return self.success


def reachability_chain(net: Network) -> ReachabilityResult:
    """Grow ``S_k`` from the empty set by species producible from ``S_{k-1}`` alone."""
    reached: frozenset[int] = frozenset()
    shells, used = [], []
    while True:
        shell: set[int] = set()
        via: list[int] = []
        for k, r in enumerate(net.reactions):
            if r.input.support <= reached:
                new = r.output.support - reached
                if new:
                    shell |= new
                    via.append(k)
        if not shell:
            break
        shells.append(frozenset(shell))
        used.append(via)
        reached = reached | shell
    unreached = frozenset(range(net.d)) - reached
    return ReachabilityResult(not unreached, shells, used, unreached)


# --- aggregate report ---------------------------------------------------------------

@dataclass
class CertificateReport:
    strongly_endotactic: EndotacticResult
    minimal_siphons: list[frozenset[int]]
    conic_hull: ConicHullResult
    reachability: ReachabilityResult

    @property
    def asiphonic(self) -> bool:
        return not self.minimal_siphons

    @property
    def ase(self) -> bool:
        return bool(self.strongly_endotactic) and self.asiphonic

    def to_dict(self, net: Network) -> dict:
        names = net.species

        def frac_list(w):
            return None if w is None else [str(Fraction(x)) for x in w]

        se = self.strongly_endotactic
        witness = None
        if not se:
            witness = {
                "face": [list(c) for c in se.face] if se.face else None,
                "reaction": se.reaction,
                "w": frac_list(se.witness_w),
                "reason": se.reason,
            }
        reach = self.reachability
        return {
            "strongly_endotactic": bool(se),
            "witness": witness,
            "minimal_siphons": [[names[i] for i in sorted(s)] for s in self.minimal_siphons],
            "asiphonic": self.asiphonic,
            "conic_hull_full": {"full": self.conic_hull.full, "witness": frac_list(self.conic_hull.witness_w)},
            "reachability": {
                "success": reach.success,
                "chain": [[names[i] for i in sorted(s)] for s in reach.chain],
                "reactions": reach.reactions,
                "unreached": [names[i] for i in sorted(reach.unreached)],
            },
            "ase": self.ase,
        }


def full_report(net: Network) -> CertificateReport:
    sips = find_siphons(net)
    for s in sips:
        assert is_siphon(net, s)
    return CertificateReport(
        strongly_endotactic=is_strongly_endotactic(net),
        minimal_siphons=sips,
        conic_hull=conic_hull_full(net),
        reachability=reachability_chain(net),
    )
