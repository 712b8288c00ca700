import itertools
import time

import pytest

from crnldp.parse import parse_network
from crnldp.topology import (
    TooManySpecies,
    Verdict,
    all_siphons,
    conic_hull_full,
    find_siphons,
    full_report,
    is_siphon,
    is_strongly_endotactic,
    is_strongly_P_endotactic,
    reachability_chain,
    siphon_refutation,
)


def names(net, sets):
    return sorted(sorted(net.species[i] for i in s) for s in sets)


def test_example_two_siphons(ex2):
    assert names(ex2, all_siphons(ex2)) == [["A"], ["A", "B"]]
    assert names(ex2, find_siphons(ex2)) == [["A"]]
    assert not is_siphon(ex2, {1})
    r = siphon_refutation(ex2, {1})
    assert r is not None and ex2.reactions[r].output.coefficients[1] > 0


def test_example_one_is_asiphonic_and_strongly_endotactic(ex1):
    assert find_siphons(ex1) == []
    assert is_strongly_endotactic(ex1).verdict is Verdict.TRUE
    assert full_report(ex1).ase


def test_autocatalysis_is_not_endotactic(autocat):
    res = is_strongly_endotactic(autocat)
    assert res.verdict is Verdict.FALSE and res.reaction == 0
    assert res.witness_w[0] > 0


def test_null_face_fails_strong_endotacticity():
    net = parse_network("A <-> B @ 1, 1")
    res = is_strongly_endotactic(net)
    assert not res and res.reaction is None


def test_schlogl_report(schlogl):
    rep = full_report(schlogl)
    assert rep.ase and rep.conic_hull.full and rep.reachability.success


def test_outward_reaction_on_a_corner():
    net = parse_network("0 -> A @ 1\nA -> 0 @ 1\nA -> 2 A + B @ 1\nB -> 0 @ 1")
    assert not is_strongly_endotactic(net)


def _subsets(d):
    for k in range(1, d + 1):
        yield from itertools.combinations(range(d), k)


@pytest.mark.parametrize("name", ["example1", "schlogl", "birth_death"])
def test_ase_networks_are_p_endotactic(name):
    from conftest import net_path
    from crnldp.parse import load_network

    net = load_network(net_path(name))
    assert full_report(net).ase
    for P in _subsets(net.d):
        assert is_strongly_P_endotactic(net, P).verdict in (Verdict.TRUE, Verdict.NOT_APPLICABLE)


def test_p_endotactic_not_applicable_when_no_inputs_fit():
    net = parse_network("A + B -> 0 @ 1\n0 -> A + B @ 1")
    assert is_strongly_P_endotactic(net, {0}).verdict is Verdict.TRUE  # the 0 -> A + B reaction qualifies
    net2 = parse_network("A + B -> 2 A @ 1\n2 A -> A + B @ 1")
    assert is_strongly_P_endotactic(net2, {1}).verdict is Verdict.NOT_APPLICABLE


def test_conic_hull_witness(autocat):
    res = conic_hull_full(autocat)
    assert not res.full and res.witness_w[0] > 0
    assert conic_hull_full(parse_network("0 <-> A @ 1, 1")).full


def test_reachability_chain(ex1, ex2):
    res = reachability_chain(ex1)
    assert res.success and res.chain == [frozenset({0, 1})]
    chained = reachability_chain(parse_network("0 -> A @ 1\nA -> B @ 1\nB -> C @ 1\nC -> 0 @ 1"))
    assert [sorted(s) for s in chained.chain] == [[0], [0, 1], [0, 1, 2]]
    assert not reachability_chain(ex2).success


def test_report_fields(ex2):
    d = full_report(ex2).to_dict(ex2)
    assert set(d) == {"strongly_endotactic", "witness", "minimal_siphons", "asiphonic",
                      "conic_hull_full", "reachability", "ase"}
    assert d["minimal_siphons"] == [["A"]] and d["ase"] is False


def test_species_cap():
    text = "\n".join(f"S{i} -> S{i + 1} @ 1" for i in range(21))
    with pytest.raises(TooManySpecies):
        all_siphons(parse_network(text))


def test_example_certificates_are_fast(ex1, ex2):
    for net in (ex1, ex2):
        t = time.perf_counter()
        full_report(net)
        assert time.perf_counter() - t < 1.0


def test_closed_pair_has_full_siphon():
    net = parse_network("A -> B @ 1\nB -> A @ 1")
    assert names(net, find_siphons(net)) == [["A", "B"]]


def test_example_one_p_equals_b(ex1):
    assert is_strongly_P_endotactic(ex1, {1}).verdict is Verdict.TRUE


def _brute_endotactic(net, w):
    import numpy as np

    scores = net.inputs @ w
    top = scores == scores.max()
    dots = net.vectors[top] @ w
    return bool(np.all(dots <= 0) and np.any(dots < 0))


@pytest.mark.parametrize("text", [
    "0 -> A + B @ 1\nA + B -> 2 B @ 1\n2 B -> A @ 1",
    "0 <-> A @ 6, 11\n2 A <-> 3 A @ 6, 1",
    "A -> 2 A @ 1",
    "0 -> A @ 1\nA -> 0 @ 1\nA -> 2 A + B @ 1\nB -> 0 @ 1",
    "A + B -> 0 @ 1\n0 -> A @ 1\n0 -> B @ 1\n2 A -> A @ 1",
])
def test_certificate_agrees_with_random_directions(text):
    import numpy as np

    net = parse_network(text)
    res = is_strongly_endotactic(net)
    rng = np.random.default_rng(0)
    dirs = [w for w in rng.integers(-5, 6, size=(1000, net.d)) if w.any()]
    if res:
        assert all(_brute_endotactic(net, w) for w in dirs)
    else:
        w = np.array([float(x) for x in res.witness_w])
        assert not _brute_endotactic(net, w)
