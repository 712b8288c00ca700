import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnldp.network import Complex, Network, Reaction
from crnldp.parse import ErrorKind, ParseError, parse_network, serialize_network


def test_example_one_text(ex1):
    assert ex1.species == ("A", "B")
    assert [r.rate_constant for r in ex1.reactions] == [1.0, 1.0, 1.0]
    assert ex1.inputs.tolist() == [[0, 0], [1, 1], [0, 2]]


def test_reversible_with_two_rates():
    net = parse_network("A <-> 2 B @ 1.5, 0.25")
    assert [r.rate_constant for r in net.reactions] == [1.5, 0.25]
    assert net.reactions[1].input.coefficients == (0, 2)


def test_reversible_with_one_rate_uses_it_twice():
    net = parse_network("A <-> B @ 3")
    assert [r.rate_constant for r in net.reactions] == [3.0, 3.0]


def test_first_mention_order_without_declaration():
    net = parse_network("B + C -> A @ 1")
    assert net.species == ("B", "C", "A")


def test_comments_blank_lines_and_crlf():
    net = parse_network("# header\r\n\r\nspecies X\r\n0 -> X @ 2  # birth\r\nX -> 0 @ 1\r\n")
    assert net.species == ("X",) and net.m == 2


def test_repeated_species_in_a_complex_add_up():
    net = parse_network("A + A -> B @ 1")
    assert net.inputs.tolist() == [[2, 0]]


@pytest.mark.parametrize(
    "text, kind, line, col",
    [
        ("A -> @ 1", ErrorKind.SYNTAX, 1, 6),
        ("A -> B", ErrorKind.SYNTAX, 1, 6),
        ("A -> B @ 1, 2", ErrorKind.SYNTAX, 1, 11),
        ("A => B @ 1", ErrorKind.SYNTAX, 1, 3),
        ("0 A -> B @ 1", ErrorKind.SYNTAX, 1, 1),
        ("A -> B @ 1 junk", ErrorKind.SYNTAX, 1, 12),
        ("species A\nA -> C @ 1", ErrorKind.UNKNOWN_SPECIES, 2, 6),
        ("A -> B @ 0", ErrorKind.NON_POSITIVE_RATE, 1, 10),
        ("A -> B @ -2.5", ErrorKind.NON_POSITIVE_RATE, 1, 10),
        ("# nothing\n\n", ErrorKind.EMPTY_NETWORK, 1, 1),
        ("species A\n", ErrorKind.EMPTY_NETWORK, 1, 1),
        ("A + B -> B + A @ 1", ErrorKind.NO_OP_REACTION, 1, 7),
    ],
)
def test_error_kinds_and_positions(text, kind, line, col):
    with pytest.raises(ParseError) as info:
        parse_network(text)
    err = info.value
    assert (err.kind, err.line, err.column) == (kind, line, col)
    assert str(err).startswith(f"{line}:{col}:")


def test_species_keyword_reserved():
    with pytest.raises(ParseError):
        parse_network("species -> A @ 1")


def test_duplicate_declaration():
    with pytest.raises(ParseError) as info:
        parse_network("species A, A\n0 -> A @ 1")
    assert info.value.kind is ErrorKind.SYNTAX


def test_malformed_corpus_file_fails():
    from conftest import net_path
    from crnldp.parse import load_network

    with pytest.raises(ParseError):
        load_network(net_path("malformed"))


_names = st.sampled_from(["A", "B", "C", "X1", "long_name"])


@st.composite
def networks(draw):
    species = draw(st.lists(_names, min_size=1, max_size=4, unique=True))
    d = len(species)
    coeffs = st.lists(st.integers(0, 3), min_size=d, max_size=d).map(tuple)
    rates = st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False)
    reactions = []
    for _ in range(draw(st.integers(1, 5))):
        a, b = draw(coeffs), draw(st.one_of(coeffs))
        if a == b:
            b = tuple(x + 1 if i == 0 else x for i, x in enumerate(b))
        reactions.append(Reaction(Complex(a), Complex(b), draw(rates)))
    return Network(tuple(species), tuple(reactions))


@settings(max_examples=200, deadline=None)
@given(networks())
def test_serialise_then_parse_is_identity(net):
    text = serialize_network(net)
    assert text.endswith("\n") and "\r" not in text
    assert parse_network(text) == net
    assert serialize_network(parse_network(text)) == text


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="AB +-><@0123456789.,#\n", max_size=40))
def test_parser_never_crashes_on_noise(text):
    try:
        parse_network(text)
    except ParseError as err:
        assert err.line >= 1 and err.column >= 1
