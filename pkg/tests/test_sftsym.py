import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfred.degen import validate_structure
from scfred.errors import PreconditionError, TableError
from scfred.sftsym import (
    FormalSum,
    Orbit,
    OrbitSymbolTable,
    Word,
    induced_degeneration_structure,
    is_standard,
    multiply,
    normalize,
    parse_word,
)


TABLE = OrbitSymbolTable([Orbit("a", 1, 0), Orbit("b", 2, 1), Orbit("c", 3, 0)])


@pytest.fixture
def table():
    return TABLE


LETTERS = [(k, o) for k in "qp" for o in "abc"]
words = st.lists(st.sampled_from(LETTERS), max_size=8).map(lambda ls: Word(0, tuple(ls)))


@pytest.mark.parametrize("kappa", [1, 2, 3])
def test_pq_relation(kappa):
    T = OrbitSymbolTable([Orbit("g", kappa, 0)])
    got = normalize(parse_word("p_g q_g"), T)
    assert got == FormalSum({parse_word("q_g p_g"): 1, Word(1, ()): kappa})


def test_odd_relation_and_square():
    T = OrbitSymbolTable([Orbit("o", 2, 1)])
    assert normalize(parse_word("p_o q_o"), T) == FormalSum({parse_word("q_o p_o"): -1, Word(1, ()): 2})
    assert normalize(parse_word("q_o q_o"), T) == FormalSum()


def test_two_orbit_expansion():
    T = OrbitSymbolTable([Orbit("g"), Orbit("d")])
    nf = normalize(parse_word("p_g q_g p_d q_d"), T)
    assert str(nf) == "q_d q_g p_d p_g + ℏ q_d p_d + ℏ q_g p_g + ℏ^2"


def test_hbar_parsing():
    assert parse_word("hbar^2 q_a") == parse_word("ℏ ℏ q_a") == Word(2, (("q", "a"),))
    assert str(Word(3, (("q", "a"), ("q", "a")))) == "ℏ^3 q_a^2"


def test_unknown_orbit(table):
    with pytest.raises(TableError):
        normalize(parse_word("q_z"), table)
    with pytest.raises(ValueError):
        parse_word("x_a")


@settings(max_examples=200, deadline=None)
@given(words, st.integers(0, 1000))
def test_confluence(w, seed):
    table = TABLE
    ref = normalize(w, table)
    assert normalize(w, table, "rightmost") == ref
    assert normalize(w, table, "random", random.Random(seed)) == ref
    assert all(is_standard(x, table) for x, _ in ref.items())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(LETTERS), max_size=3), st.lists(st.sampled_from(LETTERS), max_size=3),
       st.lists(st.sampled_from(LETTERS), max_size=3))
def test_associativity(x, y, z):
    table = TABLE
    X, Y, Z = (normalize(Word(0, tuple(w)), table) for w in (x, y, z))
    assert multiply(multiply(X, Y, table), Z, table) == multiply(X, multiply(Y, Z, table), table)


@settings(max_examples=100, deadline=None)
@given(words)
def test_normal_form_idempotent(w):
    table = TABLE
    nf = normalize(w, table)
    again = FormalSum()
    for x, c in nf.items():
        again = again + normalize(x, table).scale(c)
    assert again == nf


def test_hbar_is_central(table):
    w = parse_word("p_a q_b")
    left = normalize(Word(1, w.letters), table)
    assert left == multiply(FormalSum.of(Word(1, ())), normalize(w, table), table)
    assert left == multiply(normalize(w, table), FormalSum.of(Word(1, ())), table)


def test_induced_structure(table):
    syms = [parse_word(w, table) for w in ("q_a", "p_a", "q_a p_a", "hbar")]
    st_ = induced_degeneration_structure(syms, table)
    assert ("p_a", "q_a", "ℏ") in st_.R
    assert ("q_a", "p_a", "q_a p_a") in st_.R
    assert validate_structure(st_).passed


def test_induced_rejects_troublesome():
    T = OrbitSymbolTable([Orbit("t", 2, 0, troublesome=True), Orbit("u", 3, 0, troublesome=True)])
    with pytest.raises(PreconditionError):
        induced_degeneration_structure([parse_word("q_t")], T)
    induced_degeneration_structure([parse_word("q_u")], T)


def test_induced_rejects_nonstandard(table):
    with pytest.raises(PreconditionError):
        induced_degeneration_structure([parse_word("p_a q_a")], table)


def test_table_roundtrip(table, tmp_path):
    import json

    path = tmp_path / "t.json"
    path.write_text(json.dumps(table.to_dict()))
    assert OrbitSymbolTable.load(path).to_dict() == table.to_dict()


def test_orbit_validation():
    with pytest.raises(ValueError):
        Orbit("x", 0)
    with pytest.raises(ValueError):
        Orbit("x", 1, 2)
