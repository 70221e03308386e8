import json
from math import factorial

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfred.degen import (
    DegenerationStructure,
    OperationTable,
    check_operation_axioms,
    compose,
    degeneracy_and_faces,
    enumerate_sequences,
    master_equation_check,
    morse_structure,
    unbroken,
    validate_structure,
)
from scfred.errors import DomainMismatchError, TotalOrderViolationError


def _chain(n):
    return {f"x{i}": float(i) for i in range(n)}


@pytest.fixture
def four():
    return morse_structure(_chain(4))


@pytest.mark.parametrize("n", range(1, 7))
def test_sequence_counts_factorial(n):
    labels = [f"x{i}" for i in range(n + 2)]
    st_ = morse_structure({x: float(i) for i, x in enumerate(labels)})
    target = [(labels[i], labels[i + 1]) for i in range(n + 1)]
    assert len(enumerate_sequences(st_, (labels[0], labels[-1]), target)) == factorial(n)


@pytest.mark.parametrize("k", range(1, 9))
def test_morse_structures_valid(k):
    rep = validate_structure(morse_structure(_chain(k)))
    assert rep.passed
    assert len(rep.to_dict()) >= 3


def test_morse_sizes():
    st_ = morse_structure(_chain(5))
    assert len(st_.S) == 10
    assert len(st_.R) == 10


def test_finiteness_fixture():
    rep = validate_structure(("A", "B"), {("A", "B", "A")})
    assert not rep.finiteness.passed
    assert rep.finiteness.witnesses


def test_minimality_fixture():
    rep = validate_structure(("A", "B", "B2", "C"), {("A", "B", "C"), ("A", "B2", "C")})
    assert not rep.minimality.passed
    assert rep.minimality.witnesses


def test_associativity_fixture():
    rep = validate_structure(("Z", "A", "B", "A1", "A2"), {("A", "B", "Z"), ("A1", "A2", "A")})
    assert not rep.associativity.passed
    assert rep.associativity.witnesses


def test_ties_rejected():
    with pytest.raises(TotalOrderViolationError):
        morse_structure({"a": 0.0, "b": 0.0, "c": 1.0})
    st_ = morse_structure({"a": 0.0, "b": 0.0, "c": 1.0}, allow_ties=True)
    assert (("a", "b")) not in st_.S


def test_json_roundtrip(tmp_path, four):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(four.to_dict()))
    assert DegenerationStructure.load(path) == four


def test_compose_degree_and_faces(four):
    table = OperationTable(four)
    a = unbroken(("x0", "x1"), "a")
    b = unbroken(("x1", "x2"), "b")
    c = unbroken(("x2", "x3"), "c")
    ab = compose(table, (("x0", "x1"), ("x1", "x2"), ("x0", "x2")), a, b)
    abc = compose(table, (("x0", "x2"), ("x2", "x3"), ("x0", "x3")), ab, c)
    assert abc.d == 2
    d, faces = degeneracy_and_faces(abc, table)
    assert d == 2 and len(faces) == 2
    assert degeneracy_and_faces(abc) == (d, faces)
    bc = compose(table, (("x1", "x2"), ("x2", "x3"), ("x1", "x3")), b, c)
    assert compose(table, (("x0", "x1"), ("x1", "x3"), ("x0", "x3")), a, bc) == abc


def test_compose_rejects_wrong_target(four):
    table = OperationTable(four)
    a = unbroken(("x0", "x1"), "a")
    with pytest.raises(DomainMismatchError):
        compose(table, (("x0", "x1"), ("x1", "x2"), ("x0", "x2")), a, a)


def _full_K(structure):
    atoms = [unbroken(x, f"{x[0]}{x[1]}") for x in structure.S if x[1] == f"x{int(x[0][1:]) + 1}"]
    table = OperationTable(structure)
    K = list(atoms)
    grew = True
    while grew:
        grew = False
        for A, B, C in structure.R:
            for a in [x for x in K if x.target == A]:
                for b in [x for x in K if x.target == B]:
                    ab = table.compose((A, B, C), a, b)
                    if ab not in K:
                        K.append(ab)
                        grew = True
    return K, table


def test_master_equation_full_and_deletion(four):
    K, table = _full_K(four)
    assert master_equation_check(K, table).passed
    for x in K:
        rep = master_equation_check([y for y in K if y != x], table)
        assert not rep.passed
        assert rep.missing or rep.extra


def test_operation_axioms(four):
    K, table = _full_K(four)
    assert check_operation_axioms(table, K).passed


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-100, 100), min_size=1, max_size=6, unique=True))
def test_morse_structure_property(values):
    st_ = morse_structure({f"p{i}": 0.5 * v for i, v in enumerate(values)})
    assert validate_structure(st_).passed
    n = len(values)
    assert len(st_.S) == n * (n - 1) // 2
