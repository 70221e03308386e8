from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfred.algebra import (
    ChainComplexF2,
    CountingFunction,
    convolve,
    dq_operator,
    graded_commutator,
    height_datum,
    homology_f2,
    rank_f2,
    representation_complex,
    sphere_datum,
)
from scfred.degen import morse_structure
from scfred.errors import (
    GradingError,
    MustVerifyError,
    NotADifferentialError,
    StructureMismatchError,
)


def _rank_bits(rows):
    basis = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
    return len(basis)


def simplicial_betti(tops):
    """Independent F2 Betti numbers of a simplicial complex via bitmask elimination."""
    faces = set()
    for s in tops:
        for k in range(1, len(s) + 1):
            faces.update(combinations(sorted(s), k))
    by_dim = {}
    for f in sorted(faces):
        by_dim.setdefault(len(f) - 1, []).append(f)
    idx = {d: {f: i for i, f in enumerate(fs)} for d, fs in by_dim.items()}
    rank = {}
    for d in range(1, max(by_dim) + 1):
        rank[d] = _rank_bits(
            [sum(1 << idx[d - 1][f[:j] + f[j + 1:]] for j in range(len(f))) for f in by_dim[d]]
        )
    return tuple(len(by_dim[d]) - rank.get(d, 0) - rank.get(d + 1, 0) for d in sorted(by_dim))


def simplicial_complex(tops):
    faces = sorted({f for s in tops for k in range(1, len(s) + 1) for f in combinations(sorted(s), k)},
                   key=lambda f: (len(f), f))
    pos = {f: i for i, f in enumerate(faces)}
    D = np.zeros((len(faces), len(faces)), dtype=np.uint8)
    for f in faces:
        for j in range(len(f)):
            if len(f) > 1:
                D[pos[f[:j] + f[j + 1:]], pos[f]] = 1
    return ChainComplexF2(faces, D, degrees=[len(f) - 1 for f in faces])


@pytest.fixture
def three():
    st_ = morse_structure({"a": 0.0, "b": 1.0, "c": 2.0})
    grading = {("a", "b"): 1, ("b", "c"): 1, ("a", "c"): 0}
    return st_, grading


def test_convolution_values(three):
    st_, g = three
    alpha = CountingFunction(st_, {("a", "b"): 1}, g, "Z")
    beta = CountingFunction(st_, {("b", "c"): 3}, g, "Z")
    assert convolve(alpha, beta)[("a", "c")] == 3
    assert convolve(beta, alpha).is_zero()
    assert graded_commutator(alpha, beta)[("a", "c")] == 3


def test_commutator_sign_even(three):
    st_, g = three
    even = CountingFunction(st_, {("a", "c"): 1}, g, "Z")
    assert even.parity == 0
    assert graded_commutator(even, even).is_zero()


def test_inhomogeneous_rejected(three):
    st_, g = three
    mixed = CountingFunction(st_, {("a", "b"): 1, ("a", "c"): 1}, g)
    assert mixed.parity is None
    with pytest.raises(GradingError):
        graded_commutator(mixed, mixed)


def test_structure_mismatch(three):
    st_, g = three
    other = morse_structure({"x": 0.0, "y": 1.0})
    with pytest.raises(StructureMismatchError):
        convolve(CountingFunction(st_, {}, g), CountingFunction(other, {}, {("x", "y"): 1}))
    with pytest.raises(StructureMismatchError):
        convolve(CountingFunction(st_, {}, g, "Z"), CountingFunction(st_, {}, g, "Z2"))


def test_z2_reduction(three):
    st_, g = three
    Q = CountingFunction(st_, {("a", "b"): 2, ("b", "c"): 3}, g)
    assert Q[("a", "b")] == 0 and Q[("b", "c")] == 1


def test_dq_witness(three):
    st_, g = three
    Q = CountingFunction(st_, {("a", "b"): 1, ("b", "c"): 1}, g)
    with pytest.raises(NotADifferentialError) as err:
        dq_operator(Q)
    assert err.value.witness == ("a", "c")


def test_dq_squares_to_zero(three):
    st_, g = three
    Q = CountingFunction(st_, {("a", "b"): 1}, g)
    D = dq_operator(Q)
    assert D.squares_to_zero
    homology_f2(D.complex())


def test_json_roundtrip(three):
    st_, g = three
    Q = CountingFunction(st_, {("a", "b"): 1}, g, "Z")
    assert CountingFunction.from_dict(st_, Q.to_dict()) == Q


def test_sphere_datum_matches_simplicial_oracle():
    Q, labels, index = sphere_datum()
    rep = homology_f2(representation_complex(Q, labels, index))
    oracle = simplicial_betti([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])
    assert rep.as_tuple() == oracle == (1, 0, 1)


@pytest.mark.parametrize(
    "tops,expected",
    [
        ([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)], (1, 0, 1)),
        ([(0, 1), (1, 2), (0, 2)], (1, 1)),
        ([(0, 1, 2, 3)], (1, 0, 0, 0)),
        ([(0,), (1,)], (2,)),
    ],
)
def test_homology_against_oracle(tops, expected):
    assert simplicial_betti(tops) == expected
    rep = homology_f2(simplicial_complex(tops).verify())
    assert rep.as_tuple() == expected


def test_height_datum():
    H = height_datum()
    rep = homology_f2(dq_operator(H).complex())
    assert H.is_zero() and rep.total == 1
    assert H.grading["*"] == 0


def test_must_verify():
    cx = ChainComplexF2(("x",), [[0]])
    with pytest.raises(MustVerifyError):
        homology_f2(cx)


def test_not_a_differential():
    cx = ChainComplexF2(("a", "b", "c"), [[0, 1, 0], [0, 0, 1], [0, 0, 0]], degrees=(0, 1, 2))
    with pytest.raises(NotADifferentialError):
        cx.verify()


def test_representation_grading_error():
    st_ = morse_structure({"a": 0.0, "c": 2.0})
    Q = CountingFunction(st_, {("a", "c"): 1}, {("a", "c"): 0})
    with pytest.raises(GradingError):
        representation_complex(Q, ["a", "c"], {"a": 0, "c": 2})


def test_rank_example():
    rep = homology_f2(ChainComplexF2(("v", "e"), [[0, 1], [0, 0]], degrees=(0, 1)).verify())
    assert rep.betti == {0: 0, 1: 0}
    M = np.array([[1], [1]])
    assert rank_f2(M) == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), min_size=5, max_size=5), min_size=1, max_size=6))
def test_rank_matches_bitmask(rows):
    M = np.array(rows, dtype=np.uint8)
    bits = [int("".join(map(str, r)), 2) for r in rows]
    assert rank_f2(M) == _rank_bits(bits)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**12 - 1))
def test_euler_characteristic(seed):
    # pairs of generators cancel; the rest survive
    rng = np.random.default_rng(seed)
    n = 6
    pairs = rng.integers(0, 3)
    E = np.zeros((n, n), dtype=np.int64)
    for k in range(pairs):
        E[2 * k, 2 * k + 1] = 1
    rep = homology_f2(ChainComplexF2(tuple(range(n)), E, degrees=[i % 2 for i in range(n)]).verify())
    assert rep.total == n - 2 * pairs


def test_odd_commutator_over_z_is_twice_square(three):
    st_, g = three
    Q = CountingFunction(st_, {("a", "b"): 2, ("b", "c"): -3}, g, "Z")
    assert graded_commutator(Q, Q) == convolve(Q, Q).scale(2)
    assert graded_commutator(Q, Q)[("a", "c")] == -12
