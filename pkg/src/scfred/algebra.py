"""Convolution algebra on a degeneration structure and F2 homology.

A counting function assigns a coefficient in Z2 or Z to each element of
``S``.  Each element of ``S`` carries a parity (its grading); a function
is homogeneous when its support lies in one parity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .degen import DegenerationStructure, _freeze, _thaw
from .errors import (
    DomainMismatchError,
    GradingError,
    MustVerifyError,
    NotADifferentialError,
    StructureMismatchError,
)

RINGS = ("Z2", "Z")


def _reduce(value, ring):
    v = int(value)
    return v % 2 if ring == "Z2" else v


@dataclass(frozen=True, eq=False)
class CountingFunction:
    """A map ``S -> Lambda``; missing keys read as 0."""

    structure: DegenerationStructure
    values: Mapping
    grading: Mapping
    ring: str = "Z2"
    warnings: tuple = ()

    def __post_init__(self):
        if self.ring not in RINGS:
            raise ValueError(f"ring must be one of {RINGS}, got {self.ring!r}")
        known = set(self.structure.S)
        vals = {}
        for k, v in dict(self.values).items():
            k = _freeze(k)
            if k not in known:
                raise DomainMismatchError(f"{k!r} is not an element of S")
            v = _reduce(v, self.ring)
            if v:
                vals[k] = v
        grading = {_freeze(k): int(v) % 2 for k, v in dict(self.grading).items()}
        missing = known - set(grading)
        if missing:
            raise GradingError(f"no grading given for {sorted(missing, key=repr)[:3]}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "grading", grading)

    def __getitem__(self, key):
        return self.values.get(_freeze(key), 0)

    @property
    def support(self) -> list:
        return [x for x in self.structure.S if self.values.get(x, 0)]

    @property
    def parity(self) -> int | None:
        """0 (even) or 1 (odd) for homogeneous functions; ``None`` otherwise.

        The zero function counts as even.
        """
        ps = {self.grading[x] for x in self.support}
        if len(ps) > 1:
            return None
        return ps.pop() if ps else 0

    def is_zero(self) -> bool:
        return not self.values

    def vector(self) -> np.ndarray:
        return np.array([self.values.get(x, 0) for x in self.structure.S], dtype=np.int64)

    def with_values(self, values) -> "CountingFunction":
        return CountingFunction(self.structure, values, self.grading, self.ring, self.warnings)

    def __add__(self, other):
        _check_same(self, other)
        keys = set(self.values) | set(other.values)
        return self.with_values({k: self[k] + other[k] for k in keys})

    def __sub__(self, other):
        _check_same(self, other)
        keys = set(self.values) | set(other.values)
        return self.with_values({k: self[k] - other[k] for k in keys})

    def scale(self, c: int) -> "CountingFunction":
        return self.with_values({k: c * v for k, v in self.values.items()})

    def __eq__(self, other):
        if not isinstance(other, CountingFunction):
            return NotImplemented
        return (
            self.structure == other.structure
            and self.ring == other.ring
            and self.values == other.values
        )

    def __hash__(self):
        return hash((self.ring, tuple(sorted(self.values.items(), key=repr))))

    def to_dict(self) -> dict:
        return {
            "ring": self.ring,
            "values": [{"key": _thaw(k), "value": int(self.values.get(k, 0))} for k in self.structure.S],
            "grading": [{"key": _thaw(k), "parity": self.grading[k]} for k in self.structure.S],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, structure: DegenerationStructure, data: Mapping) -> "CountingFunction":
        """Read ``{"ring", "values", "grading"}``.

        ``values`` and ``grading`` are lists of ``{"key", "value"|"parity"}``
        records or, for string labels, plain objects.  Missing grading
        defaults to odd for keys with nonzero value and even otherwise.
        """
        ring = data.get("ring", "Z2")

        def records(obj, field_name):
            if obj is None:
                return {}
            if isinstance(obj, Mapping):
                return {_freeze(k): v for k, v in obj.items()}
            return {_freeze(r["key"]): r[field_name] for r in obj}

        values = records(data.get("values"), "value")
        grading = records(data.get("grading"), "parity")
        for x in structure.S:
            grading.setdefault(x, 1 if values.get(x, 0) else 0)
        return cls(structure, values, grading, ring=ring)

    @classmethod
    def load(cls, structure: DegenerationStructure, path) -> "CountingFunction":
        with open(path) as fh:
            return cls.from_dict(structure, json.load(fh))

    @classmethod
    def zero(cls, structure, grading, ring="Z2") -> "CountingFunction":
        return cls(structure, {}, grading, ring=ring)

    @classmethod
    def indicator(cls, structure, key, grading, ring="Z2") -> "CountingFunction":
        return cls(structure, {key: 1}, grading, ring=ring)


def _check_same(alpha: CountingFunction, beta: CountingFunction):
    if alpha.structure != beta.structure:
        raise StructureMismatchError("counting functions live on different structures")
    if alpha.ring != beta.ring:
        raise StructureMismatchError(f"coefficient rings differ ({alpha.ring} vs {beta.ring})")


def convolve(alpha: CountingFunction, beta: CountingFunction) -> CountingFunction:
    """``(alpha * beta)(C) = sum over (A, B; C) in R of alpha(A) beta(B)``."""
    _check_same(alpha, beta)
    out = {}
    for A, B, C in alpha.structure.R:
        a = alpha.values.get(A, 0)
        if not a:
            continue
        b = beta.values.get(B, 0)
        if b:
            out[C] = out.get(C, 0) + a * b
    return alpha.with_values(out)


def graded_commutator(alpha: CountingFunction, beta: CountingFunction) -> CountingFunction:
    """``alpha*beta + beta*alpha`` for two odd inputs, ``alpha*beta - beta*alpha`` otherwise.

    Raises:
        GradingError: an input is not homogeneous.
    """
    _check_same(alpha, beta)
    pa, pb = alpha.parity, beta.parity
    if pa is None or pb is None:
        raise GradingError("graded commutator needs homogeneous inputs")
    ab, ba = convolve(alpha, beta), convolve(beta, alpha)
    return ab + ba if (pa == 1 and pb == 1) else ab - ba


@dataclass
class DQOperator:
    basis: tuple
    matrix: np.ndarray
    ring: str
    grading: tuple

    @property
    def squares_to_zero(self) -> bool:
        sq = self.matrix @ self.matrix
        if self.ring == "Z2":
            sq %= 2
        return not np.any(sq)

    def complex(self) -> "ChainComplexF2":
        return ChainComplexF2(self.basis, self.matrix % 2, degrees=self.grading, modulus=2).verify()


def dq_operator(Q: CountingFunction) -> DQOperator:
    """Matrix of ``lambda -> [Q, lambda]`` in the indicator basis of ``S``.

    Raises:
        GradingError: ``Q`` is not odd.
        NotADifferentialError: ``Q * Q != 0``; the witness is an element ``C``
            with ``(Q * Q)(C) != 0``.
    """
    if Q.parity is None or (Q.parity != 1 and not Q.is_zero()):
        raise GradingError("D_Q needs an odd counting function")
    QQ = convolve(Q, Q)
    if not QQ.is_zero():
        witness = QQ.support[0]
        raise NotADifferentialError(f"Q*Q is nonzero at {witness!r}", witness=witness)
    S = Q.structure.S
    n = len(S)
    D = np.zeros((n, n), dtype=np.int64)
    for j, x in enumerate(S):
        lam = CountingFunction.indicator(Q.structure, x, Q.grading, Q.ring)
        D[:, j] = graded_commutator(Q, lam).vector()
    if Q.ring == "Z2":
        D %= 2
    return DQOperator(tuple(S), D, Q.ring, tuple(Q.grading[x] for x in S))


# ---------------------------------------------------------------------------
# F2 complexes


def rank_f2(M) -> int:
    M = np.asarray(M)
    if M.size == 0:
        return 0
    _, pivots = _kernels.gf2_row_reduce(np.ascontiguousarray(M % 2, dtype=np.uint8))
    return len(pivots)


@dataclass
class ChainComplexF2:
    """Generators with degrees and a boundary matrix over F2.

    ``boundary[i, j]`` is the coefficient of generator ``i`` in the boundary
    of generator ``j``; the boundary lowers degree by one (modulo
    ``modulus`` when given).
    """

    basis: tuple
    boundary: np.ndarray
    degrees: tuple | None = None
    modulus: int | None = None
    verified: bool = False

    def __post_init__(self):
        self.basis = tuple(self.basis)
        self.boundary = np.asarray(self.boundary, dtype=np.uint8) % 2
        n = len(self.basis)
        if self.boundary.shape != (n, n):
            raise ValueError(f"boundary must be {n}x{n}, got {self.boundary.shape}")
        if self.degrees is None:
            self.degrees = (0,) * n
        self.degrees = tuple(int(d) for d in self.degrees)

    def _deg(self, d):
        return d % self.modulus if self.modulus else d

    def verify(self) -> "ChainComplexF2":
        """Check ``boundary^2 = 0`` and set the verified flag.

        Raises:
            NotADifferentialError: with a generator whose boundary has nonzero boundary.
        """
        sq = (self.boundary.astype(np.int64) @ self.boundary.astype(np.int64)) % 2
        bad = np.argwhere(sq)
        if bad.size:
            i, j = bad[0]
            raise NotADifferentialError(
                f"boundary^2 is nonzero: coefficient of {self.basis[i]!r} in dd({self.basis[j]!r})",
                witness=self.basis[j],
            )
        self.verified = True
        return self

    def to_dict(self) -> dict:
        return {
            "basis": [_thaw(b) for b in self.basis],
            "degrees": list(self.degrees),
            "boundary": self.boundary.astype(int).tolist(),
            "verified": self.verified,
        }


@dataclass
class HomologyReport:
    betti: dict
    total: int
    degrees: list = field(default_factory=list)

    def as_tuple(self) -> tuple:
        return tuple(self.betti[d] for d in self.degrees)

    def to_dict(self) -> dict:
        return {"betti": {str(d): self.betti[d] for d in self.degrees}, "total": self.total}


def homology_f2(complex_: ChainComplexF2) -> HomologyReport:
    """Betti numbers ``dim ker - dim im`` per degree via F2 ranks.

    Raises:
        MustVerifyError: the complex has not been verified.
    """
    if not complex_.verified:
        raise MustVerifyError("verify the complex (boundary^2 = 0) before computing homology")
    D = complex_.boundary
    degs = [complex_._deg(d) for d in complex_.degrees]
    levels = sorted(set(degs))
    cols = {d: [j for j, e in enumerate(degs) if e == d] for d in levels}
    betti = {}
    for d in levels:
        ker = len(cols[d]) - rank_f2(D[:, cols[d]])
        up = complex_._deg(d + 1)
        im = rank_f2(D[:, cols[up]]) if up in cols else 0
        betti[d] = ker - im
    total = len(complex_.basis) - 2 * rank_f2(D)
    return HomologyReport(betti, total, levels)


def representation_complex(Q: CountingFunction, labels: Sequence, index: Mapping) -> ChainComplexF2:
    """Boundary ``(Q h)(a) = sum_b Q(a, b) h(b)`` on maps from critical points to Z2.

    Raises:
        GradingError: ``Q`` is nonzero on a pair whose index difference is not 1.
        NotADifferentialError: ``Q^2 != 0``.
    """
    labels = tuple(labels)
    pos = {x: i for i, x in enumerate(labels)}
    D = np.zeros((len(labels), len(labels)), dtype=np.uint8)
    for key, val in Q.values.items():
        a, b = key
        if index[b] - index[a] != 1:
            raise GradingError(f"Q({a!r}, {b!r}) = {val} on a pair of index difference {index[b] - index[a]}")
        D[pos[a], pos[b]] = val % 2
    cx = ChainComplexF2(labels, D, degrees=tuple(index[x] for x in labels))
    return cx.verify()


# ---------------------------------------------------------------------------
# bundled data


def height_datum():
    """One even generator and ``Q = 0``: the sphere with the height function."""
    structure = DegenerationStructure(("*",), frozenset())
    return CountingFunction(structure, {}, {"*": 0})


def sphere_datum():
    """Four critical points on the sphere: a minimum, a saddle and two maxima.

    Each maximum flows to the saddle once and the saddle reaches the
    minimum along two orbits, so ``Q(min, saddle) = 0`` over Z2.

    Returns:
        ``(Q, labels, index)``.
    """
    from .degen import morse_structure

    values = {"min": 0.0, "saddle": 1.0, "max1": 2.0, "max2": 3.0}
    index = {"min": 0, "saddle": 1, "max1": 2, "max2": 2}
    structure = morse_structure(values)
    grading = {(a, b): (index[b] - index[a]) % 2 for a, b in structure.S}
    counts = {("min", "saddle"): 2, ("saddle", "max1"): 1, ("saddle", "max2"): 1}
    Q = CountingFunction(structure, counts, grading)
    return Q, tuple(values), index
