"""Degeneration structures, operations and the Master Equation.

A structure is a finite set ``S`` with relator triples ``(A, B; C)`` meaning
that ``C`` can degenerate into the ordered pair ``(A, B)``.  Elements of the
operation table are symbolic records: an ordered tuple of unbroken atoms
together with the target label, so a k-fold broken element has degeneracy
``k - 1``.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Mapping

from .errors import DomainMismatchError, TotalOrderViolationError


def _freeze(x):
    return tuple(_freeze(y) for y in x) if isinstance(x, (list, tuple)) else x


def _thaw(x):
    return [_thaw(y) for y in x] if isinstance(x, tuple) else x


@dataclass(frozen=True)
class DegenerationStructure:
    S: tuple
    R: frozenset

    def __post_init__(self):
        S = tuple(dict.fromkeys(_freeze(s) for s in self.S))
        R = frozenset((_freeze(a), _freeze(b), _freeze(c)) for a, b, c in self.R)
        known = set(S)
        for rel in R:
            for x in rel:
                if x not in known:
                    raise DomainMismatchError(f"relator {rel} mentions {x!r}, which is not in S")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @property
    def by_target(self) -> dict:
        out = defaultdict(list)
        for a, b, c in sorted(self.R, key=repr):
            out[c].append((a, b))
        return dict(out)

    def decomposable(self, x) -> bool:
        return x in self.by_target

    def to_dict(self) -> dict:
        return {"S": [_thaw(s) for s in self.S], "R": [[_thaw(x) for x in rel] for rel in sorted(self.R, key=repr)]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DegenerationStructure":
        return cls(tuple(_freeze(x) for x in data.get("S", ())), frozenset(tuple(_freeze(x) for x in r) for r in data.get("R", ())))

    @classmethod
    def load(cls, path) -> "DegenerationStructure":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# validation


@dataclass
class AxiomResult:
    passed: bool
    witnesses: list = field(default_factory=list)

    def to_dict(self):
        return {"passed": self.passed, "witnesses": [_thaw(w) for w in self.witnesses]}


@dataclass
class ValidationReport:
    finiteness: AxiomResult
    associativity: AxiomResult
    minimality: AxiomResult
    consequence: AxiomResult
    diagonal: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in (self.finiteness, self.associativity, self.minimality, self.consequence))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "finiteness": self.finiteness.to_dict(),
            "associativity": self.associativity.to_dict(),
            "minimality": self.minimality.to_dict(),
            "consequence": self.consequence.to_dict(),
            "diagonal_relators": [_thaw(d) for d in self.diagonal],
        }


def _find_cycle(structure):
    """Return one cycle in the digraph ``C -> A, C -> B``, or ``None``."""
    succ = defaultdict(set)
    for a, b, c in structure.R:
        succ[c].update((a, b))
    color = {}
    stack_path = []

    def visit(x):
        color[x] = 1
        stack_path.append(x)
        for y in sorted(succ[x], key=repr):
            if color.get(y) == 1:
                return stack_path[stack_path.index(y) :] + [y]
            if y not in color:
                cyc = visit(y)
                if cyc:
                    return cyc
        stack_path.pop()
        color[x] = 2
        return None

    for x in structure.S:
        if x not in color:
            cyc = visit(x)
            if cyc:
                return cyc
    return None


def _two_step_groups(structure):
    """Group the 2-step sequences ``(Z) -> (X, Y) -> triple`` by ``(Z, triple)``.

    Each entry records which side was split in the second step.
    """
    groups = defaultdict(list)
    bt = structure.by_target
    for z, pairs in bt.items():
        for a, b in pairs:
            for a1, a2 in bt.get(a, ()):
                groups[(z, (a1, a2, b))].append(("left", (a, b)))
            for b1, b2 in bt.get(b, ()):
                groups[(z, (a, b1, b2))].append(("right", (a, b)))
    return groups


def validate_structure(S, R=None) -> ValidationReport:
    """Check finiteness, associativity and minimality, returning witnesses."""
    structure = S if isinstance(S, DegenerationStructure) else DegenerationStructure(tuple(S), frozenset(R or ()))
    cyc = _find_cycle(structure)
    finiteness = AxiomResult(cyc is None, [tuple(cyc)] if cyc else [])

    bad_assoc = []
    for (z, triple), seqs in sorted(_two_step_groups(structure).items(), key=repr):
        sides = sorted(s for s, _ in seqs)
        if sides != ["left", "right"]:
            bad_assoc.append((z, triple, tuple(mid for _, mid in seqs)))
    associativity = AxiomResult(not bad_assoc, bad_assoc)

    bad_min = []
    bt = structure.by_target
    for c, pairs in sorted(bt.items(), key=repr):
        for (a, b), (a2, b2) in combinations(pairs, 2):
            if a == a2 and b != b2 and not structure.decomposable(a):
                bad_min.append((c, (a, b), (a2, b2)))
            if b == b2 and a != a2 and not structure.decomposable(b):
                bad_min.append((c, (a, b), (a2, b2)))
    minimality = AxiomResult(not bad_min, bad_min)

    bad_cons = sorted((rel for rel in structure.R if rel[2] in (rel[0], rel[1])), key=repr)
    consequence = AxiomResult(not bad_cons, bad_cons)
    diagonal = sorted((rel for rel in structure.R if rel[0] == rel[1]), key=repr)
    return ValidationReport(finiteness, associativity, minimality, consequence, diagonal)


# ---------------------------------------------------------------------------
# sequences


def enumerate_sequences(structure: DegenerationStructure, Z, target) -> list:
    """All degeneration sequences from ``(Z)`` to the tuple ``target``.

    A sequence is a tuple of tuples, starting at ``(Z,)`` and ending at
    ``target``; each step replaces one entry ``C`` by ``(A, B)``.
    """
    Z = _freeze(Z)
    target = tuple(_freeze(t) for t in target)
    bt = structure.by_target
    cache = {}

    def paths(cur):
        if cur == target:
            return [(cur,)]
        if len(cur) >= len(target):
            return []
        if cur in cache:
            return cache[cur]
        out = []
        for i, c in enumerate(cur):
            for a, b in bt.get(c, ()):
                nxt = cur[:i] + (a, b) + cur[i + 1 :]
                for tail in paths(nxt):
                    out.append((cur,) + tail)
        cache[cur] = out
        return out

    return paths((Z,))


def morse_structure(points, *, allow_ties=False) -> DegenerationStructure:
    """Degeneration structure of ordered pairs of critical points.

    ``points`` maps labels to critical values (or is a sequence of
    ``(label, value)``).  ``S`` holds the pairs ``(a, b)`` with
    ``value(a) < value(b)`` and ``R`` the triples ``((a,b), (b,c); (a,c))``.

    Raises:
        TotalOrderViolationError: two values coincide and ``allow_ties`` is false.
    """
    items = list(points.items()) if isinstance(points, Mapping) else [tuple(p) for p in points]
    vals = [v for _, v in items]
    if not allow_ties:
        for (la, va), (lb, vb) in combinations(items, 2):
            if math.isclose(va, vb, rel_tol=0, abs_tol=1e-12):
                raise TotalOrderViolationError(f"critical values of {la!r} and {lb!r} coincide")
    order = sorted(range(len(items)), key=lambda i: (vals[i], repr(items[i][0])))
    labels = [items[i][0] for i in order]
    value = dict(items)
    S = tuple((a, b) for i, a in enumerate(labels) for b in labels[i + 1 :] if value[a] < value[b])
    R = frozenset(
        ((a, b), (b, c), (a, c))
        for (a, b) in S
        for (b2, c) in S
        if b2 == b
    )
    return DegenerationStructure(S, R)


# ---------------------------------------------------------------------------
# operations


@dataclass(frozen=True)
class Atom:
    """An unbroken element: its ``S`` label and an identifier."""

    label: Hashable
    ident: str


@dataclass(frozen=True)
class Element:
    target: Hashable
    components: tuple

    @property
    def d(self) -> int:
        return len(self.components) - 1

    @property
    def spectrum(self):
        return tuple(c.label for c in self.components), self.target

    def __str__(self):
        return " o ".join(c.ident for c in self.components)


def unbroken(label, ident) -> Element:
    label = _freeze(label)
    return Element(label, (Atom(label, str(ident)),))


@dataclass(frozen=True, eq=False)
class OperationTable:
    """Composition maps on the element sets ``[A]`` of a structure.

    Elements compose by concatenating their components, which realizes
    the broken-trajectory operation and is associative by construction.
    """

    structure: DegenerationStructure

    def compose(self, relator, a: Element, b: Element) -> Element:
        A, B, C = (_freeze(x) for x in relator)
        if (A, B, C) not in self.structure.R:
            raise DomainMismatchError(f"{relator} is not a relator")
        if a.target != A:
            raise DomainMismatchError(f"left argument lies in [{a.target}], not [{A}]")
        if b.target != B:
            raise DomainMismatchError(f"right argument lies in [{b.target}], not [{B}]")
        return Element(C, a.components + b.components)

    def collapse(self, labels) -> set:
        """Labels ``A`` with a degeneration sequence from ``(A)`` to ``labels``."""
        labels = tuple(labels)
        if len(labels) == 1:
            return {labels[0]}
        return {x for x in self.structure.S if enumerate_sequences(self.structure, x, labels)}

    def faces(self, x: Element) -> list:
        """Face labels ``(A, B, C)``, one for each split position of ``x``."""
        out = []
        labels = [c.label for c in x.components]
        for i in range(1, len(labels)):
            for A in sorted(self.collapse(labels[:i]), key=repr):
                for B in sorted(self.collapse(labels[i:]), key=repr):
                    if (A, B, x.target) in self.structure.R:
                        out.append((A, B, x.target))
        return out


def compose(table: OperationTable, relator, a: Element, b: Element) -> Element:
    """``a o_(A,B;C) b``; the degeneracy of the result is ``d(a) + d(b) + 1``."""
    return table.compose(relator, a, b)


def degeneracy_and_faces(element: Element, table: OperationTable | None = None):
    """Degeneracy from the spectrum length and the faces containing the element.

    Without a table the structure is read off as Morse pairs, where the
    left part of a split ``(a0,a1),...,(a_{k-1},a_k)`` at ``i`` has target
    ``(a0, a_i)``.
    """
    if table is not None:
        return element.d, table.faces(element)
    labels = [c.label for c in element.components]
    faces = []
    for i in range(1, len(labels)):
        A = (labels[0][0], labels[i - 1][1])
        B = (labels[i][0], labels[-1][1])
        faces.append((A, B, element.target))
    return element.d, faces


@dataclass
class MasterEquationReport:
    passed: bool
    boundary: list
    products: list
    missing: list
    extra: list

    def to_dict(self):
        return {
            "passed": self.passed,
            "boundary": [str(x) for x in self.boundary],
            "products": [str(x) for x in self.products],
            "missing_from_products": [str(x) for x in self.missing],
            "missing_from_boundary": [str(x) for x in self.extra],
        }


def master_equation_check(K: Iterable[Element], table: OperationTable) -> MasterEquationReport:
    """Compare ``dK = {x in K : d(x) >= 1}`` with ``K o K``.

    ``missing`` lists boundary elements that are not products of elements
    of ``K``; ``extra`` lists products that are not in the boundary of ``K``.
    """
    K = list(dict.fromkeys(K))
    boundary = {x for x in K if x.d >= 1}
    by_target = defaultdict(list)
    for x in K:
        by_target[x.target].append(x)
    products = set()
    for A, B, C in table.structure.R:
        for a in by_target.get(A, ()):
            for b in by_target.get(B, ()):
                products.add(table.compose((A, B, C), a, b))
    key = lambda e: (e.target.__repr__(), str(e))
    missing = sorted(boundary - products, key=key)
    extra = sorted(products - boundary, key=key)
    return MasterEquationReport(not missing and not extra, sorted(boundary, key=key), sorted(products, key=key), missing, extra)


def check_operation_axioms(table: OperationTable, elements: Iterable[Element]) -> AxiomResult:
    """Exhaustive scan of degree, associativity and decomposition uniqueness.

    For every composable triple the two bracketings must agree; for every
    pair of decompositions ``x = a o_E b = a' o_E' b'`` of one element the
    relators must differ unless the factors coincide.
    """
    elements = list(elements)
    R = table.structure.R
    bad = []
    by_target = defaultdict(list)
    for x in elements:
        by_target[x.target].append(x)
    for A, B, C in R:
        for a in by_target.get(A, ()):
            for b in by_target.get(B, ()):
                ab = table.compose((A, B, C), a, b)
                if ab.d != a.d + b.d + 1:
                    bad.append(("degree", str(ab)))
    for (A, B, C) in R:
        for (A1, A2, A0) in R:
            if A0 != A:
                continue
            # right bracketing: find (A2, B; B') and (A1, B'; C)
            for (X, Y, Bp) in R:
                if X != A2 or Y != B or (A1, Bp, C) not in R:
                    continue
                for a in by_target.get(A1, ()):
                    for b in by_target.get(A2, ()):
                        for c in by_target.get(B, ()):
                            left = table.compose((A, B, C), table.compose((A1, A2, A), a, b), c)
                            right = table.compose((A1, Bp, C), a, table.compose((A2, B, Bp), b, c))
                            if left != right:
                                bad.append(("associativity", str(left), str(right)))
    for x in elements:
        d, faces = degeneracy_and_faces(x, table)
        if len(set(faces)) != len(faces):
            bad.append(("decomposition", str(x)))
    return AxiomResult(not bad, bad)
