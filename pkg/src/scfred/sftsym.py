"""Graded p/q/hbar symbol calculus over periodic orbits.

Letters ``q_g`` and ``p_g`` carry the parity of their orbit ``g``; two odd
letters anticommute, everything else commutes, except that
``p_g q_g = (-1)^{|g|} q_g p_g + kappa_g hbar``.  ``hbar`` is even and
central, and an odd letter squares to zero.  A word is in standard form
when all q letters precede all p letters and each part is sorted by orbit
label.
"""

from __future__ import annotations

import json
import random
import re
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping

from .degen import DegenerationStructure
from .errors import PreconditionError, TableError


@dataclass(frozen=True)
class Orbit:
    name: str
    kappa: int = 1
    parity: int = 0
    troublesome: bool = False

    def __post_init__(self):
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise ValueError(f"covering number of {self.name!r} must be a positive integer, got {self.kappa}")
        if self.parity not in (0, 1):
            raise ValueError(f"parity of {self.name!r} must be 0 or 1")

    @property
    def indexable(self) -> bool:
        """Troublesome orbits with even covering number are excluded."""
        return not (self.troublesome and self.kappa % 2 == 0)


class OrbitSymbolTable:
    """Orbits by name, ordered lexicographically."""

    def __init__(self, orbits: Iterable[Orbit]):
        self.orbits = {o.name: o for o in orbits}
        self.order = {name: i for i, name in enumerate(sorted(self.orbits))}

    def __getitem__(self, name) -> Orbit:
        try:
            return self.orbits[name]
        except KeyError:
            raise TableError(f"unknown orbit {name!r}") from None

    def __contains__(self, name):
        return name in self.orbits

    @classmethod
    def from_dict(cls, data) -> "OrbitSymbolTable":
        items = data["orbits"] if isinstance(data, Mapping) and "orbits" in data else data
        if isinstance(items, Mapping):
            items = [dict(name=k, **v) for k, v in items.items()]
        return cls(Orbit(d["name"], int(d.get("kappa", 1)), int(d.get("parity", 0)), bool(d.get("troublesome", False)))
                   for d in items)

    @classmethod
    def load(cls, path) -> "OrbitSymbolTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"orbits": [asdict(self.orbits[n]) for n in sorted(self.orbits)]}

    def key(self, letter) -> tuple:
        kind, name = letter
        return (0 if kind == "q" else 1, self.order[name])

    def parity(self, letter) -> int:
        return self[letter[1]].parity


@dataclass(frozen=True)
class Word:
    """``hbar^g1 x_1 ... x_n`` with letters ``(kind, orbit)``."""

    hbar: int = 0
    letters: tuple = ()

    def __str__(self):
        parts = []
        if self.hbar:
            parts.append("ℏ" if self.hbar == 1 else f"ℏ^{self.hbar}")
        i = 0
        ls = self.letters
        while i < len(ls):
            j = i
            while j < len(ls) and ls[j] == ls[i]:
                j += 1
            kind, name = ls[i]
            parts.append(f"{kind}_{name}" + (f"^{j - i}" if j - i > 1 else ""))
            i = j
        return " ".join(parts) if parts else "1"

    def degree(self) -> int:
        return len(self.letters) + 2 * self.hbar


_TOKEN = re.compile(r"^(?:(?P<h>ℏ|hbar)|(?P<k>[qp])_(?P<o>[^\s^*]+))(?:\^(?P<e>-?\d+))?$")


def parse_word(text: str, table: OrbitSymbolTable | None = None) -> Word:
    """Parse ``"hbar^2 q_a^2 p_b"`` (or with ``ℏ``) into a raw word."""
    hbar, letters = 0, []
    for tok in text.replace("*", " ").split():
        if tok == "1":
            continue
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"cannot parse symbol {tok!r}")
        e = int(m.group("e") or 1)
        if m.group("h"):
            hbar += e
            continue
        if e < 0:
            raise ValueError(f"negative power in {tok!r}")
        letter = (m.group("k"), m.group("o"))
        if table is not None:
            table[letter[1]]
        letters.extend([letter] * e)
    return Word(hbar, tuple(letters))


class FormalSum:
    """A finite integer combination of standard-form words."""

    def __init__(self, terms: Mapping[Word, int] | None = None):
        self.terms = {w: int(c) for w, c in (terms or {}).items() if c}

    @classmethod
    def of(cls, word: Word, coef: int = 1) -> "FormalSum":
        return cls({word: coef})

    def __eq__(self, other):
        return isinstance(other, FormalSum) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other: "FormalSum") -> "FormalSum":
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0) + c
        return FormalSum(out)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c: int) -> "FormalSum":
        return FormalSum({w: c * v for w, v in self.terms.items()})

    def __len__(self):
        return len(self.terms)

    def items(self, table: OrbitSymbolTable | None = None):
        key = (lambda w: (w.hbar, [table.key(l) for l in w.letters])) if table else (lambda w: (w.hbar, w.letters))
        return sorted(self.terms.items(), key=lambda kv: key(kv[0]))

    def __str__(self):
        if not self.terms:
            return "0"
        out = []
        for w, c in self.items():
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            body = str(w)
            term = body if mag == 1 else (f"{mag}" if body == "1" else f"{mag} {body}")
            out.append((sign, term))
        text = ("-" if out[0][0] == "-" else "") + out[0][1]
        for sign, term in out[1:]:
            text += f" {sign} {term}"
        return text

    def __repr__(self):
        return f"FormalSum({self})"

    def to_dict(self):
        return [{"word": str(w), "coefficient": c} for w, c in self.items()]


def _reducible(letters, table):
    out = []
    for i in range(len(letters) - 1):
        x, y = letters[i], letters[i + 1]
        kx, ky = table.key(x), table.key(y)
        if kx > ky or (x == y and table.parity(x) == 1):
            out.append(i)
    return out


def _rewrite(letters, i, table):
    """One rewrite at position ``i``: a list of ``(coef, hbar_increment, letters)``."""
    x, y = letters[i], letters[i + 1]
    px, py = table.parity(x), table.parity(y)
    if x == y:
        return []
    swapped = letters[:i] + (y, x) + letters[i + 2 :]
    sign = -1 if (px and py) else 1
    out = [(sign, 0, swapped)]
    if x[0] == "p" and y[0] == "q" and x[1] == y[1]:
        out.append((table[x[1]].kappa, 1, letters[:i] + letters[i + 2 :]))
    return out


def normalize(word: Word, table: OrbitSymbolTable, strategy: str = "leftmost", rng=None) -> FormalSum:
    """Rewrite a raw word into a sum of standard-form words.

    ``strategy`` picks the rewrite position: ``"leftmost"``, ``"rightmost"``
    or ``"random"`` (using ``rng``); the result does not depend on it.

    Raises:
        TableError: a letter names an unknown orbit.
    """
    for _, name in word.letters:
        table[name]
    if strategy == "random" and rng is None:
        rng = random.Random(0)
    acc = defaultdict(int)
    stack = [(1, word.hbar, tuple(word.letters))]
    while stack:
        c, h, ls = stack.pop()
        pos = _reducible(ls, table)
        if not pos:
            acc[Word(h, ls)] += c
            continue
        if strategy == "leftmost":
            i = pos[0]
        elif strategy == "rightmost":
            i = pos[-1]
        elif strategy == "random":
            i = rng.choice(pos)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        for c2, dh, ls2 in _rewrite(ls, i, table):
            stack.append((c * c2, h + dh, ls2))
    return FormalSum(acc)


def is_standard(word: Word, table: OrbitSymbolTable) -> bool:
    return not _reducible(tuple(word.letters), table)


def multiply(sigma: FormalSum, tau: FormalSum, table: OrbitSymbolTable) -> FormalSum:
    """Bilinear concatenation followed by normalization."""
    out = FormalSum()
    for w1, c1 in sigma.items():
        for w2, c2 in tau.items():
            prod = normalize(Word(w1.hbar + w2.hbar, w1.letters + w2.letters), table)
            out = out + prod.scale(c1 * c2)
    return out


def induced_degeneration_structure(symbols: Iterable[Word], table: OrbitSymbolTable, degree_cap: int | None = None):
    """Structure with ``S`` the given classes and relators from products.

    ``([s], [t]; [b])`` is a relator when ``[b]`` is in ``S`` and occurs with a
    nonzero coefficient in ``[s][t]``.  Labels are the printed words.

    Raises:
        PreconditionError: a symbol uses a troublesome orbit of even covering.
    """
    words = []
    for w in symbols:
        w = w if isinstance(w, Word) else parse_word(w, table)
        for _, name in w.letters:
            if not table[name].indexable:
                raise PreconditionError(f"orbit {name!r} is troublesome with even covering number")
        if not is_standard(w, table):
            raise PreconditionError(f"{w} is not in standard form")
        if degree_cap is None or w.degree() <= degree_cap:
            words.append(w)
    words = list(dict.fromkeys(words))
    labels = {w: str(w) for w in words}
    R = set()
    for s in words:
        for t in words:
            prod = multiply(FormalSum.of(s), FormalSum.of(t), table)
            for b, c in prod.terms.items():
                if c and b in labels:
                    R.add((labels[s], labels[t], labels[b]))
    return DegenerationStructure(tuple(labels[w] for w in words), frozenset(R))
