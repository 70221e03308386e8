"""Discretized scale spaces of exponentially weighted Sobolev functions.

A :class:`ScaleSpace` lives on a truncated line ``[-L, L]`` or a truncated
cylinder ``[-L, L] x S^1``.  Level ``m`` carries the discrete
``H^{base_order + m}`` norm in which every finite-difference derivative is
weighted pointwise by ``exp(delta_m |s|)``.  Levels only ever add
derivative terms and the weights increase, so the filtration is monotone
with constant 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.interpolate import CubicSpline

from .errors import (
    DomainMismatchError,
    EvaluationError,
    InvalidDomainError,
    InvalidPairError,
    InvalidWeightsError,
    LevelOutOfRangeError,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Domain:
    """Truncation window and grid.

    The ``s`` grid is ``h * (i - i0)`` so that ``s = 0`` is always a node and
    shifts by multiples of ``h`` are exact.  The effective half-length is
    ``i0 * h`` with ``i0 = round(L / h)``.
    """

    kind: str
    L: float
    h: float
    n_t: int | None = None
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in ("line", "cylinder"):
            raise InvalidDomainError(f"unknown domain kind {self.kind!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidDomainError("grid spacing must be positive")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise InvalidDomainError("half-length L must be positive")
        if round(self.L / self.h) < 1:
            raise InvalidDomainError("grid is empty: L < h")
        if self.kind == "cylinder":
            n_t = self.n_t if self.n_t is not None else max(5, round(1.0 / self.h) | 1)
            if n_t < 3:
                raise InvalidDomainError("circle grid needs at least 3 nodes")
            object.__setattr__(self, "n_t", int(n_t))
        elif self.n_t is not None:
            raise InvalidDomainError("n_t only applies to cylinder domains")

    @classmethod
    def line(cls, L, h, center=0.0):
        return cls("line", float(L), float(h), None, float(center))

    @classmethod
    def cylinder(cls, L, h, n_t=None, center=0.0):
        return cls("cylinder", float(L), float(h), n_t, float(center))

    @property
    def half_nodes(self) -> int:
        return int(round(self.L / self.h))

    @cached_property
    def s(self) -> np.ndarray:
        i0 = self.half_nodes
        return self.center + self.h * np.arange(-i0, i0 + 1, dtype=float)

    @cached_property
    def t(self) -> np.ndarray:
        if self.kind != "cylinder":
            raise DomainMismatchError("line domains have no circle coordinate")
        return np.arange(self.n_t, dtype=float) / self.n_t

    @property
    def shape(self) -> tuple[int, ...]:
        if self.kind == "line":
            return (self.s.size,)
        return (self.s.size, self.n_t)

    @property
    def cell(self) -> float:
        """Quadrature weight of one grid cell."""
        if self.kind == "line":
            return self.h
        return self.h / self.n_t


def derivative_matrix(n, h):
    """Second-order first-derivative matrix: centered inside, one-sided at the ends."""
    if n < 3:
        raise InvalidDomainError("need at least 3 nodes for finite differences")
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5 / h, 2.0 / h, -0.5 / h, 1.5 / h, -2.0 / h, 0.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def periodic_derivative_matrix(n, dt):
    rows = np.repeat(np.arange(n), 2)
    cols = np.empty(2 * n, dtype=int)
    cols[0::2] = (np.arange(n) - 1) % n
    cols[1::2] = (np.arange(n) + 1) % n
    vals = np.tile([-0.5 / dt, 0.5 / dt], n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class ScaleSpace:
    domain: Domain
    base_order: int
    weights: tuple[float, ...]
    target_dim: int = 1
    weight_bound: float | None = None
    order_step: int = 1
    parent: "ScaleSpace | None" = None

    @property
    def levels_available(self) -> int:
        return len(self.weights)

    @property
    def top_level(self) -> int:
        return len(self.weights) - 1

    @property
    def kind(self) -> str:
        return self.domain.kind

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.domain.shape + (self.target_dim,)

    def order(self, m: int) -> int:
        return self.base_order + self.order_step * m

    @cached_property
    def Ds(self):
        return derivative_matrix(self.domain.s.size, self.domain.h)

    @cached_property
    def Dt(self):
        return periodic_derivative_matrix(self.domain.n_t, 1.0 / self.domain.n_t)

    def weight(self, m: int) -> np.ndarray:
        return np.exp(self.weights[m] * np.abs(self.domain.s - self.domain.center))

    # -- construction helpers -------------------------------------------
    def grid_function(self, values, level=None) -> "GridFunction":
        return GridFunction(self, np.asarray(values, dtype=float), self.top_level if level is None else level)

    def sample(self, func: Callable, level=None) -> "GridFunction":
        """Sample ``func(s)`` (line) or ``func(s, t)`` (cylinder) on the grid."""
        d = self.domain
        if d.kind == "line":
            vals = np.asarray(func(d.s), dtype=float)
        else:
            S, T = np.meshgrid(d.s, d.t, indexing="ij")
            vals = np.asarray(func(S, T), dtype=float)
        vals = vals.reshape(d.shape + (-1,)) if vals.ndim == len(d.shape) else vals
        return self.grid_function(vals, level)

    def zeros(self, level=None) -> "GridFunction":
        return self.grid_function(np.zeros(self.value_shape), level)

    # -- derivative terms ------------------------------------------------
    def _derivative_terms(self, values, k):
        """Yield every finite-difference derivative of total order <= k."""
        if self.kind == "line":
            cur = values
            yield cur
            for _ in range(k):
                cur = self.Ds @ cur
                yield cur
            return
        shape = values.shape
        ns, nt = shape[0], shape[1]
        ds_pows = [values]
        for _ in range(k):
            nxt = self.Ds @ ds_pows[-1].reshape(ns, -1)
            ds_pows.append(np.asarray(nxt).reshape(shape))
        for i, base in enumerate(ds_pows):
            cur = base
            yield cur
            for _ in range(k - i):
                moved = np.moveaxis(cur, 1, 0).reshape(nt, -1)
                cur = np.moveaxis(np.asarray(self.Dt @ moved).reshape((nt, ns) + shape[2:]), 0, 1)
                yield cur

    def norm_values(self, values, m: int) -> float:
        if not 0 <= m < self.levels_available:
            raise LevelOutOfRangeError(f"level {m} not in 0..{self.top_level}")
        w2 = self.weight(m) ** 2
        total = 0.0
        for term in self._derivative_terms(np.asarray(values, dtype=float), self.order(m)):
            sq = term * term
            sq = sq.reshape(sq.shape[0], -1).sum(axis=1)
            total += float(np.dot(w2, sq))
        return math.sqrt(total * self.domain.cell)

    def gram_matrix(self, m: int) -> np.ndarray:
        """Dense Gram matrix of the level-m norm on scalar fields."""
        d = self.domain
        if self.kind == "line":
            ops = [sp.identity(d.s.size, format="csr")]
            for _ in range(self.order(m)):
                ops.append(self.Ds @ ops[-1])
            W2 = sp.diags(self.weight(m) ** 2)
        else:
            Is = sp.identity(d.s.size, format="csr")
            It = sp.identity(d.n_t, format="csr")
            Ds = sp.kron(self.Ds, It, format="csr")
            Dt = sp.kron(Is, self.Dt, format="csr")
            k = self.order(m)
            ops = []
            s_pow = sp.identity(d.s.size * d.n_t, format="csr")
            for i in range(k + 1):
                cur = s_pow
                ops.append(cur)
                for _ in range(k - i):
                    cur = Dt @ cur
                    ops.append(cur)
                s_pow = Ds @ s_pow
            W2 = sp.diags(np.repeat(self.weight(m) ** 2, d.n_t))
        G = sum((A.T @ W2 @ A) for A in ops)
        return np.asarray(G.toarray()) * d.cell


@dataclass(frozen=True, eq=False)
class GridFunction:
    space: ScaleSpace
    values: np.ndarray
    declared_level: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        expected = self.space.value_shape
        if vals.shape == expected[:-1] and self.space.target_dim == 1:
            vals = vals[..., None]
        if vals.shape != expected:
            raise DomainMismatchError(f"values shape {vals.shape} does not match grid {expected}")
        if not 0 <= self.declared_level <= self.space.top_level:
            raise LevelOutOfRangeError(
                f"declared level {self.declared_level} exceeds top level {self.space.top_level}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.space, values, self.declared_level)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _vals(x):
    return x.values if isinstance(x, GridFunction) else np.asarray(x, dtype=float)


def make_scale_space(domain_spec, base_order, weights, target_dim=1, *, weight_bound=None) -> ScaleSpace:
    """Validate inputs and build a :class:`ScaleSpace`.

    ``domain_spec`` is a :class:`Domain` or a mapping with keys ``domain``
    (``"line"``/``"cylinder"``), ``L``, ``h`` and optionally ``n_t``.  For
    cylinders the weights must stay strictly below ``2*pi``; a line space can
    declare its own bound (the Hessian spectral gap in the Morse setting).
    """
    if isinstance(domain_spec, Domain):
        domain = domain_spec
    else:
        spec = dict(domain_spec)
        kind = spec.get("domain", spec.get("kind", "line"))
        try:
            domain = Domain(kind, float(spec["L"]), float(spec["h"]), spec.get("n_t"))
        except KeyError as exc:
            raise InvalidDomainError(f"domain spec missing key {exc}") from None
    w = tuple(float(x) for x in weights)
    if not w:
        raise InvalidWeightsError("at least one level is required")
    if w[0] < 0:
        raise InvalidWeightsError("weights must be non-negative")
    if any(b <= a for a, b in zip(w, w[1:])):
        raise InvalidWeightsError(f"weights must be strictly increasing, got {w}")
    if domain.kind == "cylinder":
        weight_bound = TWO_PI if weight_bound is None else min(weight_bound, TWO_PI)
    if weight_bound is not None and w[-1] >= weight_bound:
        raise InvalidWeightsError(f"weights must stay strictly below {weight_bound:.6g}; got {w[-1]}")
    if int(base_order) < 0:
        raise InvalidWeightsError("base_order must be >= 0")
    if int(target_dim) < 1:
        raise InvalidDomainError("target_dim must be >= 1")
    return ScaleSpace(domain, int(base_order), w, int(target_dim), weight_bound)


def degenerate_control_space(domain, base_order, weight, levels=2, target_dim=1) -> ScaleSpace:
    """A space whose levels all carry the same norm.

    Bypasses validation on purpose: it is the negative control for
    :func:`embedding_diagnostic`, where the level inclusions are isometries
    and hence not compact.
    """
    return ScaleSpace(domain, base_order, (float(weight),) * levels, target_dim, None, order_step=0)


def level_norm(u: GridFunction, m: int) -> float:
    if m > u.declared_level:
        raise LevelOutOfRangeError(f"level {m} exceeds declared level {u.declared_level}")
    return u.space.norm_values(u.values, m)


@dataclass
class EmbeddingReport:
    m_lower: int
    m_higher: int
    singular_values: np.ndarray
    threshold: float
    compactness_consistent: bool

    def rows(self):
        return [(i, float(v)) for i, v in enumerate(self.singular_values)]


def embedding_diagnostic(space: ScaleSpace, m_lower, m_higher, rank_budget, threshold=0.1) -> EmbeddingReport:
    """Singular values of the inclusion from level ``m_higher`` into ``m_lower``.

    They are the square roots of the generalized eigenvalues of the two Gram
    matrices.  The report is flagged compactness-consistent when, within the
    first ``rank_budget`` values, the profile falls below ``threshold``
    relative to the leading value.
    """
    if m_lower >= m_higher:
        raise InvalidPairError(f"need m_lower < m_higher, got {m_lower}, {m_higher}")
    if m_higher > space.top_level:
        raise LevelOutOfRangeError(f"level {m_higher} exceeds top level {space.top_level}")
    if rank_budget <= 0:
        return EmbeddingReport(m_lower, m_higher, np.zeros(0), threshold, False)
    lo = space.gram_matrix(m_lower)
    hi = space.gram_matrix(m_higher)
    lam = scipy.linalg.eigh(lo, hi, eigvals_only=True)
    sv = np.sqrt(np.clip(lam, 0.0, None))[::-1][:rank_budget]
    flag = bool(sv.size > 1 and sv[-1] <= threshold * sv[0])
    return EmbeddingReport(m_lower, m_higher, sv, threshold, flag)


def translation_action(u: GridFunction, c: float, rho: float) -> GridFunction:
    """Return ``(s, t) -> u(s + c, t + rho)`` on the same cylinder grid.

    Piecewise-cubic interpolation in ``s`` (values past the window are the
    end values, i.e. the asymptotic constants) and periodic cubic
    interpolation in ``t``.
    """
    space = u.space
    if space.kind != "cylinder":
        raise DomainMismatchError("translation action is defined on cylinder spaces")
    if c == 0 and rho == 0:
        return u.with_values(u.values.copy())
    d = space.domain
    vals = u.values
    if c != 0:
        target = np.clip(d.s + c, d.s[0], d.s[-1])
        vals = CubicSpline(d.s, vals, axis=0)(target)
    if rho != 0:
        t_ext = np.append(d.t, 1.0)
        closed = np.concatenate([vals, vals[:, :1]], axis=1)
        spline = CubicSpline(t_ext, closed, axis=1, bc_type="periodic")
        vals = spline(np.mod(d.t + rho, 1.0))
    return u.with_values(vals)


# ---------------------------------------------------------------------------
# sc^1 diagnostics


@dataclass
class LevelPairResult:
    level_in: int
    level_out: int
    steps: list
    quotients: list
    observed_order: float
    zero_remainder: bool


@dataclass
class Sc1Report:
    pairs: list = field(default_factory=list)

    @property
    def min_order(self) -> float:
        orders = [p.observed_order for p in self.pairs if not p.zero_remainder]
        return min(orders) if orders else math.inf

    @property
    def all_zero(self) -> bool:
        return all(p.zero_remainder for p in self.pairs)


def _fit_order(steps, quotients, floor):
    pts = [(math.log(e), math.log(q)) for e, q in zip(steps, quotients) if q > floor]
    if len(pts) < 2:
        return math.inf
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def sc1_check(
    map_eval: Callable,
    u,
    h,
    steps: Sequence[float] = (1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3),
    *,
    derivative: Callable | None = None,
    norm_in: Callable | None = None,
    norm_out: Callable | None = None,
    target_space: ScaleSpace | None = None,
    zero_tol: float = 1e-9,
) -> Sc1Report:
    """Finite-difference check of the sc^1 quotient.

    For each level ``m >= 1`` and step ``eps`` computes
    ``|f(u + eps h) - f(u) - eps Df(u)h|_{m-1} / |eps h|_m``.  ``map_eval``
    acts on raw value arrays.  ``Df(u)h`` is ``derivative(x, h)`` when given,
    otherwise a Richardson-extrapolated central difference.  Custom norms
    ``norm_in(x, m)``/``norm_out(y, m)`` allow non-grid domains.
    """
    x = _vals(u)
    hv = _vals(h)
    space = u.space if isinstance(u, GridFunction) else None
    tspace = target_space or space
    if norm_in is None:
        if space is None:
            raise DomainMismatchError("norm_in required for non-grid inputs")
        norm_in = space.norm_values
    if norm_out is None:
        if tspace is None:
            raise DomainMismatchError("norm_out required for non-grid outputs")
        norm_out = tspace.norm_values
    top = u.declared_level if isinstance(u, GridFunction) else (space.top_level if space else 1)

    def f(arg):
        out = np.asarray(map_eval(arg), dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvaluationError("map produced non-finite values")
        return out

    f0 = f(x)
    if derivative is not None:
        dfh = np.asarray(derivative(x, hv), dtype=float)
    else:
        tau = 1e-3
        d1 = (f(x + tau * hv) - f(x - tau * hv)) / (2 * tau)
        d2 = (f(x + 0.5 * tau * hv) - f(x - 0.5 * tau * hv)) / tau
        dfh = (4.0 * d2 - d1) / 3.0
    remainders = [(eps, f(x + eps * hv) - f0 - eps * dfh) for eps in steps]
    report = Sc1Report()
    for m in range(1, max(top, 1) + 1):
        hn = norm_in(hv, m)
        if hn == 0:
            raise EvaluationError("direction has zero norm")
        qs = [norm_out(r, m - 1) / (eps * hn) for eps, r in remainders]
        zero = max(qs) <= zero_tol
        order = math.inf if zero else _fit_order(list(steps), qs, zero_tol)
        report.pairs.append(LevelPairResult(m, m - 1, list(steps), qs, order, zero))
    return report
