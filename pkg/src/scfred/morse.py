"""Gradient-flow trajectory spaces on R^N.

Trajectories solve ``u' = grad Phi(u)`` and run from a lower critical point
``a`` to a higher one ``b``.  The boundary value problem is discretized by
Hermite-Simpson collocation on a (possibly nonuniform) mesh and solved by
damped Newton with a sparse Jacobian.  Boundary rows project ``u(-L) - a``
onto the stable directions of ``Hess(a)`` and ``u(L) - b`` onto the unstable
directions of ``Hess(b)``; the R-shift is fixed by the phase condition
``Phi(u(0)) = (Phi(a) + Phi(b)) / 2``.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .degen import Element, OperationTable, morse_structure, unbroken
from .errors import (
    CorrectionError,
    DegenerateCriticalPointError,
    InterfaceMismatchError,
    NoTrajectoryFoundError,
    PreconditionError,
    TotalOrderViolationError,
)
from .splicing import CUTOFF, GluingProfile, profile_length

# ---------------------------------------------------------------------------
# problems


class Polynomial:
    """A polynomial on R^N given by ``{exponents: coefficient}``.

    Evaluation is vectorized over leading axes of ``x`` (shape ``(..., N)``).
    """

    def __init__(self, terms: Mapping[tuple, float], N: int | None = None):
        items = [(tuple(int(e) for e in k), float(c)) for k, c in terms.items() if c != 0.0]
        if N is None:
            N = len(items[0][0]) if items else 1
        for k, _ in items:
            if len(k) != N:
                raise ValueError(f"exponent tuple {k} does not have length {N}")
        self.N = N
        self.terms = dict(items)
        exps = np.array([k for k, _ in items], dtype=float).reshape(-1, N)
        coefs = np.array([c for _, c in items], dtype=float)
        self._e, self._c = exps, coefs
        ge, gc = zip(*(self._lower(exps, coefs, k) for k in range(N))) if N else ((), ())
        self._ge, self._gc = np.stack(ge), np.stack(gc)
        he, hc = [], []
        for k in range(N):
            for l in range(N):
                e, c = self._lower(ge[k], gc[k], l)
                he.append(e)
                hc.append(c)
        self._he, self._hc = np.stack(he), np.stack(hc)

    @staticmethod
    def _lower(exps, coefs, k):
        c = coefs * exps[:, k]
        e = exps.copy()
        e[:, k] = np.maximum(e[:, k] - 1, 0)
        return e, c

    @staticmethod
    def _eval(exps, coefs, x):
        x = np.asarray(x, dtype=float)
        if coefs.size == 0:
            return np.zeros(x.shape[:-1] + coefs.shape[:-1])
        xb = x.reshape(x.shape[:-1] + (1,) * (exps.ndim - 1) + x.shape[-1:])
        mono = np.prod(xb**exps, axis=-1)
        return (mono * coefs).sum(axis=-1)

    def value(self, x):
        return self._eval(self._e, self._c, x)

    def grad(self, x):
        return self._eval(self._ge, self._gc, x)

    def hess(self, x):
        H = self._eval(self._he, self._hc, x)
        return H.reshape(H.shape[:-1] + (self.N, self.N))


def parse_polynomial_terms(text: str) -> dict:
    """Parse ``"e1,e2:coef; ..."`` into an exponent table."""
    terms = {}
    for chunk in text.replace("\n", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ValueError(f"polynomial term {chunk!r} lacks ':'")
        exps, coef = chunk.split(":", 1)
        key = tuple(int(e) for e in exps.split(","))
        terms[key] = terms.get(key, 0.0) + float(coef)
    return terms


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    label: str
    x: np.ndarray
    value: float
    index: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def unstable(self) -> np.ndarray:
        """Eigenvectors of ``Hess`` with positive eigenvalue (flow leaves)."""
        return self.eigenvectors[:, self.eigenvalues > 0]

    @property
    def stable(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues < 0]

    @property
    def gap(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "x": [float(v) for v in self.x],
            "value": float(self.value),
            "index": int(self.index),
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }


class MorseProblem:
    """A smooth function on R^N with gradient and Hessian evaluators.

    Args:
        N: ambient dimension.
        phi, grad, hess: vectorized evaluators on arrays of shape ``(..., N)``.
        name: identifier used in reports.
        seeds: starting points for the critical-point search.
        box: half-width of the search and shooting box.
        labeler: maps ``(x, index)`` to a label; defaults to ``p0, p1, ...``
            in order of critical value.
        allow_ties: whether equal critical values are acceptable by default.
    """

    def __init__(
        self,
        N: int,
        phi: Callable,
        grad: Callable,
        hess: Callable,
        *,
        name: str = "custom",
        seeds=None,
        box: float = 2.0,
        labeler: Callable | None = None,
        allow_ties: bool = False,
    ):
        self.N = int(N)
        self._phi, self._grad, self._hess = phi, grad, hess
        self.name = name
        self.seeds = None if seeds is None else np.atleast_2d(np.asarray(seeds, dtype=float))
        self.box = float(box)
        self.labeler = labeler
        self.allow_ties = allow_ties
        self._critical = None

    def phi(self, x):
        return self._phi(np.asarray(x, dtype=float))

    def grad(self, x):
        return self._grad(np.asarray(x, dtype=float))

    def hess(self, x):
        return self._hess(np.asarray(x, dtype=float))

    @classmethod
    def from_polynomial(cls, terms: Mapping[tuple, float], N: int | None = None, **kwargs) -> "MorseProblem":
        poly = Polynomial(terms, N)
        kwargs.setdefault("name", "polynomial")
        prob = cls(poly.N, poly.value, poly.grad, poly.hess, **kwargs)
        prob.polynomial = poly
        return prob

    @classmethod
    def builtin(cls, name: str, **params) -> "MorseProblem":
        try:
            factory = BUILTIN_PROBLEMS[name]
        except KeyError:
            raise ValueError(f"unknown Morse problem {name!r}; choose from {sorted(BUILTIN_PROBLEMS)}") from None
        return factory(**params)

    @property
    def critical_points(self) -> list:
        if self._critical is None:
            self._critical = find_critical_points(self)
        return self._critical

    def point(self, which) -> CriticalPoint:
        if isinstance(which, CriticalPoint):
            return which
        for p in self.critical_points:
            if p.label == which:
                return p
        raise KeyError(f"no critical point labelled {which!r}")

    def midpoint(self, a: CriticalPoint, b: CriticalPoint) -> float:
        return 0.5 * (a.value + b.value)


def _side_labeler(names):
    def lab(x, index):
        key = tuple(int(np.sign(round(v, 6))) for v in x)
        return names[key]

    return lab


def quadratic1d() -> MorseProblem:
    return MorseProblem.from_polynomial({(2,): 0.5}, name="quadratic1d", labeler=lambda x, m: "o")


def cubic1d() -> MorseProblem:
    """``Phi(x) = x - x^3/3``; the orbit from -1 to 1 is ``tanh``."""
    return MorseProblem.from_polynomial(
        {(1,): 1.0, (3,): -1.0 / 3.0},
        name="cubic1d",
        labeler=_side_labeler({(-1,): "a", (1,): "b"}),
    )


def cubic_degenerate() -> MorseProblem:
    return MorseProblem.from_polynomial({(3,): 1.0}, name="cubic_degenerate")


def double_well() -> MorseProblem:
    """``Phi(x, y) = (x^2 - 1)^2 / 4 + y^2 / 2``: two minima and a saddle."""
    return MorseProblem.from_polynomial(
        {(4, 0): 0.25, (2, 0): -0.5, (0, 0): 0.25, (0, 2): 0.5},
        name="double_well",
        labeler=_side_labeler({(-1, 0): "min-", (1, 0): "min+", (0, 0): "saddle"}),
        allow_ties=True,
    )


def chain(c: float = 1.5) -> MorseProblem:
    """``Phi = g(x) + c g(y)`` with ``g(t) = t - t^3/3``.

    Critical points ``min (-1,-1)``, ``s1 (1,-1)``, ``s2 (-1,1)`` and
    ``max (1,1)`` with indices 0, 1, 1, 2; the y-motion has rate ``2c``.
    """
    c = float(c)
    prob = MorseProblem.from_polynomial(
        {(1, 0): 1.0, (3, 0): -1.0 / 3.0, (0, 1): c, (0, 3): -c / 3.0},
        name=f"chain(c={c:g})",
        labeler=_side_labeler({(-1, -1): "min", (1, -1): "s1", (-1, 1): "s2", (1, 1): "max"}),
        seeds=[(sx, sy) for sx in (-1.1, 0.9) for sy in (-1.1, 0.9)],
    )
    prob.c = c
    return prob


def slow_chain(c: float = 1e-3) -> MorseProblem:
    """The chain problem with a slow second coordinate."""
    prob = chain(c)
    prob.name = f"slow_chain(c={c:g})"
    return prob


BUILTIN_PROBLEMS = {
    "quadratic1d": quadratic1d,
    "cubic1d": cubic1d,
    "cubic_degenerate": cubic_degenerate,
    "double_well": double_well,
    "chain": chain,
    "slow_chain": slow_chain,
}


# ---------------------------------------------------------------------------
# critical points


def find_critical_points(
    problem: MorseProblem,
    seeds=None,
    box: float | None = None,
    *,
    grid: int = 5,
    tol: float = 1e-12,
    degenerate_tol: float = 1e-8,
    require_total_order: bool | None = None,
    max_newton: int = 200,
) -> list:
    """Newton roots of ``grad Phi`` with Morse indices, sorted by value.

    Raises:
        DegenerateCriticalPointError: some root has a near-singular Hessian,
            either below ``degenerate_tol`` or too small to be told apart
            from zero at the gradient tolerance ``tol``.
        TotalOrderViolationError: two critical values coincide and a total
            order is required (default: unless the problem allows ties).
    """
    N = problem.N
    box = problem.box if box is None else float(box)
    if seeds is None:
        seeds = problem.seeds
    if seeds is None:
        axis = np.linspace(-box, box, grid)
        seeds = np.stack(np.meshgrid(*([axis] * N), indexing="ij"), axis=-1).reshape(-1, N)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    roots = []
    for x0 in seeds:
        x = x0.copy()
        ok = False
        for _ in range(max_newton):
            g = problem.grad(x)
            if np.max(np.abs(g)) <= tol:
                ok = True
                break
            H = problem.hess(x)
            step = np.linalg.lstsq(H, -g, rcond=None)[0]
            x = x + step
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e3 * (1 + box):
                break
        if ok and np.max(np.abs(x)) <= box * (1 + 1e-9) + 1e-9:
            if all(np.max(np.abs(x - r)) > 1e-6 for r in roots):
                roots.append(x)
    points = []
    for x in roots:
        H = 0.5 * (problem.hess(x) + problem.hess(x).T)
        w, V = np.linalg.eigh(H)
        # a stopped Newton iterate near a degenerate zero has lambda^2 ~ |grad|
        scale = 1.0 + float(np.max(np.abs(w)))
        if np.min(np.abs(w)) <= degenerate_tol or np.min(w * w) <= 100.0 * tol * scale:
            raise DegenerateCriticalPointError(f"degenerate Hessian at {x.tolist()}", point=x)
        points.append((x, float(problem.phi(x)), int(np.sum(w < 0)), w, V))
    points.sort(key=lambda p: (p[1], tuple(p[0])))
    strict = (not problem.allow_ties) if require_total_order is None else require_total_order
    if strict:
        for p, q in zip(points, points[1:]):
            if abs(p[1] - q[1]) <= 1e-10 * (1 + abs(p[1])):
                raise TotalOrderViolationError(f"critical values at {p[0].tolist()} and {q[0].tolist()} coincide")
    out = []
    for i, (x, v, m, w, V) in enumerate(points):
        label = problem.labeler(x, m) if problem.labeler else f"p{i}"
        out.append(CriticalPoint(label, x, v, m, w, V))
    return out


# ---------------------------------------------------------------------------
# trajectories


@dataclass(eq=False)
class Trajectory:
    """A discretized flow line ``s -> u(s)`` from ``a`` to ``b``.

    ``du`` holds the derivative at the nodes (``grad Phi(u)`` for solved
    curves), which together with ``u`` defines a C^1 Hermite interpolant.
    Outside the mesh the curve is continued by its end values.
    """

    problem: MorseProblem
    a: CriticalPoint
    b: CriticalPoint
    s: np.ndarray
    u: np.ndarray
    du: np.ndarray
    residual: float = 0.0
    newton_steps: int = 0
    meta: dict = field(default_factory=dict)
    _spline: object = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, problem, a, b, s, u, du=None, **kwargs) -> "Trajectory":
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float).reshape(len(s), -1)
        if du is None:
            du = np.gradient(u, s, axis=0, edge_order=2)
        return cls(problem, problem.point(a), problem.point(b), s, u, np.asarray(du, dtype=float), **kwargs)

    @property
    def L(self) -> float:
        return float(max(-self.s[0], self.s[-1]))

    @property
    def spline(self):
        if self._spline is None:
            self._spline = CubicHermiteSpline(self.s, self.u, self.du, axis=0)
        return self._spline

    def __call__(self, t, nu: int = 0):
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.s[0], self.s[-1])
        out = self.spline(tc, nu) if nu else self.spline(tc)
        if nu:
            out = np.where(((t < self.s[0]) | (t > self.s[-1]))[..., None], 0.0, out)
        return out

    def phase_error(self) -> float:
        return float(self.problem.phi(self(0.0)) - self.problem.midpoint(self.a, self.b))

    @property
    def spectrum(self):
        return spectrum(self)

    def rows(self):
        for t, x in zip(self.s, self.u):
            yield (float(t),) + tuple(float(v) for v in x)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s"] + [f"u{i + 1}" for i in range(self.u.shape[1])])
            for row in self.rows():
                w.writerow([repr(v) for v in row])


def uniform_mesh(L: float, h: float) -> np.ndarray:
    n = max(1, int(round(L / h)))
    return np.linspace(-n * h, n * h, 2 * n + 1)


def default_length(a: CriticalPoint, b: CriticalPoint, tol: float = 1e-10, cap: float = 40.0) -> float:
    """Truncation ``L`` with ``exp(-gap L) < tol``, capped for large ``L``."""
    gap = min(a.gap, b.gap)
    return float(min(math.log(1.0 / tol) / gap, cap))


@dataclass
class _Condition:
    node: int
    fun: Callable
    grad: Callable


def _linear_conditions(node, basis, point):
    out = []
    for e in basis.T:
        e = e.copy()
        out.append(_Condition(node, lambda x, e=e: float(e @ (x - point)), lambda x, e=e: e))
    return out


def _hs_system(problem, s, U, conditions, jac=True):
    M1, N = U.shape
    M = M1 - 1
    h = np.diff(s)[:, None]
    F = problem.grad(U)
    Um = 0.5 * (U[:-1] + U[1:]) + h / 8.0 * (F[:-1] - F[1:])
    Fm = problem.grad(Um)
    r = U[1:] - U[:-1] - h / 6.0 * (F[:-1] + 4.0 * Fm + F[1:])
    cvals = np.array([c.fun(U[c.node]) for c in conditions])
    res = np.concatenate([r.ravel(), cvals])
    if not jac:
        return res, F
    H = problem.hess(U)
    Hm = problem.hess(Um)
    hh = h[:, :, None]
    I = np.eye(N)
    A = -I - hh / 6.0 * H[:-1] - hh / 3.0 * Hm - hh**2 / 12.0 * (Hm @ H[:-1])
    B = I - hh / 6.0 * H[1:] - hh / 3.0 * Hm + hh**2 / 12.0 * (Hm @ H[1:])
    i = np.arange(M)[:, None, None]
    p = np.arange(N)[None, :, None]
    q = np.arange(N)[None, None, :]
    rows = np.broadcast_to(i * N + p, (M, N, N))
    colsA = np.broadcast_to(i * N + q, (M, N, N))
    rr = [rows.ravel(), rows.ravel()]
    cc = [colsA.ravel(), (colsA + N).ravel()]
    vv = [A.ravel(), B.ravel()]
    for k, c in enumerate(conditions):
        rr.append(np.full(N, M * N + k))
        cc.append(c.node * N + np.arange(N))
        vv.append(np.asarray(c.grad(U[c.node]), dtype=float))
    J = sp.csc_matrix(
        (np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))),
        shape=(M * N + len(conditions), M1 * N),
    )
    return res, F, J


def _scaled_residual(s, res, N, n_cond):
    """Collocation defects divided by the local step, and condition values."""
    M = len(s) - 1
    h = np.diff(s)
    coll = np.abs(res[: M * N].reshape(M, N)) / h[:, None]
    cond = np.abs(res[M * N :])
    return float(max(coll.max(initial=0.0), cond.max(initial=0.0)))


def _solve_bvp(problem, s, U0, conditions, *, tol, max_iter, guard=None):
    with np.errstate(over="ignore", invalid="ignore"):
        return _newton(problem, s, U0, conditions, tol=tol, max_iter=max_iter, guard=guard)


def _newton(problem, s, U0, conditions, *, tol, max_iter, guard):
    M1, N = U0.shape
    if (M1 - 1) * N + len(conditions) != M1 * N:
        raise PreconditionError(
            f"{len(conditions)} boundary/phase conditions for an N={N} problem: "
            + ("overdetermined" if len(conditions) > N else "underdetermined")
        )
    U = U0.copy()
    res, F = _hs_system(problem, s, U, conditions, jac=False)
    err = _scaled_residual(s, res, N, len(conditions))
    history = [err]
    steps = 0
    while err > tol and steps < max_iter:
        res, F, J = _hs_system(problem, s, U, conditions)
        try:
            delta = spla.spsolve(J, -res).reshape(M1, N)
        except RuntimeError as exc:
            raise NoTrajectoryFoundError(f"singular collocation Jacobian: {exc}", residual=err) from None
        if not np.all(np.isfinite(delta)):
            raise NoTrajectoryFoundError("singular collocation Jacobian", residual=err)
        base = np.linalg.norm(res)
        lam = 1.0
        while True:
            trial = U + lam * delta
            tres, _ = _hs_system(problem, s, trial, conditions, jac=False)
            if np.all(np.isfinite(tres)) and (np.linalg.norm(tres) < base or lam < 1e-3):
                break
            lam *= 0.5
        U = trial
        steps += 1
        err = _scaled_residual(s, tres, N, len(conditions))
        history.append(err)
        if guard is not None:
            guard(U, history)
        if not np.isfinite(err):
            break
    if not err <= tol:
        raise NoTrajectoryFoundError(f"Newton did not converge (residual {err:.3e})", residual=err)
    return U, steps, err, history


def _initial_values(guess, s, a, b, N):
    if guess is None:
        w = 0.5 * (1.0 + np.tanh(s))[:, None]
        return a.x[None, :] * (1 - w) + b.x[None, :] * w
    if isinstance(guess, Trajectory):
        if np.array_equal(s, guess.s):
            return guess.u.copy()
        return np.asarray(guess(s), dtype=float).reshape(len(s), N)
    if callable(guess):
        return np.asarray(guess(s), dtype=float).reshape(len(s), N)
    vals = np.asarray(guess, dtype=float)
    if vals.shape[0] != len(s):
        raise ValueError(f"initial guess has {vals.shape[0]} samples for a mesh of {len(s)} nodes")
    return vals.reshape(len(s), N)


def solve_trajectory(
    problem: MorseProblem,
    a,
    b,
    initial_guess=None,
    *,
    L: float | None = None,
    h: float | None = None,
    mesh=None,
    tol: float = 1e-11,
    max_iter: int = 50,
    endpoint_tol: float = 1e-4,
) -> Trajectory:
    """Solve for the connecting orbit from ``a`` to ``b`` (index difference 1).

    The mesh is ``mesh`` if given, else the mesh of a Trajectory guess,
    else uniform on ``[-L, L]`` with step ``h`` (default 0.01).  If the
    guess already meets the tolerance it is returned with zero Newton steps.

    Raises:
        PreconditionError: ``Phi(a) >= Phi(b)`` or the index difference is
            not 1 (the BVP would be over- or underdetermined).
        NoTrajectoryFoundError: Newton failed; this does not prove emptiness.
    """
    a, b = problem.point(a), problem.point(b)
    if not a.value < b.value:
        raise PreconditionError(f"need Phi({a.label}) < Phi({b.label}), got {a.value} >= {b.value}")
    k = b.index - a.index
    if k < 1:
        raise PreconditionError(f"index difference {k} < 1: the boundary value problem is overdetermined")
    if k > 1:
        raise PreconditionError(f"index difference {k} > 1: solutions form a family; pin it with slice conditions")
    if mesh is not None:
        s = np.asarray(mesh, dtype=float)
    elif isinstance(initial_guess, Trajectory) and L is None and h is None:
        s = initial_guess.s.copy()
    else:
        s = uniform_mesh(default_length(a, b) if L is None else L, 0.01 if h is None else h)
    i0 = int(np.argmin(np.abs(s)))
    if abs(s[i0]) > 1e-12 * (1 + abs(s[0])):
        raise ValueError("the mesh must contain s = 0")
    N = problem.N
    U0 = _initial_values(initial_guess, s, a, b, N)
    mid = problem.midpoint(a, b)
    conds = _linear_conditions(0, a.stable, a.x)
    conds += _linear_conditions(len(s) - 1, b.unstable, b.x)
    conds.append(_Condition(i0, lambda x: float(problem.phi(x) - mid), lambda x: problem.grad(x)))
    U, steps, err, _ = _solve_bvp(problem, s, U0, conds, tol=tol, max_iter=max_iter)
    if steps == 0 and isinstance(initial_guess, Trajectory) and initial_guess.s is not None and np.array_equal(s, initial_guess.s):
        du = initial_guess.du.copy()
    else:
        du = problem.grad(U)
    scale = max(1.0, float(np.max(np.abs(b.x - a.x))))
    gap_a = float(np.max(np.abs(U[0] - a.x)))
    gap_b = float(np.max(np.abs(U[-1] - b.x)))
    if max(gap_a, gap_b) > endpoint_tol * scale:
        raise NoTrajectoryFoundError(
            f"converged curve misses the endpoints (|u(-L)-a|={gap_a:.2e}, |u(L)-b|={gap_b:.2e})", residual=err
        )
    return Trajectory(problem, a, b, s, U, du, residual=err, newton_steps=steps)


def _jacobian_inverse_norm(problem, traj, n_probe=3, seed=0):
    """Rough estimate of the inverse norm of the linearized BVP."""
    s, U = traj.s, traj.u
    a, b = traj.a, traj.b
    mid = problem.midpoint(a, b)
    i0 = int(np.argmin(np.abs(s)))
    conds = _linear_conditions(0, a.stable, a.x) + _linear_conditions(len(s) - 1, b.unstable, b.x)
    conds.append(_Condition(i0, lambda x: float(problem.phi(x) - mid), lambda x: problem.grad(x)))
    _, _, J = _hs_system(problem, s, U, conds)
    lu = spla.splu(J)
    rng = np.random.default_rng(seed)
    est = 0.0
    for _ in range(n_probe):
        x = rng.standard_normal(J.shape[0])
        y = lu.solve(x)
        est = max(est, np.linalg.norm(y) / np.linalg.norm(x))
    return float(est)


# ---------------------------------------------------------------------------
# enumeration by shooting


@dataclass
class EnumerationResult:
    a: CriticalPoint
    b: CriticalPoint
    trajectories: list
    warnings: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.trajectories)

    @property
    def parity(self) -> int:
        return self.count % 2

    @property
    def reliable(self) -> bool:
        return not self.warnings


def _shoot(problem, a, b, start, t_max, dphi):
    box = 5.0 * problem.box

    def rhs(t, x):
        return problem.grad(x)

    def above(t, x):
        return problem.phi(x) - (b.value + dphi)

    above.terminal, above.direction = True, 1.0

    def escape(t, x):
        return box - np.max(np.abs(x))

    escape.terminal, escape.direction = True, -1.0

    sol = solve_ivp(rhs, (0.0, t_max), start, method="DOP853", rtol=1e-12, atol=1e-14,
                    events=(above, escape), dense_output=True)
    ts = np.linspace(sol.t[0], sol.t[-1], 4001)
    xs = sol.sol(ts).T
    dist = np.max(np.abs(xs - b.x), axis=1)
    j = int(np.argmin(dist))
    return sol, ts, xs, float(dist[j]), j


def _guess_from_shot(problem, a, b, ts, xs, j):
    """Phase-normalized samples of a shot, truncated at closest approach."""
    ts, xs = ts[: j + 1], xs[: j + 1]
    mid = problem.midpoint(a, b)
    ph = problem.phi(xs) - mid
    k = int(np.argmax(ph >= 0))
    if ph[k] < 0 or k == 0:
        return None
    t0, t1 = ts[k - 1], ts[k]
    tstar = t0 - ph[k - 1] * (t1 - t0) / (ph[k] - ph[k - 1])

    def guess(s):
        t = np.asarray(s) + tstar
        out = np.empty((len(t), problem.N))
        for i in range(problem.N):
            out[:, i] = np.interp(t, ts, xs[:, i], left=xs[0, i], right=b.x[i])
        return out

    return guess


def enumerate_trajectories_index1(
    problem: MorseProblem,
    a,
    b,
    *,
    n_angles: int = 64,
    refine: bool = False,
    eps: float = 1e-5,
    close_tol: float = 0.05,
    workers: int | None = None,
    L: float | None = None,
    h: float | None = None,
) -> EnumerationResult:
    """Connecting orbits from ``a`` to ``b`` when ``m(b) - m(a) = 1``.

    Multi-start shooting from a circle (or the two points ``+-e``) in the
    unstable subspace of ``Hess(a)``, bisection on the sign of the unstable
    coordinate at ``b``, polishing by :func:`solve_trajectory` and
    deduplication of the phase-normalized curves.

    Raises:
        PreconditionError: wrong index difference or ordering, or an unstable
            sphere of dimension above 1.
    """
    a, b = problem.point(a), problem.point(b)
    if b.index - a.index != 1:
        raise PreconditionError(f"index difference m(b) - m(a) = {b.index - a.index}, expected 1")
    if not a.value < b.value:
        raise PreconditionError(f"need Phi({a.label}) < Phi({b.label})")
    Eu = a.unstable
    du = Eu.shape[1]
    if du > 2:
        raise PreconditionError(f"unstable sphere of dimension {du - 1} is not supported (only 0 and 1)")
    lam_a = float(np.min(a.eigenvalues[a.eigenvalues > 0]))
    t_max = math.log(1.0 / eps) / lam_a + 2.0 * math.log(1e12) / b.gap + 20.0
    dphi = 0.1 * (b.value - a.value)
    if n_angles and refine:
        n_angles *= 4

    def shot(direction):
        return _shoot(problem, a, b, a.x + eps * (Eu @ direction), t_max, dphi)

    candidates = []
    if du == 1:
        for sign in (1.0, -1.0):
            sol, ts, xs, dmin, j = shot(np.array([sign]))
            if dmin < 1e-3:
                candidates.append((ts, xs, j))
    else:
        e_b = b.unstable[:, 0]
        thetas = 2.0 * math.pi * np.arange(n_angles) / n_angles

        def g_of(theta):
            sol, ts, xs, dmin, j = shot(np.array([math.cos(theta), math.sin(theta)]))
            return float(e_b @ (xs[-1] - b.x)), (ts, xs, dmin, j)

        with ThreadPoolExecutor(max_workers=workers or min(8, os.cpu_count() or 1)) as pool:
            gs = list(pool.map(g_of, thetas))
        for i in range(n_angles):
            (g0, _), (g1, _) = gs[i], gs[(i + 1) % n_angles]
            if g0 == 0.0 or np.sign(g0) != np.sign(g1):
                lo, hi = thetas[i], thetas[i] + 2.0 * math.pi / n_angles
                glo = g0
                info = gs[i][1]
                while hi - lo > 1e-9 and glo != 0.0:
                    m = 0.5 * (lo + hi)
                    gm, info = g_of(m)
                    if np.sign(gm) == np.sign(glo):
                        lo, glo = m, gm
                    else:
                        hi = m
                ts, xs, dmin, j = info
                if dmin < close_tol:
                    candidates.append((ts, xs, j))

    found, warnings = [], []
    for ts, xs, j in candidates:
        guess = _guess_from_shot(problem, a, b, ts, xs, j)
        if guess is None:
            continue
        try:
            traj = solve_trajectory(problem, a, b, guess, L=L, h=h)
        except NoTrajectoryFoundError:
            continue
        if any(np.max(np.abs(traj.u - t.u)) < 1e-6 for t in found):
            continue
        inv = _jacobian_inverse_norm(problem, traj)
        if inv > 1e10:
            warnings.append(f"possible non-transversality for {a.label}->{b.label} (inverse norm {inv:.2e})")
        found.append(traj)
    return EnumerationResult(a, b, found, warnings)


# ---------------------------------------------------------------------------
# counting and broken trajectories


def structure_of(problem: MorseProblem):
    pts = problem.critical_points
    return morse_structure([(p.label, p.value) for p in pts], allow_ties=problem.allow_ties)


def enumerate_all(problem: MorseProblem, **kwargs) -> dict:
    """Enumeration results for every pair with index difference 1."""
    out = {}
    for p in problem.critical_points:
        for q in problem.critical_points:
            if q.index - p.index == 1 and p.value < q.value:
                out[(p.label, q.label)] = enumerate_trajectories_index1(problem, p, q, **kwargs)
    return out


def counting_function(problem: MorseProblem, ring: str = "Z2", enumerations: dict | None = None, **kwargs):
    """The counting function ``Q`` on ``S = {(a, b) : Phi(a) < Phi(b)}``.

    ``Q(a, b)`` counts orbits when ``m(b) - m(a) = 1`` and is 0 otherwise;
    the grading of ``(a, b)`` is the parity of ``m(b) - m(a)``.  Over Z the
    value is the unsigned orbit count.
    """
    from .algebra import CountingFunction

    structure = structure_of(problem)
    index = {p.label: p.index for p in problem.critical_points}
    if enumerations is None:
        enumerations = enumerate_all(problem, **kwargs)
    values, warnings = {}, []
    for pair in structure.S:
        res = enumerations.get(pair)
        if res is None:
            values[pair] = 0
            continue
        warnings.extend(res.warnings)
        values[pair] = res.count % 2 if ring == "Z2" else res.count
    grading = {pair: (index[pair[1]] - index[pair[0]]) % 2 for pair in structure.S}
    return CountingFunction(structure, values, grading, ring=ring, warnings=tuple(warnings))


@dataclass(eq=False)
class BrokenTrajectory:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a broken trajectory needs at least one component")
        for u, v in zip(comps, comps[1:]):
            if u.b.label != v.a.label:
                raise InterfaceMismatchError(f"component ends at {u.b.label!r} but the next starts at {v.a.label!r}")
        self.components = comps

    @property
    def d(self) -> int:
        return len(self.components) - 1

    @property
    def points(self) -> tuple:
        return (self.components[0].a.label,) + tuple(c.b.label for c in self.components)

    @property
    def spectrum(self):
        return spectrum(self)


def spectrum(x):
    """``((a0,a1), ..., (a_{k-1},a_k); (a0,a_k))`` for a (broken) trajectory."""
    if isinstance(x, Trajectory):
        pts = (x.a.label, x.b.label)
    else:
        pts = x.points
    pairs = tuple((p, q) for p, q in zip(pts, pts[1:]))
    return pairs, (pts[0], pts[-1])


def solution_set(problem: MorseProblem, enumerations: dict):
    """Index-one orbits and all their broken composites as symbolic elements.

    Returns:
        ``(table, K)`` with ``K`` ordered by target and identifier.
    """
    table = OperationTable(structure_of(problem))
    atoms = {}
    for (p, q), res in sorted(enumerations.items()):
        atoms[(p, q)] = [unbroken((p, q), f"{p}->{q}#{i}") for i in range(res.count)]
    K = [e for key in sorted(atoms) for e in atoms[key]]
    frontier = list(K)
    while frontier:
        nxt = []
        for x in frontier:
            end = x.target[1]
            for (p, q), elems in sorted(atoms.items()):
                if p != end:
                    continue
                for y in elems:
                    z = table.compose((x.target, (p, q), (x.target[0], q)), x, y)
                    nxt.append(z)
        K.extend(nxt)
        frontier = nxt
    K = sorted(dict.fromkeys(K), key=lambda e: (repr(e.target), e.d, str(e)))
    return table, K


# ---------------------------------------------------------------------------
# pregluing and correction


def _mesh_from_spacing(lo, hi, spacing, mandatory):
    nodes = [lo]
    x = lo
    mand = sorted(p for p in mandatory if lo < p < hi)
    while x < hi:
        step = spacing(x)
        nxt = x + step
        for p in mand:
            if x < p < nxt + 0.5 * step:
                nxt = p
                break
        if nxt >= hi - 0.5 * step:
            nxt = hi
        nodes.append(nxt)
        x = nxt
    return np.array(nodes)


def glued_mesh(u: Trajectory, v: Trajectory, R: float, h_max: float | None = 2.0, grading: float = 0.1):
    """Nodes for the glued curve on ``[u.s[0], R + v.s[-1]]``.

    Fine where either component lives and across the cut-off window around
    ``R/2``, geometrically graded in between.  ``s = 0`` and ``s = R`` are
    nodes.
    """
    hu = float(np.min(np.diff(u.s)))
    hv = float(np.min(np.diff(v.s)))
    ho = min(hu, hv, 0.02)
    intervals = [
        (u.s[0], u.s[-1], hu),
        (R + v.s[0], R + v.s[-1], hv),
        (R / 2 - 1.5, R / 2 + 1.5, ho),
    ]

    def spacing(x):
        best = math.inf
        for lo, hi, hI in intervals:
            dist = max(lo - x, x - hi, 0.0)
            best = min(best, hI + grading * dist)
        return best if h_max is None else min(best, h_max)

    lo = min(u.s[0], R + v.s[0])
    hi = max(u.s[-1], R + v.s[-1])
    return _mesh_from_spacing(lo, hi, spacing, (0.0, R))


def _glued_fields(u, v, R, t):
    b, db = CUTOFF.values(np.asarray(t) - R / 2.0)
    U, dU = u(t), u(t, 1)
    V, dV = v(t - R), v(t - R, 1)
    w = V + b[:, None] * (U - V)
    dw = db[:, None] * (U - V) + b[:, None] * dU + (1.0 - b[:, None]) * dV
    return w, dw


def preglue_broken(x, r: float, profile="exponential", *, h_max="auto") -> Trajectory:
    """``w(s) = beta(s - R/2) u(s) + (1 - beta(s - R/2)) v(s - R)``, recentred.

    ``R = phi(r)``.  The result is phase-normalized; ``meta["offset"]``
    converts its parameter back to glued coordinates (``t = s + offset``)
    and ``residual`` is ``max |w' - grad Phi(w)|`` over the nodes.

    Raises:
        InterfaceMismatchError: the components do not share the middle point.
    """
    if not isinstance(x, BrokenTrajectory):
        x = BrokenTrajectory(tuple(x))
    if x.d != 1:
        raise PreconditionError(f"pregluing needs exactly two components, got {len(x.components)}")
    u, v = x.components
    prof = profile if isinstance(profile, GluingProfile) else GluingProfile.named(profile)
    R = profile_length(prof, r)
    if not 0.0 < r < 1.0:
        raise PreconditionError(f"gluing parameter must lie in (0, 1), got {r}")
    if h_max == "auto":
        span = (R + v.s[-1]) - u.s[0]
        h_max = 2.0 if span / 2.0 < 1e6 else None
    problem = u.problem
    t = glued_mesh(u, v, R, h_max)
    w, _ = _glued_fields(u, v, R, t)
    a, c = u.a, v.b
    mid = problem.midpoint(a, c)
    ph = problem.phi(w) - mid
    k = int(np.argmax(ph >= 0))
    if ph[k] < 0 or (k == 0 and ph[0] > 0):
        # no crossing (e.g. constant test doubles): leave the parameter as is
        offset = 0.0
    elif ph[k] == 0 or k == 0:
        offset = float(t[k])
    else:
        f = lambda z: float(problem.phi(_glued_fields(u, v, R, np.array([z]))[0][0]) - mid)
        offset = brentq(f, t[k - 1], t[k], xtol=1e-14, rtol=4 * np.finfo(float).eps)
        if np.min(np.abs(t - offset)) > 1e-12:
            t = np.sort(np.append(t, offset))
    w, dw = _glued_fields(u, v, R, t)
    resid = float(np.max(np.linalg.norm(dw - problem.grad(w), axis=1)))
    return Trajectory(
        problem, a, c, t - offset, w, dw, residual=resid,
        meta={"R": R, "r": float(r), "offset": offset, "broken": x, "kind": "preglued"},
    )


def correct_pregluing(
    problem: MorseProblem,
    preglued: Trajectory,
    r: float | None = None,
    *,
    basin: float = 3.0,
    tol: float = 1e-11,
    max_iter: int = 40,
) -> Trajectory:
    """Newton correction of a preglued curve to a true trajectory.

    The correction ``xi = w - w0`` is pinned by the slices
    ``<w(0) - u(0), u'(0)> = 0`` and ``<w(R) - v(0), v'(0)> = 0`` (glued
    coordinates) plus the projected end conditions, which is the
    discrete form of restricting to ``ker`` of the anti-gluing.

    Raises:
        CorrectionError: Newton left the basin ``|xi| <= basin`` or failed.
    """
    meta = preglued.meta
    u, v = meta["broken"].components
    R, offset = meta["R"], meta["offset"]
    if r is not None and not math.isclose(meta["r"], r, rel_tol=1e-12):
        raise PreconditionError(f"preglued curve was built for r={meta['r']}, not {r}")
    a, c = preglued.a, preglued.b
    if c.index - a.index != 2:
        raise PreconditionError(f"index difference {c.index - a.index}; correction of two-level breaking needs 2")
    s = preglued.s
    iu = int(np.argmin(np.abs(s + offset)))
    iv = int(np.argmin(np.abs(s + offset - R)))
    nu = u(0.0, 1)
    nu = nu / np.linalg.norm(nu)
    nv = v(0.0, 1)
    nv = nv / np.linalg.norm(nv)
    pu, pv = u(0.0), v(0.0)
    conds = _linear_conditions(0, a.stable, a.x) + _linear_conditions(len(s) - 1, c.unstable, c.x)
    conds.append(_Condition(iu, lambda x: float(nu @ (x - pu)), lambda x: nu))
    conds.append(_Condition(iv, lambda x: float(nv @ (x - pv)), lambda x: nv))
    U0 = preglued.u

    def guard(U, history):
        size = float(np.max(np.abs(U - U0)))
        if size > basin:
            raise CorrectionError(f"correction left the basin (|xi| = {size:.3g} > {basin})", history=history)

    try:
        U, steps, err, hist = _solve_bvp(problem, s, U0, conds, tol=tol, max_iter=max_iter, guard=guard)
    except NoTrajectoryFoundError as exc:
        raise CorrectionError(f"correction failed: {exc}", history=[exc.residual]) from None
    traj = Trajectory(problem, a, c, s.copy(), U, problem.grad(U), residual=err, newton_steps=steps)
    mid = problem.midpoint(a, c)
    ph = problem.phi(U) - mid
    k = int(np.argmax(ph >= 0))
    shift = 0.0
    if k > 0 and ph[k] != 0:
        shift = brentq(lambda z: float(problem.phi(traj(z)) - mid), s[k - 1], s[k], xtol=1e-14)
    traj.s = s - shift
    traj._spline = None
    traj.meta = {"R": R, "r": meta["r"], "offset": offset + shift, "broken": meta["broken"], "kind": "corrected",
                 "history": hist}
    return traj


def broken_distance(glued: Trajectory, broken: BrokenTrajectory | None = None, *, parts: bool = False):
    """Componentwise distance from a glued curve to the broken pair.

    The shift is pinned by the slices through ``u(0)`` and ``v(0)``: the
    first part compares ``w(s)`` with ``u(s)`` for ``s <= R/2`` and the
    second compares ``w(R + s)`` with ``v(s)`` for ``s >= -R/2``, both in
    the sup norm over the component's nodes.
    """
    broken = broken or glued.meta["broken"]
    u, v = broken.components
    R, offset = glued.meta["R"], glued.meta["offset"]
    su = u.s[u.s <= R / 2.0]
    sv = v.s[v.s >= -R / 2.0]
    du = float(np.max(np.abs(glued(su - offset) - u.u[: len(su)]))) if len(su) else 0.0
    dv = float(np.max(np.abs(glued(R + sv - offset) - v.u[len(v.s) - len(sv):]))) if len(sv) else 0.0
    d = max(du, dv)
    return (d, du, dv) if parts else d


@dataclass
class SweepRow:
    r: float
    R: float
    preglued_residual: float
    corrected_residual: float
    distance: float
    newton_steps: int

    def to_dict(self):
        return {k: getattr(self, k) for k in ("r", "R", "preglued_residual", "corrected_residual", "distance", "newton_steps")}


def broken_pair(problem: MorseProblem, a, b, c, *, L_u=None, h_u=None, L_v=None, h_v=None) -> BrokenTrajectory:
    """Solve both index-one components of ``a -> b -> c``."""
    u = solve_trajectory(problem, a, b, L=L_u, h=h_u)
    v = solve_trajectory(problem, b, c, L=L_v, h=h_v)
    return BrokenTrajectory((u, v))


def slow_chain_pair(c: float = 1e-3) -> BrokenTrajectory:
    """The broken pair ``min -> s1 -> max`` of the slow chain.

    The first component moves only in ``x`` (a tanh on a short window);
    the second is ``tanh(c s)`` in ``y`` and needs ``L ~ 23 / (2c)``.
    """
    prob = slow_chain(c)
    L_v = math.log(1e10) / (2.0 * c)
    return broken_pair(prob, "min", "s1", "max", L_u=15.0, h_u=0.02, L_v=L_v, h_v=min(1.0, 0.05 / c))


def pregluing_sweep(broken: BrokenTrajectory, radii: Sequence[float], profile="exponential", **kwargs) -> list:
    """Preglue, correct and measure at each gluing parameter."""
    problem = broken.components[0].problem
    rows = []
    for r in radii:
        pre = preglue_broken(broken, r, profile)
        cor = correct_pregluing(problem, pre, r, **kwargs)
        rows.append(SweepRow(float(r), pre.meta["R"], pre.residual, cor.residual, broken_distance(cor, broken),
                             cor.newton_steps))
    return rows
