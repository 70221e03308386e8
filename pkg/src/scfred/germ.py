"""Contraction germs ``f(v, u) = u - B(v, u)``, their solution germs, and fillers.

The solver is plain Banach iteration from ``u = 0``.  Each level ``m`` has a
norm, a declared contraction factor ``Theta_m`` and a trust radius for the
parameter.  Trust radii default to halving per level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConvergenceError,
    DegenerateCriticalPointError,
    DomainMismatchError,
    NotAContractionError,
    TrustRegionError,
)
from .scspace import Domain, ScaleSpace, make_scale_space
from .splicing import SplicingKernel, splicing_projection

DEFAULT_SHRINK = 0.5


def _euclid(x, m):
    # rescale first: squaring tiny entries underflows to subnormals and skews rate estimates
    x = np.ravel(np.asarray(x, dtype=float))
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    return peak * float(np.linalg.norm(x / peak))


@dataclass(frozen=True, eq=False)
class ContractionGerm:
    """Normal form ``u - B(v, u)`` around ``(0, 0)``.

    Args:
        B: callable ``(v, u, level) -> array`` shaped like ``u``.
        u_shape: shape of the unknown.
        param_dim: number of parameter coordinates.
        contraction_factors: declared ``Theta_m`` for each level.
        trust_radii: parameter radius per level; ``None`` halves a unit
            radius per level.
        norm: callable ``(x, m) -> float``; Euclidean on every level by default.
        cone_dims: the first ``cone_dims`` parameter coordinates must be >= 0.
    """

    B: Callable
    u_shape: tuple
    param_dim: int
    contraction_factors: tuple
    trust_radii: tuple | None = None
    norm: Callable = _euclid
    cone_dims: int = 0
    name: str = "custom"

    def __post_init__(self):
        thetas = tuple(float(t) for t in self.contraction_factors)
        if any(not 0.0 < t < 1.0 for t in thetas):
            raise NotAContractionError(f"declared factors must lie in (0, 1), got {thetas}")
        object.__setattr__(self, "contraction_factors", thetas)
        if self.trust_radii is None:
            radii = tuple(DEFAULT_SHRINK**m for m in range(len(thetas)))
            object.__setattr__(self, "trust_radii", radii)
        elif len(self.trust_radii) != len(thetas):
            raise TrustRegionError("one trust radius per level is required")
        object.__setattr__(self, "u_shape", tuple(self.u_shape))

    @property
    def levels(self) -> int:
        return len(self.contraction_factors)

    def f(self, v, u, level=0):
        return np.asarray(u) - self.B(v, u, level)

    def check_parameter(self, v, level):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.size != self.param_dim:
            raise DomainMismatchError(f"parameter has {v.size} coordinates, expected {self.param_dim}")
        if not 0 <= level < self.levels:
            raise TrustRegionError(f"level {level} not in 0..{self.levels - 1}")
        if self.cone_dims and np.any(v[: self.cone_dims] < 0):
            raise TrustRegionError("parameter leaves the partial cone")
        if np.linalg.norm(v) > self.trust_radii[level] * (1 + 1e-12):
            raise TrustRegionError(
                f"|v| = {np.linalg.norm(v):.3g} exceeds the level-{level} trust radius {self.trust_radii[level]:.3g}"
            )
        return v


def sample_contraction(germ: ContractionGerm, level, n_samples=200, rng=None, u_radius=None) -> float:
    """Largest sampled ``|B(v,u) - B(v,u')|_m / |u - u'|_m``.

    Raises:
        NotAContractionError: a sampled ratio exceeds the declared factor.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    r = germ.trust_radii[level]
    ur = r if u_radius is None else u_radius
    worst = 0.0
    ratios = []
    for _ in range(n_samples):
        v = rng.uniform(-1, 1, germ.param_dim)
        if germ.cone_dims:
            v[: germ.cone_dims] = np.abs(v[: germ.cone_dims])
        v *= r / max(1.0, np.linalg.norm(v)) * rng.uniform(0, 1)
        u1 = rng.uniform(-ur, ur, germ.u_shape)
        u2 = rng.uniform(-ur, ur, germ.u_shape)
        du = germ.norm(u1 - u2, level)
        if du == 0:
            continue
        q = germ.norm(germ.B(v, u1, level) - germ.B(v, u2, level), level) / du
        ratios.append(q)
        worst = max(worst, q)
    if worst > germ.contraction_factors[level]:
        raise NotAContractionError(
            f"sampled ratio {worst:.4g} exceeds declared factor {germ.contraction_factors[level]}", ratios
        )
    return worst


@dataclass
class SolveLog:
    level: int
    residuals: list = field(default_factory=list)
    rates: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def observed_rate(self) -> float:
        """Largest successive-difference ratio away from round-off."""
        if not self.rates:
            return 0.0
        floor = 1e-11 * max(self.residuals[0], 1e-300)
        usable = [q for q, prev in zip(self.rates, self.residuals[:-1]) if prev > floor]
        return max(usable) if usable else 0.0

    def rows(self):
        return [(i, self.level, r) for i, r in enumerate(self.residuals)]


def solve_germ(germ: ContractionGerm, v, level=0, tol=1e-14, max_iter=500, window=3, log=None):
    """Solve ``u = B(v, u)`` by Banach iteration from ``u = 0``.

    Iterates until the level-``m`` residual ``|u - B(v, u)|_m`` is at most
    ``tol`` (relative to ``1 + |u|_m``), then runs a few extra sweeps and
    returns the iterate with the smallest residual, so exact fixed points
    are reached when floating point allows.

    Returns:
        ``(u, log)`` with the per-iteration residuals and contraction rates.

    Raises:
        NotAContractionError: the residual ratio is >= 1 for ``window``
            consecutive steps.
        ConvergenceError: ``max_iter`` reached.
    """
    v = germ.check_parameter(v, level)
    log = SolveLog(level) if log is None else log
    u = np.zeros(germ.u_shape)
    streak = 0
    extra = None
    best = (math.inf, u)
    for _ in range(max_iter):
        nxt = np.asarray(germ.B(v, u, level), dtype=float)
        if not np.all(np.isfinite(nxt)):
            raise ConvergenceError("iteration produced non-finite values", None, log.residuals)
        res = germ.norm(u - nxt, level)
        thr = tol * (1.0 + germ.norm(u, level))
        if log.residuals:
            prev = log.residuals[-1]
            q = res / prev if prev > 0 else 0.0
            log.rates.append(q)
            # a plateau at round-off is not expansion
            streak = streak + 1 if (q >= 1.0 and res > thr) else 0
            if streak >= window:
                raise NotAContractionError(f"residual ratio >= 1 for {window} steps", log.rates[-window:])
        log.residuals.append(res)
        if res == 0.0:
            return _extended_polish(germ, v, level, u, res), log
        if res < best[0]:
            best = (res, u)
        if res <= thr:
            # a few more sweeps often land exactly on the floating-point fixed point
            extra = 16 if extra is None else extra - 1
            if extra == 0:
                return _extended_polish(germ, v, level, best[1], best[0]), log
        u = nxt
    raise ConvergenceError(f"no convergence in {max_iter} iterations", log.residuals[-1], log.residuals)


def _extended_polish(germ, v, level, u, res, sweeps=24):
    """Refine ``u`` with sweeps in extended precision when ``B`` supports it.

    Double-precision iteration can stall on a neighbour of the fixed point
    (round-half-even ties); sweeping in ``longdouble`` and rounding once
    recovers the correctly rounded fixed point.  The refined value is kept
    only if its double-precision residual is no worse.
    """
    if np.finfo(np.longdouble).eps >= np.finfo(float).eps:
        return u
    try:
        ul = np.asarray(u, dtype=np.longdouble)
        vl = np.asarray(v, dtype=np.longdouble)
        for _ in range(sweeps):
            ul = np.asarray(germ.B(vl, ul, level))
        if ul.dtype != np.longdouble or not np.all(np.isfinite(ul)):
            return u
        cand = ul.astype(float)
        cres = germ.norm(cand - np.asarray(germ.B(v, cand, level), dtype=float), level)
    except (TypeError, ValueError, OverflowError):
        return u
    return cand if cres <= res else u


@dataclass
class SolutionGerm:
    """``v -> delta(v)`` at a fixed level, keeping the last convergence log."""

    germ: ContractionGerm
    level: int = 0
    tol: float = 1e-14
    max_iter: int = 500
    logs: list = field(default_factory=list)

    def __call__(self, v):
        u, log = solve_germ(self.germ, v, self.level, self.tol, self.max_iter)
        self.logs.append(log)
        return u


@dataclass
class SmoothnessReport:
    level: int
    order: int
    steps: list
    estimates: dict
    changes: dict
    errors: dict
    observed_orders: dict
    failures: list

    @property
    def passed(self) -> bool:
        if self.failures:
            return False
        for k, ch in self.changes.items():
            tail = [c for c in ch if c > 1e-9]
            if len(tail) >= 2 and tail[-1] > tail[0]:
                return False
        return True


def _fd(delta, v0, d, eps, k):
    if k == 1:
        return (delta(v0 + eps * d) - delta(v0 - eps * d)) / (2 * eps)
    if k == 2:
        return (delta(v0 + eps * d) - 2 * delta(v0) + delta(v0 - eps * d)) / eps**2
    raise ValueError("orders 1 and 2 are supported")


def germ_smoothness_diagnostic(
    solution: SolutionGerm,
    level=0,
    order=2,
    steps: Sequence[float] = (0.04, 0.02, 0.01, 0.005),
    *,
    v0=None,
    direction=None,
    reference: dict | None = None,
) -> SmoothnessReport:
    """Centered-difference derivatives of ``delta`` up to ``order``.

    ``changes[k]`` lists the norms of differences between consecutive step
    sizes; for a C^k solution germ they shrink by about 4 per halving.
    ``reference`` maps an order to a callable giving the exact derivative,
    which turns ``errors`` into distances to it and ``observed_orders`` into
    fitted log-log slopes.
    """
    germ = solution.germ
    v0 = np.zeros(germ.param_dim) if v0 is None else np.atleast_1d(np.asarray(v0, dtype=float))
    d = np.ones(germ.param_dim) if direction is None else np.atleast_1d(np.asarray(direction, dtype=float))
    solution.level = level
    estimates, changes, errors, orders, failures = {}, {}, {}, {}, []
    for k in range(1, order + 1):
        est = []
        for eps in steps:
            try:
                val = _fd(solution, v0, d, eps, k)
            except (ConvergenceError, NotAContractionError, TrustRegionError) as exc:
                failures.append((k, eps, str(exc)))
                val = np.full(germ.u_shape, np.nan)
            if not np.all(np.isfinite(val)):
                failures.append((k, eps, "non-finite"))
            est.append(val)
        estimates[k] = est
        changes[k] = [germ.norm(b - a, level) for a, b in zip(est, est[1:])]
        if reference and k in reference:
            ref = reference[k](v0)
            errs = [germ.norm(e - ref, level) for e in est]
            errors[k] = errs
            pts = [(math.log(s), math.log(e)) for s, e in zip(steps, errs) if e > 1e-10]
            orders[k] = float(np.polyfit(*np.array(pts).T, 1)[0]) if len(pts) >= 2 else math.inf
    return SmoothnessReport(level, order, list(steps), estimates, changes, errors, orders, failures)


# ---------------------------------------------------------------------------
# built-in germs


def linear_germ(n=1) -> ContractionGerm:
    """``B(v, u) = u/2 + v`` with fixed point ``delta(v) = 2v``."""
    return ContractionGerm(lambda v, u, m: 0.5 * u + v, (n,), n, (0.5,) * 4, name="linear")


def sine_germ(n=1, amplitude=0.3) -> ContractionGerm:
    """``B(v, u) = v + amplitude * sin(u)`` componentwise."""
    return ContractionGerm(
        lambda v, u, m: v + amplitude * np.sin(u), (n,), n, (amplitude,) * 4, name="sine"
    )


def sine_root(v, amplitude=0.3):
    """Scalar oracle: the root of ``x - v - amplitude*sin(x)`` by bracketed bisection."""
    from scipy.optimize import brentq

    v = float(v)
    if v == 0.0:
        return 0.0
    span = abs(v) / (1 - amplitude) + 1e-3
    return brentq(lambda x: x - v - amplitude * math.sin(x), -span, span, xtol=1e-16, rtol=4 * np.finfo(float).eps)


def sine_derivatives(v, amplitude=0.3):
    """``(delta, delta', delta'')`` from implicit differentiation."""
    x = sine_root(v, amplitude)
    d1 = 1.0 / (1.0 - amplitude * math.cos(x))
    d2 = -amplitude * math.sin(x) * d1**3
    return x, d1, d2


def scale_sine_germ(space: ScaleSpace | None = None, amplitude=0.3, theta=0.35) -> ContractionGerm:
    """The sine germ acting pointwise on a line scale space.

    ``B(v, u)(s) = v * sech(s)^2 + amplitude * sin(u(s))``; the solution is
    the pointwise scalar root, which serves as its oracle.
    """
    if space is None:
        space = make_scale_space(Domain.line(4.0, 0.05), 0, (0.0, 0.25, 0.5, 0.75))
    g = 1.0 / np.cosh(space.domain.s) ** 2
    g = g.reshape(-1, *([1] * (len(space.value_shape) - 1)))

    def B(v, u, m):
        return float(np.ravel(v)[0]) * g + amplitude * np.sin(u)

    radii = tuple(0.2 * DEFAULT_SHRINK**m for m in range(space.levels_available))
    return ContractionGerm(
        B,
        space.value_shape,
        1,
        (theta,) * space.levels_available,
        radii,
        norm=space.norm_values,
        name="scale_sine",
    )


BUILTIN_GERMS = {"linear": linear_germ, "sine": sine_germ, "scale_sine": scale_sine_germ}


# ---------------------------------------------------------------------------
# fillers


@dataclass(frozen=True, eq=False)
class MorseFiller:
    """Discretization of ``h -> h' - H h`` on a line space.

    Interior rows use the box (trapezoid) scheme between neighbouring nodes.
    The remaining ``N`` rows impose ``P_- h(-L) = 0`` and ``P_+ h(L) = 0``
    for the spectral projections of ``H``; these are the limits of the
    decaying solution formula, so the square matrix is invertible.
    """

    hessian: np.ndarray
    space: ScaleSpace
    matrix: sp.csr_matrix
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, values) -> np.ndarray:
        vals = np.asarray(values, dtype=float)
        return (self.matrix @ vals.reshape(-1)).reshape(vals.shape)

    def solve(self, rhs) -> np.ndarray:
        from scipy.sparse.linalg import spsolve

        rhs = np.asarray(rhs, dtype=float)
        return spsolve(self.matrix.tocsc(), rhs.reshape(-1)).reshape(rhs.shape)

    def interior_rows(self) -> slice:
        n = self.space.domain.s.size
        return slice(0, (n - 1) * self.hessian.shape[0])

    def min_singular_value(self, level=0) -> float:
        """Smallest singular value of ``W A W^{-1}`` with ``W`` the level weight."""
        N = self.hessian.shape[0]
        w = np.repeat(self.space.weight(level), N)
        n = self.space.domain.s.size
        # row i of the box scheme sits between nodes i and i+1; weight it at the midpoint
        wr = np.empty_like(w)
        wm = np.sqrt(self.space.weight(level)[:-1] * self.space.weight(level)[1:])
        wr[: (n - 1) * N] = np.repeat(wm, N)
        n_minus = int(np.sum(self.eigenvalues < 0))
        wr[(n - 1) * N : (n - 1) * N + n_minus] = self.space.weight(level)[0]
        wr[(n - 1) * N + n_minus :] = self.space.weight(level)[-1]
        A = self.matrix.toarray()
        M = (wr[:, None] * A) / w[None, :]
        return float(np.linalg.svd(M, compute_uv=False)[-1])


def build_morse_filler(hessian, space: ScaleSpace, tol=1e-8) -> MorseFiller:
    """Filler ``h -> h' - Hess h`` at a critical point.

    Raises:
        DegenerateCriticalPointError: an eigenvalue of ``hessian`` is within ``tol`` of 0.
    """
    H = np.atleast_2d(np.asarray(hessian, dtype=float))
    if H.shape[0] != H.shape[1] or not np.allclose(H, H.T, atol=1e-12):
        raise DomainMismatchError("Hessian must be a symmetric square matrix")
    if space.kind != "line":
        raise DomainMismatchError("the Morse filler lives on a line space")
    N = H.shape[0]
    if space.target_dim != N:
        raise DomainMismatchError(f"space target_dim {space.target_dim} differs from Hessian size {N}")
    lam, V = np.linalg.eigh(H)
    if np.min(np.abs(lam)) <= tol:
        raise DegenerateCriticalPointError(f"Hessian eigenvalue {lam[np.argmin(np.abs(lam))]:.3g} is near zero")
    n = space.domain.s.size
    dt = space.domain.h
    I = sp.identity(N, format="csr")
    Hs = sp.csr_matrix(H)
    blk_lo = -I / dt - 0.5 * Hs
    blk_hi = I / dt - 0.5 * Hs
    rows = []
    for i in range(n - 1):
        row = [None] * n
        row[i] = blk_lo
        row[i + 1] = blk_hi
        rows.append(row)
    Pm = V[:, lam < 0].T
    Pp = V[:, lam > 0].T
    bc = [None] * n
    bc_first = np.zeros((N, N))
    bc_last = np.zeros((N, N))
    bc_first[: Pm.shape[0]] = Pm
    bc_last[Pm.shape[0] :] = Pp
    bc[0] = sp.csr_matrix(bc_first)
    bc[-1] = sp.csr_matrix(bc_last)
    for j in range(1, n - 1):
        bc[j] = None
    rows.append(bc)
    A = sp.bmat(rows, format="csr")
    return MorseFiller(H, space, A, lam, V)


@dataclass(frozen=True, eq=False)
class FilledSection:
    """``(r, e) -> (base(pi_r e), L_b antiglue((I - pi_r) e))`` on line pairs.

    ``base`` maps a pair on the splicing core to an array.  The filler acts on
    the anti-glued field, which lives on the union window.
    """

    kernel: SplicingKernel
    r: float
    base: Callable
    hessian: np.ndarray

    @property
    def filler(self) -> MorseFiller:
        R = self.kernel.length(self.r)
        from .splicing import glued_line_space

        return build_morse_filler(self.hessian, glued_line_space(self.kernel.space, R))

    def split(self, e):
        core = splicing_projection(self.kernel, self.r, e)
        comp = (e[0] - core[0], e[1] - core[1])
        return core, comp

    def evaluate(self, e, filler=None):
        filler = self.filler if filler is None else filler
        core, comp = self.split(e)
        anti = self.kernel.antiglue(comp, self.r)
        return np.asarray(self.base(core), dtype=float), filler.apply(anti.values)

    def complement_block(self):
        """Matrix of ``e2 -> L_b antiglue(e2)`` on an orthonormal basis of the complement."""
        from .splicing import projection_matrix

        P = projection_matrix(self.kernel, self.r)
        n2 = P.shape[0]
        U, svals, _ = np.linalg.svd(np.eye(n2) - P)
        basis = U[:, svals > 1e-9]
        filler = self.filler
        space = self.kernel.space
        half = n2 // 2
        cols = []
        for j in range(basis.shape[1]):
            x = basis[:, j]
            pair = (
                space.grid_function(x[:half].reshape(space.value_shape)),
                space.grid_function(x[half:].reshape(space.value_shape)),
            )
            anti = self.kernel.antiglue(pair, self.r)
            cols.append(filler.apply(anti.values).ravel())
        return np.column_stack(cols)


@dataclass
class ZeroSetReport:
    rows: list
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def filled_zero_set_check(filled: FilledSection, samples, tol=1e-9) -> ZeroSetReport:
    """Compare the zero set of the filled section with that of the base section.

    A sample is a filled solution when both output blocks vanish; it is a
    base solution when its complement part and the base residual vanish.
    Disagreements are listed as violations.
    """
    filler = filled.filler
    space = filled.kernel.space
    rows, violations = [], []
    for i, e in enumerate(samples):
        base_val, fill_val = filled.evaluate(e, filler)
        core, comp = filled.split(e)
        comp_norm = math.hypot(space.norm_values(comp[0].values, 0), space.norm_values(comp[1].values, 0))
        base_norm = float(np.linalg.norm(base_val))
        filled_norm = math.hypot(base_norm, float(np.linalg.norm(fill_val)))
        filled_zero = filled_norm <= tol
        base_zero = base_norm <= tol and comp_norm <= tol
        rows.append((i, filled_norm, base_norm, comp_norm, filled_zero, base_zero))
        if filled_zero != base_zero:
            violations.append(i)
    return ZeroSetReport(rows, violations)
