"""Cut-off, gluing profiles and the gluing / anti-gluing operator pair.

Two variants share one interface:

* ``morse-line``: pairs ``(h, k)`` of grid functions on one line space.  The
  glued and anti-glued outputs live on the union window ``[-L, R + L]``,
  a line space centred at ``R/2`` whose ``parent`` is the input space.
* ``gw-cylinder``: pairs ``(h_plus, h_minus)`` on one cylinder space.
  ``h_plus`` is read on ``s >= 0`` and ``h_minus`` on ``s <= 0``; the unused
  halves are ignored on input and filled with the value at ``s = 0`` on
  output (the canonical representative).  The glued map lives on
  ``Z_a = [0, R] x S^1`` and the anti-glued map on ``[R - L, L] x S^1``.

In grid mode ``R`` is rounded to a multiple of ``2h`` so that every shift
is exact and ``s = R/2`` is a node.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .errors import DomainMismatchError, InterfaceMismatchError, InvalidDomainError, ParameterDomainError
from .scspace import Domain, GridFunction, ScaleSpace

SHIFT_MODES = ("grid", "interpolate")
VARIANTS = ("morse-line", "gw-cylinder")


# ---------------------------------------------------------------------------
# cut-off


class Cutoff:
    """The smooth cut-off ``beta(s) = 1 - S((s + 1) / 2)``.

    ``S(y) = psi(y) / (psi(y) + psi(1 - y))`` with ``psi(x) = exp(-1/x)`` for
    ``x > 0``.  The symmetry ``S(y) + S(1 - y) = 1`` gives
    ``beta(s) + beta(-s) = 1`` exactly.
    """

    def values(self, s):
        arr = np.atleast_1d(np.asarray(s, dtype=float)).ravel()
        b, db = _kernels.cutoff(arr)
        shape = np.shape(s)
        return np.asarray(b).reshape(shape), np.asarray(db).reshape(shape)

    def __call__(self, s):
        b, _ = self.values(s)
        return float(b) if np.ndim(b) == 0 else b

    def derivative(self, s):
        _, db = self.values(s)
        return float(db) if np.ndim(db) == 0 else db


CUTOFF = Cutoff()


def beta(s):
    """Evaluate the cut-off at a scalar or array."""
    return CUTOFF(s)


def beta_prime(s):
    return CUTOFF.derivative(s)


# ---------------------------------------------------------------------------
# gluing profiles


@dataclass(frozen=True)
class GluingProfile:
    kind: str
    forward: Callable[[float], float]
    inverse: Callable[[float], float]

    @classmethod
    def exponential(cls):
        def fwd(r):
            try:
                return math.exp(1.0 / r) - math.e
            except OverflowError:
                return math.inf

        def inv(R):
            return 1.0 / math.log(R + math.e)

        return cls("exponential", fwd, inv)

    @classmethod
    def logarithmic(cls):
        return cls(
            "logarithmic",
            lambda x: -math.log(x) / (2.0 * math.pi),
            lambda R: math.exp(-2.0 * math.pi * R),
        )

    @classmethod
    def custom(cls, forward, inverse):
        return cls("custom", forward, inverse)

    @classmethod
    def named(cls, kind):
        if kind == "exponential":
            return cls.exponential()
        if kind == "logarithmic":
            return cls.logarithmic()
        raise ParameterDomainError(f"unknown gluing profile {kind!r}")


def profile_length(profile: GluingProfile, r: float) -> float:
    """Gluing length ``R = phi(r)`` for ``r`` in ``(0, 1]``."""
    r = float(r)
    if not (0.0 < r <= 1.0):
        raise ParameterDomainError(f"gluing parameter must lie in (0, 1], got {r}")
    return float(profile.forward(r))


def profile_inverse(profile: GluingProfile, R: float) -> float:
    if not R >= 0:
        raise ParameterDomainError(f"gluing length must be >= 0, got {R}")
    return float(profile.inverse(R))


# ---------------------------------------------------------------------------
# shared helpers


def _check_mode(mode):
    if mode not in SHIFT_MODES:
        raise ParameterDomainError(f"shift mode must be one of {SHIFT_MODES}, got {mode!r}")


def grid_length(space: ScaleSpace, R: float) -> float:
    """Round ``R`` to the nearest multiple of twice the grid spacing."""
    step = 2.0 * space.domain.h
    return step * round(R / step)


def _check_R(R):
    if not (R >= 0):
        raise ParameterDomainError(f"gluing length must be >= 0, got {R}")


def _same_space(*fns):
    sp0 = fns[0].space
    for f in fns[1:]:
        if f.space is not sp0:
            raise DomainMismatchError("all arguments must live on the same space")
    return sp0


def _flat(vals):
    n = vals.shape[0]
    return np.ascontiguousarray(vals.reshape(n, -1))


def _sample_line(vals, s_nodes, query, mode):
    """Values of a line grid function at ``query`` with constant extension."""
    if mode == "grid":
        h = s_nodes[1] - s_nodes[0]
        idx = np.clip(np.rint((query - s_nodes[0]) / h).astype(int), 0, s_nodes.size - 1)
        return vals[idx]
    q = np.clip(query, s_nodes[0], s_nodes[-1])
    return CubicSpline(s_nodes, vals, axis=0)(q)


# ---------------------------------------------------------------------------
# Morse line variant


def glued_line_space(space: ScaleSpace, R: float) -> ScaleSpace:
    """Line space on the union window ``[-L, R + L]`` (centre snapped to the grid)."""
    d = space.domain
    half = d.half_nodes * d.h
    c = d.h * round(R / (2.0 * d.h))
    return replace(space, domain=Domain.line(half + c, d.h, center=c), parent=space)


def _line_fields(h: GridFunction, k: GridFunction, R: float, mode: str):
    space = _same_space(h, k)
    if space.kind != "line":
        raise DomainMismatchError("line gluing needs a line space")
    _check_R(R)
    _check_mode(mode)
    if mode == "grid":
        R = grid_length(space, R)
    gspace = glued_line_space(space, R)
    s = gspace.domain.s
    H = _sample_line(h.values, space.domain.s, s, mode)
    K = _sample_line(k.values, space.domain.s, s - R, mode)
    b, _ = CUTOFF.values(s - R / 2.0)
    return gspace, R, b, H, K


def _check_interface(u, v, tol):
    gap = float(np.max(np.abs(u.values[-1] - v.values[0])))
    if gap > tol:
        raise InterfaceMismatchError(f"asymptotic values differ by {gap:.3g} at the gluing node")


def glue_line(u: GridFunction, v: GridFunction, R: float, *, mode="grid", tol=1e-6):
    """``s -> beta(s - R/2) u(s) + (1 - beta(s - R/2)) v(s - R)`` on the union window.

    ``R = inf`` returns the pair ``(u, v)`` unchanged.
    """
    _check_interface(u, v, tol)
    if math.isinf(R):
        return u, v
    gspace, R, b, U, V = _line_fields(u, v, R, mode)
    glued, _ = _kernels.glue_pointwise(b, _flat(U), _flat(V))
    return GridFunction(gspace, glued.reshape(U.shape), min(u.declared_level, v.declared_level))


def antiglue_line(h: GridFunction, k: GridFunction, R: float, *, mode="grid"):
    """``s -> -(1 - beta(s - R/2)) h(s) + beta(s - R/2) k(s - R)``.

    ``R = inf`` gives the zero map, returned as ``None``.
    """
    if math.isinf(R):
        return None
    gspace, R, b, H, K = _line_fields(h, k, R, mode)
    _, anti = _kernels.glue_pointwise(b, _flat(H), _flat(K))
    return GridFunction(gspace, anti.reshape(H.shape), min(h.declared_level, k.declared_level))


def total_glue(h: GridFunction, k: GridFunction, R: float, *, mode="grid"):
    """The pair ``(glue, antiglue)`` evaluated together."""
    if math.isinf(R):
        raise ParameterDomainError("total gluing needs a finite gluing length")
    gspace, R, b, H, K = _line_fields(h, k, R, mode)
    g, a = _kernels.glue_pointwise(b, _flat(H), _flat(K))
    lvl = min(h.declared_level, k.declared_level)
    return GridFunction(gspace, g.reshape(H.shape), lvl), GridFunction(gspace, a.reshape(H.shape), lvl)


def total_unglue(glued: GridFunction, antiglued: GridFunction | None, R: float, *, mode="grid"):
    """Solve the pointwise 2x2 system and restrict to the two input windows.

    ``antiglued=None`` stands for the zero field.  Returns ``(h, k)`` on the
    parent line space of ``glued``.
    """
    gspace = glued.space
    parent = gspace.parent
    if parent is None or gspace.kind != "line":
        raise DomainMismatchError("glued function does not live on a glued line space")
    _check_mode(mode)
    if mode == "grid":
        R = grid_length(parent, R)
    if antiglued is None:
        a = np.zeros_like(glued.values)
    else:
        if antiglued.space.domain != gspace.domain:
            raise DomainMismatchError("glued and anti-glued grids differ")
        a = antiglued.values
    s = gspace.domain.s
    b, _ = CUTOFF.values(s - R / 2.0)
    Ht, Kt = _kernels.unglue_pointwise(b, _flat(glued.values), _flat(a))
    Ht = Ht.reshape(glued.values.shape)
    Kt = Kt.reshape(glued.values.shape)
    n = parent.domain.s.size
    if mode == "grid":
        j = int(round(R / parent.domain.h))
        h, k = Ht[:n], Kt[j : j + n]
    else:
        sig = parent.domain.s
        h = Ht[:n]
        k = CubicSpline(s, Kt, axis=0)(np.clip(sig + R, s[0], s[-1]))
    lvl = glued.declared_level
    return GridFunction(parent, h, lvl), GridFunction(parent, k, lvl)


# ---------------------------------------------------------------------------
# cylinder variant


@dataclass(frozen=True)
class CylinderGeometry:
    R: float
    theta: float
    glued_space: ScaleSpace
    anti_space: ScaleSpace


def cylinder_parameters(a: complex, profile: GluingProfile) -> tuple[float, float]:
    """``R = phi(|a|)`` and ``theta`` with ``a = |a| exp(-2 pi i theta)``."""
    a = complex(a)
    if abs(a) > 0.5:
        raise ParameterDomainError(f"cylinder gluing needs |a| <= 1/2, got {abs(a):.6g}")
    if a == 0:
        return math.inf, 0.0
    R = profile_length(profile, abs(a))
    theta = (-cmath.phase(a) / (2.0 * math.pi)) % 1.0
    return R, theta


def _cylinder_geometry(space: ScaleSpace, a, profile) -> CylinderGeometry:
    if space.kind != "cylinder":
        raise DomainMismatchError("cylinder gluing needs a cylinder space")
    R, theta = cylinder_parameters(a, profile)
    d = space.domain
    R = grid_length(space, R)
    L = d.half_nodes * d.h
    if R > L + 1e-12:
        raise ParameterDomainError(f"gluing length {R:.4g} exceeds the truncation window {L:.4g}")
    if R < 2.0:
        raise ParameterDomainError("gluing length below 2 leaves no room for the cut-off")
    if d.n_t % 2 == 0 and abs(theta * d.n_t - round(theta * d.n_t)) > 1e-12:
        raise InvalidDomainError("twisting by a non-grid angle needs an odd circle grid")
    zs = replace(space, domain=Domain.cylinder(R / 2.0, d.h, d.n_t, center=R / 2.0), parent=space)
    sg = replace(space, domain=Domain.cylinder(L - R / 2.0, d.h, d.n_t, center=R / 2.0), parent=space)
    return CylinderGeometry(R, theta, zs, sg)


def twist(vals, theta):
    """Spectral shift ``(s, t) -> f(s, t - theta)`` along the circle axis."""
    if theta == 0:
        return np.array(vals, copy=True)
    n = vals.shape[1]
    freq = np.fft.fftfreq(n) * n
    phase = np.exp(-2j * math.pi * freq * theta)
    spec = np.fft.fft(vals, axis=1)
    spec *= phase.reshape((1, n) + (1,) * (vals.ndim - 2))
    return np.real(np.fft.ifft(spec, axis=1))


def _cyl_index(space, s):
    d = space.domain
    return np.clip(np.rint((s - d.s[0]) / d.h).astype(int), 0, d.s.size - 1)


def canonical_pair(pair):
    """Fill the unused halves with the value at ``s = 0``."""
    hp, hm = pair
    space = _same_space(hp, hm)
    i0 = space.domain.half_nodes
    p = np.array(hp.values)
    m = np.array(hm.values)
    p[:i0] = p[i0]
    m[i0 + 1 :] = m[i0]
    return hp.with_values(p), hm.with_values(m)


def _cyl_fields(pair, geom: CylinderGeometry, s):
    hp, hm = pair
    space = hp.space
    P = hp.values[_cyl_index(space, s)]
    M = twist(hm.values[_cyl_index(space, s - geom.R)], geom.theta)
    b, _ = CUTOFF.values(s - geom.R / 2.0)
    return P, M, b


def _pair_level(pair):
    return min(pair[0].declared_level, pair[1].declared_level)


def _broadcast_beta(b, shape):
    return np.repeat(b, int(np.prod(shape[1:])))


def _average(pair, geom):
    """``av_R``: half the sum of the circle means at ``s = R/2`` and ``s' = -R/2``."""
    hp, hm = pair
    i_p = _cyl_index(hp.space, np.array([geom.R / 2.0]))[0]
    i_m = _cyl_index(hm.space, np.array([-geom.R / 2.0]))[0]
    return 0.5 * (hp.values[i_p].mean(axis=0) + hm.values[i_m].mean(axis=0))


def _check_matching(pair, tol):
    hp, hm = pair
    gap = float(np.max(np.abs(hp.values[-1].mean(axis=0) - hm.values[0].mean(axis=0))))
    if gap > tol:
        raise InterfaceMismatchError(f"asymptotic constants differ by {gap:.3g}")


def glue_cylinder(u_pair, a, profile: GluingProfile, *, tol=1e-6):
    """``beta(s - R/2) u+(s, t) + (1 - beta(s - R/2)) u-(s - R, t - theta)`` on ``Z_a``.

    ``a = 0`` returns the pair unchanged.
    """
    _same_space(*u_pair)
    cylinder_parameters(a, profile)
    _check_matching(u_pair, tol)
    if complex(a) == 0:
        return u_pair
    geom = _cylinder_geometry(u_pair[0].space, a, profile)
    s = geom.glued_space.domain.s
    P, M, b = _cyl_fields(u_pair, geom, s)
    bb = _broadcast_beta(b, P.shape)
    g, _ = _kernels.glue_pointwise(bb, P.reshape(-1, P.shape[-1]), M.reshape(-1, M.shape[-1]))
    return GridFunction(geom.glued_space, g.reshape(P.shape), _pair_level(u_pair))


def _anti_values(pair, geom, s, av):
    P, M, b = _cyl_fields(pair, geom, s)
    bb = _broadcast_beta(b, P.shape)
    d = P.shape[-1]
    _, anti = _kernels.glue_pointwise(bb, (P - av).reshape(-1, d), (M - av).reshape(-1, d))
    return anti.reshape(P.shape)


def antiglue_cylinder(h_pair, a, profile: GluingProfile):
    """Anti-gluing with the ``av_R`` correction, on ``[R - L, L] x S^1``.

    ``a = 0`` gives the zero map, returned as a zero function on the input space.
    """
    space = _same_space(*h_pair)
    cylinder_parameters(a, profile)
    if complex(a) == 0:
        return space.zeros(_pair_level(h_pair))
    geom = _cylinder_geometry(space, a, profile)
    av = _average(h_pair, geom)
    vals = _anti_values(h_pair, geom, geom.anti_space.domain.s, av)
    return GridFunction(geom.anti_space, vals, _pair_level(h_pair))


def total_glue_cylinder(h_pair, a, profile: GluingProfile):
    if complex(a) == 0:
        raise ParameterDomainError("total gluing needs a != 0")
    space = _same_space(*h_pair)
    geom = _cylinder_geometry(space, a, profile)
    lvl = _pair_level(h_pair)
    s = geom.glued_space.domain.s
    P, M, b = _cyl_fields(h_pair, geom, s)
    bb = _broadcast_beta(b, P.shape)
    d = P.shape[-1]
    g, _ = _kernels.glue_pointwise(bb, P.reshape(-1, d), M.reshape(-1, d))
    av = _average(h_pair, geom)
    anti = _anti_values(h_pair, geom, geom.anti_space.domain.s, av)
    return GridFunction(geom.glued_space, g.reshape(P.shape), lvl), GridFunction(geom.anti_space, anti, lvl)


def total_unglue_cylinder(glued: GridFunction, antiglued: GridFunction | None, a, profile: GluingProfile):
    """Invert :func:`total_glue_cylinder`; returns the canonical pair."""
    space = glued.space.parent
    if space is None:
        raise DomainMismatchError("glued function does not live on a glued cylinder")
    geom = _cylinder_geometry(space, a, profile)
    if glued.space.domain != geom.glued_space.domain:
        raise DomainMismatchError("glued grid does not match the gluing parameter")
    G = glued.values
    if antiglued is None:
        A = np.zeros(geom.anti_space.value_shape)
    else:
        if antiglued.space.domain != geom.anti_space.domain:
            raise DomainMismatchError("anti-glued grid does not match the gluing parameter")
        A = antiglued.values
    d = space.domain
    h = d.h
    R = geom.R
    nz = int(round(R / h))
    zs = geom.glued_space.domain.s
    av = G[nz // 2].mean(axis=0)
    sig = geom.anti_space.domain.s
    off = int(round((0.0 - sig[0]) / h))
    A_on_Z = A[off : off + nz + 1]
    b, _ = CUTOFF.values(zs - R / 2.0)
    bb = _broadcast_beta(b, G.shape)
    dim = G.shape[-1]
    Pz, Bz = _kernels.unglue_pointwise(bb, (G - av).reshape(-1, dim), A_on_Z.reshape(-1, dim))
    Pz = Pz.reshape(G.shape) + av
    Mz = Bz.reshape(G.shape) + av
    i0 = d.half_nodes
    plus = np.empty(space.value_shape)
    minus = np.empty(space.value_shape)
    # plus on [0, R] from the 2x2 solve, on (R, L] from the anti-glued map (beta = 0)
    plus[i0 : i0 + nz + 1] = Pz
    plus[i0 + nz + 1 :] = av - A[off + nz + 1 :]
    plus[:i0] = plus[i0]
    # twisted minus on s in [0, R] is s' in [-R, 0]; s in [R - L, 0) is s' in [-L, -R)
    m_tw = np.empty((i0 + 1,) + G.shape[1:])
    m_tw[i0 - nz :] = Mz
    m_tw[: i0 - nz] = A[:off] + av
    minus[: i0 + 1] = twist(m_tw, -geom.theta)
    minus[i0 + 1 :] = minus[i0]
    lvl = glued.declared_level
    return GridFunction(space, plus, lvl), GridFunction(space, minus, lvl)


# ---------------------------------------------------------------------------
# kernel, projection, core


@dataclass(frozen=True, eq=False)
class SplicingKernel:
    space: ScaleSpace
    profile: GluingProfile
    variant: str = "morse-line"
    shift_mode: str = "grid"
    cutoff: Cutoff = CUTOFF

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterDomainError(f"variant must be one of {VARIANTS}")
        _check_mode(self.shift_mode)
        want = "line" if self.variant == "morse-line" else "cylinder"
        if self.space.kind != want:
            raise DomainMismatchError(f"{self.variant} kernel needs a {want} space")
        if self.variant == "gw-cylinder" and self.shift_mode != "grid":
            raise ParameterDomainError("the cylinder variant only supports grid mode")

    def length(self, r) -> float:
        """Gluing length for ``r``; ``inf`` at ``r = 0``."""
        if self.variant == "gw-cylinder":
            R, _ = cylinder_parameters(r, self.profile)
            return R if math.isinf(R) else grid_length(self.space, R)
        r = float(r)
        if not (0.0 <= r < 1.0):
            raise ParameterDomainError(f"gluing parameter must lie in [0, 1), got {r}")
        if r == 0.0:
            return math.inf
        R = profile_length(self.profile, r)
        return grid_length(self.space, R) if self.shift_mode == "grid" else R

    def total_glue(self, pair, r):
        if self.variant == "gw-cylinder":
            return total_glue_cylinder(pair, r, self.profile)
        return total_glue(pair[0], pair[1], self.length(r), mode=self.shift_mode)

    def total_unglue(self, glued, antiglued, r):
        if self.variant == "gw-cylinder":
            return total_unglue_cylinder(glued, antiglued, r, self.profile)
        return total_unglue(glued, antiglued, self.length(r), mode=self.shift_mode)

    def antiglue(self, pair, r):
        if self.variant == "gw-cylinder":
            return antiglue_cylinder(pair, r, self.profile)
        return antiglue_line(pair[0], pair[1], self.length(r), mode=self.shift_mode)

    def pair_norm(self, pair, m=0) -> float:
        if self.variant == "gw-cylinder":
            pair = canonical_pair(pair)
        return math.hypot(self.space.norm_values(pair[0].values, m), self.space.norm_values(pair[1].values, m))


def splicing_projection(kernel: SplicingKernel, r, e):
    """Projection onto ``ker(antiglue)`` along ``ker(glue)``.

    Computed as ``total_unglue(glue(e), 0)``.  In the line variant the
    window must satisfy ``L >= R/2 + 1`` so that both kernels fit inside it.
    """
    R = kernel.length(r)
    if math.isinf(R):
        return canonical_pair(e) if kernel.variant == "gw-cylinder" else e
    if kernel.variant == "morse-line":
        d = kernel.space.domain
        if d.half_nodes * d.h < R / 2.0 + 1.0 - 1e-12:
            raise ParameterDomainError(f"window half-length {d.L:.4g} is shorter than R/2 + 1 = {R / 2 + 1:.4g}")
    glued, _ = kernel.total_glue(e, r)
    return kernel.total_unglue(glued, None, r)


def splicing_core_contains(kernel: SplicingKernel, r, e, tol=1e-8) -> bool:
    p = splicing_projection(kernel, r, e)
    diff = (p[0] - e[0], p[1] - e[1])
    if kernel.variant == "gw-cylinder":
        ec = canonical_pair(e)
        diff = (p[0] - ec[0], p[1] - ec[1])
    return kernel.pair_norm(diff, 0) <= tol


def projection_matrix(kernel: SplicingKernel, r) -> np.ndarray:
    """Dense matrix of the projection on a (small) line space, column by column."""
    if kernel.variant != "morse-line":
        raise DomainMismatchError("projection_matrix is implemented for the line variant")
    space = kernel.space
    n = int(np.prod(space.value_shape))
    cols = []
    for j in range(2 * n):
        x = np.zeros(2 * n)
        x[j] = 1.0
        pair = (space.grid_function(x[:n].reshape(space.value_shape)), space.grid_function(x[n:].reshape(space.value_shape)))
        p = splicing_projection(kernel, r, pair)
        cols.append(np.concatenate([p[0].values.ravel(), p[1].values.ravel()]))
    return np.column_stack(cols)


def minimum_determinant(R: float, space: ScaleSpace) -> float:
    """Smallest ``beta^2 + (1 - beta)^2`` over the glued grid."""
    s = glued_line_space(space, R).domain.s
    b, _ = CUTOFF.values(s - grid_length(space, R) / 2.0)
    return float(np.min(b * b + (1.0 - b) ** 2))


def glue_diagnostic_rows(kernel: SplicingKernel, r):
    """Rows ``(s, beta, glued, antiglued, determinant)`` for a fixed test pair.

    The curves are ``tanh(s) + 1`` and ``tanh(s) + 3`` (matched at 2); the
    anti-gluing is applied to their derivative fields.
    """
    if kernel.variant != "morse-line":
        raise DomainMismatchError("the diagnostic is defined for the line variant")
    space = kernel.space
    R = kernel.length(r)
    if math.isinf(R):
        raise ParameterDomainError("diagnostic needs r > 0")
    u = space.sample(lambda s: np.tanh(s) + 1.0)
    v = space.sample(lambda s: np.tanh(s) + 3.0)
    du = space.sample(lambda s: 1.0 / np.cosh(s) ** 2)
    g = glue_line(u, v, R, mode=kernel.shift_mode, tol=1e-3)
    a = antiglue_line(du, du, R, mode=kernel.shift_mode)
    s = g.space.domain.s
    b, _ = CUTOFF.values(s - R / 2.0)
    det = b * b + (1.0 - b) ** 2
    return [(float(s[i]), float(b[i]), float(g.values[i, 0]), float(a.values[i, 0]), float(det[i])) for i in range(s.size)]
