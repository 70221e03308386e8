import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfred.errors import (
    ConvergenceError,
    DegenerateCriticalPointError,
    NotAContractionError,
    TrustRegionError,
)
from scfred.germ import (
    ContractionGerm,
    FilledSection,
    SolutionGerm,
    build_morse_filler,
    filled_zero_set_check,
    germ_smoothness_diagnostic,
    linear_germ,
    sample_contraction,
    scale_sine_germ,
    sine_derivatives,
    sine_germ,
    sine_root,
    solve_germ,
)
from scfred.scspace import Domain, make_scale_space
from scfred.splicing import GluingProfile, SplicingKernel, glue_line, total_unglue


@pytest.fixture
def filled():
    space = make_scale_space(Domain.line(4.0, 0.25), 0, (0.0, 0.5))
    ker = SplicingKernel(space, GluingProfile.exponential())

    def base(core):
        # vanishes on cores whose glued field is supported right of the midpoint
        g, _ = ker.total_glue(core, 0.5)
        s = g.space.domain.s
        return g.values[s < ker.length(0.5) / 2, 0]

    return FilledSection(ker, 0.5, base, np.array([[1.5]]))


def test_linear_fixed_point(rng):
    g = linear_germ(3)
    for _ in range(20):
        v = rng.uniform(-0.3, 0.3, 3)
        u, log = solve_germ(g, v)
        assert np.array_equal(u, 2 * v)
        assert log.observed_rate == pytest.approx(0.5, abs=1e-3)


def test_dyadic_parameter_exact():
    u, _ = solve_germ(linear_germ(2), np.array([0.25, -0.125]))
    assert np.array_equal(u, [0.5, -0.25])


def test_zero_parameter():
    for g in (linear_germ(2), sine_germ(2), scale_sine_germ()):
        u, _ = solve_germ(g, np.zeros(g.param_dim))
        assert not np.any(u)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.9, 0.9))
def test_sine_matches_root(v):
    u, log = solve_germ(sine_germ(1), [v])
    assert abs(u[0] - sine_root(v)) <= 1e-12
    assert log.observed_rate <= 0.3 + 0.05


def test_rate_survives_tiny_parameters():
    _, log = solve_germ(sine_germ(1), [2.8327519022509183e-158])
    assert log.observed_rate <= 0.3 + 0.05


def test_scale_sine_levels():
    g = scale_sine_germ()
    s = np.linspace(-4, 4, 161)
    for m in range(g.levels):
        v = 0.2 * 0.5**m
        u, log = solve_germ(g, [v], m)
        ref = np.array([sine_root(v / math.cosh(x) ** 2) for x in s])
        assert np.max(np.abs(u[:, 0] - ref)) <= 1e-12
        assert log.observed_rate <= g.contraction_factors[m] + 0.05
        assert sample_contraction(g, m) <= g.contraction_factors[m]


def test_trust_radius():
    g = scale_sine_germ()
    with pytest.raises(TrustRegionError):
        solve_germ(g, [0.15], 1)


def test_expansion_detected():
    g = ContractionGerm(lambda v, u, m: 2.0 * u + v, (1,), 1, (0.5,))
    with pytest.raises(NotAContractionError):
        solve_germ(g, [0.1])
    with pytest.raises(NotAContractionError):
        sample_contraction(g, 0)


def test_max_iter():
    g = ContractionGerm(lambda v, u, m: 0.99 * u + v, (1,), 1, (0.99,))
    with pytest.raises(ConvergenceError) as err:
        solve_germ(g, [0.5], max_iter=10)
    assert err.value.residual > 0


def test_declared_factor_range():
    with pytest.raises(NotAContractionError):
        ContractionGerm(lambda v, u, m: u, (1,), 1, (1.0,))


def test_smoothness_linear():
    rep = germ_smoothness_diagnostic(SolutionGerm(linear_germ(1)), 0, 2, v0=[0.1])
    assert max(np.max(np.abs(e)) for e in rep.estimates[2]) < 1e-8
    assert all(np.allclose(e, 2.0) for e in rep.estimates[1])
    assert rep.passed


def test_smoothness_sine():
    ref = {1: lambda v: sine_derivatives(v[0])[1], 2: lambda v: sine_derivatives(v[0])[2]}
    rep = germ_smoothness_diagnostic(SolutionGerm(sine_germ(1)), 0, 2, v0=[0.3], reference=ref)
    assert rep.passed
    assert rep.errors[1][-1] < 1e-5 and rep.errors[2][-1] < 1e-4
    # halving the step divides the error by about four
    assert rep.observed_orders[1] == pytest.approx(2.0, abs=0.1)
    assert rep.observed_orders[2] == pytest.approx(2.0, abs=0.1)


def test_filler_exponential_near_kernel():
    space = make_scale_space(Domain.line(6, 0.05), 0, (0.0, 0.5))
    F = build_morse_filler([[1.0]], space)
    e = np.exp(space.domain.s)
    r = F.apply(e)
    assert np.max(np.abs(r[F.interior_rows()])) / np.max(e) < 1e-3


def test_filler_zero():
    space = make_scale_space(Domain.line(3, 0.1), 0, (0.0, 0.5))
    F = build_morse_filler([[-1.0]], space)
    assert not np.any(F.apply(np.zeros(space.domain.s.size)))


def test_filler_singular_values(rng):
    space = make_scale_space(Domain.line(5, 0.05), 0, (0.0, 0.5, 0.8), target_dim=2)
    for _ in range(5):
        Q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        H = Q @ np.diag(rng.choice([-1, 1], 2) * rng.uniform(1, 3, 2)) @ Q.T
        F = build_morse_filler(H, space)
        for m in range(3):
            assert F.min_singular_value(m) > 0.1


def test_filler_solve_roundtrip(rng):
    space = make_scale_space(Domain.line(3, 0.1), 0, (0.0,), target_dim=2)
    F = build_morse_filler(np.diag([2.0, -1.0]), space)
    f = rng.normal(size=space.value_shape)
    assert np.allclose(F.apply(F.solve(f)), f)


def test_filler_degenerate():
    space = make_scale_space(Domain.line(3, 0.1), 0, (0.0,), target_dim=2)
    with pytest.raises(DegenerateCriticalPointError):
        build_morse_filler(np.diag([1.0, 1e-12]), space)


def test_complement_block_isomorphism(filled):
    M = filled.complement_block()
    assert np.linalg.matrix_rank(M) == M.shape[1]
    assert np.linalg.svd(M, compute_uv=False)[-1] > 1e-3


def test_zero_set_equivalence(filled, rng):
    space = filled.kernel.space
    ker = filled.kernel
    R = ker.length(0.5)
    zero = (space.zeros(), space.zeros())
    # a core element whose glued field lives right of the midpoint: base solution
    g0 = glue_line(space.zeros(), space.zeros(), R)
    s = g0.space.domain.s
    g = g0.with_values(np.where(s[:, None] > R / 2 + 0.1, np.exp(-((s[:, None] - R) ** 2)), 0.0))
    core_sol = total_unglue(g, None, R)
    # an element with a nonzero complement part
    comp = total_unglue(g0, g0.with_values(rng.normal(size=g0.values.shape)), R)
    rand = (space.grid_function(rng.normal(size=space.value_shape)), space.grid_function(rng.normal(size=space.value_shape)))
    rep = filled_zero_set_check(filled, [zero, core_sol, comp, rand])
    assert rep.passed
    flags = [row[4] for row in rep.rows]
    assert flags == [True, True, False, False]
