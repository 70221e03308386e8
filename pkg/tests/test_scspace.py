import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scfred.errors import (
    DomainMismatchError,
    InvalidDomainError,
    InvalidPairError,
    InvalidWeightsError,
    LevelOutOfRangeError,
)
from scfred.scspace import (
    Domain,
    degenerate_control_space,
    embedding_diagnostic,
    level_norm,
    make_scale_space,
    sc1_check,
    translation_action,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_three_levels():
    sp = make_scale_space({"domain": "line", "L": 10, "h": 0.1}, 1, (0, 0.5, 1.0))
    assert sp.levels_available == 3
    assert sp.domain.s.size == 201
    assert sp.domain.s[100] == 0.0


@pytest.mark.parametrize("weights", [(0.5, 0.5), (1.0, 0.5), (-0.1, 0.5), ()])
def test_bad_weights(weights):
    with pytest.raises(InvalidWeightsError):
        make_scale_space(Domain.line(1, 0.1), 1, weights)


def test_cylinder_bound():
    with pytest.raises(InvalidWeightsError):
        make_scale_space(Domain.cylinder(2, 0.1), 1, (0, 3, 7))
    make_scale_space(Domain.cylinder(2, 0.1), 1, (0, 3, 6))


def test_declared_bound_for_line():
    with pytest.raises(InvalidWeightsError):
        make_scale_space(Domain.line(2, 0.1), 1, (0, 0.5, 1.5), weight_bound=1.0)


@pytest.mark.parametrize("L,h", [(0.05, 0.1), (1.0, 0.0), (-1.0, 0.1)])
def test_bad_domain(L, h):
    with pytest.raises(InvalidDomainError):
        make_scale_space(Domain.line(L, h), 1, (0,))


def test_zero_norm(line_space):
    for m in range(3):
        assert level_norm(line_space.zeros(), m) == 0.0


def test_level_out_of_range(line_space):
    u = line_space.zeros(level=1)
    with pytest.raises(LevelOutOfRangeError):
        level_norm(u, 2)


def test_weighted_l2_quadrature():
    # u = exp(-|s|) at level 0 with no derivatives: int exp(2(d-1)|s|) ds in closed form
    d, L = 0.5, 10.0
    sp = make_scale_space(Domain.line(L, 0.005), 0, (d, 0.9))
    u = sp.sample(lambda s: np.exp(-np.abs(s)))
    exact = math.sqrt((1 - math.exp(-2 * (1 - d) * L)) / (1 - d))
    assert level_norm(u, 0) == pytest.approx(exact, rel=5e-3)


def test_growth_when_weight_beats_decay():
    norms = []
    for L in (4.0, 6.0, 8.0):
        sp = make_scale_space(Domain.line(L, 0.01), 0, (0.0, 3.0))
        norms.append(level_norm(sp.sample(lambda s: np.exp(-np.abs(s))), 1))
    # integrand exp(4|s|): the norm grows like exp(2L)
    assert norms[0] < norms[1] < norms[2]
    assert norms[2] / norms[1] == pytest.approx(math.e**4, rel=0.05)


def test_monotone_random(line_space, rng):
    for _ in range(100):
        u = line_space.grid_function(rng.normal(size=line_space.value_shape))
        n = [level_norm(u, m) for m in range(3)]
        assert n[0] <= n[1] <= n[2]


@settings(max_examples=30, deadline=None)
@given(arrays(float, (3, 41), elements=finite), st.floats(-5, 5))
def test_norm_axioms(data, c):
    sp = make_scale_space(Domain.line(2.0, 0.1), 1, (0.0, 0.5))
    u, v = sp.grid_function(data[0]), sp.grid_function(data[1])
    for m in range(2):
        nu, nv = level_norm(u, m), level_norm(v, m)
        assert level_norm(u + v, m) <= nu + nv + 1e-9 * (1 + nu + nv)
        assert level_norm(c * u, m) == pytest.approx(abs(c) * nu, rel=1e-12, abs=1e-12)


def test_embedding_decays():
    sp = make_scale_space(Domain.line(10, 0.1), 0, (0.0, 1.0))
    rep = embedding_diagnostic(sp, 0, 1, 60)
    assert rep.compactness_consistent
    assert np.all(np.diff(rep.singular_values) <= 1e-12)


def test_embedding_flat_control():
    sp = degenerate_control_space(Domain.line(10, 0.1), 0, 0.5)
    rep = embedding_diagnostic(sp, 0, 1, 60)
    assert not rep.compactness_consistent
    assert np.allclose(rep.singular_values, 1.0)


def test_embedding_edge_cases(line_space):
    rep = embedding_diagnostic(line_space, 0, 1, 0)
    assert rep.singular_values.size == 0 and not rep.compactness_consistent
    with pytest.raises(InvalidPairError):
        embedding_diagnostic(line_space, 1, 1, 5)


def test_translation_identity_and_constants(cylinder_space):
    u = cylinder_space.sample(lambda s, t: np.sin(2 * np.pi * t) * np.exp(-s * s))
    assert np.array_equal(translation_action(u, 0, 0).values, u.values)
    c = cylinder_space.sample(lambda s, t: 0 * s + 3.5)
    assert np.allclose(translation_action(c, 0.7, 0.31).values, 3.5)


def test_translation_closed_form():
    sp = make_scale_space(Domain.cylinder(6, 0.05), 1, (0.0, 0.5))
    u = sp.sample(lambda s, t: np.sin(2 * np.pi * t) * np.exp(-s * s))
    ref = sp.sample(lambda s, t: np.sin(2 * np.pi * t) * np.exp(-((s + 1) ** 2)))
    assert np.max(np.abs(translation_action(u, 1.0, 0.0).values - ref.values)) < 1e-4


def test_translation_composes(cylinder_space):
    u = cylinder_space.sample(lambda s, t: np.cos(2 * np.pi * t) / np.cosh(s))
    a = translation_action(translation_action(u, 0.4, 0.1), 0.3, 0.25)
    b = translation_action(u, 0.7, 0.35)
    assert np.max(np.abs(a.values - b.values)) < 1e-3


def test_translation_needs_cylinder(line_space):
    with pytest.raises(DomainMismatchError):
        translation_action(line_space.zeros(), 1, 0)


def test_sc1_linear_map_zero(line_space, rng):
    A = np.diag(np.linspace(1, 2, line_space.domain.s.size))
    u = line_space.sample(np.tanh)
    h = line_space.sample(lambda s: 1 / np.cosh(s))
    rep = sc1_check(lambda x: A @ x, u, h, derivative=lambda x, d: A @ d)
    assert rep.all_zero


def test_sc1_affine_zero_with_fd(line_space):
    u = line_space.sample(np.tanh)
    h = line_space.sample(lambda s: np.exp(-s * s))
    rep = sc1_check(lambda x: 3.0 * x + 1.0, u, h)
    assert rep.all_zero


def test_sc1_square(line_space):
    u = line_space.sample(np.tanh)
    h = line_space.sample(lambda s: np.exp(-s * s))
    rep = sc1_check(lambda x: x * x, u, h)
    assert not rep.all_zero
    assert rep.min_order >= 0.95


def test_sc1_translation_in_c():
    sp = make_scale_space(Domain.cylinder(6, 0.1), 0, (0.0, 0.5))
    u = sp.sample(lambda s, t: np.cos(2 * np.pi * t) * np.exp(-s * s))
    rep = sc1_check(
        lambda c: translation_action(u, float(c[0]), 0.0).values,
        np.array([0.0]),
        np.array([1.0]),
        norm_in=lambda x, m: float(np.abs(x).max()),
        norm_out=sp.norm_values,
    )
    q = rep.pairs[0].quotients
    assert q[-1] < q[0]
    assert rep.min_order >= 0.9
