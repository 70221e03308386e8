import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfred import algebra
from scfred.degen import master_equation_check, validate_structure
from scfred.errors import (
    CorrectionError,
    DegenerateCriticalPointError,
    InterfaceMismatchError,
    PreconditionError,
)
from scfred.morse import (
    BrokenTrajectory,
    MorseProblem,
    Polynomial,
    Trajectory,
    broken_distance,
    broken_pair,
    chain,
    correct_pregluing,
    counting_function,
    cubic1d,
    double_well,
    enumerate_all,
    enumerate_trajectories_index1,
    find_critical_points,
    parse_polynomial_terms,
    preglue_broken,
    quadratic1d,
    solution_set,
    solve_trajectory,
    structure_of,
)


@pytest.fixture(scope="module")
def dw_enum():
    prob = double_well()
    return prob, enumerate_all(prob)


@pytest.fixture(scope="module")
def chain_problem():
    return chain()


@pytest.fixture(scope="module")
def chain_pair(chain_problem):
    return broken_pair(chain_problem, "min", "s1", "max")


def test_polynomial_derivatives(rng):
    p = Polynomial({(2, 1): 1.5, (0, 3): -2.0, (1, 0): 0.5})
    x = rng.normal(size=2)
    eps = 1e-6
    num = np.array([(p.value(x + eps * e) - p.value(x - eps * e)) / (2 * eps) for e in np.eye(2)])
    assert np.allclose(p.grad(x), num, atol=1e-7)
    numh = np.array([(p.grad(x + eps * e) - p.grad(x - eps * e)) / (2 * eps) for e in np.eye(2)])
    assert np.allclose(p.hess(x), numh, atol=1e-6)


def test_polynomial_vectorized(rng):
    p = Polynomial({(4, 0): 0.25, (0, 2): 0.5})
    X = rng.normal(size=(7, 2))
    assert np.allclose(p.value(X), [p.value(x) for x in X])
    assert np.allclose(p.grad(X), [p.grad(x) for x in X])


def test_parse_terms():
    assert parse_polynomial_terms("1,0:1.0; 0,2: -0.5") == {(1, 0): 1.0, (0, 2): -0.5}


def test_critical_points_double_well():
    pts = {p.label: p for p in double_well().critical_points}
    assert set(pts) == {"min-", "min+", "saddle"}
    assert pts["saddle"].index == 1 and pts["min-"].index == 0
    assert np.allclose(pts["min+"].x, [1.0, 0.0], atol=1e-12)


def test_degenerate_critical_point():
    prob = MorseProblem.builtin("cubic_degenerate")
    with pytest.raises(DegenerateCriticalPointError):
        find_critical_points(prob, seeds=[[0.1]])


def test_tanh_orbit():
    traj = solve_trajectory(cubic1d(), "a", "b")
    assert np.max(np.abs(traj.u[:, 0] - np.tanh(traj.s))) <= 1e-8
    assert traj.phase_error() == pytest.approx(0.0, abs=1e-12)


def test_tanh_from_exact_guess_needs_no_steps():
    prob = cubic1d()
    traj = solve_trajectory(prob, "a", "b")
    again = solve_trajectory(prob, "a", "b", traj)
    assert again.newton_steps == 0


def test_spline_interpolation():
    traj = solve_trajectory(cubic1d(), "a", "b")
    t = np.linspace(-3, 3, 37) + 0.003
    assert np.max(np.abs(traj(t)[:, 0] - np.tanh(t))) < 1e-8


def test_preconditions():
    prob = cubic1d()
    with pytest.raises(PreconditionError):
        solve_trajectory(prob, "b", "a")
    with pytest.raises(PreconditionError):
        solve_trajectory(chain(), "min", "max")


def test_csv_export(tmp_path):
    traj = solve_trajectory(cubic1d(), "a", "b", L=5, h=0.1)
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"s,u1"
    assert b"\r" not in path.read_bytes()
    assert len([x for x in lines if x]) == traj.s.size + 1


def test_double_well_counts(dw_enum):
    prob, enum = dw_enum
    Q = counting_function(prob, enumerations=enum)
    assert Q[("min-", "saddle")] == 1
    assert Q[("min+", "saddle")] == 1
    assert algebra.convolve(Q, Q).is_zero()
    assert all(r.reliable for r in enum.values())


def test_double_well_orbit_lies_on_axis(dw_enum):
    _, enum = dw_enum
    for res in enum.values():
        (traj,) = res.trajectories
        assert np.max(np.abs(traj.u[:, 1])) < 1e-8


@pytest.mark.slow
def test_chain_master_equation(chain_problem):
    enum = enumerate_all(chain_problem)
    assert {k: r.count for k, r in enum.items()} == {
        ("min", "s1"): 1, ("min", "s2"): 1, ("s1", "max"): 1, ("s2", "max"): 1,
    }
    table, K = solution_set(chain_problem, enum)
    assert master_equation_check(K, table).passed
    for x in K:
        assert not master_equation_check([y for y in K if y is not x], table).passed
    assert validate_structure(structure_of(chain_problem)).passed


def test_quadratic_has_no_pairs():
    prob = quadratic1d()
    assert len(prob.critical_points) == 1
    assert enumerate_all(prob) == {}


def test_enumeration_needs_index_one(chain_problem):
    with pytest.raises(PreconditionError):
        enumerate_trajectories_index1(chain_problem, "min", "max")


def test_interface_mismatch(chain_problem, chain_pair):
    u, _ = chain_pair.components
    other = solve_trajectory(chain_problem, "s2", "max")
    with pytest.raises(InterfaceMismatchError):
        BrokenTrajectory((u, other))


@pytest.mark.slow
def test_preglue_and_correct(chain_problem, chain_pair):
    # below r = 0.1 the distance sits at the discretization floor of this fast chain
    dist = []
    for r in (0.5, 0.3, 0.1, 0.05):
        w = preglue_broken(chain_pair, r)
        assert w.phase_error() < 1e-10
        fixed = correct_pregluing(chain_problem, w, r)
        dist.append(broken_distance(fixed))
    assert fixed.residual < 1e-6
    assert dist[0] > dist[1] > dist[2]
    assert dist[3] < 1e-6


def test_correction_basin(chain_problem, chain_pair):
    w = preglue_broken(chain_pair, 0.1)
    w.u = w.u + 5.0
    with pytest.raises(CorrectionError):
        correct_pregluing(chain_problem, w)


def test_constant_double_residual(chain_problem):
    pts = {p.label: p for p in chain_problem.critical_points}
    s = np.linspace(-5, 5, 101)
    c = np.array([0.3, -0.2])
    u = Trajectory.from_samples(chain_problem, pts["min"], pts["s1"], s, np.tile(c, (s.size, 1)), np.zeros((s.size, 2)))
    v = Trajectory.from_samples(chain_problem, pts["s1"], pts["max"], s, np.tile(c, (s.size, 1)), np.zeros((s.size, 2)))
    w = preglue_broken(BrokenTrajectory((u, v)), 0.3)
    assert np.max(np.abs(w.u - c)) < 1e-15
    assert w.residual == pytest.approx(np.linalg.norm(chain_problem.grad(c)), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(-2.0, 2.0))
def test_quadratic_critical_point_property(k, x0):
    prob = MorseProblem.from_polynomial({(2,): 0.5 * k, (1,): -k * x0, (0,): 0.0})
    (p,) = prob.critical_points
    assert p.x[0] == pytest.approx(x0, abs=1e-10)
    assert p.index == 0
