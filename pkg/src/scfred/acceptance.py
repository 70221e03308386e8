"""The acceptance battery: eleven property checks at desk scale.

Each check returns a :class:`CriterionResult` holding the measured
quantities and a pass flag.  Randomized checks draw from one generator
seeded by the caller, so results are reproducible.
"""

from __future__ import annotations

import functools
import math
import random
import time
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import algebra, degen, germ, morse, scspace, sftsym, splicing


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    budget: float = math.inf
    runtime: float = 0.0

    @property
    def within_budget(self) -> bool:
        return self.runtime < self.budget

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d}. {self.title} ({self.runtime:.2f}s / {self.budget:g}s)"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed, "metrics": self.metrics}


def _rng(seed, k):
    return np.random.default_rng([int(seed), k])


# ---------------------------------------------------------------------------
# 1-3: cut-off, gluing, projection


def criterion_1(seed=42):
    rng = _rng(seed, 1)
    s = np.concatenate([rng.uniform(-1.5, 1.5, 9000), np.linspace(-2.0, 2.0, 1000)])
    sym = float(np.max(np.abs(splicing.beta(s) + splicing.beta(-s) - 1.0)))
    exp = splicing.GluingProfile.exponential()
    log = splicing.GluingProfile.logarithmic()
    phi1 = splicing.profile_length(exp, 1.0)
    r = np.concatenate([rng.uniform(0.01, 1.0, 1000), [1.0]])
    rt_exp = max(abs(splicing.profile_inverse(exp, splicing.profile_length(exp, x)) - x) for x in r)
    rt_log = max(abs(splicing.profile_inverse(log, splicing.profile_length(log, x)) - x) for x in r)
    passed = sym <= 1e-12 and abs(phi1) <= 1e-15 and rt_exp <= 1e-10 and rt_log <= 1e-10
    return passed, {"symmetry_error": sym, "phi_exponential_at_1": phi1, "roundtrip_exponential": rt_exp,
                    "roundtrip_logarithmic": rt_log, "samples": int(s.size)}


def _pair(space, rng):
    return (space.grid_function(rng.normal(size=space.value_shape)),
            space.grid_function(rng.normal(size=space.value_shape)))


def criterion_2(seed=42):
    rng = _rng(seed, 2)
    exp = splicing.GluingProfile.exponential()
    line = scspace.make_scale_space(scspace.Domain.line(6.0, 0.1), 1, (0.0, 0.5, 1.0))
    cyl = scspace.make_scale_space(scspace.Domain.cylinder(12.0, 0.1), 1, (0.0, 0.5))
    worst_line = worst_cyl = 0.0
    det_min = math.inf
    for _ in range(200):
        h, k = _pair(line, rng)
        R = splicing.profile_length(exp, float(rng.uniform(0.3, 0.95)))
        g, a = splicing.total_glue(h, k, R)
        h2, k2 = splicing.total_unglue(g, a, R)
        worst_line = max(worst_line, np.abs(h2.values - h.values).max(), np.abs(k2.values - k.values).max())
        det_min = min(det_min, splicing.minimum_determinant(R, line))
    for _ in range(200):
        pair = _pair(cyl, rng)
        a = float(rng.uniform(0.4, 0.5)) * np.exp(2j * np.pi * rng.uniform())
        g, an = splicing.total_glue_cylinder(pair, a, exp)
        back = splicing.total_unglue_cylinder(g, an, a, exp)
        ref = splicing.canonical_pair(pair)
        worst_cyl = max(worst_cyl, max(np.abs(x.values - y.values).max() for x, y in zip(back, ref)))
        b = splicing.beta(g.space.domain.s - g.space.domain.center)
        det_min = min(det_min, float(np.min(b * b + (1 - b) ** 2)))
    passed = worst_line <= 1e-10 and worst_cyl <= 1e-10 and det_min >= 0.5 - 1e-12
    return passed, {"roundtrip_line": worst_line, "roundtrip_cylinder": worst_cyl, "min_determinant": det_min}


def criterion_3(seed=42):
    rng = _rng(seed, 3)
    exp = splicing.GluingProfile.exponential()
    idem = {}
    for r in [round(0.1 * i, 1) for i in range(1, 10)]:
        R = splicing.profile_length(exp, r)
        space = scspace.make_scale_space(scspace.Domain.line(R / 2.0 + 2.0, 0.1), 1, (0.0, 0.5))
        ker = splicing.SplicingKernel(space, exp)
        worst = 0.0
        for _ in range(100):
            e = _pair(space, rng)
            p = splicing.splicing_projection(ker, r, e)
            pp = splicing.splicing_projection(ker, r, p)
            worst = max(worst, np.abs(pp[0].values - p[0].values).max(), np.abs(pp[1].values - p[1].values).max())
        idem[str(r)] = worst
    cyl = scspace.make_scale_space(scspace.Domain.cylinder(12.0, 0.1), 1, (0.0, 0.5))
    cker = splicing.SplicingKernel(cyl, exp, "gw-cylinder")
    cyl_idem = {}
    for absa in (0.4, 0.45, 0.5):
        worst = 0.0
        for _ in range(100):
            a = absa * np.exp(2j * np.pi * rng.uniform())
            p = splicing.splicing_projection(cker, a, _pair(cyl, rng))
            pp = splicing.splicing_projection(cker, a, p)
            worst = max(worst, max(np.abs(pp[i].values - p[i].values).max() for i in range(2)))
        cyl_idem[str(absa)] = worst
    small = scspace.make_scale_space(scspace.Domain.line(4.0, 0.25), 1, (0.0, 0.5))
    e = _pair(small, rng)
    ker0 = splicing.SplicingKernel(small, exp)
    p0 = splicing.splicing_projection(ker0, 0.0, e)
    identity = bool(np.array_equal(p0[0].values, e[0].values) and np.array_equal(p0[1].values, e[1].values))
    P = splicing.projection_matrix(ker0, 0.5)
    n = P.shape[0]
    r1, r2 = int(np.linalg.matrix_rank(P)), int(np.linalg.matrix_rank(np.eye(n) - P))
    passed = max(idem.values()) <= 1e-9 and max(cyl_idem.values()) <= 1e-9 and identity and r1 + r2 == n
    return passed, {"idempotence_line": idem, "idempotence_cylinder": cyl_idem, "pi0_identity": identity,
                    "rank_pi": r1, "rank_complement": r2, "dim": n}


# ---------------------------------------------------------------------------
# 4-5: germs and orbits


def criterion_4(seed=42):
    rng = _rng(seed, 4)
    lin = germ.linear_germ(3)
    exact = 0
    for _ in range(200):
        v = rng.uniform(-0.3, 0.3, 3)
        u, _ = germ.solve_germ(lin, v)
        exact += bool(np.array_equal(u, 2.0 * v))
    sg = germ.sine_germ(1)
    root_err, sine_rate = 0.0, 0.0
    for v in rng.uniform(-0.9, 0.9, 200):
        u, log = germ.solve_germ(sg, [v])
        root_err = max(root_err, abs(u[0] - germ.sine_root(v)))
        sine_rate = max(sine_rate, log.observed_rate)
    ssg = germ.scale_sine_germ()
    rates = {}
    ok_rates = sine_rate <= sg.contraction_factors[0] + 0.05
    for m in range(len(ssg.contraction_factors)):
        v = 0.9 * ssg.trust_radii[m]
        _, log = germ.solve_germ(ssg, [v], level=m)
        rates[str(m)] = log.observed_rate
        ok_rates = ok_rates and log.observed_rate <= ssg.contraction_factors[m] + 0.05
    passed = exact == 200 and root_err <= 1e-12 and ok_rates
    return passed, {"linear_exact": exact, "linear_trials": 200, "sine_root_error": root_err,
                    "sine_rate": sine_rate, "scale_sine_rates": rates}


def criterion_5(seed=42):
    prob = morse.cubic1d()
    traj = morse.solve_trajectory(prob, "a", "b")
    err = float(np.max(np.abs(traj.u[:, 0] - np.tanh(traj.s))))
    return err <= 1e-8, {"sup_error": err, "residual": traj.residual, "nodes": int(traj.s.size),
                         "phase_error": traj.phase_error()}


# ---------------------------------------------------------------------------
# 6-8: counting, homology, combinatorics


@functools.lru_cache(maxsize=None)
def _enumerations(name):
    """Connecting-orbit enumeration of a builtin problem, shared between checks."""
    problem = morse.BUILTIN_PROBLEMS[name]()
    return problem, morse.enumerate_all(problem)


def _me_with_deletions(name):
    problem, enum = _enumerations(name)
    table, K = morse.solution_set(problem, enum)
    full = degen.master_equation_check(K, table).passed
    deletions = [not degen.master_equation_check([y for y in K if y is not x], table).passed for x in K]
    return enum, full, deletions, K


def criterion_6(seed=42):
    dw, enum = _enumerations("double_well")
    Q = morse.counting_function(dw, enumerations=enum)
    qq = algebra.convolve(Q, Q)
    table, K = morse.solution_set(dw, enum)
    dw_me = degen.master_equation_check(K, table).passed
    ch, _ = _enumerations("chain")
    ch_enum, ch_full, deletions, ch_K = _me_with_deletions("chain")
    Qc = morse.counting_function(ch, enumerations=ch_enum)
    values = {f"{a},{b}": Q[(a, b)] for a, b in Q.structure.S}
    passed = (
        Q[("min-", "saddle")] == 1 and Q[("min+", "saddle")] == 1 and sum(Q.values.values()) == 2
        and qq.is_zero() and dw_me and ch_full and all(deletions) and algebra.convolve(Qc, Qc).is_zero()
        and not Q.warnings and not Qc.warnings
    )
    return passed, {
        "double_well_Q": values, "double_well_QQ_zero": qq.is_zero(), "double_well_master_equation": dw_me,
        "double_well_solutions": len(K), "chain_solutions": len(ch_K), "chain_broken": sum(x.d for x in ch_K),
        "chain_master_equation": ch_full, "chain_deletions_detected": int(sum(deletions)),
        "chain_QQ_zero": algebra.convolve(Qc, Qc).is_zero(),
    }


def _f2_rank_bits(rows):
    """Rank over F2 of rows given as Python integers (bit masks)."""
    basis = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
    return len(basis)


def simplicial_betti_f2(top_simplices):
    """Betti numbers over F2 of the simplicial complex generated by the given simplices."""
    from itertools import combinations

    faces = set()
    for s in top_simplices:
        s = tuple(sorted(s))
        for k in range(1, len(s) + 1):
            faces.update(combinations(s, k))
    by_dim = {}
    for f in faces:
        by_dim.setdefault(len(f) - 1, []).append(f)
    for d in by_dim:
        by_dim[d].sort()
    top = max(by_dim)
    index = {d: {f: i for i, f in enumerate(by_dim[d])} for d in by_dim}
    ranks = {}
    for d in range(1, top + 1):
        rows = []
        for f in by_dim[d]:
            mask = 0
            for j in range(len(f)):
                mask |= 1 << index[d - 1][f[:j] + f[j + 1:]]
            rows.append(mask)
        ranks[d] = _f2_rank_bits(rows)
    return tuple(len(by_dim[d]) - ranks.get(d, 0) - ranks.get(d + 1, 0) for d in range(top + 1))


def criterion_7(seed=42):
    dw, enum = _enumerations("double_well")
    Q = morse.counting_function(dw, enumerations=enum)
    labels = [p.label for p in dw.critical_points]
    index = {p.label: p.index for p in dw.critical_points}
    dw_betti = algebra.homology_f2(algebra.representation_complex(Q, labels, index)).as_tuple()
    Qs, sl, si = algebra.sphere_datum()
    sphere = algebra.homology_f2(algebra.representation_complex(Qs, sl, si)).as_tuple()
    oracle = simplicial_betti_f2([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])
    H = algebra.height_datum()
    hd = algebra.homology_f2(algebra.dq_operator(H).complex())
    height_ok = H.is_zero() and len(H.structure.S) == 1 and H.grading["*"] == 0 and hd.total == 1
    passed = dw_betti == (1, 0) and sphere == (1, 0, 1) and sphere == oracle and height_ok
    return passed, {"double_well_betti": list(dw_betti), "sphere_betti": list(sphere),
                    "simplicial_oracle": list(oracle), "height_total": hd.total, "height_Q_zero": H.is_zero()}


def criterion_8(seed=42):
    counts = {}
    for n in range(1, 7):
        labels = [f"x{i}" for i in range(n + 2)]
        st = degen.morse_structure({x: float(i) for i, x in enumerate(labels)})
        target = [(labels[i], labels[i + 1]) for i in range(n + 1)]
        counts[str(n)] = len(degen.enumerate_sequences(st, (labels[0], labels[-1]), target))
    valid = {}
    for k in range(1, 9):
        st = degen.morse_structure({f"x{i}": float(i) for i in range(k)})
        valid[str(k)] = validate = degen.validate_structure(st).passed
    fixtures = {
        "finiteness": degen.validate_structure(("A", "B"), {("A", "B", "A")}).finiteness,
        "minimality": degen.validate_structure(("A", "B", "B2", "C"), {("A", "B", "C"), ("A", "B2", "C")}).minimality,
        "associativity": degen.validate_structure(("Z", "A", "B", "A1", "A2"),
                                                   {("A", "B", "Z"), ("A1", "A2", "A")}).associativity,
    }
    fix = {k: (not r.passed and bool(r.witnesses)) for k, r in fixtures.items()}
    passed = all(counts[str(n)] == factorial(n) for n in range(1, 7)) and all(valid.values()) and all(fix.values())
    return passed, {"sequence_counts": counts, "morse_structures_valid": valid, "fixtures_fail_with_witness": fix}


# ---------------------------------------------------------------------------
# 9-11: pregluing, symbols, sc diagnostics


def criterion_9(seed=42):
    pair = morse.slow_chain_pair()
    rows = morse.pregluing_sweep(pair, (0.3, 0.2, 0.1))
    d = [row.distance for row in rows]
    monotone = all(x > y for x, y in zip(d, d[1:]))
    resid_ok = all(row.corrected_residual <= 1e-9 for row in rows)
    return monotone and resid_ok, {"rows": [row.to_dict() for row in rows], "monotone": monotone}


def _random_word(rng, letters, max_len=8):
    return sftsym.Word(0, tuple(rng.choice(letters) for _ in range(rng.randint(0, max_len))))


def criterion_10(seed=42):
    rng = random.Random(seed)
    T = sftsym.OrbitSymbolTable([sftsym.Orbit("a", 1, 0), sftsym.Orbit("b", 2, 1), sftsym.Orbit("c", 3, 0)])
    letters = [(k, o) for k in "qp" for o in "abc"]
    confluent = 0
    for _ in range(500):
        w = _random_word(rng, letters)
        ref = sftsym.normalize(w, T)
        same = ref == sftsym.normalize(w, T, "rightmost") == sftsym.normalize(w, T, "random", rng)
        confluent += bool(same)
    kappa_ok = {}
    for kappa in (1, 2, 3):
        Tk = sftsym.OrbitSymbolTable([sftsym.Orbit("g", kappa, 0)])
        got = sftsym.normalize(sftsym.parse_word("p_g q_g"), Tk)
        want = sftsym.FormalSum({sftsym.parse_word("q_g p_g"): 1, sftsym.Word(1, ()): kappa})
        kappa_ok[str(kappa)] = got == want
    assoc = 0
    for _ in range(200):
        x, y, z = (sftsym.normalize(_random_word(rng, letters, 3), T) for _ in range(3))
        left = sftsym.multiply(sftsym.multiply(x, y, T), z, T)
        right = sftsym.multiply(x, sftsym.multiply(y, z, T), T)
        assoc += left == right
    sets = {
        "single": ["q_a", "p_a", "q_a p_a", "hbar"],
        "empty": [],
    }
    valid = {}
    for name, words in sets.items():
        st = sftsym.induced_degeneration_structure([sftsym.parse_word(w, T) for w in words], T)
        valid[name] = degen.validate_structure(st).passed
    passed = confluent == 500 and all(kappa_ok.values()) and assoc == 200 and all(valid.values())
    return passed, {"confluent_words": confluent, "kappa_relation": kappa_ok, "associative_triples": assoc,
                    "induced_structures_valid": valid}


def _distinct(values, rtol=1e-9):
    """Collapse a descending sequence into distinct values and multiplicities.

    On a window symmetric under ``s -> -s`` the even and odd modes share
    singular values in the tail, so each value can occur twice.
    """
    out, mult = [], []
    for x in values:
        if out and abs(out[-1] - x) <= rtol * abs(out[-1]):
            mult[-1] += 1
        else:
            out.append(float(x))
            mult.append(1)
    return np.array(out), mult


def criterion_11(seed=42):
    sp = scspace.make_scale_space(scspace.Domain.line(10.0, 0.1), 0, (0.0, 0.5, 1.0))
    rep = scspace.embedding_diagnostic(sp, 0, 1, 60)
    sv = rep.singular_values
    distinct, mult = _distinct(sv)
    strictly = bool(np.all(np.diff(distinct) < 0) and max(mult) <= 2 and distinct[-1] < 0.1 * distinct[0])
    ctrl = scspace.embedding_diagnostic(scspace.degenerate_control_space(scspace.Domain.line(10.0, 0.1), 0, 0.5), 0, 1, 60)
    flat = bool(np.allclose(ctrl.singular_values, 1.0))
    line = scspace.make_scale_space(scspace.Domain.line(6.0, 0.1), 1, (0.0, 0.5, 1.0))
    u = line.sample(np.tanh)
    h = line.sample(lambda s: np.exp(-s * s))
    affine = scspace.sc1_check(lambda x: 3.0 * x + 1.0, u, h)
    square = scspace.sc1_check(lambda x: x * x, u, h)
    sine = scspace.sc1_check(np.sin, u, h)
    orders = {"square": square.min_order, "sine": sine.min_order}
    passed = (strictly and rep.compactness_consistent and flat and not ctrl.compactness_consistent
              and affine.all_zero and min(orders.values()) >= 1.0 - 0.05)
    return passed, {"leading_singular_values": sv[:5], "last_singular_value": float(sv[-1]),
                    "strictly_decaying": strictly, "distinct_values": len(distinct), "max_multiplicity": max(mult), "control_flat": flat, "affine_zero_remainder": affine.all_zero,
                    "nonlinear_orders": orders}


CRITERIA = [
    (1, "Cutoff and profile identities", criterion_1, 1.0),
    (2, "Total-gluing invertibility", criterion_2, 10.0),
    (3, "Splicing projection", criterion_3, math.inf),
    (4, "Germ solver", criterion_4, 5.0),
    (5, "Morse connecting orbit", criterion_5, 5.0),
    (6, "Counting and Master Equation", criterion_6, 60.0),
    (7, "Homology", criterion_7, 1.0),
    (8, "Degeneration combinatorics", criterion_8, 10.0),
    (9, "Pregluing convergence", criterion_9, 120.0),
    (10, "Symbol calculus", criterion_10, 10.0),
    (11, "sc-calculus diagnostics", criterion_11, 30.0),
]


def run_criterion(number: int, seed: int = 42) -> CriterionResult:
    _, title, fn, budget = CRITERIA[number - 1]
    t0 = time.perf_counter()
    passed, metrics = fn(seed)
    return CriterionResult(number, title, bool(passed), metrics, budget, time.perf_counter() - t0)


def run_all(seed: int = 42, numbers=None) -> list:
    """Run the checks in order; criterion 6 computes the enumerations that 7 reuses."""
    _enumerations.cache_clear()
    return [run_criterion(n, seed) for n, *_ in CRITERIA if numbers is None or n in numbers]
