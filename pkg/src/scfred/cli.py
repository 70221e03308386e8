"""Command-line driver: ``scfred <subcommand> ...``.

Every subcommand writes a JSON summary (with the config hash and seed)
plus CSV tables into the output directory, prints the summary path and
exits 0.  Library errors are reported as a JSON object on stderr with a
nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import acceptance, algebra, degen, germ, morse, scspace, sftsym, splicing
from .config import RunConfig
from .errors import ConfigError, ScfredError
from .report import write_csv, write_json

EXIT_FAILED = 1
EXIT_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        self.print_usage(sys.stderr)
        sys.exit(EXIT_ERROR)


def _emit_error(kind, message, **extra):
    payload = {"error": kind, "message": message}
    payload.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


class Run:
    """Output directory, config and report envelope for one invocation."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = cfg.out_dir()
        self.files = []

    def path(self, name):
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        self.files.append(write_csv(self.path(name), header, rows))

    def json(self, name, result, passed=True):
        report = {
            "command": self.command,
            "seed": self.cfg.seed,
            "config_hash": self.cfg.hash(),
            "passed": bool(passed),
            "result": result,
            "tables": sorted(os.path.basename(f) for f in self.files),
        }
        path = write_json(self.path(name), report)
        print(path)
        return path


def _space(cfg: RunConfig) -> scspace.ScaleSpace:
    return scspace.make_scale_space(
        {"domain": cfg.get("grid", "domain"), "L": cfg.get_float("grid", "L"), "h": cfg.get_float("grid", "h")},
        cfg.get_int("grid", "base_order"),
        cfg.get_floats("grid", "weights"),
        cfg.get_int("grid", "target_dim"),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_space(args, cfg):
    run = Run(cfg, "space")
    space = _space(cfg)
    s = space.domain.s.reshape((-1,) + (1,) * (len(space.value_shape) - 1))
    u = np.broadcast_to(np.exp(-s * s), space.value_shape).copy()
    norms = [(m, space.norm_values(u, m)) for m in range(space.levels_available)]
    run.csv("space_norms.csv", ["level", "norm"], norms)
    rows, reports = [], {}
    for m in range(space.top_level):
        rep = scspace.embedding_diagnostic(space, m, m + 1, args.rank)
        rows.extend((m, i, v) for i, v in rep.rows())
        reports[f"{m}->{m + 1}"] = {"leading": rep.singular_values[:5], "compactness_consistent": rep.compactness_consistent}
    run.csv("space_embedding.csv", ["level", "index", "singular_value"], rows)
    result = {"domain": space.kind, "nodes": int(space.domain.s.size), "weights": space.weights,
              "gaussian_norms": dict(norms), "embeddings": reports}
    run.json("space.json", result)
    return 0


def cmd_glue(args, cfg):
    if args.profile:
        cfg.set("glue", "profile", args.profile)
    if args.r is not None:
        cfg.set("glue", "r", args.r)
    run = Run(cfg, "glue")
    space = _space(cfg)
    profile = splicing.GluingProfile.named(cfg.get("glue", "profile"))
    kernel = splicing.SplicingKernel(space, profile, shift_mode=cfg.get("glue", "mode"))
    r = cfg.get_float("glue", "r")
    R = kernel.length(r)
    result = {"profile": profile.kind, "r": r, "R": R, "min_determinant": splicing.minimum_determinant(R, space)}
    if args.diag:
        rows = splicing.glue_diagnostic_rows(kernel, r)
        run.csv("glue_diag.csv", ["s", "beta", "glued", "antiglued", "determinant"], rows)
        result["diag_min_determinant"] = min(row[4] for row in rows)
    run.json("glue.json", result, passed=result["min_determinant"] >= 0.5 - 1e-12)
    return 0


GERMS = {"linear": lambda: germ.linear_germ(1), "sine": lambda: germ.sine_germ(1), "scale_sine": germ.scale_sine_germ}


def cmd_germ(args, cfg):
    for key in ("name", "v", "level"):
        if getattr(args, key) is not None:
            cfg.set("germ", key, getattr(args, key))
    run = Run(cfg, "germ")
    name = cfg.get("germ", "name")
    if name not in GERMS:
        raise ConfigError(f"germ.name: unknown germ {name!r}; choose from {sorted(GERMS)}", key="germ.name")
    g = GERMS[name]()
    level = cfg.get_int("germ", "level")
    v = np.full(g.param_dim, cfg.get_float("germ", "v"))
    u, log = germ.solve_germ(g, v, level=level, tol=cfg.get_float("tolerances", "germ"))
    run.csv("germ_log.csv", ["iteration", "level", "residual"], log.rows())
    result = {"germ": name, "level": level, "v": v, "iterations": log.iterations, "observed_rate": log.observed_rate,
              "declared_factor": g.contraction_factors[level], "solution_max": float(np.max(np.abs(u)))}
    if name == "sine":
        result["root_error"] = abs(float(u[0]) - germ.sine_root(float(v[0])))
    run.json("germ.json", result, passed=log.observed_rate <= g.contraction_factors[level] + 0.05)
    return 0


def _morse_problem(args, cfg):
    if args.problem:
        cfg.set("morse", "problem", args.problem)
    terms = cfg.get("morse", "terms").strip()
    if terms:
        dim = cfg.get("morse", "dimension").strip()
        return morse.MorseProblem.from_polynomial(morse.parse_polynomial_terms(terms), int(dim) if dim else None)
    return morse.MorseProblem.builtin(cfg.get("morse", "problem"))


def cmd_morse(args, cfg):
    problem = _morse_problem(args, cfg)
    run = Run(cfg, "morse")
    pts = problem.critical_points
    enum = morse.enumerate_all(problem, n_angles=cfg.get_int("morse", "n_angles"))
    Q = morse.counting_function(problem, ring=args.ring, enumerations=enum)
    for (a, b), res in sorted(enum.items()):
        for i, traj in enumerate(res.trajectories):
            path = run.path(f"trajectory_{a}_{b}_{i}.csv")
            os.makedirs(run.out, exist_ok=True)
            traj.to_csv(path)
            run.files.append(path)
    result = {
        "problem": problem.name,
        "critical_points": [p.to_dict() for p in pts],
        "counts": {f"{a},{b}": Q[(a, b)] for a, b in Q.structure.S},
        "reliable": all(r.reliable for r in enum.values()),
        "warnings": list(Q.warnings),
        "QQ_zero": algebra.convolve(Q, Q).is_zero(),
    }
    run.json("morse.json", result, passed=result["QQ_zero"])
    return 0


def cmd_degen(args, cfg):
    run = Run(cfg, "degen validate")
    structure = degen.DegenerationStructure.load(args.file)
    rep = degen.validate_structure(structure)
    result = rep.to_dict()
    result["input"] = os.path.basename(args.file)
    run.json("degen_validate.json", result, passed=rep.passed)
    return 0 if rep.passed else EXIT_FAILED


def _table_for(words, path):
    if path:
        return sftsym.OrbitSymbolTable.load(path)
    names = sorted({name for w in words for _, name in sftsym.parse_word(w).letters})
    return sftsym.OrbitSymbolTable(sftsym.Orbit(n) for n in names)


def cmd_sft(args, cfg):
    run = Run(cfg, "sft")
    table = _table_for(args.words, args.table)
    rows, result = [], {"table": table.to_dict(), "normal_forms": {}}
    for text in args.words:
        nf = sftsym.normalize(sftsym.parse_word(text, table), table, args.strategy)
        result["normal_forms"][text] = {"normal_form": str(nf), "terms": nf.to_dict()}
        rows.extend((text, t["word"], t["coefficient"]) for t in nf.to_dict())
    run.csv("sft_normal_forms.csv", ["input", "word", "coefficient"], rows)
    if args.induce:
        words = [w for w, _ in sftsym.normalize(sftsym.parse_word(args.words[0], table), table).items()]
        for text in args.words[1:]:
            words.extend(w for w, _ in sftsym.normalize(sftsym.parse_word(text, table), table).items())
        st = sftsym.induced_degeneration_structure(words, table)
        result["induced_structure"] = st.to_dict()
        result["induced_validation"] = degen.validate_structure(st).to_dict()
    run.json("sft.json", result)
    return 0


def cmd_algebra(args, cfg):
    run = Run(cfg, "algebra homology")
    structure = degen.DegenerationStructure.load(args.structure)
    with open(args.q) as fh:
        data = json.load(fh)
    Q = algebra.CountingFunction.from_dict(structure, data)
    if "index" in data:
        index = {str(k): int(v) for k, v in data["index"].items()}
        labels = sorted(index, key=lambda x: (index[x], x))
        cx = algebra.representation_complex(Q, labels, index)
    else:
        cx = algebra.dq_operator(Q).complex()
    hom = algebra.homology_f2(cx)
    run.csv("algebra_betti.csv", ["degree", "betti"], sorted(hom.betti.items()))
    run.csv("algebra_boundary.csv", ["row"] + [str(b) for b in cx.basis],
            [[str(b)] + [int(x) for x in row] for b, row in zip(cx.basis, cx.boundary)])
    result = {"complex": cx.to_dict(), "homology": hom.to_dict(), "QQ_zero": algebra.convolve(Q, Q).is_zero()}
    run.json("algebra_homology.json", result)
    return 0


def cmd_suite(args, cfg):
    run = Run(cfg, "suite")
    results = acceptance.run_all(cfg.seed)
    for r in results:
        print(r.line(), file=sys.stderr)
    run.csv("suite.csv", ["criterion", "title", "passed"], [(r.number, r.title, r.passed) for r in results])
    passed = all(r.passed for r in results)
    run.json("suite.json", {"criteria": [r.to_dict() for r in results]}, passed=passed)
    return 0 if passed else EXIT_FAILED


# ---------------------------------------------------------------------------


def _common(p, default):
    p.add_argument("--config", default=default, help="INI configuration file")
    p.add_argument("--out", default=default, help="output directory (SCFRED_OUT takes precedence)")
    p.add_argument("--seed", type=int, default=default, help="seed for randomized runs")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scfred", description="Scale-calculus Fredholm toolkit experiments.")
    _common(p, None)
    # the same options are accepted after the subcommand
    common = _Parser(add_help=False)
    _common(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, parents=[common], **k)

    s = sub.add_parser("space", help="level norms and embedding singular values")
    s.add_argument("--rank", type=int, default=40)
    s.set_defaults(func=cmd_space)

    s = sub.add_parser("glue", help="gluing length and determinant diagnostic")
    s.add_argument("--profile", choices=["exponential", "logarithmic"])
    s.add_argument("--r", type=float)
    s.add_argument("--diag", action="store_true", help="write the per-node diagnostic CSV")
    s.set_defaults(func=cmd_glue)

    s = sub.add_parser("germ", help="solve a contraction germ")
    s.add_argument("--name", choices=sorted(GERMS))
    s.add_argument("--v", type=float)
    s.add_argument("--level", type=int)
    s.set_defaults(func=cmd_germ)

    s = sub.add_parser("morse", help="critical points, connecting orbits and counts")
    s.add_argument("--problem", choices=sorted(morse.BUILTIN_PROBLEMS))
    s.add_argument("--ring", choices=sorted(algebra.RINGS), default="Z2")
    s.set_defaults(func=cmd_morse)

    s = sub.add_parser("degen", help="degeneration structures")
    dsub = s.add_subparsers(dest="action", required=True, parser_class=_Parser)
    v = dsub.add_parser("validate", help="check the three axioms")
    v.add_argument("file")
    v.set_defaults(func=cmd_degen)

    s = sub.add_parser("sft", help="normal forms of symbol words")
    s.add_argument("words", nargs="+")
    s.add_argument("--table", help="orbit table JSON")
    s.add_argument("--strategy", choices=["leftmost", "rightmost", "random"], default="leftmost")
    s.add_argument("--induce", action="store_true", help="also build and validate the induced structure")
    s.set_defaults(func=cmd_sft)

    s = sub.add_parser("algebra", help="homology of counting data")
    asub = s.add_subparsers(dest="action", required=True, parser_class=_Parser)
    h = asub.add_parser("homology")
    h.add_argument("structure")
    h.add_argument("q")
    h.set_defaults(func=cmd_algebra)

    s = sub.add_parser("suite", help="run the acceptance battery")
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.default()
        if args.out:
            cfg.set("run", "out_dir", args.out)
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        return args.func(args, cfg)
    except ConfigError as exc:
        _emit_error("ConfigError", str(exc), key=exc.key, line=exc.line)
    except ScfredError as exc:
        _emit_error(type(exc).__name__, str(exc))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _emit_error(type(exc).__name__, str(exc))
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
