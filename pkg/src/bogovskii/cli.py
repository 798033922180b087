"""bgk: solve, verify and inspect Bogovskii potentials from problem JSON files.

Expressions use the fieldlang grammar (see docs/fieldlang.md).  Unary minus binds
looser than ^, so "-2^2" is -4.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings

import numpy as np

from . import __version__, dini
from .bump import Mollifier
from .fieldlang import FieldEvalError, FieldSyntaxError
from .geometry import GeometryError
from .kernel import KernelContext, measure_diagnostics
from .potential import EpsilonSchedule, StarShapeError
from .problem import ProblemSpec, SpecError, load_problem
from .verify import check_suite, convergence_study, interior_probes

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ formatting


def fmt(x) -> str:
    return format(float(x) + 0.0, ".17g")  # no "-0"


def _json_text(obj) -> str:
    """JSON with every float written to 17 significant digits (NaN/inf become null)."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_text(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_text(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in r) + "\n")
    return buf.getvalue()


def _records_csv(records: list) -> str:
    header = list(records[0].keys()) if records else []

    def cell(v):
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return v

    return _csv_text(header, [[cell(r[k]) for k in header] for r in records])


def _emit(args, text: str) -> None:
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


# ------------------------------------------------------------------ argument parsing


def parse_floats(text: str) -> list:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def parse_points(text: str, dim: int) -> np.ndarray:
    """"x1,x2;x1,x2;..." or a path to a CSV file with one point per line."""
    if ";" not in text and "," not in text:
        try:
            arr = np.loadtxt(text, delimiter=",", ndmin=2)
        except OSError as exc:
            raise UsageError(f"cannot read points file {text!r}") from exc
    else:
        try:
            arr = np.array([[float(t) for t in row.split(",")] for row in text.split(";") if row.strip()])
        except ValueError as exc:
            raise UsageError(f"bad point list {text!r}") from exc
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise UsageError(f"points must have {dim} coordinates")
    return arr


def parse_grid(text: str, domain) -> np.ndarray:
    """grid:NxN[:margin] over the bounding box enlarged by margin * side on every face."""
    parts = text.split(":")
    if parts[0] != "grid" or len(parts) not in (2, 3):
        raise UsageError(f"bad grid spec {text!r}; expected grid:NxN[:margin]")
    try:
        counts = [int(c) for c in parts[1].lower().split("x")]
        margin = float(parts[2]) if len(parts) == 3 else 0.1
    except ValueError as exc:
        raise UsageError(f"bad grid spec {text!r}") from exc
    if len(counts) != domain.dim or min(counts) < 1 or margin < 0:
        raise UsageError(f"grid needs {domain.dim} positive counts and a nonnegative margin")
    bb = domain.bounding_ball
    lo = bb.c - bb.radius * (1 + 2 * margin)
    hi = bb.c + bb.radius * (1 + 2 * margin)
    axes = [np.linspace(a, b, k) if k > 1 else np.array([(a + b) / 2]) for a, b, k in zip(lo, hi, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _load(args) -> ProblemSpec:
    spec = load_problem(args.spec)
    return spec.with_mutation(getattr(args, "mutate_kernel", False))


# ------------------------------------------------------------------ commands


def cmd_solve(args) -> int:
    spec = _load(args)
    pts = parse_grid(args.points, spec.domain) if args.points.startswith("grid:") else parse_points(args.points, spec.dim)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec.check_zero_mean()
    for w in caught:
        print(f"bgk: warning: {w.message}", file=sys.stderr)
    v = spec.build(gate=True)
    inside = spec.domain.contains(pts)
    vals = np.zeros((len(pts), spec.dim))
    div = np.zeros(len(pts))
    if np.any(inside):
        vals[inside] = v.v_many(pts[inside])
        div[inside] = v.div_many(pts[inside])
    F = np.where(inside, spec.F(pts), 0.0)
    n = spec.dim
    if args.json:
        recs = [{"x": p.tolist(), "v": q.tolist(), "div": d, "F": f, "inside": bool(i)}
                for p, q, d, f, i in zip(pts, vals, div, F, inside)]
        _emit(args, _json_text(recs))
    else:
        header = [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["div", "F"]
        _emit(args, _csv_text(header, np.column_stack([pts, vals, div, F])))
    if args.figure:
        from .plotting import solve_figure

        solve_figure(args.figure, pts, vals, div[inside] if np.any(inside) else div, F[inside] if np.any(inside) else F)
    return EXIT_OK


def cmd_verify(args) -> int:
    spec = _load(args)
    reports = check_suite(spec, args.level)
    recs = [r.to_dict() for r in reports]
    _emit(args, _records_csv(recs) if args.csv else _json_text(recs))
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_convergence(args) -> int:
    spec = _load(args)
    sched = spec.epsilon_schedule
    if args.schedule is not None:
        values = parse_floats(args.schedule)
        if not values:
            raise UsageError("empty epsilon schedule")
        sched = EpsilonSchedule(tuple(values))
    if args.probes is None:
        probes = interior_probes(spec.domain, 3)
    elif args.probes.isdigit():
        probes = interior_probes(spec.domain, int(args.probes))
    else:
        probes = parse_points(args.probes, spec.dim)
    v = spec.build(gate=True)
    table = convergence_study(v, sched, probes, spec.F, spec.mean())
    for note in table.notes:
        print(note, file=sys.stderr)
    rows = table.rows()
    if args.json:
        _emit(args, _json_text({"epsilon": list(table.epsilons), "probes": table.probes.tolist(),
                                "rows": [{"epsilon": e, "probe_index": j, "residual": r} for e, j, r in rows],
                                "monotone": table.monotone_flag, "notes": list(table.notes)}))
    else:
        _emit(args, _csv_text(["epsilon", "probe_index", "residual"], [(e, str(j), r) for e, j, r in rows]))
    if args.figure:
        from .plotting import convergence_figure

        convergence_figure(args.figure, table.epsilons, table.residuals)
    return EXIT_OK


def cmd_dini(args) -> int:
    spec = load_problem(args.spec)
    a = dini.assess(spec.F, spec.domain, n_pairs=args.pairs, seed=spec.seed)
    est = a.estimate
    if args.csv:
        _emit(args, _csv_text(["rho", "omega"], np.column_stack([est.rhos, est.omegas])))
    else:
        _emit(args, _json_text({
            "modulus": [{"rho": r, "omega": w} for r, w in zip(est.rhos, est.omegas)],
            "dini_integral": a.integral,
            "max_abs": a.max_abs,
            "cd_norm_lower_bound": a.cd_norm,
            "decade_contributions": a.decades.tolist(),
            "decay_ratio": a.ratio,
            "rho_min": a.rho_min,
            "verdict": a.verdict,
        }))
    if args.figure:
        from .plotting import modulus_figure

        modulus_figure(args.figure, est.rhos, est.omegas)
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    spec = _load(args)
    pieces = spec.domain.pieces if spec.is_union else (spec.domain,)
    balls = [p.center_ball for p in pieces] if spec.is_union else [spec.mollifier_ball]
    recs = []
    for k, (piece, ball) in enumerate(zip(pieces, balls)):
        ctx = KernelContext(Mollifier(ball), piece, spec.quad, spec.mutate)
        d = measure_diagnostics(ctx, args.pairs, spec.seed).to_dict()
        recs.append({"piece": k, **d})
    _emit(args, _records_csv(recs) if args.csv else _json_text(recs))
    return EXIT_OK


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgk", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, figure=False, mutate=True):
        sp.add_argument("spec", help="problem JSON file")
        fmt_group = sp.add_mutually_exclusive_group()
        fmt_group.add_argument("--json", action="store_true", help="JSON output")
        fmt_group.add_argument("--csv", action="store_true", help="CSV output")
        sp.add_argument("-o", "--output", help="write to this path instead of stdout")
        if figure:
            sp.add_argument("--figure", metavar="PATH", help="also save a PNG figure (needs matplotlib)")
        if mutate:
            sp.add_argument("--mutate-kernel", action="store_true",
                            help="debug: drop the grad-psi term from K (the checks should then fail)")

    sp = sub.add_parser("solve", help="evaluate v and div v at points")
    common(sp, figure=True)
    sp.add_argument("--points", required=True, help='"x1,x2;x1,x2", a CSV path, or grid:NxN[:margin]')
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="run the check suite (JSON by default)")
    common(sp)
    sp.add_argument("--level", choices=("quick", "full"), default="quick")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("convergence", help="div v^eps residual table")
    common(sp, figure=True)
    sp.add_argument("--schedule", help="comma-separated decreasing epsilons (default from the spec)")
    sp.add_argument("--probes", help="probe count or point list")
    sp.set_defaults(func=cmd_convergence)

    sp = sub.add_parser("dini", help="modulus of continuity and Dini integral of F (JSON by default)")
    common(sp, figure=True, mutate=False)
    sp.add_argument("--pairs", type=int, default=20000)
    sp.set_defaults(func=cmd_dini)

    sp = sub.add_parser("kernel-check", help="measured kernel constants (JSON by default)")
    common(sp)
    sp.add_argument("--pairs", type=int, default=10_000)
    sp.set_defaults(func=cmd_kernel_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except json.JSONDecodeError as exc:
        print(f"bgk: malformed JSON in {args.spec}: {exc}", file=sys.stderr)
    except StarShapeError as exc:
        print(f"bgk: star-shape gate failed: {exc}", file=sys.stderr)
    except (SpecError, FieldSyntaxError, FieldEvalError, GeometryError, OSError) as exc:
        print(f"bgk: {exc}", file=sys.stderr)
    except ValueError as exc:
        # schedule and other argument validation from the library
        print(f"bgk: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
