"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 domain error, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .czo import builtin_kernel, kernel_condition_report, l2_opnorm
from .errors import InvalidSpec, LengthMismatch, ParseError, RbmoLabError
from .geometry import Cube, DoublingParams, build_family, dyadic_sides, enumerate_cubes
from .measure import CantorFourCorner, TwoScale, UniformGrid, build_measure, load_measure
from .rbmo import direct_norms, feasibility_norm, jn_profile
from .verify import boundedness_report, default_eps_grid, standard_corpus

CSV_SCHEMA = "rbmo-lab-csv/1"
CSV_COLUMNS = ("function", "eps", "norm_f", "norm_Tf", "ratio", "osc_witness",
               "pair_witness", "lemma23", "lemma23k", "lemma23k_k2", "fq_ratio",
               "h1", "h2", "sup_t1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidSpec(message)


# -- parsing helpers ----------------------------------------------------------


def parse_measure_spec(text: str, ambient_dim: int = 1, metric: str = "max"):
    kind, _, rest = text.partition(":")
    args = [a for a in rest.split(",") if a] if rest else []
    try:
        if kind == "uniform":
            if len(args) not in (0, 3):
                raise InvalidSpec("uniform spec is uniform:START,STOP,COUNT")
            start, stop, count = (float(args[0]), float(args[1]), int(args[2])) if args else (0.0, 1.0, 256)
            return UniformGrid(start, stop, count, ambient_dim, metric)
        if kind == "cantor":
            return CantorFourCorner(int(args[0]) if args else 3, metric)
        if kind == "twoscale":
            return TwoScale(count=int(args[0]) if args else 256, metric=metric)
    except ValueError as exc:
        raise InvalidSpec(f"bad measure spec {text!r}: {exc}") from exc
    raise InvalidSpec(f"unknown measure spec {text!r}")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def load_function(path, measure) -> np.ndarray:
    data = read_json(path)
    if not isinstance(data, dict) or "values" not in data:
        raise ParseError(f"{path}: expected an object with a 'values' list")
    try:
        v = np.asarray(data["values"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: values must be numbers") from exc
    if v.ndim != 1 or len(v) != measure.n_atoms:
        raise LengthMismatch(f"{path}: {v.size} values for {measure.n_atoms} atoms")
    if not np.all(np.isfinite(v)):
        raise ParseError(f"{path}: values must be finite")
    return v


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text(text: str, out, inputs=()) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    target = Path(out).resolve()
    if any(target == Path(p).resolve() for p in inputs if p):
        raise InvalidSpec(f"output {out} would overwrite an input file")
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _family(args, measure):
    params = DoublingParams.for_measure(measure, args.beta)
    stride = args.stride or max(1, measure.n_atoms // args.centers)
    return enumerate_cubes(measure, dyadic_sides(measure, args.levels), stride, params)


def _add_family_args(p):
    p.add_argument("--centers", type=int, default=16, help="number of cube centers (default 16)")
    p.add_argument("--stride", type=int, default=None, help="center stride; overrides --centers")
    p.add_argument("--levels", type=int, default=None, help="number of dyadic side lengths")
    p.add_argument("--beta", type=float, default=None, help="doubling threshold (default 2*4^(m+1))")


# -- commands -------------------------------------------------------------------


def cmd_gen_measure(args):
    measure = build_measure(parse_measure_spec(args.spec, args.ambient_dim, args.metric))
    write_text(json.dumps(measure.to_dict()) + "\n", args.out)


def cmd_check_kernel(args):
    measure = load_measure(args.measure)
    kernel = builtin_kernel(args.kernel)
    report = kernel_condition_report(kernel, measure, args.samples, args.seed).to_dict()
    eps = args.eps if args.eps else default_eps_grid(measure, 4)
    report["l2_opnorm"] = {repr(float(e)): l2_opnorm(kernel, measure, float(e), args.iterations)
                           for e in eps}
    write_text(dump_json(report), args.out, [args.measure])


def cmd_norm(args):
    measure = load_measure(args.measure)
    f = load_function(args.function, measure)
    family = _family(args, measure)
    tag = args.tag.strip()
    if tag in ("B", "C", "D"):
        rho = args.rho if args.rho is not None else 2.0
        est = direct_norms(measure, f, family, rho=rho, tags=(tag,))[0]
    else:
        est = feasibility_norm(measure, f, family, tag, rho=args.rho)
    write_text(dump_json(est.to_dict()), args.out, [args.measure, args.function])


def cmd_jn_profile(args):
    measure = load_measure(args.measure)
    f = load_function(args.function, measure)
    if args.center is None:
        lo, hi = measure.points.min(axis=0), measure.points.max(axis=0)
        center = tuple((lo + hi) / 2)
    else:
        center = tuple(float(x) for x in args.center.split(","))
    side = args.side if args.side else 2.0 * measure.extent() + 1e-9
    q = Cube(center, side)
    if args.f_q is not None:
        f_q = args.f_q
    else:
        f_q = feasibility_norm(measure, f, build_family(measure, [q]), "E").witness[0]
    dev = float(np.max(np.abs(f[measure.cube_mask(q.center, q.side)] - f_q)))
    lambdas = np.linspace(dev / args.points, dev, args.points) if dev > 0 else np.array([1.0])
    prof = jn_profile(measure, f, q, f_q, lambdas, args.rho)
    out = {
        "cube": [*q.center, q.side],
        "f_q": float(f_q),
        "lambdas": [float(x) for x in prof.lambdas],
        "masses": [float(x) for x in prof.masses],
        "slope": prof.slope,
        "intercept": prof.intercept,
        "r_squared": prof.r_squared,
        "residual": prof.residual,
        "fit_points": prof.fit_points,
    }
    write_text(dump_json(_finite(out)), args.out, [args.measure, args.function])


def _finite(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def _load_corpus(path, measure):
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise ParseError(f"no function files in {path}")
    return {f.stem: load_function(f, measure) for f in files}


def cmd_verify_theorem(args):
    measure = load_measure(args.measure)
    kernel = builtin_kernel(args.kernel)
    family = _family(args, measure)
    corpus = (_load_corpus(args.corpus, measure) if args.corpus
              else standard_corpus(measure, args.seed, args.corpus_size))
    eps = args.eps if args.eps else default_eps_grid(measure, args.eps_points)
    report = boundedness_report(kernel, measure, list(corpus.values()), family, eps,
                                names=list(corpus))
    data = report.to_dict()
    data["provenance"]["seed"] = args.seed
    inputs = [args.measure]
    write_text(dump_json(data), args.out, inputs)
    if args.csv:
        write_text(report_csv(data), args.csv, inputs + [args.out])


def report_csv(data: dict) -> str:
    """Flatten a theorem report into one row per (function, eps)."""
    by_eps = {r["eps"]: r for r in data["per_eps"]}
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA} rbmo-lab {data['provenance'].get('package_version', __version__)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in data["per_function"]:
        t1 = by_eps[row["eps"]]
        merged = {**row, "h1": t1["h1"], "h2": t1["h2"], "sup_t1": t1["sup_t1"]}
        w.writerow([merged[c] if c == "function" else repr(float(merged[c])) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [{k: (v if k == "function" else float(v)) for k, v in r.items()} for r in rows]


def cmd_report(args):
    parts = []
    for i, path in enumerate(args.inputs):
        text = report_csv(read_json(path))
        parts.append(text if i == 0 else "".join(text.splitlines(True)[2:]))
    write_text("".join(parts), args.csv, args.inputs)


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rbmo-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rbmo-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-measure", help="write a canonical measure as JSON")
    g.add_argument("--spec", required=True,
                   help="uniform:START,STOP,COUNT | cantor:DEPTH | twoscale:COUNT")
    g.add_argument("--ambient-dim", type=int, default=1)
    g.add_argument("--metric", choices=("max", "euclidean"), default="max")
    g.add_argument("--out")
    g.set_defaults(run=cmd_gen_measure)

    k = sub.add_parser("check-kernel", help="empirical kernel constants and L2 norms")
    k.add_argument("--kernel", required=True)
    k.add_argument("--measure", required=True)
    k.add_argument("--samples", type=int, default=1000)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--eps", type=float, nargs="*")
    k.add_argument("--iterations", type=int, default=500)
    k.add_argument("--out")
    k.set_defaults(run=cmd_check_kernel)

    n = sub.add_parser("norm", help="one RBMO norm of a function")
    n.add_argument("--measure", required=True)
    n.add_argument("--function", required=True)
    n.add_argument("--tag", default="E", help="E, A, B, C or D")
    n.add_argument("--rho", type=float, default=None)
    _add_family_args(n)
    n.add_argument("--out")
    n.set_defaults(run=cmd_norm)

    j = sub.add_parser("jn-profile", help="level-set masses on one cube")
    j.add_argument("--measure", required=True)
    j.add_argument("--function", required=True)
    j.add_argument("--center", help="comma-separated center (default: middle of the support)")
    j.add_argument("--side", type=float, help="cube side (default: covers the support)")
    j.add_argument("--f-q", type=float, default=None, help="constant f_Q (default: optimal)")
    j.add_argument("--points", type=int, default=40)
    j.add_argument("--rho", type=float, default=1.0)
    j.add_argument("--out")
    j.set_defaults(run=cmd_jn_profile)

    v = sub.add_parser("verify-theorem", help="full boundedness report")
    v.add_argument("--kernel", required=True)
    v.add_argument("--measure", required=True)
    v.add_argument("--corpus", help="directory of function JSON files")
    v.add_argument("--corpus-size", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--eps", type=float, nargs="*")
    v.add_argument("--eps-points", type=int, default=8)
    _add_family_args(v)
    v.add_argument("--out", required=True)
    v.add_argument("--csv")
    v.set_defaults(run=cmd_verify_theorem)

    r = sub.add_parser("report", help="convert theorem reports to CSV")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--csv")
    r.set_defaults(run=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.run(args)
    except RbmoLabError as exc:
        print(f"rbmo-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"rbmo-lab: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    return 0
