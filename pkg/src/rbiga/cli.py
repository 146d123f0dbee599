"""Command-line driver: ``rbiga validate|truth|offline|online|verify|report``.

Results are written to ``--out`` (default ``$RBIGA_OUTPUT_DIR`` or ``./rbiga_out``).
Every command prints a JSON summary on stdout and exits nonzero on failure.
"""
import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .case import Case, load_model, save_model
from .greedy import convergence_report

EXIT_FAIL = 1
EXIT_ERROR = 2


def parse_mu(text):
    try:
        return np.array([float(t) for t in text.replace(";", ",").split(",") if t.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse parameter vector {text!r}") from None


def read_mu_file(path):
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return [r for r in rows]


def output_dir(args):
    out = Path(args.out or os.environ.get("RBIGA_OUTPUT_DIR") or "rbiga_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_case(args):
    level = getattr(args, "level", None)
    if args.preset:
        return Case.preset(args.preset, level)
    if args.case:
        cfg = json.loads(Path(args.case).read_text())
        base = Path(args.case).parent
        geo, prob = base / cfg["geometry"], base / cfg["problem"]
        subdiv = cfg.get("subdivisions")
        return Case(geo, prob, level_subdivisions=subdiv, name=Path(args.case).stem)
    if args.geometry and args.problem:
        return Case(args.geometry, args.problem, name=Path(args.geometry).stem)
    raise SystemExit("rbiga: give --preset, --case, or both --geometry and --problem")


def emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in r])


def field_header(dim):
    return (["patch"] + [f"xi{i + 1}" for i in range(dim)]
            + [f"x{i + 1}" for i in range(dim)] + ["u"])


# -- commands ---------------------------------------------------------------------------

def cmd_validate(args):
    case = load_case(args)
    report = case.validate(n_samples=args.samples, seed=args.seed)
    report["case"] = case.name
    emit(report)
    return 0 if report["ok"] else EXIT_FAIL


def cmd_truth(args):
    case = load_case(args)
    out = output_dir(args)
    t0 = time.perf_counter()
    u, s = case.truth(args.mu)
    elapsed = time.perf_counter() - t0
    table = case.sample_field(u, args.mu, n=args.grid)
    dim = (table.shape[1] - 2) // 2
    path = out / "truth_field.csv"
    write_csv(path, field_header(dim), [[int(r[0])] + list(r[1:]) for r in table])
    emit({"case": case.name, "mu": args.mu, "s": s, "dofs": case.n_dofs,
          "free_dofs": case.decomposition.size, "field_csv": str(path),
          "solve_seconds": elapsed})
    return 0


def cmd_offline(args):
    case = load_case(args)
    out = output_dir(args)
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    t0 = time.perf_counter()
    space, model, history = case.offline(train=args.train, tol=args.tol, n_max=args.nmax,
                                         first=args.first, estimator=args.estimator,
                                         coercivity=args.coercivity, log=log,
                                         normalize=args.normalize)
    elapsed = time.perf_counter() - t0
    archive = out / args.archive_name
    meta = {"case": case.name, "level": args.level, "tol": args.tol, "train": args.train,
            "normalize": args.normalize}
    save_model(archive, model, meta, space=space, decomp=case.decomposition)
    (out / "convergence.csv").write_text(convergence_report(history))
    timings = {"offline_seconds": elapsed, "per_iteration": history.wall_time,
               "backend": kernels.BACKEND}
    (out / "timings.json").write_text(json.dumps(timings, indent=2))
    emit({"case": case.name, "N": model.N, "converged": history.converged,
          "exact_space": history.exact_space,
          "max_delta": history.max_delta[-1] if history.max_delta else None,
          "archive": str(archive), "convergence_csv": str(out / "convergence.csv")})
    return 0 if history.converged or history.exact_space else EXIT_FAIL


def cmd_online(args):
    model = load_model(args.archive)
    mus = list(args.mu or [])
    if args.mu_file:
        mus += read_mu_file(args.mu_file)
    if not mus:
        raise SystemExit("rbiga online: give --mu or --mu-file")
    rows = []
    t0 = time.perf_counter()
    for mu in mus:
        q = model.query(mu, N=args.N, estimator=args.estimator)
        rows.append({"mu": np.asarray(mu).tolist(), "s_N": q["s_N"], "delta": q["delta"],
                     "alpha_LB": q["alpha_LB"]})
    per_query = (time.perf_counter() - t0) / len(mus)
    result = {"N": model.N if args.N is None else args.N, "queries": rows,
              "seconds_per_query": per_query}
    if args.field:
        if model.basis is None:
            raise SystemExit("rbiga online: archive holds no basis; cannot reconstruct")
        case = load_case(args)
        out = output_dir(args)
        u = model.basis[:, :len(q["coefficients"])] @ q["coefficients"]
        table = case.sample_field(u, mus[-1], n=args.grid)
        dim = (table.shape[1] - 2) // 2
        write_csv(out / "online_field.csv", field_header(dim),
                  [[int(r[0])] + list(r[1:]) for r in table])
        result["field_csv"] = str(out / "online_field.csv")
    emit(result)
    return 0


def cmd_verify(args):
    if args.samples < 1:
        raise SystemExit("rbiga verify: --samples must be at least 1")
    model = load_model(args.archive)
    case = load_case(args)
    if model.basis is None or model.basis.shape[0] != case.decomposition.size:
        raise SystemExit("rbiga verify: archive basis does not match this case")
    mus = case.pdomain.sample(args.samples, args.seed)
    rows, violations = [], 0
    for mu in mus:
        q = model.query(mu, estimator="energy")
        u, s = case.truth(mu)
        e = u - model.basis @ q["coefficients"]
        err = case.energy_norm(e, mu)
        ok = q["delta"] >= err * (1.0 - 1e-12)
        violations += not ok
        rows.append({"mu": mu.tolist(), "delta": q["delta"], "error": err,
                     "effectivity": q["delta"] / err if err > 0 else float("inf"),
                     "s": s, "s_N": q["s_N"], "rigorous": bool(ok)})
    out = output_dir(args)
    (out / "verify.json").write_text(json.dumps(rows, indent=2))
    write_csv(out / "verify.csv", ["delta", "error", "effectivity", "s", "s_N"],
              [[r["delta"], r["error"], r["effectivity"], r["s"], r["s_N"]] for r in rows])
    eff = [r["effectivity"] for r in rows if np.isfinite(r["effectivity"])]
    emit({"samples": len(rows), "violations": violations,
          "effectivity_min": min(eff) if eff else None,
          "effectivity_max": max(eff) if eff else None,
          "report": str(out / "verify.json")})
    return 0 if violations == 0 else EXIT_FAIL


def cmd_report(args):
    model = load_model(args.archive)
    meta = dict(model.metadata)
    meta["history"] = convergence_report(model.history, fmt="json")
    emit(meta)
    return 0


# -- parser ---------------------------------------------------------------------------------

def _case_args(p):
    g = p.add_argument_group("case")
    g.add_argument("--preset", help="pipeline, cylinder, torus or annulus")
    g.add_argument("--case", help="case file naming geometry and problem files")
    g.add_argument("--geometry")
    g.add_argument("--problem")
    g.add_argument("--level", type=int, default=None, help="preset refinement level")


def build_parser():
    parser = argparse.ArgumentParser(prog="rbiga", description=__doc__.splitlines()[0])
    parser.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="structural and sampled checks")
    _case_args(p)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("truth", help="truth solve, field dump and output")
    _case_args(p)
    p.add_argument("--mu", type=parse_mu, required=True)
    p.add_argument("--grid", type=int, default=5, help="field samples per direction")
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("offline", help="greedy build of a reduced model")
    _case_args(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--nmax", type=int, default=50)
    p.add_argument("--train", default="lattice=5x5x5")
    p.add_argument("--first", default="centroid")
    p.add_argument("--estimator", choices=["energy", "xnorm"], default="energy")
    p.add_argument("--coercivity", default="mintheta", help="mintheta or scm:eps")
    p.add_argument("--normalize", choices=["none", "output"], default="none",
                   help="stop on the relative output bound instead of the absolute one")
    p.add_argument("--archive-name", default="model.rbz")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="evaluate a stored reduced model")
    _case_args(p)
    p.add_argument("--archive", required=True)
    p.add_argument("--mu", type=parse_mu, action="append")
    p.add_argument("--mu-file", help="CSV file, one parameter vector per row")
    p.add_argument("--N", type=int, default=None, help="use the first N basis functions")
    p.add_argument("--estimator", choices=["energy", "xnorm"], default="energy")
    p.add_argument("--field", action="store_true", help="dump the field at the last mu")
    p.add_argument("--grid", type=int, default=5)
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("verify", help="compare error bounds with truth errors")
    _case_args(p)
    p.add_argument("--archive", required=True)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="print archive metadata and convergence history")
    p.add_argument("--archive", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # reported, not swallowed: nonzero exit with the error name
        print(f"rbiga {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
