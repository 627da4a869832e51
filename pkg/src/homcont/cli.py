"""Command-line front end.

Subcommands: spectrum, solve, continue, admissible, index.  Models come from
--model plus parameter flags or from a JSON/TOML config file.  All file
output is written atomically (temp file + rename) and floats are serialized
with shortest round-trip formatting, so identical configurations produce
bit-identical files.  Exit codes: 0 success, 1 usage error, 2 numerical
failure (no convergence, missing dichotomy, ...).

HOMOCONT_THREADS caps internal parallelism (the two branch directions of
`continue` run concurrently when it is at least 2).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import admissibility as adm
from . import dichotomy as dich
from . import models as mdl
from .continuation import Branch, ContinuationSettings, classify, continue_branch
from .sequences import Window, from_values, sup_norm, write_csv, zeros
from .solver import (
    ConvergenceError,
    DomainError,
    NewtonSettings,
    NonHyperbolicError,
    hyperbolicity_report,
    newton_solve,
    residual,
)

__all__ = ["main", "build_parser", "load_branch_solutions"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors (argparse default is 2)
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-homcont-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="builtin model name")
    p.add_argument("--config", help="JSON or TOML model config file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--b-rate", dest="b_rate", type=float)
    p.add_argument("--a-minus", dest="a_minus", help="comma-separated growth table for t < 0")
    p.add_argument("--a-plus", dest="a_plus", help="comma-separated growth table for t >= 0")
    p.add_argument("--lambda-star", dest="lambda_star", type=float)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--rng-seed", type=int, default=0, help="seed for randomized internals")


def _model_from_args(args) -> mdl.BuiltinModel:
    if args.config:
        return mdl.from_config(mdl.load_config(args.config))
    if not args.model:
        raise SystemExit_usage("either --model or --config is required")
    params = {}
    for key in ("alpha", "delta", "a", "beta", "b_rate", "lambda_star"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    for key in ("a_minus", "a_plus"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = tuple(float(v) for v in val.split(","))
    return mdl.build(args.model, **params)


def SystemExit_usage(message: str) -> SystemExit:
    print(f"homcont: error: {message}", file=sys.stderr)
    return SystemExit(1)


def _parse_window(spec: str | None, default: Window) -> Window:
    if spec is None:
        return default
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        return Window(int(lo), int(hi))
    half = int(spec)
    return Window(-half, half)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="homcont", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_spec = sub.add_parser("spectrum", help="dichotomy spectrum of the variational equation")
    _add_model_flags(p_spec)
    p_spec.add_argument("--lambda", dest="lam", type=float, default=None)
    p_spec.add_argument("--interval", choices=dich.INTERVALS, default="Z")
    p_spec.add_argument("--gamma-min", type=float)
    p_spec.add_argument("--gamma-max", type=float)
    p_spec.add_argument("--resolution", type=float, default=1e-6)
    p_spec.add_argument("--window", help="half-width or t_minus:t_plus")

    p_solve = sub.add_parser("solve", help="Newton solve for a decaying solution")
    _add_model_flags(p_solve)
    p_solve.add_argument("--lambda", dest="lam", type=float, required=True)
    p_solve.add_argument("--window", help="half-width or t_minus:t_plus")
    p_solve.add_argument("--bc", choices=("zero", "projected"), default="zero")
    p_solve.add_argument("--tol", type=float, default=1e-12)
    p_solve.add_argument("--tail-tol", type=float, default=1e-10)
    p_solve.add_argument("--start", choices=("trivial", "oracle"), default="trivial")
    p_solve.add_argument("--sign", type=int, default=1)

    p_cont = sub.add_parser("continue", help="pseudo-arclength continuation of the branch")
    _add_model_flags(p_cont)
    p_cont.add_argument("--direction", choices=("plus", "minus", "both"), default="both")
    p_cont.add_argument("--seed", choices=("trivial", "oracle"), default="trivial",
                        help="how to seed the starting solution")
    p_cont.add_argument("--sign", type=int, default=1, help="branch sign for oracle seeding")
    p_cont.add_argument("--step", type=float, default=0.02)
    p_cont.add_argument("--min-step", type=float, default=1e-6)
    p_cont.add_argument("--max-step", type=float, default=0.05)
    p_cont.add_argument("--max-points", type=int, default=400)
    p_cont.add_argument("--lambda-min", type=float)
    p_cont.add_argument("--lambda-max", type=float)
    p_cont.add_argument("--norm-budget", type=float, default=1e3)
    p_cont.add_argument("--tol", type=float, default=1e-12)
    p_cont.add_argument("--tail-tol", type=float, default=1e-10)
    p_cont.add_argument("--window", help="half-width or t_minus:t_plus")
    p_cont.add_argument("--bc", choices=("zero", "projected"), default="zero")
    p_cont.add_argument("--no-hyperbolicity", action="store_true",
                        help="skip the per-point hyperbolicity checks")

    p_adm = sub.add_parser("admissible", help="admissibility certificates for the limit equations")
    _add_model_flags(p_adm)
    p_adm.add_argument("--lambda", dest="lam", type=float, required=True)

    p_idx = sub.add_parser("index", help="Fredholm index of the variational difference operator")
    _add_model_flags(p_idx)
    p_idx.add_argument("--lambda", dest="lam", type=float, required=True)
    p_idx.add_argument("--window", help="half-width or t_minus:t_plus")

    return parser


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_spectrum(args) -> int:
    bm = _model_from_args(args)
    lam = args.lam if args.lam is not None else bm.model.reference_lambda
    from .solver import variational_system

    window = _parse_window(args.window, None) if args.window else None
    vs = variational_system(bm.model, zeros(Window(-3, 3), bm.model.dim), lam)
    gamma_range = None
    if args.gamma_min is not None and args.gamma_max is not None:
        gamma_range = (args.gamma_min, args.gamma_max)
    report = dich.dichotomy_spectrum(
        vs, args.interval, gamma_range, resolution=args.resolution, window=window
    )
    payload = report.to_json_dict()
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    _write_json(os.path.join(args.out_dir, "spectrum.json"), payload)
    if args.format == "csv":
        lines = ["gamma_lo,gamma_hi"] + [f"{_fmt(lo)},{_fmt(hi)}" for lo, hi in report.intervals]
        _write_atomic(os.path.join(args.out_dir, "spectrum.csv"), "\n".join(lines) + "\n")
    return 0


def _start_sequence(bm: mdl.BuiltinModel, lam: float, window: Window, mode: str, sign: int):
    if mode == "oracle":
        if bm.name not in ("transcritical", "pitchfork"):
            raise SystemExit_usage(f"no oracle seeding for model {bm.name!r}")
        return mdl.seed_homoclinic(bm.name, bm.parameters, lam, window, sign)
    return bm.model.reference(window)


def _cmd_solve(args) -> int:
    bm = _model_from_args(args)
    window = _parse_window(args.window, Window(-40, 60))
    phi0 = _start_sequence(bm, args.lam, window, args.start, args.sign)
    settings = NewtonSettings(residual_tol=args.tol, tail_tol=args.tail_tol, bc_mode=args.bc)
    phi, diag = newton_solve(bm.model, phi0, args.lam, settings)
    diagnostics = {
        "iterations": diag.iterations,
        "final_residual": diag.final_residual,
        "residual_history": diag.residual_history,
        "window": list(diag.window),
        "tail_left": diag.tail_left,
        "tail_right": diag.tail_right,
        "window_growths": diag.window_growths,
        "bc_mode": diag.bc_mode,
        "warnings": diag.warnings,
        "lambda": args.lam,
        "sup_norm": sup_norm(phi),
    }
    if args.format == "json":
        payload = dict(
            diagnostics,
            t=[int(t) for t in phi.window.indices()],
            values=[[float(v) for v in row] for row in phi.values],
        )
        _write_json(os.path.join(args.out_dir, "solution.json"), payload)
    else:
        write_csv(phi, os.path.join(args.out_dir, "solution.csv"))
        _write_json(os.path.join(args.out_dir, "solve.json"), diagnostics)
    print(f"converged in {diag.iterations} iterations, residual {diag.final_residual:.3e}")
    return 0


def _branch_rows(branch: Branch, sign: float):
    rows = []
    for p in branch.points:
        rows.append(
            [sign * p.arclength, p.lam, p.sup, int(p.fold)] + [float(v) for v in p.phi.at(0)]
        )
    return rows


def _cmd_continue(args) -> int:
    bm = _model_from_args(args)
    model = bm.model
    lam0 = args.lambda_star if args.lambda_star is not None else model.reference_lambda
    window = _parse_window(args.window, Window(-45, 45))
    phi0 = _start_sequence(bm, lam0, window, args.seed, args.sign)
    budget = None
    if args.lambda_min is not None or args.lambda_max is not None:
        budget = (
            args.lambda_min if args.lambda_min is not None else lam0 - 100.0,
            args.lambda_max if args.lambda_max is not None else lam0 + 100.0,
        )
    settings = ContinuationSettings(
        step=args.step,
        min_step=args.min_step,
        max_step=args.max_step,
        max_points=args.max_points,
        lambda_budget=budget,
        norm_budget=args.norm_budget,
        corrector_tol=args.tol,
        tail_tol=args.tail_tol,
        bc_mode=args.bc,
        check_hyperbolicity=not args.no_hyperbolicity,
    )

    directions = ("plus", "minus") if args.direction == "both" else (args.direction,)
    threads = int(os.environ.get("HOMOCONT_THREADS", "1"))
    if len(directions) == 2 and threads >= 2:
        with ThreadPoolExecutor(max_workers=2) as pool:
            futures = {
                d: pool.submit(continue_branch, model, d, settings, (phi0, lam0))
                for d in directions
            }
            branches = {d: f.result() for d, f in futures.items()}
    else:
        branches = {
            d: continue_branch(model, d, settings, (phi0, lam0)) for d in directions
        }

    header = ["s", "lambda", "sup_norm", "fold_flag"] + [
        f"x{i + 1}_0" for i in range(model.dim)
    ]
    rows = []
    if "minus" in branches:
        rows.extend(reversed(_branch_rows(branches["minus"], -1.0)))
    if "plus" in branches:
        plus_rows = _branch_rows(branches["plus"], 1.0)
        rows.extend(plus_rows[1:] if "minus" in branches else plus_rows)
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    _write_atomic(os.path.join(args.out_dir, "branch.csv"), "\n".join(lines) + "\n")

    sol_lines = ["direction,point,t" + "".join(f",x{i + 1}" for i in range(model.dim))]
    for d, branch in branches.items():
        for i, p in enumerate(branch.points):
            for t, row in zip(p.phi.window.indices(), p.phi.values):
                sol_lines.append(
                    f"{d},{i},{int(t)}," + ",".join(_fmt(v) for v in row)
                )
    _write_atomic(os.path.join(args.out_dir, "branch_solutions.csv"), "\n".join(sol_lines) + "\n")

    payload = {
        "lambda_star": lam0,
        "outcomes": {
            d: {
                "code": b.outcome.code,
                "evidence": _jsonify(b.outcome.evidence),
                "message": b.outcome.message,
                "points": len(b.points),
                "lambda_range": [float(b.lambdas.min()), float(b.lambdas.max())],
            }
            for d, b in branches.items()
        },
    }
    if len(branches) == 2:
        label = classify(branches["plus"], branches["minus"], model)
        payload["classification"] = {
            "label": label.label,
            "alternatives": label.alternatives,
            "text": label.text,
        }
        print(f"classification: {label.label}")
    for d, b in branches.items():
        print(f"{d}: {b.outcome.code} after {len(b.points)} points")
    _write_json(os.path.join(args.out_dir, "branch.json"), payload)
    return 0


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _cmd_admissible(args) -> int:
    bm = _model_from_args(args)
    cm, cp = adm.check_limit_admissibility(bm.model, args.lam)
    payload = {
        "lambda": args.lam,
        "backward_limit": _cert_dict(cm),
        "forward_limit": _cert_dict(cp),
        "both_verified": bool(cm.verified and cp.verified),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    _write_json(os.path.join(args.out_dir, "admissibility.json"), payload)
    return 0


def _cert_dict(cert: adm.AdmissibilityCertificate) -> dict:
    return {
        "criterion": cert.criterion,
        "verified": bool(cert.verified),
        "numbers": _jsonify(cert.numbers),
        "reason": cert.reason,
    }


def _cmd_index(args) -> int:
    bm = _model_from_args(args)
    from .solver import variational_system

    window = _parse_window(args.window, dich.default_window(
        variational_system(bm.model, zeros(Window(-3, 3), bm.model.dim), args.lam), "Z"
    ))
    vs = variational_system(bm.model, zeros(window, bm.model.dim), args.lam)
    index, (rep_p, rep_m) = dich.fredholm_index(vs, window)
    print(index)
    _write_json(
        os.path.join(args.out_dir, "index.json"),
        {
            "index": int(index),
            "rank_plus": int(rep_p.projector_rank),
            "rank_minus": int(rep_m.projector_rank),
            "lambda": args.lam,
        },
    )
    return 0


def load_branch_solutions(path: str):
    """Read branch_solutions.csv back into sequences keyed by (direction, point)."""
    groups: dict[tuple[str, int], list[tuple[int, list[float]]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for rec in reader:
            key = (rec[0], int(rec[1]))
            groups.setdefault(key, []).append((int(rec[2]), [float(v) for v in rec[3:]]))
    out = {}
    for key, rows in groups.items():
        rows.sort()
        out[key] = from_values(rows[0][0], np.array([r[1] for r in rows]))
    return out


def main(argv=None) -> int:
    parser = build_parser()
    handlers = {
        "spectrum": _cmd_spectrum,
        "solve": _cmd_solve,
        "continue": _cmd_continue,
        "admissible": _cmd_admissible,
        "index": _cmd_index,
    }
    try:
        args = parser.parse_args(argv)
        return handlers[args.command](args)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    except (ValueError, DomainError) as exc:
        print(f"homcont: error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, NonHyperbolicError, dich.NotFredholmError, np.linalg.LinAlgError) as exc:
        print(f"homcont: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
