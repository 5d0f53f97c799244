"""Command-line interface: ``design``, ``infer``, ``simulate`` and ``dist``.

Exit codes: 0 success, 1 user error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._io import read_column, write_csv, write_json
from ._rng import substream
from .balance import BalanceCriterion, Kind
from .calibrate import (
    DesignBudget,
    calibrate_criterion,
    calibrate_fixed,
    calibrate_threshold,
    default_delta,
    select_lambda,
)
from .core import CovariateMatrix, compute_spectrum, load_covariates
from .errors import InputError, NumericalError
from .inference import EmptyConfidenceSet, default_grid, invert_ci
from .sampler import default_max_draws, rerandomize
from .simulate import PRESETS, SimulationSpec, figure1_demo, run_study, write_figure1
from .wchi2 import WeightedChiSquare, imhof_cdf, wchi2_quantile

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are user errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _lambda(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lambda takes 'auto' or a number, got {text!r}") from None


def _delta(text):
    return text if text == "auto" else float(text)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; keys mirror long flag names."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    out = {}
    for i, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {i} is not 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        out["lam" if key == "lambda" else key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ridgererand", description="Design and analyse ridge-rerandomized experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="calibrate a criterion and draw an accepted assignment")
    d.add_argument("covariates", help="CSV with a header row, one column per covariate")
    d.add_argument("--config", help="flat key=value file of flag values (flags win)")
    d.add_argument("--n-treated", type=int, help="treated group size (default N // 2)")
    d.add_argument("--p-a", type=float, default=0.1)
    d.add_argument("--criterion", choices=[k.value for k in Kind], default="ridge")
    d.add_argument("--lambda", dest="lam", type=_lambda, default="auto")
    d.add_argument("--k-e", type=int)
    d.add_argument("--n-mc", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--standardize", type=_bool, nargs="?", const=True, default=False)
    d.add_argument("--max-draws", type=int)
    d.add_argument("--delta", type=_delta, default=0.01, help="lambda search step, or 'auto' for the eigen-gap rule")
    d.add_argument("--epsilon", type=float, default=1e-4)
    d.add_argument("--xi", type=float, default=1e-4)
    d.add_argument("--out-dir", default=".")

    i = sub.add_parser("infer", help="randomization test and confidence interval")
    i.add_argument("covariates")
    i.add_argument("assignment", help="single-column 0/1 CSV")
    i.add_argument("outcomes", help="single-column CSV of observed outcomes")
    i.add_argument("--config")
    i.add_argument("--design", default="design.json", help="design sidecar written by 'design'")
    i.add_argument("--tau0", type=float, default=0.0)
    i.add_argument("--alpha", type=float, default=0.05)
    i.add_argument("--reps", type=int, default=999)
    i.add_argument("--seed", type=int, help="default: the design's seed")
    i.add_argument("--grid-points", type=int, default=201)
    i.add_argument("--profile", help="write the (tau0, p) profile CSV here")
    i.add_argument("--out", help="write the JSON result here instead of stdout")

    s = sub.add_parser("simulate", help="comparison study or the two-covariate scatter demo")
    s.add_argument("--config")
    s.add_argument("--preset", choices=[*PRESETS, "figure1"], default="desk")
    s.add_argument("--N", type=int)
    s.add_argument("--K-grid", dest="K_grid", type=_ints)
    s.add_argument("--rho-grid", dest="rho_grid", type=_floats)
    s.add_argument("--beta-mode", help="ones, worst_case, or comma-separated coefficients")
    s.add_argument("--outcome-model", choices=["linear", "exponential"])
    s.add_argument("--tau", type=float)
    s.add_argument("--p-a", type=float)
    s.add_argument("--replications", type=int)
    s.add_argument("--permutations", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--n-mc", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", default=".")

    q = sub.add_parser("dist", help="weighted chi-square CDF and quantiles")
    qs = q.add_subparsers(dest="what", required=True, parser_class=_Parser)
    for name, arg, help_ in (("cdf", "--q", "evaluation point"), ("quantile", "--p", "probability")):
        c = qs.add_parser(name)
        c.add_argument("--weights", type=_floats, required=True, help="comma-separated weights in [0, 1]")
        c.add_argument(arg, type=float, required=True, help=help_)
        c.add_argument("--xi", type=float, default=1e-4)
    return p


def _apply_config(parser, argv):
    """Re-parse with config-file values installed as subcommand defaults."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    cfg = read_config(path)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    known = {a.dest: a for a in sp._actions}
    bad = sorted(set(cfg) - set(known) - {"config"})
    if bad:
        raise InputError(f"{path}: unknown keys {', '.join(bad)}")
    for key, value in cfg.items():
        action = known[key]
        # string defaults are converted by argparse; these need it done here
        if action.type is _bool:
            value = _bool(value)
        sp.set_defaults(**{key: value})
    return parser.parse_args(argv)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_x(path, n_treated, standardize) -> CovariateMatrix:
    raw = load_covariates(path, 1)
    x = CovariateMatrix(raw.values, raw.n_units // 2 if n_treated is None else n_treated, raw.names)
    return x.standardized() if standardize else x


def _criterion_dict(c: BalanceCriterion) -> dict:
    return {"kind": c.kind.value, "lambda": c.lam, "k_e": c.k_e, "threshold": c.threshold}


def cmd_design(args) -> int:
    x = _load_x(args.covariates, args.n_treated, args.standardize)
    s = compute_spectrum(x)
    kind = Kind(args.criterion)
    if kind is not Kind.RIDGE and args.lam not in ("auto", 0.0):
        raise InputError(f"--lambda only applies to the ridge criterion, not {kind.value}")
    delta = default_delta(s) if args.delta == "auto" else args.delta
    budget = DesignBudget(p_a=args.p_a, xi=args.xi, n=args.n_mc, delta=delta, epsilon=args.epsilon, seed=args.seed)
    cal = None
    if kind is Kind.RIDGE and args.lam == "auto":
        cal = select_lambda(s, budget)
        lam = cal.lambda_star
    else:
        lam = 0.0 if args.lam == "auto" else args.lam
    if kind is Kind.RIDGE and lam == 0:
        # ridge with lambda = 0 is Mahalanobis rerandomization; record it as such
        kind = Kind.MAHALANOBIS
    if kind is Kind.RIDGE:
        c = BalanceCriterion(kind, calibrate_threshold(s, lam, budget) if cal is None else cal.threshold, lam=lam)
    else:
        c = calibrate_criterion(kind, s, args.p_a, k_e=args.k_e, xi=args.xi)
    if cal is None or cal.lambda_star != c.lam:
        cal = replace(calibrate_fixed(s, c, budget), candidate_set=cal.candidate_set if cal else ())
    max_draws = args.max_draws or default_max_draws(args.p_a)
    out = rerandomize(x, s, c, substream(args.seed, "sampling"), max_draws)

    out_dir = Path(args.out_dir)
    write_csv(out_dir / "assignment.csv", ["w"], ([int(v)] for v in out.assignment))
    if cal.candidate_set:
        cal.write_trace(out_dir / "calibration.csv")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "covariates": {"path": str(args.covariates), "sha256": _sha256(args.covariates),
                       "n_units": x.n_units, "n_covariates": x.n_covariates, "standardized": bool(args.standardize)},
        "n_treated": x.n_treated,
        "criterion": _criterion_dict(c),
        "p_a": args.p_a,
        "seed": args.seed,
        "calibration": {"n_mc": args.n_mc, "xi": args.xi, "delta": delta, "epsilon": args.epsilon,
                        "lambda_auto": args.lam == "auto" and args.criterion == "ridge",
                        "shared_draws_sha256": cal.shared_draws_digest},
        "d_hat": cal.d_hat.tolist(),
        "v_hat": cal.v_hat.tolist(),
        "v_a": cal.v_a,
        "max_draws": max_draws,
        "draws_used": out.draws_used,
        "criterion_value": out.criterion_value,
        "assignment": [int(v) for v in out.assignment],
    }
    write_json(out_dir / "design.json", doc)

    print(f"criterion     {c.kind.value}")
    print(f"lambda*       {c.lam:g}")
    print(f"threshold     {c.threshold:.10g}")
    print(f"draws used    {out.draws_used}")
    print("predicted variance reduction (1 - v_hat) per covariate:")
    for name, v in zip(x.names, cal.v_hat):
        print(f"  {name:<20s} {1 - v:.4f}")
    return EXIT_OK


def load_design(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"design sidecar not found: {path} (run 'design' first or pass --design)")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    return doc


def criterion_from_design(doc) -> BalanceCriterion:
    c = doc["criterion"]
    return BalanceCriterion(Kind(c["kind"]), c["threshold"], lam=c["lambda"] or 0.0, k_e=c["k_e"])


def cmd_infer(args) -> int:
    doc = load_design(args.design)
    w = read_column(args.assignment, "assignment")
    if not np.all((w == 0) | (w == 1)):
        raise InputError(f"{args.assignment}: assignment entries must be 0 or 1")
    y = read_column(args.outcomes, "outcomes")
    x = _load_x(args.covariates, int(w.sum()), doc["covariates"]["standardized"])
    if doc["n_treated"] != int(w.sum()):
        raise InputError(f"assignment has {int(w.sum())} treated units, design has {doc['n_treated']}")
    for name, n in (("assignment", w.size), ("outcomes", y.size)):
        if n != x.n_units:
            raise InputError(f"{name} has {n} rows, covariates have {x.n_units}")
    if doc["covariates"]["n_covariates"] != x.n_covariates:
        raise InputError("covariate file does not match the design sidecar")
    if not args.reps >= 1:
        raise InputError("--reps must be >= 1")
    s = compute_spectrum(x)
    c = criterion_from_design(doc)
    seed = doc["seed"] if args.seed is None else args.seed
    try:
        res = invert_ci(x, s, c, w.astype(np.int8), y, alpha=args.alpha, reps=args.reps,
                        rng=substream(seed, "inference"), grid=default_grid(y, w, args.grid_points),
                        tau0=args.tau0, max_draws=max(doc.get("max_draws", 0), 1) * args.reps)
        summary, grid, profile = res.to_dict(), res.grid, res.profile
    except EmptyConfidenceSet as exc:
        print(f"warning: {exc}", file=sys.stderr)
        summary = {"tau_hat": exc.tau_hat, "tau0": args.tau0, "p_value": exc.p_value, "alpha": args.alpha,
                   "ci_lower": None, "ci_upper": None, "replications": args.reps, "grid_truncated": False}
        grid, profile = exc.grid, exc.profile
    body = {"schema_version": SCHEMA_VERSION, "tool_version": __version__, **summary,
            "criterion": _criterion_dict(c), "seed": seed}
    if args.profile:
        write_csv(args.profile, ["tau0", "p_value"], zip(grid.tolist(), profile.tolist()))
    text = json.dumps(body, indent=2)
    if args.out:
        write_json(args.out, body)
    print(text)
    return EXIT_OK


def simulation_spec(args) -> SimulationSpec:
    base = PRESETS["desk" if args.preset == "figure1" else args.preset]
    over = {}
    for key in ("N", "K_grid", "rho_grid", "outcome_model", "tau", "p_a", "replications",
                "permutations", "alpha", "seed"):
        v = getattr(args, key)
        if v is not None:
            over[key] = v
    if args.n_mc is not None:
        over["n_mc"] = args.n_mc
    if args.beta_mode is not None:
        over["beta_mode"] = args.beta_mode if args.beta_mode in ("ones", "worst_case") else _floats(args.beta_mode)
    return replace(base, **over)


def cmd_simulate(args) -> int:
    spec = simulation_spec(args)
    out_dir = Path(args.out_dir)
    if args.preset == "figure1":
        clouds, _ = figure1_demo(seed=spec.seed, p_a=spec.p_a)
        write_figure1(clouds, out_dir / "figure1.csv")
        print(f"{'scheme':<16s} {'corr(dx1,dx2)':>14s} {'var dx1':>10s} {'var dx2':>10s}")
        for name, d in clouds.items():
            r = np.corrcoef(d.T)[0, 1]
            print(f"{name:<16s} {r:14.3f} {d[:, 0].var(ddof=1):10.4g} {d[:, 1].var(ddof=1):10.4g}")
        return EXIT_OK

    def progress(cell):
        status = "failed" if cell.error else "ok"
        print(f"cell K={cell.K} rho={cell.rho:g}: {status} ({cell.seconds:.1f}s)", file=sys.stderr)

    metrics = run_study(spec, progress=progress)
    metrics.write_csv(out_dir / "metrics.csv")
    hdr = f"{'K':>3s} {'rho':>5s} {'scheme':<16s} {'var.red':>8s} {'rel.MSE':>8s} {'rel.CI':>7s} {'cover':>6s} {'lambda':>7s}"
    print(hdr)
    for r in metrics.records:
        if r["status"] != "ok":
            print(f"{r['K']:>3d} {r['rho']:5.2f} {r['scheme']:<16s} FAILED: {r['message']}")
            continue
        print(f"{r['K']:>3d} {r['rho']:5.2f} {r['scheme']:<16s} {r['avg_variance_reduction']:8.3f} "
              f"{r['relative_mse']:8.3f} {r['relative_ci_width']:7.3f} {r['coverage']:6.3f} {r['lambda_selected']:7.3g}")
    return EXIT_OK


def cmd_dist(args) -> int:
    w = WeightedChiSquare.of(args.weights)
    if args.what == "cdf":
        print(repr(imhof_cdf(w, args.q, args.xi)))
    else:
        print(repr(wchi2_quantile(w, args.p, args.xi)))
    return EXIT_OK


COMMANDS = {"design": cmd_design, "infer": cmd_infer, "simulate": cmd_simulate, "dist": cmd_dist}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 1),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
