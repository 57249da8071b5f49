"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 data, 3 infeasible (threshold or zero
denominator), 4 enumeration cap exceeded, 5 verification failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import (
    CapExceededError,
    DataError,
    InfeasibleError,
    MissingValueError,
    ThresholdError,
    UsageError,
    ZeroDenominatorError,
)
from .ingest import ProblemInstance, load_csv, standardize, validate
from .metric import MetricSpec, distance_matrix, parse_metric
from .randomized import verify_lemma3
from .regret import (
    c_star,
    heterogeneity_bounds,
    min_lipschitz,
    regret_bounds,
    relative_error_bounds,
    treatment_rule,
)
from .solver import (
    DEFAULT_TOLERANCE,
    Selection,
    enumerate_optima,
    export_ilp,
    opening_from_welfare,
    solve_bnb,
    solve_enumerate,
)

SCHEMA_VERSION = 1
EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE, EXIT_CAP, EXIT_FAIL = 1, 2, 3, 4, 5
# flags that change wall time or destination only, never report bytes
_UNHASHED = {"threads", "timing", "out", "func"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _clean(obj):
    """Recursively convert to plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _echo(args) -> dict:
    flags = {
        k: v for k, v in sorted(vars(args).items())
        if k not in _UNHASHED and not k.startswith("_")
    }
    return _clean(flags)


def _config_hash(args) -> str:
    body = {"flags": _echo(args), "inputs": {}}
    for name in ("covariates", "opening_costs", "metric"):
        value = getattr(args, name, None)
        if isinstance(value, str):
            for part in value.split(":"):
                if os.path.isfile(part):
                    body["inputs"][part] = _file_digest(part)
    text = json.dumps(body, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _warn(report: dict, message: str) -> None:
    report.setdefault("warnings", []).append(message)
    print(f"warning: {message}", file=sys.stderr)


def _load(args) -> ProblemInstance:
    inst = load_csv(
        args.covariates,
        sigma_column=args.sigma_column,
        cost_column=getattr(args, "_cost_column", None) or "cost",
        estimate_column=args.estimates,
    )
    if args.standardize:
        inst = standardize(inst, denominator=args.std_denominator)
    return inst


def _summary(inst: ProblemInstance) -> dict:
    return {
        "n": len(inst.sites),
        "d": inst.dimension,
        "n_experimental": len(inst.experimental_indices),
        "n_policy": len(inst.policy_indices),
        "standardized": inst.standardized,
    }


def _base(args, inst: Optional[ProblemInstance]) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": {"name": args.command, "flags": _echo(args)},
        "config_hash": _config_hash(args),
    }
    if inst is not None:
        report["instance"] = _summary(inst)
    return report


def _metric(args) -> MetricSpec:
    return parse_metric(args.metric)


def _selection(inst: ProblemInstance, text: str) -> tuple[int, ...]:
    ids = [t.strip() for t in text.split(",") if t.strip()]
    if not ids:
        raise UsageError("--selection needs at least one site id")
    out = []
    for site_id in ids:
        try:
            idx = inst.index_of(site_id)
        except KeyError:
            raise UsageError(f"--selection: unknown site id {site_id!r}") from None
        if not inst.sites[idx].role.experimental:
            raise UsageError(f"--selection: site {site_id!r} is not an experimental site")
        out.append(idx)
    if len(set(out)) != len(out):
        raise UsageError("--selection lists a site twice")
    return tuple(sorted(out))


def _lipschitz(args, inst, spec, report) -> Optional[float]:
    if args.lipschitz is None:
        return None
    if args.lipschitz == "auto":
        value, pair = min_lipschitz(inst, spec)
        report["lipschitz"] = {"mode": "auto", "C": value, "witness_pair": list(pair)}
        if not value > 0:
            raise InfeasibleError("estimates are all equal; minimum Lipschitz constant is 0")
        return value
    try:
        value = float(args.lipschitz)
    except ValueError:
        raise UsageError(f"--lipschitz expects a number or 'auto', got {args.lipschitz!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise UsageError("--lipschitz must be positive")
    report["lipschitz"] = {"mode": "given", "C": value}
    return value


def _read_cost_file(path: str, inst: ProblemInstance) -> dict:
    """Two columns, id and cost; a header row is optional."""
    costs = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for n, row in enumerate(csv.reader(fh), start=1):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}: expected 'id,cost'", line=n)
            site_id, text = row[0].strip(), row[1].strip()
            try:
                value = float(text)
            except ValueError:
                if n == 1:
                    continue  # header
                raise DataError(f"{path}: non-numeric cost {text!r}", line=n) from None
            if not math.isfinite(value) or value < 0:
                raise DataError(f"{path}: cost must be finite and nonnegative", line=n)
            costs[site_id] = value
    return costs


def _opening(args, inst, D, C, report) -> Optional[np.ndarray]:
    if args.opening_costs is None:
        return None
    if C is None:
        raise UsageError("--opening-costs needs --lipschitz to convert costs (2c/C)")
    if os.path.isfile(args.opening_costs):
        table = _read_cost_file(args.opening_costs, inst)
        welfare = []
        for i in D.rows:
            sid = inst.sites[i].id
            if sid not in table:
                raise MissingValueError(f"no cost for experimental site {sid!r}")
            welfare.append(table[sid])
    else:
        welfare = []
        for i in D.rows:
            v = inst.sites[i].cost
            if v is None:
                raise MissingValueError(
                    f"cost missing for experimental site {inst.sites[i].id!r}",
                    column=args.opening_costs,
                )
            welfare.append(v)
    opening = opening_from_welfare(welfare, C)
    report["opening_costs"] = {D.label(i): float(o) for i, o in zip(D.rows, opening)}
    return opening


def _k_warnings(args, D, report) -> None:
    if args.k == D.n_facilities:
        _warn(report, f"k = {args.k} equals the number of experimental sites; "
                      "the selection is then not a strict subset")


def cmd_select(args) -> tuple[dict, int]:
    if args.all_optima is not None and args.opening_costs is not None:
        raise UsageError("--all-optima applies to the plain k-median problem only")
    inst = _load(args)
    report = _base(args, inst)
    spec = _metric(args)
    D = distance_matrix(inst, spec)
    C = _lipschitz(args, inst, spec, report)
    opening = _opening(args, inst, D, C, report)
    _k_warnings(args, D, report)
    t0 = time.perf_counter()
    if args.solver == "enumerate":
        sol = solve_enumerate(D, args.k, opening, workers=args.threads)
    else:
        sol = solve_bnb(D, args.k, opening, tolerance=args.tolerance, node_limit=args.node_limit)
    report["solution"] = sol.to_dict(D)
    if args.all_optima is not None:
        optima = enumerate_optima(D, args.k, args.all_optima)
        report["all_optima"] = [[D.label(i) for i in s.members] for s in optima]
    if args.timing:
        report["wall_ms"] = 1000.0 * (time.perf_counter() - t0)
    report["_csv"] = (inst, sol)
    return report, 0


def _bounds_for(args, inst, D, members, C) -> dict:
    sig = inst.sigmas
    if args.hetero_c is not None:
        if args.hetero_c < 0:
            raise UsageError("--hetero-c must be nonnegative")
        rb = heterogeneity_bounds(D, members, C, args.hetero_c, sig, k=args.k, b=args.b_constant)
    else:
        rb = regret_bounds(D, members, C, sig, k=args.k, b=args.b_constant)
    return rb.to_dict()


def cmd_bounds(args) -> tuple[dict, int]:
    inst = _load(args)
    report = _base(args, inst)
    spec = _metric(args)
    D = distance_matrix(inst, spec)
    C = _lipschitz(args, inst, spec, report)
    if C is None:
        raise UsageError("bounds needs --lipschitz <C> or --lipschitz auto")
    _k_warnings(args, D, report)
    optimum = solve_bnb(D, args.k, tolerance=args.tolerance)
    report["solution"] = optimum.to_dict(D)
    if args.selection:
        members = _selection(inst, args.selection)
        if len(members) > args.k:
            raise UsageError(f"--selection has {len(members)} sites, more than k = {args.k}")
        report["selection"] = [D.label(i) for i in members]
    else:
        members = optimum.members
        report["selection"] = report["solution"]["selected"]
    report["bounds"] = _bounds_for(args, inst, D, members, C)
    cs = c_star(D, args.k, inst.sigmas)
    report["c_star"] = cs
    if not C > cs:
        _warn(report, f"C = {C!r} is at or below C* = {cs!r}; the k-median reduction is "
                      "only justified when heterogeneity across sites is large enough")
    try:
        rel = relative_error_bounds(D, args.k, C, inst.sigmas, b=args.b_constant,
                                    optimum=optimum.objective)
        report["relative_error"] = rel.to_dict()
    except ZeroDenominatorError as exc:
        report["relative_error"] = None
        _warn(report, str(exc))
    return report, 0


def cmd_rule(args) -> tuple[dict, int]:
    inst = _load(args)
    report = _base(args, inst)
    spec = _metric(args)
    D = distance_matrix(inst, spec)
    C = _lipschitz(args, inst, spec, report)
    if C is None:
        raise UsageError("rule needs --lipschitz <C> or --lipschitz auto")
    members = _selection(inst, args.selection)
    report["selection"] = [D.label(i) for i in members]
    plan = treatment_rule(D, Selection(members, len(members)), C, inst.estimates, inst.sigmas)
    report["plan"] = plan.to_dict(D)
    return report, 0


def cmd_export_lp(args) -> tuple[dict, int]:
    inst = _load(args)
    spec = _metric(args)
    D = distance_matrix(inst, spec)
    report = _base(args, inst)
    C = _lipschitz(args, inst, spec, report)
    opening = _opening(args, inst, D, C, report)
    if not 1 <= args.k <= D.n_facilities:
        raise UsageError(f"k must be an integer in [1, {D.n_facilities}], got {args.k}")
    report["_lp"] = export_ilp(D, args.k, opening)
    return report, 0


def cmd_verify(args) -> tuple[dict, int]:
    if not (math.isfinite(args.C) and args.C > 0):
        raise UsageError("--C must be positive")
    if args.resolution < 50:
        raise UsageError("--resolution must be >= 50")
    report = _base(args, None)
    result = verify_lemma3(args.C, args.resolution)
    report.update(result.to_dict())
    report["status"] = "PASS" if result.passed else "FAIL"
    return report, 0 if result.passed else EXIT_FAIL


def cmd_validate(args) -> tuple[dict, int]:
    inst = _load(args)
    report = _base(args, inst)
    diag = validate(inst)
    report["diagnostics"] = diag.lines()
    return report, 0


def _common(p: argparse.ArgumentParser, k_required: bool = False) -> None:
    p.add_argument("--covariates", required=True, help="site CSV (id, role, covariates...)")
    p.add_argument("--metric", default="euclidean",
                   help="euclidean | weuclid:<file> | holder:<alpha>[:weuclid:<file>]")
    p.add_argument("--standardize", action="store_true", help="z-score every covariate first")
    p.add_argument("--std-denominator", choices=["n-1", "n"], default="n-1")
    p.add_argument("--sigma-column", default="sigma")
    p.add_argument("--estimates", default="estimate", metavar="COL",
                   help="column holding estimated effects")
    if k_required:
        p.add_argument("-k", type=int, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sitemedian", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("select", help="choose k experimental sites")
    _common(p, k_required=True)
    p.add_argument("--solver", choices=["bnb", "enumerate"], default="bnb")
    p.add_argument("--all-optima", type=float, metavar="TOL",
                   help="also list every size-k set within TOL of the optimum")
    p.add_argument("--opening-costs", metavar="COL|FILE",
                   help="experimentation costs: a column of the site CSV or an id,cost file")
    p.add_argument("--lipschitz", metavar="C|auto")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--node-limit", type=int, default=10**7)
    p.add_argument("--seed", type=int, default=0, help="reserved; runs are deterministic")
    p.add_argument("--output", choices=["json", "csv"], default="json")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="add wall_ms to the report")
    p.add_argument("--out", help="write here instead of stdout")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("bounds", help="regret bounds for the optimal or a given selection")
    _common(p, k_required=True)
    p.add_argument("--lipschitz", metavar="C|auto")
    p.add_argument("--hetero-c", type=float, metavar="c",
                   help="allow an extra c of unexplained effect heterogeneity")
    p.add_argument("--selection", metavar="IDS", help="comma-separated site ids")
    p.add_argument("--b-constant", type=float, metavar="B", help="override the B constant")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("rule", help="treatment probabilities for a selection")
    _common(p)
    p.add_argument("--selection", required=True, metavar="IDS")
    p.add_argument("--lipschitz", required=True, metavar="C|auto")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rule)

    p = sub.add_parser("export-lp", help="write the integer program in LP format")
    _common(p, k_required=True)
    p.add_argument("--opening-costs", metavar="COL|FILE")
    p.add_argument("--lipschitz", metavar="C")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("verify", help="check the four-site randomization example")
    p.add_argument("--example", choices=["lemma3"], required=True)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("validate", help="print data diagnostics")
    _common(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)
    return parser


def _csv_projection(inst: ProblemInstance, sol) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["site", "selected", "assigned_to"])
    chosen = set(sol.members)
    for s in inst.sites:
        a = sol.assignment.get(s.index)
        w.writerow([s.id, int(s.index in chosen), "" if a is None else inst.sites[a].id])
    return out.getvalue()


def _emit(args, report: dict) -> None:
    if "_lp" in report:
        text = report.pop("_lp")
    elif getattr(args, "output", "json") == "csv":
        text = _csv_projection(*report.pop("_csv"))
    else:
        report.pop("_csv", None)
        text = dumps(report)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "opening_costs", None) and not os.path.isfile(args.opening_costs):
            args._cost_column = args.opening_costs
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        report, code = args.func(args)
        _emit(args, report)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ThresholdError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.threshold is not None:
            print(f"threshold: {exc.threshold!r}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CapExceededError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
