#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Command-line experiment runner for the isotropic measure laboratory.

Subcommands estimate functionals, compute parameters, evaluate the Laplace transform, check
relations over grids, sweep quantities in n and aggregate result files.
"""

import argparse
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.isotropic_lab.config.settings import (
    RunConfig,
    build_run_config,
    environment_defaults,
    load_config_file,
)
from src.isotropic_lab.errors import DomainError, ScaleRefusalError, UsageError
from src.isotropic_lab.functionals.bodies import q_mean_width, volume_bracket, zp_body
from src.isotropic_lab.functionals.estimate import EstimateCI
from src.isotropic_lab.functionals.functionals import (
    I_negk_via_sections,
    marginal_density_at_zero,
    marginal_L_surrogate,
    moment_Iq,
    random_direction_grid,
    support_Zp,
)
from src.isotropic_lab.laplace.laplace import lambda_p_gauges, log_laplace, tilt_derivative_check
from src.isotropic_lab.measures.empirical import isotropic_constant_bracket, isotropy_defect
from src.isotropic_lab.measures.measure_spec import parse_measure_spec, with_dimension
from src.isotropic_lab.measures.measures import LBracket, MeasureModel
from src.isotropic_lab.parameters.grassmann_search import GrassmannSearchConfig
from src.isotropic_lab.parameters.parameters import (
    ParamEstimate,
    hereditary,
    k_star,
    negative_moment_profile,
    q_minus_c,
    q_star,
    r_sharp,
)
from src.isotropic_lab.results_manager.results_manager import (
    ResultsManager,
    constants_table,
    load_jsonl,
    write_csv,
)
from src.isotropic_lab.sampler.sampler import (
    Seed,
    Subspace,
    draw,
    haar_subspace,
    load_frame,
    sphere_directions,
)
from src.isotropic_lab.verify.relations import RELATION_TABLE, Verdict, select_relations
from src.isotropic_lab.verify.verify_pipeline import RelationVerifier

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INDETERMINATE = 3
EXIT_INTERNAL = 4

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

ESTIMATE_QUANTITIES = ("Iq", "Inegk", "supportZp", "widthQ", "fZero", "Lbracket", "volume", "isotropy")
PARAM_NAMES = ("qmc", "qstar", "rsharp", "qmcH", "rsharpH", "qstarH", "kstar", "negprofile")
SCAN_QUANTITIES = ("Iq", "Inegk", "Lbracket", "qmc", "qstar", "rsharp", "kstar")


########################################################################################
# Parser
########################################################################################


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="Master seed (default: $ISOLAB_SEED or built-in)")
    parser.add_argument("--samples", type=int, help="Samples per Monte Carlo batch")
    parser.add_argument("--burnin", type=int, help="Hit-and-run burn-in factor (steps per dimension)")
    parser.add_argument("--threads", type=int, help="Worker threads (default: $ISOLAB_THREADS or 1)")
    parser.add_argument("--config", type=str, help="Flat key = value config file")
    parser.add_argument(
        "--log-level",
        type=str,
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    parser.add_argument("--out", type=str, help="Append result records to this JSON-lines file")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog="isolab",
        description="Numerical laboratory for isotropic log-concave measures",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    estimate = subparsers.add_parser(
        "estimate",
        help="Estimate a functional [I_q, I_-k sections, h_Zp, w_q, f_{pi_E mu}(0), L bracket]",
    )
    estimate.add_argument("--measure", required=True, help="Measure spec, e.g. gaussian:10")
    estimate.add_argument("--quantity", required=True, choices=ESTIMATE_QUANTITIES)
    estimate.add_argument("--q", type=float, default=2.0, help="Moment or width order")
    estimate.add_argument("--p", type=float, default=2.0, help="Centroid body order")
    estimate.add_argument("--k", type=int, help="Codimension for Inegk")
    estimate.add_argument("--dir", type=str, default="random", help="Direction vector a,b,c or 'random'")
    estimate.add_argument("--subspace", type=str, help="Frame file or random:k")
    _add_common(estimate)

    param = subparsers.add_parser(
        "param", help="Compute a parameter [q_-c, q_*, r_sharp, hereditary forms, k_*]"
    )
    param.add_argument("--measure", required=True)
    param.add_argument("--name", required=True, choices=PARAM_NAMES)
    param.add_argument("--delta", type=float, default=2.0)
    param.add_argument("--A", type=float, default=2.0)
    param.add_argument("--p", type=float, default=2.0, help="Centroid body order for kstar")
    param.add_argument("--restarts", type=int)
    param.add_argument("--haar", type=int, help="Haar subspaces per k for hereditary searches")
    _add_common(param)

    laplace = subparsers.add_parser("laplace", help="Log-Laplace transform Lambda_mu(xi)")
    laplace.add_argument("--measure", required=True)
    laplace.add_argument("--xi", required=True, help="Vector a,b,c")
    _add_common(laplace)

    tiltcheck = subparsers.add_parser(
        "tiltcheck", help="Compare derivatives of Lambda with the tilted mean and covariance"
    )
    tiltcheck.add_argument("--measure", required=True)
    tiltcheck.add_argument("--x", required=True, help="Tilt point a,b,c")
    tiltcheck.add_argument("--h", type=float, help="Finite-difference step")
    _add_common(tiltcheck)

    gauge = subparsers.add_parser("lambdagauge", help="Radii of Lambda_p(mu) along random directions")
    gauge.add_argument("--measure", required=True)
    gauge.add_argument("--p", type=float, default=2.0)
    gauge.add_argument("--dirs", type=int, default=200)
    _add_common(gauge)

    check = subparsers.add_parser("check", help="Check relations over a grid of measures and dimensions")
    check.add_argument("--relation", default=None, help="Relation tag, comma list or 'all'")
    check.add_argument("--measures", help="Comma list of measure families or specs")
    check.add_argument("--nmax", type=int, help="Check n = 2..nmax")
    check.add_argument("--nvalues", help="Comma list of dimensions (overrides --nmax)")
    check.add_argument("--k", dest="k_values", help="Comma list of k values")
    check.add_argument("--p", dest="p_values", help="Comma list of p values")
    check.add_argument("--q", dest="q_values", help="Comma list of q values")
    check.add_argument("--delta", type=float)
    check.add_argument("--A", type=float)
    _add_common(check)

    scan = subparsers.add_parser("scan", help="Sweep a quantity over dimensions and emit CSV")
    scan.add_argument("--measures", help="Comma list of measure families or specs")
    scan.add_argument("--quantity", required=True, choices=SCAN_QUANTITIES)
    scan.add_argument("--nvalues", help="Comma list of dimensions")
    scan.add_argument("--q", type=float, default=2.0)
    scan.add_argument("--p", type=float, default=2.0)
    scan.add_argument("--delta", type=float)
    scan.add_argument("--A", type=float)
    scan.add_argument("--csv", type=str, help="CSV output path")
    _add_common(scan)

    report = subparsers.add_parser(
        "report", help="Fitted constants vs n per relation from a JSON-lines file"
    )
    report.add_argument("--in", dest="input_path", required=True)
    report.add_argument("--csv", type=str, help="Write the table as CSV")
    _add_common(report)

    return parser


########################################################################################
# Helpers
########################################################################################


def _parse_vector(text: str, dim: int) -> np.ndarray:
    try:
        vector = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as e:
        raise UsageError(f"Cannot parse vector {text!r}") from e
    if vector.shape != (dim,):
        raise UsageError(f"Vector {text!r} has {vector.size} entries, expected {dim}")
    return vector


def _subspace_arg(text: Optional[str], n: int, seed: Seed) -> Subspace:
    if not text:
        raise UsageError("This quantity needs --subspace <frame-file|random:k>")
    if text.startswith("random:"):
        return haar_subspace(n, int(text.split(":", 1)[1]), seed.child("cli-subspace"))
    subspace = load_frame(text)
    if subspace.ambient != n:
        raise UsageError(f"Frame in {text} lives in R^{subspace.ambient}, measure in R^{n}")
    return subspace


def _bracket_payload(bracket: LBracket) -> Dict[str, Any]:
    return {
        "kind": "l-bracket",
        "lo": bracket.lo,
        "hi": bracket.hi,
        "exact": bracket.exact,
        "stderr": bracket.stderr,
        "log_det_cov": bracket.log_det_cov,
    }


def resolve_config(args: argparse.Namespace, environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """Layer environment < config file < command line into a RunConfig."""
    layers: List[Dict[str, Any]] = [environment_defaults(environ)]
    if getattr(args, "config", None):
        layers.append(load_config_file(args.config))
    cli: Dict[str, Any] = {
        "seed": args.seed,
        "samples": args.samples,
        "burnin_factor": args.burnin,
        "threads": args.threads,
        "output_path": args.out,
    }
    for name in ("measures", "k_values", "p_values", "q_values", "delta", "A"):
        cli[name] = getattr(args, name, None)
    if getattr(args, "relation", None):
        cli["relations"] = args.relation
    if getattr(args, "nvalues", None):
        cli["n_values"] = args.nvalues
    elif getattr(args, "nmax", None):
        if args.nmax < 2:
            raise UsageError("--nmax must be at least 2")
        cli["n_values"] = ",".join(str(n) for n in range(2, args.nmax + 1))
    if getattr(args, "csv", None):
        cli["csv_path"] = args.csv
    if getattr(args, "restarts", None):
        cli["restarts"] = args.restarts
    if getattr(args, "haar", None):
        cli["haar_samples"] = args.haar
    layers.append(cli)
    return build_run_config(*layers)


def _measure(spec: str, config: RunConfig) -> MeasureModel:
    return parse_measure_spec(spec, Seed(config.seed).child("measure"), config.settings)


def _finish(manager: ResultsManager, config: RunConfig) -> None:
    if config.output_path:
        manager.append_jsonl(config.output_path)
        print(f"Records appended to: {config.output_path}")


def _print_estimate(label: str, estimate: EstimateCI) -> None:
    flags = f" [{', '.join(estimate.flags)}]" if estimate.flags else ""
    print(
        f"{label}: {estimate.value:.6g} +/- {estimate.stderr:.2g} "
        f"({estimate.method}, n={estimate.sample_count}){flags}"
    )


########################################################################################
# Subcommands
########################################################################################


def run_estimate(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    m = _measure(args.measure, config)
    settings = config.settings
    seed = Seed(config.seed).child("estimate")
    quantity = args.quantity
    n = m.dim

    if quantity == "Lbracket":
        if args.subspace:
            bracket = marginal_L_surrogate(m, _subspace_arg(args.subspace, n, seed), seed, settings)
        else:
            bracket = isotropic_constant_bracket(m, settings.samples, seed, settings)
        manager.add_result(_bracket_payload(bracket))
        exact = f", exact {bracket.exact:.6g}" if bracket.exact is not None else ""
        print(f"L bracket of {m.tag}: [{bracket.lo:.6g}, {bracket.hi:.6g}]{exact}")
        return EXIT_OK
    if quantity == "fZero":
        result = marginal_density_at_zero(m, _subspace_arg(args.subspace, n, seed), seed, settings)
    elif quantity == "Inegk":
        if args.k is None:
            raise UsageError("Inegk needs --k")
        result = I_negk_via_sections(m, args.k, settings.subspace_count, seed, settings)
    elif quantity == "volume":
        batch = draw(m, settings.samples, seed.child("batch"), settings)
        bracket = volume_bracket(
            zp_body(m, batch, args.p, settings), settings.resolution_for(n), seed, settings.volume_points
        )
        manager.add_result(
            {
                "kind": "volume-bracket",
                "p": args.p,
                "lower": bracket.lower,
                "upper": bracket.upper,
                "upper_stderr": bracket.upper_stderr,
                "resolution": bracket.resolution,
            }
        )
        print(f"|Z_{args.p:g}({m.tag})|^(1/n) in [{bracket.lower:.6g}, {bracket.upper:.6g}]")
        return EXIT_OK
    else:
        batch = draw(m, settings.samples, seed.child("batch"), settings)
        if quantity == "Iq":
            result = moment_Iq(m, args.q, batch)
        elif quantity == "supportZp":
            if args.dir == "random":
                theta = sphere_directions(n, 1, seed.child("direction"))[0]
            else:
                theta = _parse_vector(args.dir, n)
            result = support_Zp(m, args.p, theta, batch, settings)
        elif quantity == "widthQ":
            grid = random_direction_grid(n, settings.directions, seed.child("grid"))
            result = q_mean_width(zp_body(m, batch, args.p, settings), args.q, grid)
        else:
            defect = isotropy_defect(batch)
            manager.add_result(
                {
                    "kind": "isotropy-defect",
                    "cov_z": defect.cov_z,
                    "mean_norm": defect.mean_norm,
                    "mean_stderr": defect.mean_stderr,
                    "tolerance": defect.tolerance,
                    "isotropic": defect.is_isotropic,
                }
            )
            print(f"Isotropy defect of {m.tag}: cov z={defect.cov_z:.3g}, |bar|={defect.mean_norm:.3g}")
            return EXIT_OK
    manager.add_result(result)
    _print_estimate(f"{quantity} of {m.tag}", result)
    return EXIT_OK


def compute_param(name: str, m: MeasureModel, config: RunConfig, seed: Seed, p: float = 2.0) -> Any:
    settings = config.settings
    search = GrassmannSearchConfig.from_settings(settings)
    if name == "qmc":
        return q_minus_c(m, config.delta, seed, settings)
    if name == "qstar":
        return q_star(m, seed, settings)
    if name == "rsharp":
        return r_sharp(m, config.A, search, seed, settings)
    if name in ("qmcH", "rsharpH", "qstarH"):
        param = {"qmcH": "q_minus_c", "rsharpH": "r_sharp", "qstarH": "q_star"}[name]
        return hereditary(param, m, search, seed, settings, delta=config.delta, A=config.A)
    if name == "kstar":
        batch = draw(m, settings.samples, seed.child("batch"), settings)
        grid = random_direction_grid(m.dim, settings.directions, seed.child("grid"))
        return k_star(zp_body(m, batch, p, settings), grid)
    if name == "negprofile":
        return negative_moment_profile(m, seed, settings)
    raise UsageError(f"Unknown parameter {name!r}")


def run_param(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    m = _measure(args.measure, config)
    result = compute_param(args.name, m, config, Seed(config.seed).child("param"), args.p)
    if isinstance(result, list):
        for p, estimate in enumerate(result, start=1):
            manager.add_result({"kind": "negative-moment", "p": p, **estimate.to_payload()})
            _print_estimate(f"I_-{p}({m.tag})", estimate)
        return EXIT_OK
    manager.add_result(result)
    if isinstance(result, ParamEstimate):
        flags = f" [{', '.join(result.flags)}]" if result.flags else ""
        print(f"{result.name}({m.tag}) = {result.value:g} ({result.bound_kind.value}){flags}")
        if result.witness is not None and config.output_path:
            stem = os.path.splitext(config.output_path)[0]
            path = manager.save_witness(f"{stem}.{result.name}.frame", result.witness)
            print(f"Witness frame written to: {path}")
    else:
        _print_estimate(f"{args.name}({m.tag})", result)
    return EXIT_OK


def run_laplace(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    m = _measure(args.measure, config)
    xi = _parse_vector(args.xi, m.dim)
    batch = None
    if m.profile is None or m.profile.log_laplace is None:
        batch = draw(m, config.settings.samples, Seed(config.seed).child("laplace"), config.settings)
    result = log_laplace(m, xi, batch)
    manager.add_result({"kind": "log-laplace", "xi": xi.tolist(), **result.to_payload()})
    _print_estimate(f"Lambda({m.tag}) at {xi.tolist()}", result)
    return EXIT_OK


def run_tiltcheck(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    m = _measure(args.measure, config)
    x = _parse_vector(args.x, m.dim)
    report = tilt_derivative_check(m, x, args.h, Seed(config.seed).child("tiltcheck"), config.settings)
    manager.add_result(
        {
            "kind": "tilt-derivatives",
            "x": x.tolist(),
            "gradient": report.gradient.tolist(),
            "tilted_mean": report.tilted_mean.tolist(),
            "hessian": report.hessian.tolist(),
            "tilted_cov": report.tilted_cov.tolist(),
            "grad_gap": report.grad_gap,
            "hess_gap": report.hess_gap,
            "step": report.step,
            "sample_count": report.sample_count,
        }
    )
    print(
        f"Tilt check of {m.tag} at {x.tolist()}: "
        f"gradient gap {report.grad_gap:.3%}, Hessian gap {report.hess_gap:.3%}"
    )
    return EXIT_OK


def run_lambdagauge(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    m = _measure(args.measure, config)
    seed = Seed(config.seed).child("lambdagauge")
    directions = sphere_directions(m.dim, args.dirs, seed.child("directions"))
    batch = None
    if m.profile is None or m.profile.log_laplace is None:
        batch = draw(m, config.settings.samples, seed.child("batch"), config.settings)
    gauges = lambda_p_gauges(m, args.p, directions, batch)
    payload = {
        "kind": "lambda-gauge",
        "p": args.p,
        "directions": int(args.dirs),
        "t_star_min": float(gauges.t_star.min()),
        "t_star_max": float(gauges.t_star.max()),
        "t_star_mean": float(gauges.t_star.mean()),
        "domain_limited": int(gauges.domain_limited.sum()),
    }
    manager.add_result(payload)
    print(
        f"Lambda_{args.p:g}({m.tag}) radii over {args.dirs} directions: "
        f"min {payload['t_star_min']:.5g}, mean {payload['t_star_mean']:.5g}, "
        f"max {payload['t_star_max']:.5g}"
    )
    return EXIT_OK


def run_check(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    relations = select_relations(config.relations)
    verifier = RelationVerifier(config.settings, manager)
    seed = Seed(config.seed).child("check")
    rows = []
    error_count = 0
    for relation in relations:
        result = verifier.run_grid(relation, config.measures, config.n_values, seed, config)
        for error in result.errors:
            manager.add_error(error)
            print(f"ERROR {relation.value} on {error.measure_spec}: {error.error}", file=sys.stderr)
        error_count += len(result.errors)
        manager.add_result(result.summary)
        summary = result.summary
        rows.append(
            {
                "relation": relation.value,
                "pass": summary.counts.get(Verdict.PASS.value, 0),
                "fail": summary.counts.get(Verdict.FAIL.value, 0),
                "indeterminate": summary.counts.get(Verdict.INDETERMINATE.value, 0),
                "errors": len(result.errors),
                "fitted": summary.fitted_constant,
                "slope": summary.trend_slope,
            }
        )
        for report in result.reports:
            if report.verdict is Verdict.FAIL:
                point = report.grid_point.to_payload()
                print(f"FAIL {relation.value} on {report.measure_spec} at {point}")

    print(pd.DataFrame(rows).to_string(index=False))
    _finish(manager, config)
    if manager.get_fail_reports():
        return EXIT_FAIL
    if error_count:
        return EXIT_INTERNAL
    if manager.get_indeterminate_reports():
        return EXIT_INDETERMINATE
    return EXIT_OK


def scan_quantity(
    quantity: str, m: MeasureModel, config: RunConfig, seed: Seed, q: float, p: float
) -> Dict[str, Any]:
    """One scan row: value, stderr and bound kind of ``quantity`` at the dimension of m."""
    settings = config.settings
    if quantity == "Iq":
        estimate = moment_Iq(m, q, draw(m, settings.samples, seed.child("batch"), settings))
        return {"value": estimate.value, "stderr": estimate.stderr}
    if quantity == "Inegk":
        k = m.dim - 1
        if k < 1:
            raise UsageError("Inegk scans need n >= 2")
        estimate = I_negk_via_sections(m, k, settings.subspace_count, seed, settings)
        return {"value": estimate.value, "stderr": estimate.stderr, "k": k}
    if quantity == "Lbracket":
        bracket = isotropic_constant_bracket(m, settings.samples, seed, settings)
        value = bracket.exact if bracket.exact is not None else bracket.midpoint
        return {"value": value, "lo": bracket.lo, "hi": bracket.hi}
    result = compute_param(quantity, m, config, seed, p)
    if isinstance(result, ParamEstimate):
        return {
            "value": result.value,
            "bound_kind": result.bound_kind.value,
            "flags": ";".join(result.flags),
        }
    return {"value": result.value, "stderr": result.stderr}


def run_scan(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    seed = Seed(config.seed).child("scan")
    rows = []
    for spec in config.measures:
        for n in sorted(set(config.n_values)):
            m = _measure(with_dimension(spec, n), config)
            row = {"measure": spec, "n": n, "quantity": args.quantity}
            row.update(scan_quantity(args.quantity, m, config, seed.child(spec, n), args.q, args.p))
            manager.add_result({"kind": "scan-row", **row})
            rows.append(row)
    print(pd.DataFrame(rows).to_string(index=False))
    if config.csv_path:
        write_csv(rows, config.csv_path)
        print(f"Scan table written to: {config.csv_path}")
    _finish(manager, config)
    return EXIT_OK


def run_report(args: argparse.Namespace, config: RunConfig, manager: ResultsManager) -> int:
    frame = load_jsonl(args.input_path)
    orientations = {relation.value: spec.orientation for relation, spec in RELATION_TABLE.items()}
    table = constants_table(frame, orientations)
    if table.empty:
        print(f"No relation reports with fitted constants in {args.input_path}")
        return EXIT_OK
    print(table.to_string())
    if args.csv:
        table.reset_index().to_csv(args.csv, index=False)
        print(f"Constants table written to: {args.csv}")
    return EXIT_OK


HANDLERS: Dict[str, Callable[[argparse.Namespace, RunConfig, ResultsManager], int]] = {
    "estimate": run_estimate,
    "param": run_param,
    "laplace": run_laplace,
    "tiltcheck": run_tiltcheck,
    "lambdagauge": run_lambdagauge,
    "check": run_check,
    "scan": run_scan,
    "report": run_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code.

    Exit codes: 0 success, 1 a relation failed, 2 usage error, 3 only indeterminate
    verdicts, 4 internal error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, force=True)
    try:
        config = resolve_config(args)
        manager = ResultsManager(config.digest(), args.command)
        return HANDLERS[args.command](args, config, manager)
    except (UsageError, DomainError, ScaleRefusalError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception("Unhandled error in %s", args.command)
        print(f"Internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
