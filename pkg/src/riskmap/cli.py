"""Command-line front end: simulate, fit, select-k, evaluate.

Exit codes: 0 on success, 2 on malformed input (message carries file and
line where possible), 3 when every restart or every candidate fit failed.
All randomized commands require ``--seed`` and embed the fully resolved
configuration in their outputs, so reruns are bit-for-bit reproducible.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, render
from .evaluate import dice, evaluate_labels
from .graph import build_hex_lattice, read_edge_csv
from .inference import FitOptions, FitResult
from .model import InteractionKind
from .simulate import make_blob_scenario, sample_counts
from .strategies import (
    AllRestartsFailedError,
    StrategyKind,
    StrategySpec,
    search_run_select,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_ALL_FAILED = 3

THREADS_ENV_VAR = "RISKMAP_THREADS"


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_strategy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=[s.value for s in StrategyKind],
                   default="tra", help="initialization strategy")
    p.add_argument("--M", type=int, default=10, dest="restarts",
                   help="number of search restarts")
    p.add_argument("--rand-upper", type=float, default=1.5,
                   help="upper bound for uniform risk draws")
    p.add_argument("--no-search2", action="store_true",
                   help="skip the fixed-interaction first phase")
    p.add_argument("--interaction", choices=["potts", "tridiagonal", "smooth"],
                   default="tridiagonal", help="interaction matrix family")
    p.add_argument("--fix-b", type=float, default=None,
                   help="hold the interaction strength at this value")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads (default from ${THREADS_ENV_VAR})")
    p.add_argument("--max-em-iters", type=int, default=100)
    p.add_argument("--em-rel-tol", type=float, default=1e-6)
    p.add_argument("--mf-max-sweeps", type=int, default=50)
    p.add_argument("--mf-tol", type=float, default=1e-6)


def _strategy_from_args(args, seed: int) -> StrategySpec:
    return StrategySpec(
        kind=StrategyKind(args.strategy),
        restarts=args.restarts,
        rand_upper=args.rand_upper,
        search2=not args.no_search2,
        seed=seed,
        threads=args.threads,
    )


def _options_from_args(args, seed: int) -> FitOptions:
    return FitOptions(
        max_em_iters=args.max_em_iters,
        em_rel_tol=args.em_rel_tol,
        mf_max_sweeps=args.mf_max_sweeps,
        mf_tol=args.mf_tol,
        fix_b=args.fix_b,
        seed=seed,
    )


def _config_dict(args, command: str) -> dict:
    cfg = {"command": command}
    for key, value in sorted(vars(args).items()):
        if key in ("func",):
            continue
        cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def _fit_payload(fit: FitResult, ids, seed: int, config: dict,
                 include_posteriors: bool) -> dict:
    payload = {
        "lambda": fit.params.risks.tolist(),
        "alpha": fit.params.alpha.tolist(),
        "b": float(fit.params.interaction.b),
        "bic": fit.bic,
        "loglik_trace": fit.ll_trace.tolist(),
        "labels": {nid: int(c) for nid, c in zip(ids, fit.labels)},
        "collapsed": sorted(fit.collapsed_classes),
        "iterations": fit.iterations,
        "restart_index": fit.restart_index,
        "seed": seed,
        "config": config,
    }
    if include_posteriors:
        payload["posteriors"] = {nid: row.tolist()
                                 for nid, row in zip(ids, fit.posteriors)}
    return payload


def cmd_fit(args) -> int:
    table = dataio.read_data_csv(args.data)
    graph = read_edge_csv(args.edges, node_ids=list(table.ids))
    strategy = _strategy_from_args(args, args.seed)
    opts = _options_from_args(args, args.seed)
    try:
        fit = search_run_select(table.data, graph, args.K, strategy, opts,
                                kind=InteractionKind(args.interaction))
    except AllRestartsFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    payload = _fit_payload(fit, table.ids, args.seed,
                           _config_dict(args, "fit"), args.posteriors)
    dataio.write_json(args.out, payload)
    map_path = args.map if args.map is not None else Path(args.out).with_suffix(".svg")
    svg = render.render_map_svg(graph, fit.labels, args.K,
                                title=f"MPM classification (K={args.K})")
    Path(map_path).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out} and {map_path}")
    return EXIT_OK


def cmd_select_k(args) -> int:
    if args.k_min > args.k_max:
        print("error: --k-min must not exceed --k-max", file=sys.stderr)
        return EXIT_BAD_INPUT
    table = dataio.read_data_csv(args.data)
    graph = read_edge_csv(args.edges, node_ids=list(table.ids))
    rows = []
    for k in range(args.k_min, args.k_max + 1):
        strategy = _strategy_from_args(args, args.seed + k)
        opts = _options_from_args(args, args.seed + k)
        try:
            fit = search_run_select(table.data, graph, k, strategy, opts,
                                    kind=InteractionKind(args.interaction))
            rows.append({"K": k, "bic": fit.bic, "loglik": fit.log_likelihood,
                         "collapsed": sorted(fit.collapsed_classes), "error": None})
        except Exception as exc:  # noqa: BLE001 - per-K failures are reported
            rows.append({"K": k, "bic": None, "loglik": None,
                         "collapsed": [], "error": repr(exc)})
    usable = [r for r in rows if r["error"] is None]
    if not usable:
        print("error: every candidate class count failed to fit", file=sys.stderr)
        return EXIT_ALL_FAILED
    chosen = max(usable, key=lambda r: r["bic"])["K"]
    payload = {"table": rows, "chosen_K": chosen, "seed": args.seed,
               "config": _config_dict(args, "select-k")}
    dataio.write_json(args.out, payload)
    print(f"chosen K = {chosen}; wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    risks = [float(tok) for tok in args.risk_levels.split(",") if tok.strip()]
    if len(risks) != args.K:
        print(f"error: --lambda lists {len(risks)} values but --K is {args.K}",
              file=sys.stderr)
        return EXIT_BAD_INPUT
    if any(r < 0 for r in risks):
        print("error: risk levels must be nonnegative", file=sys.stderr)
        return EXIT_BAD_INPUT
    rng = np.random.default_rng(args.seed)
    graph = build_hex_lattice(args.rows, args.cols)
    scenario = make_blob_scenario(graph, args.K, risks,
                                  pop_range=(args.pop_min, args.pop_max),
                                  n_seeds_per_class=args.seeds_per_class,
                                  rng=rng)
    data = sample_counts(scenario, rng)
    ids = list(graph.node_ids)
    dataio.write_data_csv(args.out_data, ids, data)
    dataio.write_edges_csv(args.out_edges, ids, graph.edges())
    dataio.write_truth_csv(args.out_truth, ids, scenario.true_labels)
    print(f"wrote {args.out_data}, {args.out_edges}, {args.out_truth}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    fit = dataio.read_json(args.fit)
    truth = dataio.read_truth_csv(args.truth)
    labels = fit.get("labels", {})
    if set(labels) != set(truth):
        missing = sorted(set(labels) ^ set(truth))[:5]
        print(f"error: fit and truth ids differ (e.g., {missing})", file=sys.stderr)
        return EXIT_BAD_INPUT
    ids = list(labels)
    pred = np.array([labels[i] for i in ids], dtype=np.int64)
    true = np.array([truth[i] for i in ids], dtype=np.int64)
    est_risks = np.asarray(fit["lambda"], dtype=np.float64)
    k = est_risks.size
    if true.max() >= k:
        print(f"error: truth uses class {true.max()} but the fit has K={k}",
              file=sys.stderr)
        return EXIT_BAD_INPUT
    if args.true_lambda is not None:
        true_risks = np.array([float(t) for t in args.true_lambda.split(",")])
        if true_risks.size != k:
            print("error: --true-lambda length must match the fit's K",
                  file=sys.stderr)
            return EXIT_BAD_INPUT
    else:
        # Without true risk values, truth class indices are taken as already
        # ordered by ascending risk.
        true_risks = np.arange(k, dtype=np.float64)
    report = evaluate_labels(pred, est_risks, true, true_risks,
                             collapsed=set(fit.get("collapsed", [])))
    payload = {
        "dsc": report.dsc.tolist(),
        "estimated_risks": report.estimated_risks.tolist(),
        "true_risks": (true_risks.tolist() if args.true_lambda is not None else None),
        "confusion": report.confusion.tolist(),
        "alignment": report.alignment.tolist(),
        "collapsed": sorted(report.collapsed_classes),
        "n_nodes": int(pred.size),
        "config": _config_dict(args, "evaluate"),
    }
    dataio.write_json(args.out, payload)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskmap",
        description="Risk-level mapping for areal count data with a hidden "
                    "Markov random field prior and mean-field EM.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a K-class risk map")
    p_fit.add_argument("--data", required=True, help="id,count,population CSV")
    p_fit.add_argument("--edges", required=True, help="id_a,id_b CSV")
    p_fit.add_argument("--K", type=int, required=True)
    p_fit.add_argument("--seed", type=int, required=True)
    p_fit.add_argument("--out", required=True, help="result JSON path")
    p_fit.add_argument("--map", default=None, help="SVG path (default: out with .svg)")
    p_fit.add_argument("--posteriors", action="store_true",
                       help="include per-node posteriors in the JSON")
    _add_strategy_args(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sel = sub.add_parser("select-k", help="sweep K and pick by BIC")
    p_sel.add_argument("--data", required=True)
    p_sel.add_argument("--edges", required=True)
    p_sel.add_argument("--k-min", type=int, required=True)
    p_sel.add_argument("--k-max", type=int, required=True)
    p_sel.add_argument("--seed", type=int, required=True)
    p_sel.add_argument("--out", required=True)
    _add_strategy_args(p_sel)
    p_sel.set_defaults(func=cmd_select_k)

    p_sim = sub.add_parser("simulate", help="generate a synthetic scenario")
    p_sim.add_argument("--rows", type=int, required=True)
    p_sim.add_argument("--cols", type=int, required=True)
    p_sim.add_argument("--K", type=int, required=True)
    p_sim.add_argument("--lambda", dest="risk_levels", required=True,
                       help="comma-separated true risk levels, one per class")
    p_sim.add_argument("--pop-min", type=int, default=1)
    p_sim.add_argument("--pop-max", type=int, default=32039)
    p_sim.add_argument("--seeds-per-class", type=int, default=2)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out-data", required=True)
    p_sim.add_argument("--out-edges", required=True)
    p_sim.add_argument("--out-truth", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("evaluate", help="score a fit against ground truth")
    p_eval.add_argument("--fit", required=True, help="fit JSON")
    p_eval.add_argument("--truth", required=True, help="id,true_class CSV")
    p_eval.add_argument("--true-lambda", default=None,
                        help="comma-separated true risks for rank alignment")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (dataio.DataFormatError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
