"""Command line front end.

Every subcommand reads one YAML config and writes CSV (plus a JSON metadata
sidecar for runs) into --out.  Exit status is 0 on success and 2 on any
configuration, feasibility, or input-format problem, with a diagnostic on
stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .design import InfeasibleDesignError
from .filters import lms_theory_report, rls_theory_report
from .graphs import GraphFormatError, save_edge_list
from .harness import (
    ConfigError,
    build_graph,
    build_setup,
    compare_sampling,
    load_config,
    resolve_sampling,
    run_experiment,
    to_db,
    write_compare_csv,
    write_curve_csv,
    write_design_csv,
    write_metadata,
    write_per_node_csv,
    write_trace_csv,
)
from .sampling import ReconstructabilityError

_RUN_COMMANDS = {"run-lms": "lms", "run-rls": "rls", "run-drls": "drls"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphadapt",
        description="Adaptive reconstruction of bandlimited graph signals "
                    "from randomly sampled noisy observations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "design": "solve a sampling-probability design problem",
        "run-lms": "Monte Carlo learning curve for the diffusion estimator",
        "run-rls": "Monte Carlo learning curve for the recursive estimator",
        "run-drls": "Monte Carlo learning curves for the distributed estimator",
        "theory": "closed-form steady-state predictions for the configured run",
        "compare-sampling": "sampling budget needed by designed and baseline strategies",
        "gen-graph": "draw the configured graph and save it as an edge list",
    }
    for name, blurb in commands.items():
        cmd = sub.add_parser(name, help=blurb)
        cmd.add_argument("--config", required=True, help="YAML experiment config")
        cmd.add_argument("--out", default=".", help="output directory (created if absent)")
        cmd.add_argument("--seed", type=int, default=None, help="override config seed")
        cmd.add_argument("--trials", type=int, default=None, help="override config trials")
    return parser


def _run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.trials is not None:
        config["trials"] = args.trials
    os.makedirs(args.out, exist_ok=True)

    if args.command == "gen-graph":
        graph = build_graph(config)
        path = os.path.join(args.out, "graph.txt")
        save_edge_list(graph, path)
        edges = int(np.count_nonzero(np.triu(graph.weights)))
        print(f"wrote {path}: {graph.n} nodes, {edges} edges")
        return 0

    if args.command == "design":
        setup = build_setup(config)
        probs, trace = resolve_sampling(setup)
        if trace is None:
            raise ConfigError("sampling.kind: the design command needs kind 'design'")
        write_design_csv(probs, setup.noise, os.path.join(args.out, "design_p.csv"))
        write_trace_csv(trace, os.path.join(args.out, "design_trace.csv"))
        status = "converged" if trace.converged else "stopped at the iteration cap"
        print(f"design {status} after {trace.iterations} iterations")
        print(f"sampling rate sum(p) = {probs.probs.sum():.6g} over {probs.n} nodes, "
              f"{len(probs.support())} with p_i > 0")
        return 0

    if args.command == "theory":
        setup = build_setup(config)
        probs, _ = resolve_sampling(setup)
        acfg = config.get("algorithm")
        if not isinstance(acfg, dict) or "kind" not in acfg:
            raise ConfigError("algorithm.kind: required field is missing")
        if acfg["kind"] == "lms":
            report = lms_theory_report(probs, float(acfg["mu"]), setup.noise,
                                       setup.bandlimit)
        elif acfg["kind"] in ("rls", "drls"):
            report = rls_theory_report(probs, float(acfg["beta"]), setup.noise,
                                       setup.bandlimit)
        else:
            raise ConfigError(f"algorithm.kind: unknown kind {acfg['kind']!r}")
        rows = [("msd_linear", report.msd), ("msd_db", report.msd_db)]
        if report.rate is not None:
            rows.append(("convergence_rate", report.rate))
        if report.step_bound is not None:
            rows.append(("step_bound", report.step_bound))
        with open(os.path.join(args.out, "theory.csv"), "w") as fh:
            fh.write("quantity,value\n")
            for name, value in rows:
                fh.write(f"{name},{value:.12g}\n")
        for name, value in rows:
            print(f"{name} = {value:.6g}")
        return 0

    if args.command == "compare-sampling":
        rows = compare_sampling(config)
        write_compare_csv(rows, os.path.join(args.out, "comparison.csv"))
        for r in rows:
            print(f"{r['strategy']:>10s}  target={r['rate_target']:.4g}  "
                  f"rate={r['sampling_rate']:.6g} +- {r['sampling_rate_std']:.3g}")
        return 0

    if args.command in _RUN_COMMANDS:
        expected = _RUN_COMMANDS[args.command]
        acfg = config.get("algorithm")
        kind = acfg.get("kind") if isinstance(acfg, dict) else None
        if kind != expected:
            raise ConfigError(
                f"algorithm.kind: {args.command} needs kind '{expected}', got {kind!r}"
            )
        curve = run_experiment(config)
        write_curve_csv(curve, os.path.join(args.out, "curve.csv"))
        write_metadata(curve, config, os.path.join(args.out, "meta.json"))
        if curve.per_node is not None:
            write_per_node_csv(curve, os.path.join(args.out, "curve_per_node.csv"))
        meta = curve.metadata
        print(f"{expected}: {meta['trials']} trials x {meta['horizon']} iterations")
        print(f"steady-state deviation {meta['steady_state_db']:.3f} dB "
              f"(theory {meta['theory_msd_db']:.3f} dB)")
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, InfeasibleDesignError, ReconstructabilityError,
            GraphFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
