"""Command-line entry point.

Subcommands:

* ``study``    run a Monte-Carlo study from a JSON spec file, emit CSV
* ``run``      one adaptive or periodic inference run, emit a trace CSV
* ``serve``    launch the live-session HTTP service
* ``validate`` run the quick invariant suite

The master seed resolution order is: ``ADAPTRATE_SEED`` environment
variable, then ``--seed``, then the seed recorded in the spec file.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bayes, chains, design, harness, validate

_MODEL_CHOICES = ("two_state_unidirectional", "two_state_bidirectional",
                  "mm1", "ring", "binary")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptrate",
        description="Adaptive Bayesian inference of Markov transition rates.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_study = sub.add_parser("study", help="run a study spec file")
    p_study.add_argument("spec", help="path to a JSON study spec")
    p_study.add_argument("--out", default=None, help="CSV output path")
    p_study.add_argument("--seed", type=int, default=None,
                         help="master seed override")
    p_study.add_argument("--threads", type=int, default=1,
                         help="worker pool size")

    p_run = sub.add_parser("run", help="one inference run with trace output")
    p_run.add_argument("--model", choices=_MODEL_CHOICES,
                       default="two_state_unidirectional")
    p_run.add_argument("--m", type=int, default=3,
                       help="state count for ring/binary models")
    p_run.add_argument("--state-cap", type=int, default=50)
    p_run.add_argument("--theta", type=float, default=0.1)
    p_run.add_argument("--h-true", default=None,
                       help="comma-separated true rates (default: drawn from the prior)")
    p_run.add_argument("--periodic", type=float, default=None, metavar="T",
                       help="use fixed-period sampling instead of adaptive")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--grid-nodes", type=int, default=bayes.DEFAULT_GRID_NODES)
    p_run.add_argument("--step-cap", type=int, default=500)
    p_run.add_argument("--out", default=None, help="trace CSV path (default stdout)")

    p_serve = sub.add_parser("serve", help="launch the session service")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--data-dir", default="./adaptrate-sessions")

    sub.add_parser("validate", help="run the invariant checks")
    return parser


def _default_prior(model: chains.ChainModel) -> bayes.PriorSpec:
    if model.kind == chains.UNIDIRECTIONAL:
        return bayes.GammaPrior(2.0, 1.0)
    if model.kind == chains.MM1:
        return bayes.TruncatedBivariateGammaPrior()
    if model.kind == chains.BINARY:
        return bayes.BernoulliStructurePrior(0.5, model.n_states)
    return bayes.BivariateGammaPrior()


def _cmd_run(args) -> int:
    if args.model == "ring":
        model = chains.ring(args.m)
    elif args.model == "binary":
        model = chains.binary_digraph(args.m)
    elif args.model == "mm1":
        model = chains.mm1_queue(args.state_cap)
    else:
        model = chains.model_from_config({"kind": args.model})
    prior = _default_prior(model)
    config = design.DesignConfig(theta=args.theta, seed=args.seed,
                                 grid_nodes=args.grid_nodes,
                                 step_cap=args.step_cap)
    if args.h_true is not None:
        h_true = np.array([float(v) for v in args.h_true.split(",")])
        if h_true.size != model.d:
            print(f"error: expected {model.d} rates, got {h_true.size}",
                  file=sys.stderr)
            return 2
    else:
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0,)))
        h_true = bayes.sample_prior(prior, rng, config.h_max)
    observer = design.SimulatedObserver(
        model, h_true, np.random.SeedSequence(args.seed, spawn_key=(1,)))
    if args.periodic is not None:
        trace = design.run_periodic(model, prior, config, args.periodic, observer)
    else:
        trace = design.run_adaptive(model, prior, config, observer)
    text = design.trace_to_csv(trace)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    print(f"samples={trace.n_samples} converged={trace.converged} "
          f"threshold={trace.threshold:.6g} h_true={','.join(f'{v:g}' for v in h_true)}",
          file=sys.stderr)
    return 0


def _cmd_study(args) -> int:
    spec = harness.load_spec(args.spec)
    result = harness.run_study(spec, seed=args.seed, threads=args.threads)
    text = harness.emit_csv(result, args.out)
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {len(result.rows)} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)
    return 0


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "study":
            return _cmd_study(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "serve":
            return _cmd_serve(args)
        return 1 if validate.run_checks() else 0
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
