#!/usr/bin/env python
import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

# Add project root to Python path
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import django  # noqa: E402
import environ  # noqa: E402

env_file = project_root / ".env"
if env_file.exists():
    environ.Env.read_env(env_file=str(env_file))

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "hybran.settings")
django.setup()

# Import after django.setup() to avoid AppRegistryNotReady
from django.conf import settings  # noqa: E402
from django.core.management import call_command  # noqa: E402

from hybrid_automaton import __version__  # noqa: E402
from hybrid_automaton.adapters.storage import write_json  # noqa: E402
from hybrid_automaton.dynamics import PRNG_ALGORITHM  # noqa: E402
from hybrid_automaton.exceptions import HybridAutomatonError, InvalidArgumentError  # noqa: E402
from hybrid_automaton.geometry import Box  # noqa: E402
from hybrid_automaton.nn import Activation, Architecture, Optimizer, TrainConfig  # noqa: E402
from hybrid_automaton.reach import ExteriorMode, MergePolicy, ReachConfig  # noqa: E402
from hybrid_automaton.repositories.model_repository import ModelRepository  # noqa: E402
from hybrid_automaton.repositories.reach_repository import ReachRepository  # noqa: E402
from hybrid_automaton.repositories.run_repository import RunManifest, RunRepository  # noqa: E402
from hybrid_automaton.repositories.trace_repository import TraceRepository  # noqa: E402
from hybrid_automaton.services.data_service import SYSTEMS, DataService  # noqa: E402
from hybrid_automaton.services.evaluation_service import EvaluationService  # noqa: E402
from hybrid_automaton.services.reach_service import ReachService  # noqa: E402
from hybrid_automaton.services.simulation_service import SimulationService  # noqa: E402
from hybrid_automaton.services.training_service import TrainingService, input_box_of  # noqa: E402

logger = logging.getLogger(__name__)

DEFAULT_DOMAIN = f"-4,4;{-math.pi!r},{math.pi!r}"
DEFAULT_INIT_BOX = DEFAULT_DOMAIN


def parse_vector(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",")]
    except ValueError as e:
        raise InvalidArgumentError(f"cannot parse vector {text!r}: {e}") from e


def parse_box(text: str) -> Box:
    """``"lo1,hi1;lo2,hi2"``: one ``lo,hi`` pair per dimension."""
    pairs = []
    for part in text.split(";"):
        values = parse_vector(part)
        if len(values) != 2:
            raise InvalidArgumentError(f"box dimension {part!r} needs exactly lo,hi")
        pairs.append(values)
    return Box.from_bounds(pairs)


def parse_ints(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",")]
    except ValueError as e:
        raise InvalidArgumentError(f"cannot parse integer list {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybran", description="Learn neural-network hybrid automata and compute their reachable sets"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="Sample traces of a benchmark system")
    gen.add_argument("--system", choices=sorted(SYSTEMS), default="limit-cycle")
    gen.add_argument("--traces", type=int, default=50)
    gen.add_argument("--steps", type=int, default=150)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--init-box", default=DEFAULT_INIT_BOX, help='initial state box, "lo1,hi1;lo2,hi2"')
    gen.add_argument("--tau", type=float, default=0.1)
    gen.add_argument("--omega", type=float, default=2.0 * math.pi / 3.0)
    gen.add_argument("--mu", type=float, default=0.2)
    gen.add_argument("--delta", type=float, default=1.5)
    gen.add_argument("--no-wrap", action="store_true", help="do not wrap the angle into (-pi, pi]")
    gen.add_argument("--out", required=True)

    train = commands.add_parser("train", help="Train a hybrid automaton or a single-network baseline")
    train.add_argument("--traces", required=True)
    train.add_argument("--domain", default=DEFAULT_DOMAIN)
    train.add_argument("--segments", default="4,3")
    train.add_argument("--hidden", default="20", help="hidden layer sizes, comma separated")
    train.add_argument("--activation", choices=[act.value for act in Activation], default="tanh")
    train.add_argument("--mode", choices=["hybrid", "single"], default="hybrid")
    train.add_argument("--epochs", type=int, default=2000)
    train.add_argument("--lr", type=float, default=1e-3)
    train.add_argument("--optimizer", choices=[opt.value for opt in Optimizer], default="adam")
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--holdout", type=float, default=0.2, help="fraction of traces held out for eval")
    train.add_argument("--strict", action="store_true", help="drop pairs whose successor leaves the cell")
    train.add_argument("--input-box", default=None, help="input set stored in the model (default: observed)")
    train.add_argument("--backend", choices=["local", "celery"], default=None)
    train.add_argument("--workers", type=int, default=None)
    train.add_argument("--min-pairs", type=int, default=None)
    train.add_argument("--sparse-fallback", action="store_true", default=None)
    train.add_argument("--out", required=True)

    evaluate = commands.add_parser("eval", help="One-step MSE of models on a trace file")
    evaluate.add_argument("--model", required=True, nargs="+")
    evaluate.add_argument("--traces", required=True)
    evaluate.add_argument("--out", default=None, help="JSON table path (default: stdout only)")

    simulate = commands.add_parser("simulate", help="Simulate executions of a model")
    simulate.add_argument("--model", required=True)
    start = simulate.add_mutually_exclusive_group(required=True)
    start.add_argument("--x0", help="initial state, comma separated")
    start.add_argument("--init-box", help="draw initial states from this box")
    simulate.add_argument("--count", type=int, default=1)
    simulate.add_argument("--steps", type=int, default=150)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--input-box", default=None)
    simulate.add_argument("--out", required=True)

    reach = commands.add_parser("reach", help="Split-and-Combine reachable set of a model")
    reach.add_argument("--model", required=True)
    reach.add_argument("--init-box", required=True)
    reach.add_argument("--input-box", default=None, help="default: the model's input box")
    reach.add_argument("--steps", type=int, default=200)
    reach.add_argument("--merge", choices=[policy.value for policy in MergePolicy], default="per-cell-merge")
    reach.add_argument("--exterior", choices=[mode.value for mode in ExteriorMode], default="extend")
    reach.add_argument("--max-fragments", type=int, default=None)
    reach.add_argument("--overlay-sim", type=int, default=0, help="Monte Carlo trajectories drawn over the set")
    reach.add_argument("--seed", type=int, default=0)
    reach.add_argument("--compare-model", default=None, help="baseline model run on the same query")
    reach.add_argument("--out-prefix", required=True)

    commands.add_parser("version", help="Print the tool version")
    return parser


def finish(
    command: str,
    args: argparse.Namespace,
    output: str,
    seed: Optional[int],
    paths: dict,
    timings: dict,
    extra_config: Optional[dict] = None,
):
    config = {key: value for key, value in vars(args).items() if key != "command"}
    manifest = RunManifest(
        command=command,
        config={**config, **(extra_config or {})},
        seed=seed,
        paths=paths,
        timings=timings,
        tool_version=__version__,
    )
    RunRepository().save_manifest(output, manifest)
    RunRepository().record(manifest)


def cmd_gen_data(args) -> int:
    started = time.perf_counter()
    params = SYSTEMS[args.system](
        tau=args.tau, omega=args.omega, mu=args.mu, delta=args.delta, wrap_theta=not args.no_wrap
    )
    _, rows = DataService().generate(args.out, params, args.traces, args.steps, parse_box(args.init_box), args.seed)
    finish(
        "gen-data",
        args,
        args.out,
        args.seed,
        {"out": args.out},
        {"seconds": time.perf_counter() - started, "rows": rows},
        extra_config={"prng": PRNG_ALGORITHM},
    )
    return 0


def cmd_train(args) -> int:
    started = time.perf_counter()
    data = DataService()
    traces = data.load(args.traces)
    train_traces, test_traces = data.holdout(traces, args.holdout, args.seed)

    domain = parse_box(args.domain)
    state_dim, input_dim = train_traces[0].state_dim, train_traces[0].input_dim
    arch = Architecture.shallow(state_dim + input_dim, parse_ints(args.hidden), state_dim, Activation(args.activation))
    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        optimizer=Optimizer(args.optimizer),
        batch_size=args.batch_size,
        seed=args.seed,
    )
    input_box = parse_box(args.input_box) if args.input_box else input_box_of(train_traces)

    service = TrainingService(
        backend=args.backend,
        workers=args.workers,
        min_pairs=args.min_pairs,
        sparse_fallback=args.sparse_fallback,
    )
    outcome = service.train_model(
        train_traces, domain, parse_ints(args.segments), arch, cfg, input_box, mode=args.mode, strict=args.strict
    )
    ModelRepository().save(args.out, outcome.automaton)

    paths = {"traces": args.traces, "out": args.out}
    if test_traces:
        paths["test_traces"] = f"{args.out}.test.csv"
        TraceRepository().save(paths["test_traces"], test_traces)

    summary = {
        "model": args.out,
        "mode": args.mode,
        "cells": len(outcome.automaton.nets),
        "transitions": len(outcome.automaton.transitions),
        "losses": outcome.report.losses,
        "pairs": outcome.stats.to_json(),
        "fallback_cells": outcome.fallback_cells,
        **outcome.timings,
    }
    print(json.dumps(summary, indent=2))
    finish("train", args, args.out, args.seed, paths, {"seconds": time.perf_counter() - started, **outcome.timings})
    return 0


def cmd_eval(args) -> int:
    started = time.perf_counter()
    rows = EvaluationService().evaluate(args.model, args.traces)
    text = json.dumps(rows, indent=2)
    print(text)
    paths = {"models": args.model, "traces": args.traces}
    if args.out:
        write_json(args.out, rows)
        paths["out"] = args.out
    output = args.out or f"{args.model[0]}.eval"
    finish("eval", args, output, None, paths, {"seconds": time.perf_counter() - started})
    return 0


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    automaton = ModelRepository().load(args.model)
    batch = SimulationService().run(
        automaton,
        steps=args.steps,
        seed=args.seed,
        x0=parse_vector(args.x0) if args.x0 else None,
        init_box=parse_box(args.init_box) if args.init_box else None,
        count=args.count,
        input_box=parse_box(args.input_box) if args.input_box else None,
    )
    ReachRepository().save_trajectories(args.out, batch.trajectories, batch.cells)
    finish(
        "simulate",
        args,
        args.out,
        args.seed,
        {"model": args.model, "out": args.out},
        {"seconds": time.perf_counter() - started},
    )
    return 0


def cmd_reach(args) -> int:
    started = time.perf_counter()
    models = ModelRepository()
    automaton = models.load(args.model)
    baseline = models.load(args.compare_model) if args.compare_model else None
    cfg = ReachConfig(
        horizon=args.steps,
        input_box=parse_box(args.input_box) if args.input_box else automaton.input_box,
        merge_policy=MergePolicy(args.merge),
        max_fragments=args.max_fragments or settings.HYBRAN_MAX_FRAGMENTS,
        exterior=ExteriorMode(args.exterior),
    )
    outcome = ReachService().run(
        automaton,
        parse_box(args.init_box),
        cfg,
        args.out_prefix,
        baseline=baseline,
        overlay=args.overlay_sim,
        seed=args.seed,
    )

    timings = {"seconds": time.perf_counter() - started, **outcome.timings}
    if outcome.monte_carlo is not None:
        timings["monte_carlo_violations"] = outcome.monte_carlo.total_violations
    finish("reach", args, args.out_prefix, args.seed, {"model": args.model, **outcome.paths}, timings)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "reach": cmd_reach,
}


def prepare_ledger() -> None:
    if settings.HYBRAN_RECORD_RUNS:
        call_command("migrate", verbosity=0, interactive=False)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0

    logger.info(f"[main] Running {args.command}")
    try:
        prepare_ledger()
        return COMMANDS[args.command](args)
    except HybridAutomatonError as e:
        logger.error("[main] Command failed", extra={"command": args.command, "error": str(e)})
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.error("[main] I/O error", extra={"command": args.command, "error": str(e)})
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
