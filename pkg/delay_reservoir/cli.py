"""``dtdr`` command line: generate, train, autonomous, sweep, compare.

Every run writes its results plus a ``manifest.json`` into ``--out`` and
prints a one-line summary. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O error.
"""

import argparse
import json
import logging
import os
import platform
import sys
import time
import tomllib
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numba
import numpy as np

from . import __version__, serializers
from .autonomy import (
    divergence_curve,
    periodicity_score,
    run_autonomous,
    saturation_step,
    valid_time,
)
from .config import available_presets, dump_config, parse_document
from .errors import ConfigError, FormatError, TrainingError
from .readout import aligned_targets, predict
from .seeding import derive_seed
from .sweep import compare_topologies, run_grid
from .tasks import generate_raw, prepare_task, required_length, run_pipeline
from .timeseries import Timeseries

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

LOG_ENV = "DTDR_LOG"
COMMANDS = ("generate", "train", "autonomous", "sweep", "compare", "presets")


@dataclass
class RunManifest:
    """What was run, with which inputs, producing which files."""

    command: str
    tool_version: str
    config: dict
    config_toml: str
    seeds: dict
    inputs: list
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    host: dict = field(default_factory=dict)

    def to_json(self, path):
        text = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        return serializers.atomic_write(path, text)


def tool_version():
    try:
        return metadata.version("deep-delay-reservoir")
    except metadata.PackageNotFoundError:
        return __version__


def host_fingerprint():
    return {
        "machine": platform.machine(),
        "system": platform.system(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "cpu_count": os.cpu_count(),
    }


def configure_logging():
    name = os.environ.get(LOG_ENV, "warning").upper()
    level = logging.getLevelNamesMapping().get(name, logging.WARNING)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dtdr", description="Deep time-delay reservoir experiments."
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="experiment TOML file")
    parser.add_argument("--preset", help="shipped preset to start from")
    parser.add_argument("--out", type=Path, default=Path("dtdr-out"))
    parser.add_argument("--seed", type=int, help="override the root seed")
    parser.add_argument(
        "--parallelism", type=_positive_int, help="sweep worker threads"
    )
    parser.add_argument(
        "--save-states",
        action="store_true",
        help="also write the state matrix (train only)",
    )
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="validate and print the resolved config without running",
    )
    return parser


def load_experiment(args):
    """Resolve --config / --preset / --seed into a validated config."""
    document = {}
    if args.config is not None:
        with open(args.config, "rb") as handle:
            try:
                document = tomllib.load(handle)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError([("<document>", f"{args.config}: {exc}")]) from exc
    if args.preset is not None:
        document["preset"] = args.preset
    if not document:
        raise ConfigError([("<document>", "give --config and/or --preset")])
    if args.seed is not None:
        document["seed"] = args.seed
    return parse_document(document)


def _write_json(path, body):
    text = json.dumps(body, indent=2, sort_keys=True) + "\n"
    return serializers.atomic_write(path, text)


def cmd_generate(config, out):
    task = config.task_spec()
    n_samples = required_length(task, config.network.washout_steps)
    raw = generate_raw(task, n_samples)
    paths = [raw.to_csv(out / "series.csv"), raw.to_binary(out / "series.bin")]
    summary = f"generated {len(raw)} {task.system} samples (dimension {raw.dimension})"
    return paths, summary


def cmd_train(config, out, save_states=False):
    network = config.network_config()
    task = config.task_spec()
    data = prepare_task(task, network.washout_steps)
    result = run_pipeline(network, task, data)
    states, weights, report = result.states, result.weights, result.report

    targets = aligned_targets(states, data.target, task.delta_n)[:, 0]
    prediction = predict(states.slice_rows(0, len(targets)), weights).values()
    first = states.first_input_index + task.delta_n
    rows = (
        [first + n, float(p), float(t), "train" if n < task.n_train else "test"]
        for n, (p, t) in enumerate(zip(prediction, targets))
    )
    paths = [
        _write_json(
            out / "states.json",
            {
                "n_rows": states.n_rows,
                "n_cols": states.n_cols,
                "n_nodes": list(states.n_nodes),
                "first_input_index": states.first_input_index,
                "sample_interval": states.sample_interval,
            },
        ),
        weights.to_binary(out / "weights.bin"),
        _write_json(
            out / "weights.json",
            {
                "ridge": weights.ridge,
                "include_bias": weights.include_bias,
                "delta_n": weights.delta_n,
                "shape": list(weights.matrix.shape),
                **weights.metadata,
            },
        ),
        report.to_json(out / "report.json"),
        serializers.atomic_write(
            out / "predictions.csv",
            serializers.table_to_csv(["n", "prediction", "target", "block"], rows),
        ),
    ]
    if save_states:
        paths.append(states.to_binary(out / "states.bin"))
    summary = (
        f"nmse_test={report.nmse_test:.4g} nmse_train={report.nmse_train:.4g} "
        f"ridge={report.chosen_ridge:g}"
    )
    return paths, summary


def cmd_autonomous(config, out):
    if config.task.delta_n != 1:
        raise ConfigError(
            [("task.delta_n", "closed-loop operation needs a one-step readout")]
        )
    evaluation = config.eval
    network = config.network_config()
    task = config.task_spec()
    # the held-out block must cover the whole closed-loop horizon
    task = task.model_copy(
        update={"n_test": max(task.n_test, evaluation.n_autonomous)}
    )
    data = prepare_task(task, network.washout_steps)
    result = run_pipeline(network, task, data)

    start = network.washout_steps + task.n_train
    if evaluation.warmup_steps > start:
        raise ConfigError(
            [("eval.warmup_steps", f"needs <= {start} samples before the loop closes")]
        )
    warmup = data.input.slice(start - evaluation.warmup_steps, start)
    run = run_autonomous(
        network,
        result.weights,
        warmup,
        evaluation.n_autonomous,
        evaluation.escape_factor,
    )
    output = run.output.values()
    target = data.target.values()[start : start + len(output)]

    rows = ([n, float(y), float(t)] for n, (y, t) in enumerate(zip(output, target), 1))
    paths = [
        serializers.atomic_write(
            out / "outputs.csv",
            serializers.table_to_csv(["n", "output", "target"], rows),
        )
    ]
    embedding = config.embedding_spec()
    extra = {
        "escaped": run.escaped,
        "n_outputs": len(output),
        "n_requested": run.n_requested,
        "nmse_test": result.report.nmse_test,
        "embedding": embedding.model_dump(),
    }
    target_series = Timeseries(target, data.input.sample_interval)
    try:
        curve = divergence_curve(
            run.output, target_series, embedding, task.lyapunov_max
        )
    except ValueError as exc:
        logger.warning(f"No divergence curve: {exc}")
        extra["valid_time"] = 0.0
        extra["threshold_fraction"] = evaluation.threshold_fraction
        paths.append(_write_json(out / "divergence.json", extra))
        return paths, f"valid_time=0 lyapunov times (escaped={run.escaped})"

    extra["saturation_step"] = saturation_step(
        curve, evaluation.saturation_fraction, evaluation.saturation_window
    )
    try:
        extra["periodicity_score"] = periodicity_score(
            output, evaluation.periodicity_min_lag
        )
    except ValueError:
        extra["periodicity_score"] = None
    paths.append(curve.to_csv(out / "divergence.csv"))
    paths.append(
        curve.to_json(out / "divergence.json", evaluation.threshold_fraction, **extra)
    )
    horizon = valid_time(curve, evaluation.threshold_fraction)
    summary = f"valid_time={horizon:.4g} lyapunov times (escaped={run.escaped})"
    return paths, summary


def cmd_sweep(config, out, parallelism=None):
    if not config.sweep.axes:
        raise ConfigError([("sweep.axes", "a sweep needs at least one axis")])
    parallelism = parallelism or config.sweep.parallelism
    result = run_grid(
        config.network_config(), config.task_spec(), config.sweep.axes, parallelism
    )
    paths = [
        result.to_csv(out / "sweep.csv"),
        result.to_json(out / "sweep.json", parallelism=parallelism),
    ]
    if len(result.axes) == 2:
        paths.append(result.heatmap_csv(out / "heatmap.csv"))
    best = result.best()
    if best is None:
        summary = f"sweep of {len(result)} points: no successful point"
    else:
        point = ", ".join(
            f"{path}={value:g}"
            for path, value in zip(result.parameter_paths, best.point)
        )
        summary = f"best nmse_test={best.nmse_test:.4g} at {point}"
    return paths, summary


def cmd_compare(config, out, parallelism=None):
    networks = config.compare_networks()
    if not networks:
        raise ConfigError([("compare.networks", "nothing to compare")])
    names = [name for name, _ in networks]
    report = compare_topologies(
        [network for _, network in networks],
        config.task_spec(),
        check_budget=config.compare.check_budget,
        names=names,
        parallelism=parallelism or config.sweep.parallelism,
    )
    paths = [
        report.to_csv(out / "compare.csv"),
        _write_json(
            out / "compare.json",
            {
                "entries": [asdict(entry) for entry in report.entries],
                "ranking": list(report.ranking),
            },
        ),
    ]
    scores = {entry.name: entry.nmse_test for entry in report.entries}
    summary = "ranking: " + " < ".join(
        f"{name} ({scores[name]:.3g})" for name in report.ranking
    )
    return paths, summary


def run_command(args):
    if args.command == "presets":
        print("\n".join(available_presets()))
        return EXIT_OK

    config = load_experiment(args)
    if args.dry_run:
        print(dump_config(config), end="")
        return EXIT_OK

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    match args.command:
        case "generate":
            paths, summary = cmd_generate(config, out)
        case "train":
            paths, summary = cmd_train(config, out, args.save_states)
        case "autonomous":
            paths, summary = cmd_autonomous(config, out)
        case "sweep":
            paths, summary = cmd_sweep(config, out, args.parallelism)
        case "compare":
            paths, summary = cmd_compare(config, out, args.parallelism)

    manifest = RunManifest(
        command=args.command,
        tool_version=tool_version(),
        config=config.model_dump(mode="json"),
        config_toml=dump_config(config),
        seeds={
            "root": config.seed,
            "mask": derive_seed(config.seed, "mask"),
            "history": derive_seed(config.seed, "history"),
        },
        inputs=[str(args.config)] if args.config else [],
        outputs=[str(path) for path in paths],
        wall_time=time.perf_counter() - started,
        host=host_fingerprint(),
    )
    manifest.to_json(out / "manifest.json")
    print(summary)
    return EXIT_OK


def main(argv=None):
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except ConfigError as exc:
        print(f"dtdr: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"dtdr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, ValueError, TrainingError) as exc:
        # config problems were raised as ConfigError above
        print(f"dtdr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
