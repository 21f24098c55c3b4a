"""Command-line entry point: synth, train, eval, predict, bench and sweep."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import CheckpointError, ConfigError, DataError, TrainingDivergedError
from app.core.variants import AdjacencyVariant
from app.models.metrics import metrics_document
from app.models.model_config import ModelConfig, RunConfig
from app.repositories.checkpoint_repository import CheckpointRepository
from app.repositories.dataset_repository import DatasetRepository
from app.services.benchmark import run_benchmark
from app.services.evaluation import evaluate, evaluate_persistence
from app.services.graph_learning import check_topology
from app.services.sweep import run_sweep
from app.services.synthetic import synth_generate
from app.services.trainer import train
from app.services.windows import (
    PreparedData,
    WindowSpec,
    make_forecast_window,
    make_windows,
    prepare,
    split,
)
from app.utils.opik_wrapper import configure_opik

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

EPOCH_LOG_NAME = "epoch_log.csv"
METRICS_NAME = "metrics.json"
CHECKPOINT_NAME = "model.npz"


class UsageError(Exception):
    """Command-line misuse reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--alpha", type=float, help="Entmax alpha in [1.0, 2.5]")
    group.add_argument("--M", type=int, help="Significant neighbor set size")
    group.add_argument("--K", type=int, help="Frequency-ranked neighbors (< M)")
    group.add_argument("--J", type=int, help="Diffusion depth")
    group.add_argument("--heads", type=int, help="Attention heads")
    group.add_argument("--hidden", type=int, help="GRU hidden width")
    group.add_argument("--embed-dim", dest="embed_dim", type=int, help="Node embedding width")
    group.add_argument("--history", type=int, help="History steps h")
    group.add_argument("--horizon", type=int, help="Forecast steps f")
    group.add_argument("--stride", type=int, help="Window stride")
    group.add_argument(
        "--day-of-week", dest="day_of_week", action="store_true", default=None,
        help="Add a day-of-week covariate",
    )
    group.add_argument(
        "--variant", choices=[v.value for v in AdjacencyVariant], help="Adjacency variant"
    )
    group.add_argument(
        "--dense-mode", dest="dense_mode", action="store_true", default=None,
        help="Diffuse through a full N x N matrix (forces M = N)",
    )


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="Dataset CSV")
    parser.add_argument("--epochs", type=int, help="Epoch budget")
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr", type=float, help="Adam learning rate")
    parser.add_argument("--r", type=int, help="Iteration after which neighbors freeze")
    parser.add_argument("--horizons", type=int, nargs="+", help="Horizons for test metrics")
    parser.add_argument("--topology", help="Sidecar JSON whose adjacency the topology variant uses")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.set_defaults(command_parser=parser)
    parser.add_argument("--config", help="JSON file with flat keys mirroring the flags")
    parser.add_argument("--seed", type=int, help="Seed for every random draw")
    parser.add_argument("--out", help="Output path")


def create_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slim-graph", description="Slim-graph spatio-temporal forecaster")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = commands.add_parser("synth", help="Write a synthetic planted-diffusion dataset")
    _add_common_flags(synth)
    synth.add_argument("--nodes", type=int, default=50, help="Number of series N")
    synth.add_argument("--steps", type=int, default=5000, help="Number of time steps T")
    synth.add_argument("--hubs", type=int, default=10, help="Planted hub count")
    synth.add_argument("--noise-std", dest="noise_std", type=float, default=0.05)

    train_cmd = commands.add_parser("train", help="Train a forecaster")
    _add_common_flags(train_cmd)
    _add_model_flags(train_cmd)
    _add_training_flags(train_cmd)
    train_cmd.add_argument("--checkpoint", help="Checkpoint to write")

    eval_cmd = commands.add_parser("eval", help="Evaluate a checkpoint on the test split")
    _add_common_flags(eval_cmd)
    eval_cmd.add_argument("--data", help="Dataset CSV")
    eval_cmd.add_argument("--checkpoint", help="Checkpoint to evaluate")
    eval_cmd.add_argument("--horizons", type=int, nargs="+", help="Horizons to report")
    eval_cmd.add_argument("--baseline", choices=["persistence"], help="Also score a baseline")

    predict = commands.add_parser("predict", help="Forecast past the end of a dataset")
    _add_common_flags(predict)
    predict.add_argument("--data", help="Dataset CSV holding at least h steps")
    predict.add_argument("--checkpoint", help="Checkpoint to use")

    bench = commands.add_parser("bench", help="Measure memory and time scaling in N")
    _add_common_flags(bench)
    bench.add_argument("--bench-N", dest="bench_N", type=int, nargs="+", help="Node counts")
    bench.add_argument("--M", type=int, help="Neighbor set size")
    bench.add_argument("--repetitions", type=int, help="Measurements per N")
    bench.add_argument(
        "--dense-mode", dest="dense_mode", action="store_true", default=None,
        help="Measure the N x N path",
    )

    sweep = commands.add_parser("sweep", help="Retrain over a grid of alpha, heads and M")
    _add_common_flags(sweep)
    _add_model_flags(sweep)
    _add_training_flags(sweep)
    sweep.add_argument("--sweep-alpha", dest="sweep_alpha", type=float, nargs="+")
    sweep.add_argument("--sweep-heads", dest="sweep_heads", type=int, nargs="+")
    sweep.add_argument("--sweep-M", dest="sweep_M", type=int, nargs="+")
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < ``--config`` file < flags."""
    file_values: Dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            file_values = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
    flags = {key: value for key, value in vars(args).items() if key in RunConfig.model_fields}
    try:
        return RunConfig.merge(file_values, flags)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _require_file(value: Optional[str], flag: str) -> Path:
    if not value:
        raise UsageError(f"{flag} is required")
    path = Path(value)
    if not path.is_file():
        raise UsageError(f"{flag} {value} does not exist")
    return path


def _output_path(value: Optional[str], default_name: str) -> Path:
    return Path(value) if value else Path(settings.OUTPUT_DIR) / default_name


def _write_json(path: Path, document: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True))


def cmd_synth(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    out = _output_path(run.out, "synth.csv")
    try:
        synthetic = synth_generate(args.nodes, args.steps, args.hubs, run.seed, noise_std=args.noise_std)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    repository = DatasetRepository()
    repository.write_csv(synthetic.dataset, out)
    repository.write_sidecar(
        out.with_suffix(".json"),
        synthetic.adjacency,
        synthetic.hubs,
        extras={"seed": run.seed, "coupling": synthetic.coupling, "period": synthetic.period},
    )
    print(out)
    return EXIT_OK


def _metric_horizons(requested: List[int], horizon: int) -> List[int]:
    kept = [h for h in requested if h <= horizon]
    return kept or [horizon]


def _load_topology(run: RunConfig, config: ModelConfig) -> Optional[np.ndarray]:
    if config.variant != AdjacencyVariant.TOPOLOGY:
        return None
    path = _require_file(run.topology, "--topology")
    matrix = DatasetRepository().read_sidecar(path)["adjacency"]
    try:
        check_topology(matrix, config.num_nodes)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return matrix


def _prepare_run(run: RunConfig) -> Tuple[PreparedData, ModelConfig, Optional[np.ndarray]]:
    data_path = _require_file(run.data, "--data")
    dataset = DatasetRepository().load_csv(data_path)
    try:
        config = run.to_model_config(dataset.num_nodes)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    topology = _load_topology(run, config)
    spec = WindowSpec(config.history, config.horizon, config.stride)
    return prepare(dataset, spec, config.day_of_week), config, topology


def cmd_train(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    prepared, config, topology = _prepare_run(run)
    state = train(prepared, config, topology=topology)

    out_dir = Path(run.out) if run.out else Path(settings.OUTPUT_DIR)
    checkpoint = Path(run.checkpoint) if run.checkpoint else out_dir / CHECKPOINT_NAME
    CheckpointRepository().save(checkpoint, state.model, state.optimizer, state.iteration)

    out_dir.mkdir(parents=True, exist_ok=True)
    log = pd.DataFrame([entry.model_dump() for entry in state.history])
    log.to_csv(out_dir / EPOCH_LOG_NAME, index=False, float_format="%.12g")

    metrics = evaluate(state.model, prepared.test, _metric_horizons(run.horizons, config.horizon))
    document = metrics_document(metrics)
    _write_json(out_dir / METRICS_NAME, document)
    print(json.dumps(document, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    data_path = _require_file(run.data, "--data")
    checkpoint_path = _require_file(run.checkpoint, "--checkpoint")
    model = CheckpointRepository().load(checkpoint_path).model
    config = model.config
    bad = [h for h in run.horizons if not 1 <= h <= config.horizon]
    if bad:
        raise ConfigError(f"horizons {bad} exceed the model horizon {config.horizon}")

    dataset = DatasetRepository().load_csv(data_path)
    if dataset.num_nodes != config.num_nodes:
        raise DataError(f"dataset has {dataset.num_nodes} nodes, checkpoint expects {config.num_nodes}")
    _, _, test = split(dataset)
    spec = WindowSpec(config.history, config.horizon, config.stride)
    windows = make_windows(test, spec, model.scaler, config.day_of_week)

    document = metrics_document(evaluate(model, windows, run.horizons))
    out = _output_path(run.out, METRICS_NAME)
    _write_json(out, document)
    print(json.dumps(document, indent=2, sort_keys=True))

    if run.baseline == "persistence":
        baseline = metrics_document(evaluate_persistence(windows, run.horizons))
        _write_json(out.with_name(f"{out.stem}.persistence.json"), baseline)
        print(json.dumps({"persistence": baseline}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    data_path = _require_file(run.data, "--data")
    checkpoint_path = _require_file(run.checkpoint, "--checkpoint")
    model = CheckpointRepository().load(checkpoint_path).model
    config = model.config

    dataset = DatasetRepository().load_csv(data_path)
    if dataset.num_nodes != config.num_nodes:
        raise DataError(f"dataset has {dataset.num_nodes} nodes, checkpoint expects {config.num_nodes}")
    spec = WindowSpec(config.history, config.horizon, config.stride)
    window = make_forecast_window(dataset, spec, model.scaler, config.day_of_week)
    forecast = model.predict(window)[0, :, :, 0]

    out = _output_path(run.out, "forecast.csv")
    DatasetRepository().write_forecast(forecast, window.target_times[0], dataset.node_names, out)
    print(out)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    report = run_benchmark(
        run.bench_N,
        num_neighbors=run.M or 100,
        repetitions=run.repetitions,
        dense_mode=run.dense_mode,
        seed=run.seed,
    )
    document = report.model_dump(mode="json")
    _write_json(_output_path(run.out, "bench.json"), document)
    print(json.dumps(document, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    prepared, config, topology = _prepare_run(run)
    try:
        report = run_sweep(
            prepared,
            config,
            alphas=run.sweep_alpha,
            heads=run.sweep_heads,
            neighbors=run.sweep_M,
            horizons=_metric_horizons(run.horizons, config.horizon),
            topology=topology,
        )
    except DataError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    document = report.model_dump(mode="json")
    _write_json(_output_path(run.out, "sweep.json"), document)
    print(json.dumps(document, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns 0 on success, 2 on usage or config errors, 3 on data errors."""
    logging.basicConfig(
        level=settings.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    configure_opik()
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        getattr(args, "command_parser", parser).print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
