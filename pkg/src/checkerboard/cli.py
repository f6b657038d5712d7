"""Command-line harness: ``checkerboard <command> [flags]``.

Every command takes ``--config FILE`` (YAML) and ``--seed``; flags override
config values. Exit codes: 0 success, 2 argument, 3 config, 4 file, 5 numeric.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import dataset as ds
from . import fem, ga, linear, seeding, training, validation
from .metrics import PROPERTY_NAMES, MetricError, eval_report, write_eval_report
from .microstructure import SUPPORTED_GRIDS, MicrostructureError, check_grid

log = logging.getLogger("checkerboard")

EXIT_ARGUMENT, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4, 5


class CliError(Exception):
    code = EXIT_ARGUMENT


class ConfigError(CliError):
    code = EXIT_CONFIG


class FileError(CliError):
    code = EXIT_IO


class NumericError(CliError):
    code = EXIT_NUMERIC


DEFAULTS = {
    "grid": "8x4",
    "seed": 0,
    "materials": {
        "stiff": {"youngs_modulus": fem.STIFF.youngs_modulus, "poisson_ratio": fem.STIFF.poisson_ratio,
                  "failure_strain": fem.STIFF.failure_strain},
        "soft": {"youngs_modulus": fem.SOFT.youngs_modulus, "poisson_ratio": fem.SOFT.poisson_ratio,
                 "failure_strain": fem.SOFT.failure_strain},
    },
    "dataset": {"count": 1000, "workers": 1, "batch_size": 500},
    "train": {"epochs": 50, "batch_size": 128, "learning_rate": 1e-3, "train_fraction": 0.9},
    "ga": {"generation_size": 1024, "max_generations": 150, "crossover_probability": 0.95,
           "mutation_probability": 0.005, "elitism_ratio": 0.10, "top_k": 5},
    "aof": {"weights": None, "normalizers": None},
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


def load_config(path) -> dict:
    if path is None:
        return _merge(DEFAULTS, {})
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise FileError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return _merge(DEFAULTS, doc)


def parse_grid(text) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in str(text).lower().split("x"))
        check_grid(w, h)
    except (ValueError, MicrostructureError) as exc:
        grids = ", ".join(f"{w}x{h}" for w, h in SUPPORTED_GRIDS)
        raise ConfigError(f"bad grid {text!r}; supported: {grids}") from exc
    return w, h


def materials(cfg) -> tuple[fem.ElasticMaterial, fem.ElasticMaterial]:
    try:
        return (fem.ElasticMaterial(**cfg["materials"]["stiff"]),
                fem.ElasticMaterial(**cfg["materials"]["soft"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad material constants: {exc}") from exc


def _pick(flag, cfg_value):
    return cfg_value if flag is None else flag


def _read_dataset(path) -> ds.LabeledDataset:
    try:
        return ds.read_dataset(path)
    except OSError as exc:
        raise FileError(f"cannot read dataset {path}: {exc}") from exc
    except ds.DatasetFormatError as exc:
        raise FileError(str(exc)) from exc


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FileError(f"cannot create {out}: {exc}") from exc
    return out


# ----------------------------------------------------------------- commands

def cmd_gen_data(args, cfg) -> int:
    grid = parse_grid(_pick(args.grid, cfg["grid"]))
    count = _pick(args.count, cfg["dataset"]["count"])
    workers = _pick(args.workers, cfg["dataset"]["workers"])
    if count < 1:
        raise CliError("--count must be at least 1")
    if workers < 1:
        raise CliError("--workers must be at least 1")
    stiff, soft = materials(cfg)
    data = ds.generate(count, grid, seeding.child_seed(args.seed, "sampling"), workers, stiff, soft)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        ds.write_dataset(out, data)
        stats_path = out.with_name(out.stem + "_stats.csv")
        try:
            ds.write_stats_csv(stats_path, ds.summary_stats(data))
        except ds.StatsUndefinedError as exc:
            log.warning("statistics skipped: %s", exc)
        batch = cfg["dataset"]["batch_size"]
        if count % batch == 0 and count // batch >= 2:
            trace = ds.batch_means(data, batch)
            ds.write_batch_means_csv(out.with_name(out.stem + "_batch_means.csv"), trace)
            ds.write_histogram_csv(out.with_name(out.stem + "_histogram.csv"), trace)
    except OSError as exc:
        raise FileError(f"cannot write {out}: {exc}") from exc
    print(f"wrote {count} samples on grid {grid[0]}x{grid[1]} to {out}")
    return 0


def cmd_validate_fem(args, cfg) -> int:
    grid = parse_grid(_pick(args.grid, cfg["grid"]))
    stiff, soft = materials(cfg)
    results = validation.run_fem_checks(grid, args.samples, args.seed, stiff, soft)
    print(validation.format_report(results))
    if not all(r.passed for r in results):
        raise NumericError("FE validation failed")
    return 0


def _split(args, cfg, data):
    fraction = _pick(args.train_fraction, cfg["train"]["train_fraction"])
    if not 0.0 < fraction <= 1.0:
        raise CliError("--train-fraction must lie in (0, 1]")
    return ds.split(data, fraction, seeding.child_seed(args.seed, "split"))


def cmd_train(args, cfg) -> int:
    data = _read_dataset(args.dataset)
    train_set, test_set = _split(args, cfg, data)
    out = _outdir(args.out)
    if args.kind == "linear":
        try:
            models = linear.fit_all(train_set, ridge_fallback=args.ridge)
        except linear.RankDeficientError as exc:
            raise NumericError(str(exc)) from exc
        with open(out / "linear_metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["property", "train_r2", "train_mse", "test_mape"])
            for name, model in models.items():
                linear.save_model_csv(out / f"linear_{name}.csv", model)
                linear.write_rank_grid_csv(out / f"linear_{name}_ranks.csv", model)
                test_mape = linear.holdout_mape(model, test_set) if len(test_set) else float("nan")
                writer.writerow([name, repr(linear.r_squared(model, train_set)),
                                 repr(linear.training_mse(model, train_set)), repr(test_mape)])
                print(f"{name}: R2={linear.r_squared(model, train_set):.4f} test MAPE={test_mape:.2f}%")
        if len(test_set):
            pred = np.column_stack([models[p].predict(test_set.bits) for p in PROPERTY_NAMES])
            write_eval_report(out / "eval.csv", eval_report(test_set.labels, pred))
        return 0

    tc = cfg["train"]
    try:
        config = training.TrainConfig(epochs=_pick(args.epochs, tc["epochs"]),
                                      batch_size=_pick(args.batch_size, tc["batch_size"]),
                                      learning_rate=_pick(args.learning_rate, tc["learning_rate"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    model = training.model_for(train_set, args.seed)
    try:
        result = training.train(model, train_set, test_set, config, args.seed)
    except training.TrainingDivergedError as exc:
        raise NumericError(str(exc)) from exc
    training.save_checkpoint(out / "model.cbnn", model)
    training.write_history_csv(out / "history.csv", result.history)
    if len(test_set):
        report = training.evaluate(model, test_set)
        write_eval_report(out / "eval.csv", report)
        for name, r in report.items():
            print(f"{name}: test MAPE={r.mape:.2f}%")
    print(f"checkpoint written to {out / 'model.cbnn'}")
    return 0


def _load_model(path):
    path = Path(path)
    if path.is_dir():
        # a directory written by ``train linear``
        models = {}
        for name in PROPERTY_NAMES:
            f = path / f"linear_{name}.csv"
            if not f.exists():
                raise FileError(f"{path}: missing {f.name}")
            models[name] = f
        return "linear", models
    try:
        return "cnn", training.load_checkpoint(path)
    except OSError as exc:
        raise FileError(f"cannot read model {path}: {exc}") from exc
    except training.CheckpointError as exc:
        raise FileError(str(exc)) from exc


def _predictor(kind, model, width, height):
    if kind == "cnn":
        if (model.config.width, model.config.height) != (width, height):
            raise ConfigError(f"model grid {model.config.width}x{model.config.height} does not "
                              f"match {width}x{height}")
        return ga.model_predictor(model)
    try:
        fits = [linear.load_model_csv(model[p], p, width, height) for p in PROPERTY_NAMES]
    except (OSError, ValueError, IndexError) as exc:
        raise FileError(f"cannot read linear model: {exc}") from exc
    if any(len(m.weights) != width * height for m in fits):
        raise ConfigError(f"linear model does not match grid {width}x{height}")
    return lambda genomes: np.column_stack([m.predict(genomes) for m in fits])


def cmd_eval(args, cfg) -> int:
    kind, model = _load_model(args.model)
    data = _read_dataset(args.dataset)
    if args.split == "test":
        data = _split(args, cfg, data)[1]
    if len(data) == 0:
        raise CliError("evaluation set is empty")
    predict = _predictor(kind, model, data.width, data.height)
    try:
        report = eval_report(data.labels, predict(data.bits))
    except MetricError as exc:
        raise NumericError(str(exc)) from exc
    try:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_eval_report(args.out, report)
    except OSError as exc:
        raise FileError(f"cannot write {args.out}: {exc}") from exc
    for name, r in report.items():
        print(f"{name}: MAPE={r.mape:.3f}% max={r.max_error:.3f}% >5%: {r.frac_gt_5pct:.4f}")
    return 0


def _parse_floats(text, what):
    if text is None or isinstance(text, (list, tuple)):
        return text
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad {what} {text!r}") from exc


def cmd_optimize(args, cfg) -> int:
    grid = parse_grid(_pick(args.grid, cfg["grid"]))
    width, height = grid
    g = cfg["ga"]
    weights = _parse_floats(_pick(args.weights, cfg["aof"]["weights"]), "weights")
    normalizers = _parse_floats(_pick(args.normalizers, cfg["aof"]["normalizers"]), "normalizers")
    aof_weights = None
    if args.objective == "aof":
        if weights is None or len(weights) != 3:
            raise ConfigError("aof needs three weights (modulus,strength,toughness)")
        try:
            aof_weights = ga.AofWeights(*weights)
            if normalizers is not None:
                aof_weights = aof_weights.with_normalizers(normalizers)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        params = ga.GaParams(generation_size=_pick(args.generation_size, g["generation_size"]),
                             gene_count=width * height,
                             max_generations=_pick(args.max_generations, g["max_generations"]),
                             crossover_probability=g["crossover_probability"],
                             mutation_probability=g["mutation_probability"],
                             elitism_ratio=g["elitism_ratio"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    top_k = _pick(args.top_k, g["top_k"])

    if args.oracle == "fem":
        predict = ga.fem_predictor(width, height, *materials(cfg))
    else:
        if args.model is None:
            raise CliError("--oracle model needs --model")
        predict = _predictor(*_load_model(args.model), width, height)
    out = _outdir(args.out)
    seed = seeding.child_seed(args.seed, "ga")

    if aof_weights is not None:
        if aof_weights.normalizers is None:
            maxima, _ = ga.single_objective_maxima(predict, params, seed)
            aof_weights = aof_weights.with_normalizers(maxima)
        run = ga.optimize_aof(predict, aof_weights, params, seed)
        result = run.result
        with open(out / "objectives.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["property", "weight", "normalizer", "value", "F"])
            for k, name in enumerate(PROPERTY_NAMES):
                writer.writerow([name, repr(float(aof_weights.weights[k])),
                                 repr(float(aof_weights.normalizers[k])),
                                 repr(float(run.properties[k])), repr(float(run.objectives[k]))])
        print("F = " + ", ".join(f"{n}={f:.4f}" for n, f in zip(PROPERTY_NAMES, run.objectives)))
    else:
        result = ga.evolve(params, ga.property_oracle(predict, args.objective), seed)
    genomes, fitness = result.top_k(top_k)
    ga.write_history(out / "history.csv", result)
    ga.write_top_genomes(out / "top_genomes.csv", genomes, fitness, width, height)
    vf = float(np.mean(result.best))
    print(f"best fitness {result.best_fitness:.6g} after {result.generations} generations "
          f"({result.stopped_by}); soft volume fraction {100 * vf:.2f}%")
    return 0


# ------------------------------------------------------------------ parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="root seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="checkerboard", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="sample and label microstructures")
    s.add_argument("--grid")
    s.add_argument("--count", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True, help="dataset file to write")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("validate-fem", parents=[common], help="run the analytical FE checks")
    s.add_argument("--grid")
    s.add_argument("--samples", type=int, default=100)
    s.set_defaults(func=cmd_validate_fem)

    s = sub.add_parser("train", parents=[common], help="fit a linear or CNN surrogate")
    s.add_argument("kind", choices=("linear", "cnn"))
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--train-fraction", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--ridge", action="store_true", help="ridge fallback for rank-deficient data")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("optimize", parents=[common], help="genetic-algorithm design search")
    s.add_argument("--oracle", choices=("fem", "model"), default="fem")
    s.add_argument("--model", help="CNN checkpoint or linear model directory")
    s.add_argument("--objective", choices=PROPERTY_NAMES + ("aof",), required=True)
    s.add_argument("--weights", help="AOF weights m,s,t")
    s.add_argument("--normalizers", help="AOF normalizers m,s,t (default: single-objective runs)")
    s.add_argument("--grid")
    s.add_argument("--generation-size", type=int)
    s.add_argument("--max-generations", type=int)
    s.add_argument("--top-k", type=int)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("eval", parents=[common], help="MAPE report of a model on a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--split", choices=("all", "test"), default="all")
    s.add_argument("--train-fraction", type=float)
    s.add_argument("--out", required=True, help="report CSV")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        args.seed = _pick(args.seed, cfg["seed"])
        return args.func(args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
