#!/usr/bin/env python3
"""
SHS Adversarial Benchmark - command line

Subcommands map one-to-one onto the library: generate a cohort, train a
victim, run attacks or poisoning, run experiment recipes, inspect a model.
Every run prints its resolved configuration first.

Exit status: 0 success, 1 a cell or sample failed, 2 usage, input or
configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from .attack_core import DEFAULT_QUERY_BUDGET, AttackConstraints, AttackGoal
from .batch_attack import AttackKind, batch_attack, export_results_csv, results_to_frame, target_pools
from .datagen import COHORT_PER_CLASS, DEFAULT_NOISE_SIGMA, GeneratorSpec, SplitSpec, export_csv, generate, \
    ingest_csv, split
from .errors import CapabilityError, ConfigurationError, ParseError, ShsBenchError, TrainingError
from .experiment import (
    RECIPES,
    ExperimentConfig,
    check_recipes,
    create_example_config,
    resolve_output_dir,
    run_experiment,
)
from .metrics import attack_metrics, evaluate
from .model_format import load_model, model_info, save_model
from .models import Algorithm, ModelAccess, TrainingConfig, train
from .schema import PatientState
from .version import __version__

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
# Errors caused by bad flags, files or settings rather than by a run
USAGE_ERRORS = (ConfigurationError, ParseError, CapabilityError, FileNotFoundError, PermissionError,
                IsADirectoryError)


def _banner(title: str, out=sys.stdout):
    print("=" * 80, file=out)
    print(title, file=out)
    print("=" * 80, file=out)


def _print_config(settings: Dict, out=sys.stdout):
    _banner("Resolved configuration", out)
    print(yaml.safe_dump(settings, default_flow_style=False, sort_keys=True).rstrip(), file=out)
    print(file=out)


def _output_path(path: Optional[str], default_name: str) -> Path:
    """Explicit paths are used as given; defaults land in the output directory."""
    if path:
        return Path(path)
    return resolve_output_dir(".") / default_name


def _print_class_counts(counts: np.ndarray, out=sys.stdout):
    width = max(len(s.display_name) for s in PatientState)
    for state in PatientState:
        print(f"  {state.display_name:<{width}}  {int(counts[state]):>6}", file=out)
    print(f"  {'Total':<{width}}  {int(counts.sum()):>6}", file=out)


def cmd_generate(args) -> int:
    out = _output_path(args.out, "cohort.csv")
    _print_config({"seed": args.seed, "per_class": args.per_class, "noise_sigma": args.noise, "out": str(out)})
    spec = GeneratorSpec.default(per_class=args.per_class, noise_sigma=args.noise, seed=args.seed)
    ds = generate(spec)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_csv(ds, out)
    _banner(f"Generated {len(ds)} samples")
    _print_class_counts(ds.class_counts())
    print(f"\n✓ Dataset written to: {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    algo = Algorithm.parse(args.algo)
    out = _output_path(args.out, f"model_{algo.value}.shsm")
    _print_config({"data": args.data, "algorithm": algo.value, "seed": args.seed, "split_seed": args.split_seed,
                   "train_fraction": args.train_fraction, "out": str(out)})
    ds = ingest_csv(args.data)
    train_ds, test_ds = split(ds, SplitSpec(args.train_fraction, args.split_seed))
    config = TrainingConfig(algo, args.seed)
    try:
        model = train(config, train_ds)
    except TrainingError as e:
        print(f"Error: training failed: {e}", file=sys.stderr)
        return EXIT_FAILURE
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    test = evaluate(model, test_ds)
    _banner(f"Trained {algo.value} on {len(train_ds)} samples")
    print(f"  Train accuracy: {model.train_accuracy:.2f}%")
    print(f"  Test accuracy:  {test.accuracy:.2f}%  ({len(test_ds)} samples)")
    print(f"\n✓ Model written to: {out}")
    return EXIT_OK


def _devices(schema, text: Optional[str]) -> Optional[List[int]]:
    if not text:
        return None
    return [schema.device_by_name(name.strip()).id for name in text.split(",") if name.strip()]


def _attack_single(args) -> int:
    kind = AttackKind.parse(args.attack)
    if not args.model or not args.data:
        raise ConfigurationError("Single-attack mode needs --model and --data")
    goal = AttackGoal.targeted(PatientState.parse(args.target)) if args.target else AttackGoal.untargeted()
    out = _output_path(args.out, f"results_{kind.value}.csv")
    settings = {"attack": kind.value, "model": args.model, "data": args.data, "goal": str(goal),
                "epsilon": args.epsilon, "devices": args.devices, "query_budget": args.budget,
                "samples": args.samples, "seed": args.seed, "out": str(out)}
    stream = sys.stderr if args.format == "csv" else sys.stdout
    _print_config(settings, stream)

    model = load_model(args.model)
    ds = ingest_csv(args.data, model.schema)
    access = ModelAccess(model, kind.capability)
    device_ids = _devices(model.schema, args.devices)
    if device_ids is None:
        constraints = AttackConstraints(args.epsilon, None, args.budget)
    else:
        constraints = AttackConstraints.from_devices(model.schema, device_ids, args.epsilon, args.budget)
    rows = np.arange(min(args.samples, len(ds))) if args.samples else np.arange(len(ds))
    data = ds.subset(rows)
    pools = target_pools(access, ds) if goal.is_targeted else None

    results = batch_attack(access, data.X, goal, constraints, kind, args.seed, data.y,
                           starting_points=pools, progress=args.progress)
    export_results_csv(results, out, model.schema)
    metrics = attack_metrics(results)

    if args.format == "csv":
        sys.stdout.write(results_to_frame(results, model.schema).to_csv(index=False, float_format="%.9g",
                                                                        lineterminator="\n"))
    else:
        _banner(f"{kind.value} on {model.algorithm.value}: {len(results)} samples, {goal}")
        print(f"  Clean accuracy:       {metrics.clean_accuracy:.2f}%")
        print(f"  Adversarial accuracy: {metrics.adversarial_accuracy:.2f}%")
        print(f"  Accuracy drop:        {metrics.accuracy_drop:.2f}")
        print(f"  Success rate:         {metrics.success_rate:.2f}%")
        print(f"  Mean queries:         {metrics.mean_queries:.1f}")
        print(f"  Mean L2 / Linf:       {metrics.mean_l2:.4f} / {metrics.mean_linf:.4f}")
        print(f"  Skipped / failed:     {metrics.skipped} / {metrics.failed}")
        print(f"\n✓ Results written to: {out}")
    return EXIT_FAILURE if metrics.failed else EXIT_OK


def _load_experiment(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config)
    overrides = {"jobs": args.jobs}
    if getattr(args, "data", None):
        raw_dataset = dict(config.raw["dataset"], csv=args.data)
        overrides["dataset"] = raw_dataset
    if getattr(args, "seed", None) is not None:
        overrides["attack"] = dict(config.raw["attack"], base_seed=args.seed)
    return config.with_overrides(**overrides)


def _run_recipes(config: ExperimentConfig, recipes: List[str], fmt: str) -> int:
    stream = sys.stderr if fmt == "csv" else sys.stdout
    _print_config(config.raw, stream)
    report = run_experiment(config, recipes)

    for name, table in report.tables.items():
        if fmt == "csv":
            sys.stdout.write(table.to_csv(index=False, float_format="%.4f", lineterminator="\n"))
        else:
            _banner(f"Recipe {name}")
            print(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
            print()
    for path in report.files:
        print(f"✓ {path}", file=stream)
    if report.failures:
        print(f"\n{len(report.failures)} failure(s):", file=sys.stderr)
        for failure in report.failures:
            print(f"  {failure}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_attack(args) -> int:
    if args.recipe:
        return _run_recipes(_load_experiment(args), check_recipes([args.recipe]), args.format)
    if not args.attack:
        raise ConfigurationError("attack needs --recipe or --attack")
    return _attack_single(args)


def cmd_poison(args) -> int:
    config = _load_experiment(args)
    poisoning = dict(config.raw["poisoning"])
    if args.rates:
        poisoning["rates"] = [float(r) for r in args.rates.split(",")]
    if args.seeds:
        poisoning["seeds"] = [int(s) for s in args.seeds.split(",")]
    if args.mode:
        poisoning["mode"] = args.mode
    return _run_recipes(config.with_overrides(poisoning=poisoning), ["table3"], args.format)


def cmd_report(args) -> int:
    if args.create_config:
        path = create_example_config(args.create_config)
        print(f"Example configuration written to: {path}")
        return EXIT_OK
    recipes = list(RECIPES) if args.recipe == "all" else check_recipes(args.recipe.split(","))
    return _run_recipes(_load_experiment(args), recipes, args.format)


def cmd_model_info(args) -> int:
    model = load_model(args.model)
    info = model_info(model)
    if args.format == "csv":
        for key, value in info.items():
            print(f"{key},{value}")
        return EXIT_OK
    _banner(f"Model: {args.model}")
    for key, value in info.items():
        print(f"  {key:<18} {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    recipes = "|".join(RECIPES)
    parser = argparse.ArgumentParser(
        prog="shs-bench",
        description="Adversarial attack benchmark for a machine-learning smart healthcare system",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  # Generate the default balanced cohort
  %(prog)s generate --seed 42 --per-class 1546 --out cohort.csv

  # Train a random forest victim
  %(prog)s train --data cohort.csv --algo rf --out rf.shsm

  # Untargeted FGM on 200 samples with epsilon 0.1
  %(prog)s attack --attack fgm --model lr.shsm --data cohort.csv --epsilon 0.1 --samples 200

  # White/black-box comparison on the default pairings
  %(prog)s attack --recipe table5 --jobs 4

  # Label-flip poisoning grid
  %(prog)s poison --rates 0.1,0.2,0.3

  # Every recipe ({recipes}) from a config file
  %(prog)s report --config experiment.yaml --recipe all

Output directory: set SHS_BENCH_OUTPUT_DIR to redirect every written file.
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Generate a synthetic cohort CSV")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"Generator seed (default: {DEFAULT_SEED})")
    p.add_argument("--per-class", type=int, default=COHORT_PER_CLASS,
                   help=f"Samples per patient state (default: {COHORT_PER_CLASS})")
    p.add_argument("--noise", type=float, default=DEFAULT_NOISE_SIGMA,
                   help=f"Gaussian noise as a fraction of each normal range (default: {DEFAULT_NOISE_SIGMA})")
    p.add_argument("-o", "--out", type=str, help="Output CSV (default: cohort.csv in the output directory)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="Train and save a victim classifier")
    p.add_argument("--data", required=True, help="Dataset CSV")
    p.add_argument("--algo", default="rf", choices=[a.value for a in Algorithm], help="Model family")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Training seed")
    p.add_argument("--split-seed", type=int, default=DEFAULT_SEED, help="Train/test split seed")
    p.add_argument("--train-fraction", type=float, default=0.7, help="Training share (default: 0.7)")
    p.add_argument("-o", "--out", type=str, help="Model file (default: model_<algo>.shsm)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="Run a recipe or a single attack over a dataset")
    p.add_argument("--recipe", choices=["table4", "table5", "fig4", "fig5", "fig6", "fig7"],
                   help="Experiment recipe to run")
    p.add_argument("--attack", choices=[k.value for k in AttackKind], help="Single-attack mode algorithm")
    p.add_argument("--model", help="Victim model file (single-attack mode)")
    p.add_argument("--data", help="Dataset CSV (samples to attack, or the cohort for recipes)")
    p.add_argument("--target", help="Target patient state; omitted means untargeted")
    p.add_argument("--epsilon", type=float, default=None, help="Per-feature L-inf threshold in normalized units")
    p.add_argument("--devices", help="Comma-separated compromised devices (default: all)")
    p.add_argument("--budget", type=int, default=DEFAULT_QUERY_BUDGET, help="Query budget per sample")
    p.add_argument("--samples", type=int, default=0, help="Attack only the first N samples (0 = all)")
    p.add_argument("--seed", type=int, default=None, help=f"Attack base seed (default: {DEFAULT_SEED} "
                                                          "in single mode, config value for recipes)")
    p.add_argument("-c", "--config", help="Experiment YAML (recipe mode)")
    p.add_argument("-j", "--jobs", type=int, default=None, help="Worker processes for recipe cells")
    p.add_argument("-o", "--out", help="Per-sample results CSV (single mode)")
    p.add_argument("-f", "--format", choices=["human", "csv"], default="human", help="Stdout format")
    p.add_argument("--progress", action="store_true", help="Show a progress bar")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("poison", help="Run the poisoning grid")
    p.add_argument("--rates", help="Comma-separated poison rates (default from config)")
    p.add_argument("--seeds", help="Comma-separated replicate seeds (default from config)")
    p.add_argument("--mode", choices=["label_flip", "injection", "modification"], help="Poisoning mode")
    p.add_argument("--data", help="Dataset CSV instead of a generated cohort")
    p.add_argument("-c", "--config", help="Experiment YAML")
    p.add_argument("-j", "--jobs", type=int, default=None, help="Worker processes")
    p.add_argument("-f", "--format", choices=["human", "csv"], default="human", help="Stdout format")
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("report", help="Run experiment recipes and write CSV, SVG and manifest")
    p.add_argument("--recipe", default="all", help=f"Comma-separated recipes or 'all' ({recipes})")
    p.add_argument("--data", help="Dataset CSV instead of a generated cohort")
    p.add_argument("-c", "--config", help="Experiment YAML")
    p.add_argument("-j", "--jobs", type=int, default=None, help="Worker processes")
    p.add_argument("-f", "--format", choices=["human", "csv"], default="human", help="Stdout format")
    p.add_argument("--create-config", metavar="PATH", help="Write an example configuration and exit")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("model-info", help="Describe a saved model")
    p.add_argument("model", help="Model file")
    p.add_argument("-f", "--format", choices=["human", "csv"], default="human", help="Stdout format")
    p.set_defaults(func=cmd_model_info)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    if args.command == "attack" and args.recipe is None and args.seed is None:
        args.seed = DEFAULT_SEED
    try:
        return args.func(args)
    except USAGE_ERRORS as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ShsBenchError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
