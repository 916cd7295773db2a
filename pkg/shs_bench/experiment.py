"""
Experiment Runner

Loads a YAML experiment configuration over complete defaults, builds the
cohort and victims, and runs named recipes. Each recipe writes
metrics_<recipe>.csv and plot_<recipe>.svg. Every run also writes
victims.csv (accuracy of each trained victim) and manifest.txt
with the configuration hash, all seeds and library versions.
"""

import copy
import hashlib
import logging
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from .attack_core import AttackConstraints, AttackGoal
from .batch_attack import AttackKind, AttackParams, target_pools
from .datagen import GeneratorSpec, SplitSpec, generate, ingest_csv, split
from .dataset import Dataset
from .decision_attacks import HopSkipJumpParams
from .device_analysis import (
    SearchStrategy,
    batch_metrics,
    device_reduction_sweep,
    minimal_device_search,
    shifted_targets,
    threshold_sweep,
)
from .errors import ConfigurationError
from .gradient_attacks import CarliniWagnerParams
from .metrics import evaluate
from .models import Algorithm, Capability, Classifier, ModelAccess, TrainingConfig, train
from .poisoning import FlipRule, PoisonMode, PoisonSpec, drop_grid, poisoning_experiment
from .schema import PatientState
from .svg_plot import bar_chart, line_chart, write_svg
from .version import __version__
from .workers import CELL_ERRORS, ResultTable, run_cells
from .zoo_attack import ZooParams

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "SHS_BENCH_OUTPUT_DIR"
METRICS_FLOAT_FORMAT = "%.4f"

DEFAULT_CONFIG: Dict[str, Any] = {
    "output_dir": "results",
    "jobs": 1,
    "dataset": {
        "csv": None,
        "seed": 42,
        "per_class": 1546,
        "noise_sigma": 0.05,
    },
    "split": {
        "train_fraction": 0.7,
        "seed": 42,
    },
    "models": {
        "rf": {"seed": 42, "hyperparameters": {}},
        "dt": {"seed": 42, "hyperparameters": {}},
        "nn": {"seed": 42, "hyperparameters": {}},
        "lr": {"seed": 42, "hyperparameters": {}},
    },
    "attack": {
        "base_seed": 0,
        "samples": 300,
        "query_budget": 20000,
        "fgm_epsilon": 0.1,
        "starting_pool": 25,
        "leaf_offset": 0.01,
        "carlini_wagner": {},
        "hop_skip_jump": {},
        "zoo": {},
    },
    "pairings": [["hsj", "dt"], ["cw", "nn"], ["fgm", "lr"], ["zoo", "rf"]],
    "poisoning": {
        "mode": "label_flip",
        "rates": [0.1, 0.2, 0.3],
        "seeds": [0, 1, 2, 3, 4],
        "flip_target": None,
        "modification_threshold": 0.1,
    },
    "device_reduction": {
        "removal_order": ["glucose", "oxygen", "heartrate"],
    },
    "thresholds": [0.1, 0.2, 0.3],
    "device_search": {
        "attack": "dt",
        "model": "dt",
        "strategy": "exhaustive",
        "candidates": 10,
        # current state -> final state; null final state means untargeted
        "rows": [
            ["HighCholesterol", "Stroke"],
            ["HighBloodPressure", "Stroke"],
            ["AbnormalOxygenLevel", "Stroke"],
            ["Stroke", "AbnormalOxygenLevel"],
            ["Sleeping", None],
            ["Stress", "HeartAttack"],
        ],
    },
}

# Sections whose keys are free-form (validated by the record they build)
_OPEN_SECTIONS = {"carlini_wagner", "hop_skip_jump", "zoo", "hyperparameters"}
_MODEL_DEFAULTS = {"seed": 42, "hyperparameters": {}}


def _merge(defaults: Dict, user: Dict, path: str = "") -> Dict:
    """Recursive update of defaults by user; unknown keys are rejected."""
    if not isinstance(user, dict):
        raise ConfigurationError(f"'{path.rstrip('.') or 'config'}' must be a mapping")
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigurationError(f"Unknown configuration key '{where}'")
        if where == "models":
            merged[key] = _merge_models(defaults[key], value)
        elif isinstance(defaults[key], dict) and key not in _OPEN_SECTIONS:
            merged[key] = _merge(defaults[key], value, f"{where}.")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _merge_models(defaults: Dict, user: Dict) -> Dict:
    if not isinstance(user, dict):
        raise ConfigurationError("'models' must be a mapping of algorithm to settings")
    merged = copy.deepcopy(defaults)
    for name, spec in user.items():
        merged[name] = _merge(merged.get(name, _MODEL_DEFAULTS), spec or {}, f"models.{name}.")
    return merged


def _record(record_type, values: Dict, name: str):
    try:
        return record_type(**(values or {}))
    except TypeError as e:
        raise ConfigurationError(f"Bad {name} settings: {e}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of a fully materialized configuration dictionary."""

    raw: Dict[str, Any]
    output_dir: Path
    jobs: int
    split: SplitSpec
    models: Dict[str, TrainingConfig]
    attack_params: AttackParams
    pairings: Tuple[Tuple[AttackKind, Algorithm], ...]
    poison_template: PoisonSpec
    thresholds: Tuple[float, ...]

    @classmethod
    def from_dict(cls, user: Optional[Dict] = None) -> "ExperimentConfig":
        raw = _merge(DEFAULT_CONFIG, user or {})
        if raw["jobs"] < 1:
            raise ConfigurationError(f"jobs must be >= 1, got {raw['jobs']}")
        attack = raw["attack"]
        if attack["samples"] < 1:
            raise ConfigurationError("attack.samples must be >= 1")

        models = {}
        for name, spec in raw["models"].items():
            config = TrainingConfig.from_dict(name, spec["seed"], spec["hyperparameters"])
            models[config.algorithm.value] = config

        pairings = []
        for item in raw["pairings"]:
            if len(item) != 2:
                raise ConfigurationError(f"Pairing {item} must be [attack, model]")
            kind, algo = AttackKind.parse(item[0]), Algorithm.parse(item[1])
            if algo.value not in models:
                raise ConfigurationError(f"Pairing {item} names model '{algo.value}' that is not configured")
            pairings.append((kind, algo))

        poisoning = raw["poisoning"]
        flip = FlipRule() if poisoning["flip_target"] is None \
            else FlipRule.targeted(PatientState.parse(poisoning["flip_target"]))
        try:
            mode = PoisonMode(poisoning["mode"])
        except ValueError:
            options = ", ".join(m.value for m in PoisonMode)
            raise ConfigurationError(f"Unknown poisoning mode '{poisoning['mode']}'. Available: {options}") from None
        template = PoisonSpec(mode, 0.0, 0, flip, float(poisoning["modification_threshold"]))

        params = AttackParams(
            carlini_wagner=_record(CarliniWagnerParams, attack["carlini_wagner"], "carlini_wagner"),
            hop_skip_jump=_record(HopSkipJumpParams, attack["hop_skip_jump"], "hop_skip_jump"),
            zoo=_record(ZooParams, attack["zoo"], "zoo"),
            leaf_offset=float(attack["leaf_offset"]),
            fgm_epsilon=float(attack["fgm_epsilon"]),
        )
        for t in raw["thresholds"]:
            if not 0.0 < float(t) <= 1.0:
                raise ConfigurationError(f"Thresholds must lie in (0, 1], got {t}")
        SearchStrategy(raw["device_search"]["strategy"])

        return cls(
            raw=raw,
            output_dir=Path(raw["output_dir"]),
            jobs=int(raw["jobs"]),
            split=SplitSpec(float(raw["split"]["train_fraction"]), int(raw["split"]["seed"])),
            models=models,
            attack_params=params,
            pairings=tuple(pairings),
            poison_template=template,
            thresholds=tuple(float(t) for t in raw["thresholds"]),
        )

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None) -> "ExperimentConfig":
        """Read YAML over the defaults; no path means all defaults."""
        if path is None:
            return cls.from_dict({})
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                user = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Error parsing config file {path}: {e}") from None
        if not isinstance(user, dict):
            raise ConfigurationError(f"Config file {path} must hold a mapping at the top level")
        return cls.from_dict(user)

    def with_overrides(self, **values) -> "ExperimentConfig":
        """New config with top-level keys replaced (CLI flags)."""
        raw = copy.deepcopy(self.raw)
        raw.update({k: v for k, v in values.items() if v is not None})
        return ExperimentConfig.from_dict(raw)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, default_flow_style=False, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_yaml().encode("utf-8")).hexdigest()

    @property
    def base_seed(self) -> int:
        return int(self.raw["attack"]["base_seed"])

    @property
    def query_budget(self) -> int:
        return int(self.raw["attack"]["query_budget"])


def create_example_config(output_path: Union[str, Path] = "experiment.yaml") -> Path:
    """Write a template with every default spelled out."""
    output_path = Path(output_path)
    with open(output_path, "w", encoding="utf-8") as f:
        f.write("# SHS adversarial benchmark experiment configuration\n")
        f.write("# Every key is optional; missing keys fall back to these defaults.\n")
        f.write("# dataset.csv: path of an ingested cohort; null generates one from dataset.seed\n")
        f.write("# pairings: [attack, model] with attack in hsj, fgm, cw, zoo, dt and model in dt, rf, lr, nn\n")
        yaml.safe_dump(DEFAULT_CONFIG, f, default_flow_style=False, sort_keys=False)
    logger.info("Example configuration written to %s", output_path)
    return output_path


def resolve_output_dir(configured: Union[str, Path]) -> Path:
    """SHS_BENCH_OUTPUT_DIR, when set, wins over the configured directory."""
    override = os.environ.get(OUTPUT_DIR_ENV)
    return Path(override) if override else Path(configured)


class ExperimentContext:
    """Cohort, split and lazily trained victims shared by the recipes of one run."""

    def __init__(self, config: ExperimentConfig, dataset: Optional[Dataset] = None):
        self.config = config
        self.dataset = dataset if dataset is not None else self._load_dataset()
        self.train, self.test = split(self.dataset, config.split)
        self._models: Dict[str, Classifier] = {}
        self._pools: Optional[dict] = None
        logger.info("Cohort %s: %d train / %d test", self.dataset.provenance, len(self.train), len(self.test))

    def _load_dataset(self) -> Dataset:
        spec = self.config.raw["dataset"]
        if spec["csv"]:
            return ingest_csv(spec["csv"])
        generator = GeneratorSpec.default(per_class=int(spec["per_class"]),
                                          noise_sigma=float(spec["noise_sigma"]), seed=int(spec["seed"]))
        return generate(generator)

    def model(self, algorithm: Union[str, Algorithm]) -> Classifier:
        algo = Algorithm.parse(algorithm) if isinstance(algorithm, str) else algorithm
        if algo.value not in self.config.models:
            raise ConfigurationError(f"Model '{algo.value}' is not configured")
        if algo.value not in self._models:
            self._models[algo.value] = train(self.config.models[algo.value], self.train)
        return self._models[algo.value]

    @property
    def trained(self) -> List[str]:
        return list(self._models)

    def access(self, kind: AttackKind, algorithm: Union[str, Algorithm]) -> ModelAccess:
        return ModelAccess(self.model(algorithm), kind.capability)

    @property
    def attack_slice(self) -> Dataset:
        n = min(int(self.config.raw["attack"]["samples"]), len(self.test))
        return self.test.subset(np.arange(n))

    def pools(self, access: ModelAccess) -> dict:
        if self._pools is None:
            self._pools = target_pools(access, self.train, int(self.config.raw["attack"]["starting_pool"]))
        return self._pools

    def constraints(self, threshold: Optional[float] = None) -> AttackConstraints:
        return AttackConstraints(threshold=threshold, query_budget=self.config.query_budget)

    def pairing_accesses(self) -> List[Tuple[AttackKind, ModelAccess]]:
        return [(kind, self.access(kind, algo)) for kind, algo in self.config.pairings]


@dataclass
class RecipeOutput:
    table: ResultTable
    svg: str


def _recipe_table3(ctx: ExperimentContext) -> RecipeOutput:
    poisoning = ctx.config.raw["poisoning"]
    configs = list(ctx.config.models.values())
    result = poisoning_experiment(configs, ctx.dataset, [float(r) for r in poisoning["rates"]],
                                  [int(s) for s in poisoning["seeds"]], ctx.config.poison_template,
                                  ctx.config.jobs)
    grid = drop_grid(result.frame)
    series = {f"{rate:.0%}": grid[rate].tolist() for rate in grid.columns}
    svg = bar_chart(list(grid.index), series, "Accuracy drop under label poisoning", "accuracy drop (pp)")
    return RecipeOutput(result, svg)


def _recipe_table4(ctx: ExperimentContext) -> RecipeOutput:
    search = ctx.config.raw["device_search"]
    kind = AttackKind.parse(search["attack"])
    access = ctx.access(kind, search["model"])
    strategy = SearchStrategy(search["strategy"])
    classifier = access.classifier
    predicted = classifier.predict_batch(ctx.test.X)
    schema = ctx.dataset.schema
    constraints = ctx.constraints()

    rows, failures = [], []
    for current_name, final_name in search["rows"]:
        current = PatientState.parse(current_name)
        goal = AttackGoal.untargeted() if final_name is None else AttackGoal.targeted(PatientState.parse(final_name))
        candidates = np.flatnonzero((ctx.test.y == int(current)) & (predicted == int(current)))
        candidates = candidates[: int(search["candidates"])]
        best = None
        for index in candidates:
            try:
                found = minimal_device_search(access, ctx.test.X[index], goal, kind, strategy, constraints,
                                              ctx.config.attack_params, ctx.config.base_seed + int(index),
                                              ctx.pools(access).get(int(goal.target)) if goal.is_targeted else None,
                                              int(current))
            except CELL_ERRORS as exc:
                failures.append(f"{current.display_name}->{final_name}: sample {index}: {exc}")
                continue
            if found.feasible and (best is None or (found.size, index) < (best[0].size, best[1])):
                best = (found, int(index))
        devices = sorted(best[0].devices) if best else []
        rows.append({
            "current_state": current.display_name,
            "final_state": final_name if final_name is not None else "(any other)",
            "goal": str(goal),
            "sample": best[1] if best else -1,
            "devices": ";".join(schema.devices[d].name for d in devices),
            "device_count": len(devices) if best else np.nan,
            "feasible": best is not None,
        })
    frame = pd.DataFrame(rows)
    labels = [f"{r['current_state']}>{r['final_state']}" for r in rows]
    svg = bar_chart(labels, {"devices": frame["device_count"].fillna(0).tolist()},
                    "Minimal compromised devices", "devices")
    return RecipeOutput(ResultTable(frame, failures), svg)


def _capability_label(capability: Capability) -> str:
    return "white-box" if capability in (Capability.GRADIENT, Capability.STRUCTURE) else "black-box"


def _recipe_table5(ctx: ExperimentContext) -> RecipeOutput:
    data = ctx.attack_slice
    pairings = ctx.pairing_accesses()
    cells = []
    for kind, access in pairings:
        key = (kind.value, access.classifier.algorithm.value)
        pools = ctx.pools(access)
        cells.append((key + ("ua",), (kind, access, data, AttackGoal.untargeted(), ctx.constraints(),
                                      ctx.config.attack_params, ctx.config.base_seed, None)))
        cells.append((key + ("ta",), (kind, access, data, shifted_targets(data.y), ctx.constraints(),
                                      ctx.config.attack_params, ctx.config.base_seed, pools)))
    outcomes = {o.key: o for o in run_cells(batch_metrics, cells, ctx.config.jobs, "table5 cells")}

    rows, failures = [], []
    for kind, access in pairings:
        key = (kind.value, access.classifier.algorithm.value)
        ua, ta = outcomes[key + ("ua",)], outcomes[key + ("ta",)]
        for o in (ua, ta):
            if not o.ok:
                failures.append(f"{o.key}: {o.error}")
        rows.append({
            "capability": _capability_label(access.capability),
            "attack": kind.value,
            "model": access.classifier.algorithm.value,
            "clean": ua.value["clean"] if ua.ok else np.nan,
            "drop": ua.value["drop"] if ua.ok else np.nan,
            "success": ta.value["success"] if ta.ok else np.nan,
        })
    frame = pd.DataFrame(rows, columns=["capability", "attack", "model", "clean", "drop", "success"])
    labels = [f"{r['attack']}/{r['model']}" for r in rows]
    svg = bar_chart(labels, {"drop (UA)": frame["drop"].tolist(), "success (TA)": frame["success"].tolist()},
                    "White-box and black-box attacks", "percent")
    return RecipeOutput(ResultTable(frame, failures), svg)


def _sweep_plot(frame: pd.DataFrame, x: str, y: str, title: str, x_label: str, y_label: str) -> str:
    series = {}
    if not frame.empty and y in frame:
        for (attack, model), part in frame.groupby(["attack", "model"], sort=False):
            series[f"{attack}/{model}"] = list(zip(part[x].astype(float), part[y].astype(float)))
    return line_chart(series, title, x_label, y_label)


def _reduction(ctx: ExperimentContext, targeted: bool) -> RecipeOutput:
    data = ctx.attack_slice
    pairings = ctx.pairing_accesses()
    goal = shifted_targets(data.y) if targeted else AttackGoal.untargeted()
    pools = ctx.pools(pairings[0][1]) if targeted else None
    table = device_reduction_sweep(pairings, data, goal, ctx.config.raw["device_reduction"]["removal_order"],
                                   ctx.constraints(), ctx.config.attack_params, ctx.config.base_seed, pools,
                                   ctx.config.jobs)
    metric = "success" if targeted else "drop"
    title = "Device reduction, targeted" if targeted else "Device reduction, untargeted"
    return RecipeOutput(table, _sweep_plot(table.frame, "removed", metric, title, "devices removed", metric))


def _thresholds(ctx: ExperimentContext, targeted: bool) -> RecipeOutput:
    data = ctx.attack_slice
    pairings = ctx.pairing_accesses()
    goal = shifted_targets(data.y) if targeted else AttackGoal.untargeted()
    pools = ctx.pools(pairings[0][1]) if targeted else None
    table = threshold_sweep(pairings, data, goal, ctx.config.thresholds, ctx.constraints(),
                            ctx.config.attack_params, ctx.config.base_seed, pools, ctx.config.jobs)
    metric = "success" if targeted else "drop"
    title = "Threshold attacks, targeted" if targeted else "Threshold attacks, untargeted"
    return RecipeOutput(table, _sweep_plot(table.frame, "threshold", metric, title, "threshold", metric))


RECIPES: Dict[str, Callable[[ExperimentContext], RecipeOutput]] = {
    "table3": _recipe_table3,
    "table4": _recipe_table4,
    "table5": _recipe_table5,
    "fig4": lambda ctx: _reduction(ctx, targeted=True),
    "fig5": lambda ctx: _reduction(ctx, targeted=False),
    "fig6": lambda ctx: _thresholds(ctx, targeted=True),
    "fig7": lambda ctx: _thresholds(ctx, targeted=False),
}


def check_recipes(names: Sequence[str]) -> List[str]:
    unknown = [n for n in names if n not in RECIPES]
    if unknown:
        raise ConfigurationError(f"Unknown recipe(s) {', '.join(unknown)}. Available: {', '.join(RECIPES)}")
    return list(names)


@dataclass
class ExperimentReport:
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(path: Path, config: ExperimentConfig, ctx: ExperimentContext, recipes: Sequence[str],
                   report: ExperimentReport) -> Path:
    lines = [
        "shs-bench experiment manifest",
        f"version: {__version__}",
        f"config_sha256: {config.config_hash()}",
        f"recipes: {', '.join(recipes)}",
        f"dataset: {ctx.dataset.provenance}",
        f"dataset_sha256: {ctx.dataset.checksum()}",
        f"split_seed: {config.split.seed}",
        f"train_fraction: {config.split.train_fraction}",
    ]
    for name, training in config.models.items():
        lines.append(f"model_seed.{name}: {training.seed}")
    lines += [
        f"attack_base_seed: {config.base_seed}",
        f"poisoning_seeds: {', '.join(str(s) for s in config.raw['poisoning']['seeds'])}",
        f"python: {platform.python_version()}",
        f"numpy: {np.__version__}",
        f"pandas: {pd.__version__}",
        f"pyyaml: {yaml.__version__}",
        "files:",
    ]
    for file in report.files:
        lines.append(f"  {file.name} {_sha256(file)}")
    lines.append("failures:" if report.failures else "failures: none")
    lines += [f"  {failure}" for failure in report.failures]
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def clean_accuracies(ctx: ExperimentContext) -> pd.DataFrame:
    """Train/test accuracy of every victim the run has trained so far."""
    rows = []
    for name in ctx.trained:
        model = ctx.model(name)
        rows.append({"model": name, "train_accuracy": model.train_accuracy,
                     "test_accuracy": evaluate(model, ctx.test).accuracy})
    return pd.DataFrame(rows)


def run_experiment(config: ExperimentConfig, recipes: Sequence[str],
                   dataset: Optional[Dataset] = None) -> ExperimentReport:
    """Run the named recipes, write their CSV and SVG outputs and the manifest."""
    recipes = check_recipes(recipes)
    out_dir = resolve_output_dir(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = ExperimentContext(config, dataset)
    report = ExperimentReport()

    for name in recipes:
        logger.info("Running recipe %s", name)
        try:
            output = RECIPES[name](ctx)
        except CELL_ERRORS as exc:
            logger.error("Recipe %s failed: %s", name, exc)
            report.failures.append(f"{name}: {type(exc).__name__}: {exc}")
            continue
        report.tables[name] = output.table.frame
        report.failures.extend(f"{name}: {failure}" for failure in output.table.failures)
        csv_path = out_dir / f"metrics_{name}.csv"
        output.table.frame.to_csv(csv_path, index=False, float_format=METRICS_FLOAT_FORMAT, lineterminator="\n")
        report.files += [csv_path, write_svg(output.svg, out_dir / f"plot_{name}.svg")]

    if ctx.trained:
        victims = out_dir / "victims.csv"
        clean_accuracies(ctx).to_csv(victims, index=False, float_format=METRICS_FLOAT_FORMAT, lineterminator="\n")
        report.files.append(victims)

    manifest = write_manifest(out_dir / "manifest.txt", config, ctx, recipes, report)
    report.files.append(manifest)
    return report
