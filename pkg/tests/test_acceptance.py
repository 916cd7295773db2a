"""
Desk-scale reproduction checks on the default cohort.

These train every victim on the full generated cohort and take minutes;
run them with `pytest -m slow`.
"""

import numpy as np
import pytest

from shs_bench.attack_core import AttackConstraints, AttackGoal, prepare_input
from shs_bench.batch_attack import AttackKind, AttackParams, batch_attack, derived_rng, run_attack
from shs_bench.decision_attacks import HopSkipJumpParams
from shs_bench.device_analysis import is_mostly_monotone, shifted_targets, threshold_sweep
from shs_bench.experiment import RECIPES, ExperimentConfig, ExperimentContext
from shs_bench.gradient_attacks import CarliniWagnerParams
from shs_bench.metrics import attack_metrics, evaluate
from shs_bench.poisoning import poisoning_experiment
from shs_bench.zoo_attack import ZooParams

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def ctx():
    return ExperimentContext(ExperimentConfig.from_dict({}))


def test_clean_accuracy_band(ctx):
    accuracy = {name: evaluate(ctx.model(name), ctx.test).accuracy for name in ("dt", "rf", "lr", "nn")}
    for name, value in accuracy.items():
        assert 82.0 <= value <= 98.0, (name, value)
    assert accuracy["rf"] >= accuracy["dt"]
    assert accuracy["rf"] >= accuracy["lr"]


def test_label_flip_hurts_the_forest_least(ctx):
    table = poisoning_experiment(list(ctx.config.models.values()), ctx.dataset, [0.1, 0.2, 0.3],
                                 [0, 1, 2, 3, 4]).frame
    at_30 = table[table["rate"] == 0.3].set_index("algorithm")["accuracy_drop"]
    assert at_30["rf"] < min(at_30["dt"], at_30["nn"], at_30["lr"])
    dt = table[(table["algorithm"] == "dt") & (table["rate"] > 0)].sort_values("rate")["accuracy_drop"]
    assert list(dt) == sorted(dt)


def test_untargeted_attack_strength_ordering(ctx):
    data = ctx.attack_slice
    drops = {}
    for kind, algo in [(AttackKind.HOP_SKIP_JUMP, "dt"), (AttackKind.ZOO, "rf"), (AttackKind.FGM, "lr")]:
        access = ctx.access(kind, algo)
        per_seed = []
        for seed in range(3):
            results = batch_attack(access, data.X, AttackGoal.untargeted(), ctx.constraints(), kind, seed,
                                   data.y, ctx.config.attack_params)
            per_seed.append(attack_metrics(results).accuracy_drop)
        drops[kind] = float(np.median(per_seed))
    assert drops[AttackKind.HOP_SKIP_JUMP] > drops[AttackKind.ZOO] > drops[AttackKind.FGM]


def test_drop_grows_with_the_threshold(ctx):
    data = ctx.attack_slice.subset(np.arange(100))
    for pairing in ctx.pairing_accesses():
        per_seed = []
        for seed in range(5):
            frame = threshold_sweep([pairing], data, AttackGoal.untargeted(), [0.1, 0.2, 0.3],
                                    ctx.constraints(), ctx.config.attack_params, seed).frame
            per_seed.append(frame["drop"].to_numpy())
        assert is_mostly_monotone(np.median(np.vstack(per_seed), axis=0))


def test_some_attack_fails_every_target_at_the_smallest_threshold(ctx):
    data = ctx.attack_slice
    pairings = ctx.pairing_accesses()
    frame = threshold_sweep(pairings, data, shifted_targets(data.y), [0.1], ctx.constraints(),
                            ctx.config.attack_params, ctx.config.base_seed, ctx.pools(pairings[0][1])).frame
    assert len(frame) == len(pairings)
    assert (frame["success"] == 0.0).any()


def test_one_device_solutions(ctx):
    frame = RECIPES["table4"](ctx).table.frame
    assert int((frame["device_count"] == 1).sum()) >= 2


def test_randomized_constraint_compliance(ctx):
    rng = np.random.default_rng(2024)
    params = AttackParams(
        carlini_wagner=CarliniWagnerParams(max_iterations=30, binary_search_steps=2),
        hop_skip_jump=HopSkipJumpParams(max_iterations=3, initial_num_evals=20),
        zoo=ZooParams(max_steps=100),
    )
    victims = {kind: ctx.access(kind, algo) for kind, algo in [
        (AttackKind.HOP_SKIP_JUMP, "rf"), (AttackKind.FGM, "nn"), (AttackKind.CARLINI_WAGNER, "lr"),
        (AttackKind.ZOO, "rf"), (AttackKind.DECISION_TREE, "dt")]}
    kinds = list(victims)
    for trial in range(1000):
        kind = kinds[trial % len(kinds)]
        session = victims[kind].session()
        x = ctx.test.X[int(rng.integers(len(ctx.test)))]
        mask = rng.uniform(size=15) < 0.5
        threshold = None if rng.uniform() < 0.3 else float(rng.uniform(0.01, 0.5))
        budget = int(rng.integers(20, 400))
        constraints = AttackConstraints(threshold, frozenset(np.flatnonzero(mask).tolist()), budget)
        goal = AttackGoal.untargeted() if rng.uniform() < 0.5 else AttackGoal.targeted(int(rng.integers(11)))

        result = run_attack(kind, session, x, goal, constraints, params, derived_rng(7, trial))
        z0 = prepare_input(session, x)
        delta = result.adversarial - z0
        assert np.array_equal(result.original, z0)
        assert np.array_equal(result.adversarial[~mask], z0[~mask]), (kind, trial)
        assert np.all((result.adversarial >= 0.0) & (result.adversarial <= 1.0))
        limit = threshold if threshold is not None else (params.fgm_epsilon if kind is AttackKind.FGM else None)
        if limit is not None:
            assert np.max(np.abs(delta)) <= limit, (kind, trial)
        if kind in (AttackKind.HOP_SKIP_JUMP, AttackKind.ZOO):
            assert result.queries_used <= budget, (kind, trial)


def test_recipe_csv_is_deterministic(ctx):
    first = RECIPES["fig7"](ctx).table.frame.to_csv(index=False)
    second = RECIPES["fig7"](ctx).table.frame.to_csv(index=False)
    assert first == second
