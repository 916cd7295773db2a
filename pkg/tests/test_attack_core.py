import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shs_bench.attack_core import (
    AttackConstraints,
    AttackGoal,
    BudgetedOracle,
    BudgetExhausted,
    finalize,
    prepare_input,
    project,
    skipped_result,
)
from shs_bench.errors import ConfigurationError
from shs_bench.models import Capability, ModelAccess
from shs_bench.schema import PatientState

unit = st.floats(0.0, 1.0)


def test_goal_semantics():
    assert AttackGoal.untargeted().reached(3, 4)
    assert not AttackGoal.untargeted().reached(4, 4)
    goal = AttackGoal.targeted(PatientState.STROKE)
    assert goal.reached(10, 4) and not goal.reached(3, 4)
    assert str(goal) == "targeted(Stroke)"
    assert str(AttackGoal.untargeted()) == "untargeted"


@pytest.mark.parametrize("kwargs", [{"threshold": -0.1}, {"threshold": 1.5}, {"threshold": np.nan},
                                    {"query_budget": 0}])
def test_constraints_validation(kwargs):
    with pytest.raises(ConfigurationError):
        AttackConstraints(**kwargs)


def test_device_constraints(schema):
    only_glucose = AttackConstraints.from_devices(schema, [1], 0.2)
    assert only_glucose.feature_mask == frozenset({3})
    assert only_glucose.threshold == 0.2
    without = AttackConstraints.excluding_devices(schema, [0, 1])
    assert without.feature_mask == frozenset(range(15)) - {0, 1, 2, 3}
    assert without.with_threshold(0.3).feature_mask == without.feature_mask
    assert AttackConstraints().mask_array(15).all()


@settings(max_examples=200)
@given(
    arrays(np.float64, 15, elements=st.floats(-2.0, 3.0)),
    arrays(np.float64, 15, elements=unit),
    arrays(np.bool_, 15),
    st.one_of(st.none(), unit),
)
def test_projection_is_feasible(z, origin, mask, threshold):
    constraints = AttackConstraints(threshold=threshold)
    out = project(z, origin, constraints, mask)
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    assert np.array_equal(out[~mask], origin[~mask])
    if threshold is not None:
        assert np.all(np.abs(out - origin) <= threshold)


def test_projection_keeps_feasible_points():
    origin = np.full(15, 0.5)
    z = origin + 0.05
    assert np.array_equal(project(z, origin, AttackConstraints(threshold=0.1)), z)


def test_budgeted_oracle_refuses_past_budget(victims):
    access = ModelAccess(victims["rf"], Capability.LABEL)
    oracle = BudgetedOracle(access, 5)
    oracle.labels(np.zeros((4, 15)))
    assert oracle.remaining == 1
    with pytest.raises(BudgetExhausted):
        oracle.labels(np.zeros((2, 15)))
    assert oracle.used == 4


def test_prepare_input_clips_into_box(victims, schema):
    access = ModelAccess(victims["lr"], Capability.GRADIENT)
    lo, hi = access.scaler.lo, access.scaler.hi
    z = prepare_input(access, hi + (hi - lo))
    assert np.allclose(z, 1.0)


def test_finalize_measures_perturbation(victims, test_ds):
    access = ModelAccess(victims["lr"], Capability.GRADIENT)
    z0 = prepare_input(access, test_ds.X[0])
    z = z0.copy()
    z[3] = min(z0[3] + 0.2, 1.0) if z0[3] < 0.8 else z0[3] - 0.2
    label = int(victims["lr"].labels_normalized(z0[None, :])[0])
    result = finalize(access, z0, z, label, AttackGoal.untargeted(), 7, "manual", true_label=int(test_ds.y[0]))
    assert result.linf_norm == pytest.approx(0.2)
    assert result.l2_norm == pytest.approx(0.2)
    assert result.devices_touched == frozenset({1})
    assert list(result.changed_features) == [3]
    assert result.queries_used == 7
    assert result.true_label == PatientState(int(test_ds.y[0]))
    original, adversarial = result.physical(access.scaler)
    assert np.allclose(original, access.scaler.inverse(z0))


def test_skipped_and_error_results():
    z = np.full(15, 0.5)
    skipped = skipped_result(z, 2, AttackGoal.targeted(2), "zoo")
    assert skipped.skipped and skipped.error is None and not skipped.success
    failed = skipped_result(z, 2, AttackGoal.untargeted(), "zoo", error="boom")
    assert not failed.skipped and failed.error == "boom"
    assert np.array_equal(failed.adversarial, z)
