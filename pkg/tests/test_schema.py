import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shs_bench.errors import ConfigurationError, InvalidInputError, ParseError
from shs_bench.schema import (
    NUM_DEVICES,
    NUM_FEATURES,
    NUM_STATES,
    SCHEMA_DOCUMENT_VERSION,
    FeatureSchema,
    PatientState,
    SignalGroup,
    correlation_matrix,
    default_schema,
    export_schema_text,
    validate_vector,
)


def test_schema_sizes(schema):
    assert len(schema) == NUM_FEATURES
    assert len(schema.devices) == NUM_DEVICES
    assert len(PatientState) == NUM_STATES


def test_devices_partition_features(schema):
    owned = [f for d in schema.devices for f in d.feature_ids]
    assert sorted(owned) == list(range(NUM_FEATURES))
    for feature in schema.features:
        assert feature.id in schema.devices[schema.device_of(feature.id)].feature_ids


def test_device_aliases(schema):
    assert schema.device_by_name("glucose").id == 1
    assert schema.device_by_name("oxygen").id == 2
    assert schema.device_by_name("heartrate").id == 0
    assert schema.device_by_name("Fitbit Versa").id == 7
    with pytest.raises(ConfigurationError):
        schema.device_by_name("pacemaker")


def test_features_of_and_devices_touching(schema):
    assert schema.features_of([0]) == frozenset({0, 1, 2})
    assert schema.devices_touching([3, 13]) == frozenset({1, 7})


def test_schema_rejects_missing_feature(schema):
    with pytest.raises(ConfigurationError):
        FeatureSchema(features=schema.features[:-1], devices=schema.devices)


def test_normal_ranges_are_ordered(schema):
    lo, hi = schema.normal_bounds()
    assert np.all(lo < hi)


@pytest.mark.parametrize("text", ["HeartAttack", "heart attack", "Heart-Attack", "HEART_ATTACK", " heartattack "])
def test_patient_state_parse_variants(text):
    assert PatientState.parse(text) is PatientState.HEART_ATTACK


@given(st.sampled_from(list(PatientState)))
def test_patient_state_parse_round_trips_names(state):
    assert PatientState.parse(state.display_name) is state
    assert PatientState.parse(state.name) is state


def test_patient_state_parse_unknown():
    with pytest.raises(ParseError, match="Drunk"):
        PatientState.parse("Drunk")


def test_display_name():
    assert PatientState.HIGH_CHOLESTEROL.display_name == "HighCholesterol"
    assert PatientState.ABNORMAL_OXYGEN_LEVEL.display_name == "AbnormalOxygenLevel"


def test_correlation_matrix_shape_and_rows():
    matrix = correlation_matrix()
    assert matrix.shape == (NUM_STATES, len(SignalGroup))
    assert matrix.as_array().shape == (11, 11)
    assert not matrix.marked(PatientState.SLEEPING, SignalGroup.NA)
    assert matrix.marked(PatientState.STRESS, SignalGroup.NA)
    assert matrix.abnormal_features(PatientState.SLEEPING) == frozenset({0, 1, 2, 3, 4, 5})


def test_correlation_matrix_is_stable():
    assert correlation_matrix().to_bytes() == correlation_matrix().to_bytes()
    assert len(correlation_matrix().to_bytes()) == 121


def test_validate_vector(schema):
    assert validate_vector(np.ones(15), schema).dtype == np.float64
    with pytest.raises(InvalidInputError):
        validate_vector(np.ones(14), schema)
    bad = np.ones(15)
    bad[3] = np.nan
    with pytest.raises(InvalidInputError, match="3"):
        validate_vector(bad, schema)


def test_export_schema_text():
    text = export_schema_text(default_schema(), correlation_matrix())
    assert text.startswith(f"# {SCHEMA_DOCUMENT_VERSION}\n")
    assert "[correlation]" in text
    assert "HeartAttack" in text
    assert text == export_schema_text(default_schema(), correlation_matrix())
