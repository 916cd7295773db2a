import numpy as np
import pytest

from shs_bench.datagen import (
    COHORT_PER_CLASS,
    DEFAULT_ABNORMAL_TABLE,
    GeneratorSpec,
    RuleKind,
    SplitSpec,
    export_csv,
    generate,
    ingest_csv,
    plausibility_bounds,
    split,
)
from shs_bench.errors import ConfigurationError, ParseError
from shs_bench.schema import PatientState, correlation_matrix


def test_generate_counts():
    ds = generate(GeneratorSpec.default(per_class=100, seed=7))
    assert len(ds) == 1100
    assert list(ds.class_counts()) == [100] * 11


def test_default_cohort_size():
    assert GeneratorSpec.default().total == COHORT_PER_CLASS * 11 == 17006


def test_generate_is_deterministic():
    a = generate(GeneratorSpec.default(per_class=20, seed=3))
    b = generate(GeneratorSpec.default(per_class=20, seed=3))
    c = generate(GeneratorSpec.default(per_class=20, seed=4))
    assert a.checksum() == b.checksum()
    assert a.checksum() != c.checksum()
    assert str(a.provenance) == "Synthetic(seed=3)"


def test_noise_free_samples_follow_rules(schema):
    spec = GeneratorSpec.default(per_class=30, noise_sigma=0.0, seed=1)
    ds = generate(spec)
    for x, state in ds.samples():
        for feature in schema.features:
            rule = spec.rules[(state, feature.id)]
            assert rule.lo <= x[feature.id] <= rule.hi


def test_rules_match_correlation_matrix(schema):
    spec = GeneratorSpec.default()
    matrix = correlation_matrix()
    for state in PatientState:
        marked = matrix.abnormal_features(state)
        for feature in schema.features:
            kind = spec.rules[(state, feature.id)].kind
            assert (kind is RuleKind.ABNORMAL) == (feature.id in marked)


def test_samples_stay_within_plausibility_window(cohort, schema):
    lower, upper = plausibility_bounds(schema)
    assert np.all(cohort.X >= lower)
    assert np.all(cohort.X <= upper)


def test_rule_outside_matrix_is_rejected():
    table = {state: dict(rows) for state, rows in DEFAULT_ABNORMAL_TABLE.items()}
    # the matrix does not mark blood alcohol for sleeping
    table[PatientState.SLEEPING]["blood_alcohol"] = (0.1, 0.2)
    spec = GeneratorSpec.default(per_class=5, abnormal_table=table)
    with pytest.raises(ConfigurationError, match="Sleeping/blood_alcohol"):
        generate(spec)


def test_unknown_feature_in_table():
    with pytest.raises(ConfigurationError, match="unknown features"):
        GeneratorSpec.default(abnormal_table={PatientState.STRESS: {"pulse_wave": (1.0, 2.0)}})


@pytest.mark.parametrize("kwargs", [{"per_class": 0}, {"noise_sigma": -0.1}])
def test_invalid_generator_spec(kwargs):
    with pytest.raises(ConfigurationError):
        GeneratorSpec.default(**kwargs)


def test_split_partitions_and_stratifies():
    ds = generate(GeneratorSpec.default(per_class=100, seed=7))
    train, test = split(ds, SplitSpec(0.7, seed=1))
    assert len(train) == 770 and len(test) == 330
    assert list(train.class_counts()) == [70] * 11
    rows = {tuple(r) for r in train.X} | {tuple(r) for r in test.X}
    assert len(rows) == len(ds)


def test_split_is_deterministic(cohort):
    a_train, _ = split(cohort, SplitSpec(seed=5))
    b_train, _ = split(cohort, SplitSpec(seed=5))
    c_train, _ = split(cohort, SplitSpec(seed=6))
    assert a_train == b_train
    assert a_train != c_train


def test_unstratified_split_sizes(cohort):
    train, test = split(cohort, SplitSpec(0.5, seed=0, stratified=False))
    assert len(train) + len(test) == len(cohort)
    assert len(train) == round(0.5 * len(cohort))


@pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
def test_split_spec_rejects_fraction(fraction):
    with pytest.raises(ConfigurationError):
        SplitSpec(fraction)


def test_csv_export_and_ingest(tmp_path, cohort):
    path = export_csv(cohort, tmp_path / "cohort.csv")
    back = ingest_csv(path)
    assert np.allclose(back.X, cohort.X, rtol=1e-8)
    assert np.array_equal(back.y, cohort.y)
    assert back.provenance.kind == "ingested"


def test_csv_round_trip_holds_nine_digits(tmp_path, cohort):
    first = export_csv(cohort, tmp_path / "first.csv")
    back = ingest_csv(first)
    nonzero = cohort.X != 0
    rel = np.abs(back.X[nonzero] - cohort.X[nonzero]) / np.abs(cohort.X[nonzero])
    assert rel.max() <= 1e-8
    assert np.all(back.X[~nonzero] == 0)
    second = export_csv(back, tmp_path / "second.csv")
    assert second.read_bytes() == first.read_bytes()


def test_csv_export_is_byte_stable(tmp_path, cohort):
    a = export_csv(cohort, tmp_path / "a.csv").read_bytes()
    b = export_csv(cohort, tmp_path / "b.csv").read_bytes()
    assert a == b


def _write(tmp_path, schema, rows, header=None):
    header = header or schema.feature_names + ["label"]
    lines = [",".join(header)] + [",".join(r) for r in rows]
    path = tmp_path / "data.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_ingest_reports_bad_value_location(tmp_path, schema):
    good = ["1"] * 15 + ["Stress"]
    bad = ["1"] * 15 + ["Stress"]
    bad[4] = "abc"
    path = _write(tmp_path, schema, [good, bad])
    with pytest.raises(ParseError) as info:
        ingest_csv(path)
    assert info.value.line == 3
    assert info.value.column == "oxygen_saturation"


def test_ingest_reports_unknown_label(tmp_path, schema):
    path = _write(tmp_path, schema, [["1"] * 15 + ["Drunk"]])
    with pytest.raises(ParseError) as info:
        ingest_csv(path)
    assert info.value.column == "label"
    assert info.value.line == 2


def test_ingest_rejects_header(tmp_path, schema):
    header = schema.feature_names[:-1] + ["label"]
    path = _write(tmp_path, schema, [["1"] * 14 + ["Stress"]], header=header)
    with pytest.raises(ParseError, match="missing columns"):
        ingest_csv(path)


def test_ingest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_csv(tmp_path / "nope.csv")


def test_ingest_accepts_spaced_labels(tmp_path, schema):
    path = _write(tmp_path, schema, [["1"] * 15 + ["heart attack"]])
    assert int(ingest_csv(path).y[0]) == int(PatientState.HEART_ATTACK)
