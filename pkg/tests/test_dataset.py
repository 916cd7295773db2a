import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shs_bench.dataset import Dataset, Provenance, Scaler, fit_scaler
from shs_bench.errors import DegenerateFeatureError, InvalidInputError


def _dataset(schema, n=5, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(schema, rng.uniform(0, 100, size=(n, 15)), rng.integers(0, 11, size=n), Provenance.synthetic(seed))


def test_dataset_rejects_empty(schema):
    with pytest.raises(InvalidInputError):
        Dataset(schema, np.empty((0, 15)), np.empty(0), Provenance.synthetic(0))


def test_dataset_rejects_bad_labels(schema):
    with pytest.raises(InvalidInputError):
        Dataset(schema, np.zeros((2, 15)), np.array([0, 11]), Provenance.synthetic(0))


def test_dataset_rejects_wrong_width(schema):
    with pytest.raises(InvalidInputError):
        Dataset(schema, np.zeros((2, 14)), np.array([0, 1]), Provenance.synthetic(0))


def test_dataset_rejects_non_finite(schema):
    X = np.zeros((2, 15))
    X[1, 4] = np.inf
    with pytest.raises(InvalidInputError, match="sample 1, feature 4"):
        Dataset(schema, X, np.array([0, 1]), Provenance.synthetic(0))


def test_dataset_is_read_only(schema):
    ds = _dataset(schema)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


def test_checksum_tracks_content(schema):
    a, b = _dataset(schema, seed=1), _dataset(schema, seed=1)
    assert a == b
    assert a.checksum() == b.checksum()
    changed = a.with_data(np.array(a.X) + 1.0, a.y)
    assert changed.checksum() != a.checksum()


def test_subset_and_counts(schema):
    ds = _dataset(schema, n=20)
    sub = ds.subset([0, 2, 4])
    assert len(sub) == 3
    assert np.array_equal(sub.X[1], ds.X[2])
    assert ds.class_counts().sum() == 20


def test_to_frame_uses_display_names(schema):
    ds = Dataset(schema, np.zeros((1, 15)), np.array([9]), Provenance.synthetic(0))
    frame = ds.to_frame()
    assert list(frame.columns) == schema.feature_names + ["label"]
    assert frame["label"].iloc[0] == "HeartAttack"


def test_provenance_str():
    assert str(Provenance.synthetic(42)) == "Synthetic(seed=42)"
    assert str(Provenance.ingested("a.csv")) == "Ingested(a.csv)"


@settings(max_examples=50)
@given(
    arrays(np.float64, 15, elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, 15, elements=st.floats(0.1, 1e3)),
    arrays(np.float64, (4, 15), elements=st.floats(-1e4, 1e4)),
)
def test_scaler_round_trip(lo, span, X):
    scaler = Scaler(lo, lo + span)
    assert np.allclose(scaler.inverse(scaler.transform(X)), X, rtol=1e-9, atol=1e-6)


def test_scaler_maps_range_to_unit_box():
    scaler = Scaler(np.zeros(3), np.array([2.0, 4.0, 8.0]))
    assert np.allclose(scaler.transform([1.0, 4.0, 0.0]), [0.5, 1.0, 0.0])


def test_fit_scaler_rejects_constant_feature(schema):
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, size=(10, 15))
    X[:, 6] = 0.3
    ds = Dataset(schema, X, np.zeros(10, dtype=int), Provenance.synthetic(0))
    with pytest.raises(DegenerateFeatureError) as info:
        fit_scaler(ds)
    assert info.value.indices == (6,)


def test_fit_scaler_uses_train_min_max(train_ds):
    scaler = fit_scaler(train_ds)
    Z = scaler.transform(train_ds.X)
    assert np.allclose(Z.min(axis=0), 0.0)
    assert np.allclose(Z.max(axis=0), 1.0)
