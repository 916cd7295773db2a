"""
SHS Feature Schema and Device/State Taxonomy

Eight monitoring devices report fifteen scalar vitals:

- QuadioArm: heart rate, systolic and diastolic pressure
- MiniMed 670G insulin pump: blood glucose
- iHealth Air pulse oximeter: oxygen saturation
- QuardioCore: breathing rate, sweating rate
- SCRAM alcohol monitor: blood alcohol
- AimStrip Hb meter: hemoglobin
- Emotiv Insight headset: EEG delta/theta/alpha/beta band power
- Fitbit Versa watch: sleep stage score, motion intensity

The classifier distinguishes eleven patient states (five diseases, six
activities). Which signal groups deviate from normal in each state is fixed
by the device-activity correlation matrix below.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidInputError, ParseError

SCHEMA_DOCUMENT_VERSION = "shs-schema/1"

NUM_FEATURES = 15
NUM_DEVICES = 8
NUM_STATES = 11


class PatientState(IntEnum):
    """Class labels; the integer value is the dense class index."""

    HIGH_BLOOD_PRESSURE = 0
    HIGH_CHOLESTEROL = 1
    EXCESSIVE_SWEATING = 2
    ABNORMAL_OXYGEN_LEVEL = 3
    ABNORMAL_BLOOD_SUGAR = 4
    SLEEPING = 5
    WALKING = 6
    STRESS = 7
    EXERCISE = 8
    HEART_ATTACK = 9
    STROKE = 10

    @property
    def display_name(self) -> str:
        return "".join(part.capitalize() for part in self.name.split("_"))

    @classmethod
    def parse(cls, text: str) -> "PatientState":
        """Parse a label case-insensitively ("heart attack", "HeartAttack", "HEART_ATTACK")."""
        key = _normalize_label(text)
        for state in cls:
            if key == _normalize_label(state.display_name):
                return state
        raise ParseError(f"Unknown patient state label '{text}'")


def _normalize_label(text: str) -> str:
    return "".join(ch for ch in str(text).strip().lower() if ch.isalnum())


class SignalGroup(IntEnum):
    """Columns of the device-activity correlation matrix."""

    ECG = 0
    SW = 1
    BP = 2
    GL = 3
    BR = 4
    OX = 5
    SM = 6
    HG = 7
    AL = 8
    NA = 9
    HM = 10


@dataclass(frozen=True)
class FeatureDef:
    """One scalar vital with its normal physical range."""

    id: int
    name: str
    unit: str
    normal_lo: float
    normal_hi: float
    device: int

    def __post_init__(self):
        if not self.normal_lo < self.normal_hi:
            raise ConfigurationError(
                f"Feature '{self.name}': normal_lo ({self.normal_lo}) must be < normal_hi ({self.normal_hi})"
            )

    @property
    def normal_range(self) -> Tuple[float, float]:
        return (self.normal_lo, self.normal_hi)

    @property
    def span(self) -> float:
        return self.normal_hi - self.normal_lo


@dataclass(frozen=True)
class DeviceDef:
    """A monitoring device and the features it owns."""

    id: int
    name: str
    feature_ids: FrozenSet[int]

    def __post_init__(self):
        if not self.feature_ids:
            raise ConfigurationError(f"Device '{self.name}' owns no features")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered features and devices; features partition across devices."""

    features: Tuple[FeatureDef, ...]
    devices: Tuple[DeviceDef, ...]
    _device_of: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.features) != NUM_FEATURES:
            raise ConfigurationError(f"Schema needs {NUM_FEATURES} features, got {len(self.features)}")
        if len(self.devices) != NUM_DEVICES:
            raise ConfigurationError(f"Schema needs {NUM_DEVICES} devices, got {len(self.devices)}")

        for index, feature in enumerate(self.features):
            if feature.id != index:
                raise ConfigurationError(f"Feature '{feature.name}' has id {feature.id}, expected {index}")

        owner = [-1] * NUM_FEATURES
        for index, device in enumerate(self.devices):
            if device.id != index:
                raise ConfigurationError(f"Device '{device.name}' has id {device.id}, expected {index}")
            for fid in device.feature_ids:
                if not 0 <= fid < NUM_FEATURES:
                    raise ConfigurationError(f"Device '{device.name}' owns unknown feature {fid}")
                if owner[fid] != -1:
                    raise ConfigurationError(f"Feature {fid} owned by more than one device")
                owner[fid] = device.id

        missing = [i for i, d in enumerate(owner) if d == -1]
        if missing:
            raise ConfigurationError(f"Features {missing} are not owned by any device")
        for feature in self.features:
            if owner[feature.id] != feature.device:
                raise ConfigurationError(
                    f"Feature '{feature.name}' names device {feature.device} "
                    f"but is owned by device {owner[feature.id]}"
                )
        object.__setattr__(self, "_device_of", tuple(owner))

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    def device_of(self, feature_id: int) -> int:
        return self._device_of[feature_id]

    def device_by_name(self, name: str) -> DeviceDef:
        """Find a device by name or by a short alias ('glucose', 'oxygen', ...)."""
        key = _normalize_label(name)
        for device in self.devices:
            if key == _normalize_label(device.name):
                return device
        if key in DEVICE_ALIASES:
            return self.devices[DEVICE_ALIASES[key]]
        raise ConfigurationError(f"Unknown device '{name}'")

    def features_of(self, device_ids: Iterable[int]) -> FrozenSet[int]:
        out = set()
        for device_id in device_ids:
            out |= self.devices[device_id].feature_ids
        return frozenset(out)

    def devices_touching(self, feature_ids: Iterable[int]) -> FrozenSet[int]:
        return frozenset(self._device_of[i] for i in feature_ids)

    def normal_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.array([f.normal_lo for f in self.features], dtype=np.float64)
        hi = np.array([f.normal_hi for f in self.features], dtype=np.float64)
        return lo, hi


# (name, unit, normal_lo, normal_hi, device)
_FEATURE_TABLE = [
    ("heart_rate", "bpm", 60.0, 100.0, 0),
    ("systolic_bp", "mmHg", 90.0, 120.0, 0),
    ("diastolic_bp", "mmHg", 60.0, 80.0, 0),
    ("blood_glucose", "mg/dl", 70.0, 130.0, 1),
    ("oxygen_saturation", "%", 94.0, 100.0, 2),
    ("breathing_rate", "breaths/min", 12.0, 20.0, 3),
    ("sweating_rate", "ul/min/cm2", 0.1, 0.5, 3),
    ("blood_alcohol", "g/dl", 0.0, 0.08, 4),
    ("hemoglobin", "g/dl", 12.3, 17.5, 5),
    ("eeg_delta_power", "uV2", 20.0, 60.0, 6),
    ("eeg_theta_power", "uV2", 10.0, 30.0, 6),
    ("eeg_alpha_power", "uV2", 10.0, 40.0, 6),
    ("eeg_beta_power", "uV2", 5.0, 20.0, 6),
    ("sleep_stage_score", "stage", 0.0, 2.0, 7),
    ("motion_intensity", "g", 0.0, 0.3, 7),
]

_DEVICE_NAMES = [
    "QuadioArm",
    "MiniMed 670G Insulin Pump",
    "iHealth Air Pulse Oximeter",
    "QuardioCore",
    "SCRAM Alcohol Monitor",
    "AimStrip Hb Meter",
    "Emotiv Insight",
    "Fitbit Versa",
]

# Short names used in configs and in the device-reduction order
DEVICE_ALIASES: Dict[str, int] = {
    "heartrate": 0,
    "bloodpressure": 0,
    "glucose": 1,
    "oxygen": 2,
    "bloodoxygen": 2,
    "respiration": 3,
    "alcohol": 4,
    "hemoglobin": 5,
    "eeg": 6,
    "smartwatch": 7,
}


def default_schema() -> FeatureSchema:
    """Canonical 15-feature / 8-device schema with normal ranges."""
    features = tuple(
        FeatureDef(id=i, name=name, unit=unit, normal_lo=lo, normal_hi=hi, device=dev)
        for i, (name, unit, lo, hi, dev) in enumerate(_FEATURE_TABLE)
    )
    devices = tuple(
        DeviceDef(
            id=d,
            name=name,
            feature_ids=frozenset(i for i, row in enumerate(_FEATURE_TABLE) if row[4] == d),
        )
        for d, name in enumerate(_DEVICE_NAMES)
    )
    return FeatureSchema(features=features, devices=devices)


# Signal group -> feature indices
GROUP_FEATURES: Dict[SignalGroup, Tuple[int, ...]] = {
    SignalGroup.ECG: (0,),
    SignalGroup.SW: (6,),
    SignalGroup.BP: (1, 2),
    SignalGroup.GL: (3,),
    SignalGroup.BR: (5,),
    SignalGroup.OX: (4,),
    SignalGroup.SM: (13,),
    SignalGroup.HG: (8,),
    SignalGroup.AL: (7,),
    SignalGroup.NA: (9, 10, 11, 12),
    SignalGroup.HM: (14,),
}

# Rows follow PatientState, columns follow SignalGroup:
#   ECG SW BP GL BR OX SM HG AL NA HM
_CORRELATION_ROWS = (
    (0, 1, 1, 1, 0, 1, 1, 1, 1, 1, 0),  # HighBloodPressure
    (0, 1, 1, 1, 0, 1, 0, 1, 0, 1, 0),  # HighCholesterol
    (1, 1, 1, 1, 0, 1, 0, 1, 0, 1, 1),  # ExcessiveSweating
    (1, 0, 1, 1, 1, 1, 1, 0, 0, 1, 1),  # AbnormalOxygenLevel
    (1, 1, 1, 1, 0, 1, 0, 1, 0, 1, 0),  # AbnormalBloodSugar
    (1, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0),  # Sleeping
    (1, 1, 0, 1, 1, 1, 0, 1, 0, 1, 1),  # Walking
    (1, 1, 1, 0, 1, 0, 0, 0, 0, 1, 0),  # Stress
    (1, 1, 1, 1, 1, 1, 0, 0, 0, 1, 1),  # Exercise
    (1, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0),  # HeartAttack
    (1, 0, 1, 0, 0, 0, 0, 1, 0, 1, 1),  # Stroke
)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Immutable 11x11 state/signal-group matrix plus the group->feature map."""

    rows: Tuple[Tuple[bool, ...], ...]
    group_features: Mapping[SignalGroup, Tuple[int, ...]]

    def __post_init__(self):
        if len(self.rows) != NUM_STATES or any(len(r) != len(SignalGroup) for r in self.rows):
            raise ConfigurationError("Correlation matrix must be 11x11")

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.rows), len(self.rows[0]))

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=bool)

    def marked(self, state: PatientState, group: SignalGroup) -> bool:
        return self.rows[int(state)][int(group)]

    def groups_for(self, state: PatientState) -> List[SignalGroup]:
        return [g for g in SignalGroup if self.rows[int(state)][int(g)]]

    def abnormal_features(self, state: PatientState) -> FrozenSet[int]:
        """Feature indices whose signal group is marked for this state."""
        out = set()
        for group in self.groups_for(state):
            out.update(self.group_features[group])
        return frozenset(out)

    def to_bytes(self) -> bytes:
        return bytes(int(v) for row in self.rows for v in row)


def correlation_matrix() -> CorrelationMatrix:
    """Transcribed device-activity correlation matrix."""
    rows = tuple(tuple(bool(v) for v in row) for row in _CORRELATION_ROWS)
    return CorrelationMatrix(rows=rows, group_features=dict(GROUP_FEATURES))


def validate_vector(x, schema: FeatureSchema) -> np.ndarray:
    """Return x as a float64 vector after checking length and finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != len(schema):
        raise InvalidInputError(f"Expected a vector of {len(schema)} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr)).tolist()
        raise InvalidInputError(f"Non-finite values at feature indices {bad}")
    return arr


def export_schema_text(schema: FeatureSchema, matrix: CorrelationMatrix) -> str:
    """Render schema and correlation matrix as a versioned text document."""
    lines = [f"# {SCHEMA_DOCUMENT_VERSION}", "", "[features]"]
    for f in schema.features:
        lines.append(
            f"{f.id:2d}  {f.name:<20s} {f.unit:<12s} {f.normal_lo:g}..{f.normal_hi:g}  device={f.device}"
        )
    lines += ["", "[devices]"]
    for d in schema.devices:
        owned = ",".join(str(i) for i in sorted(d.feature_ids))
        lines.append(f"{d.id}  {d.name:<28s} features={owned}")
    lines += ["", "[signal_groups]"]
    for group in SignalGroup:
        owned = ",".join(str(i) for i in matrix.group_features[group])
        lines.append(f"{group.name:<4s} features={owned}")
    lines += ["", "[correlation]", "state                " + " ".join(f"{g.name:>3s}" for g in SignalGroup)]
    for state in PatientState:
        marks = " ".join(f"{'x' if v else '-':>3s}" for v in matrix.rows[int(state)])
        lines.append(f"{state.display_name:<21s}{marks}")
    return "\n".join(lines) + "\n"
