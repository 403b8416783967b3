"""Dataset schemas, transform plans, and the RM1-RM5 presets.

A ``FeatureSchema`` describes the shape of a raw feature table: how many
dense (continuous) and sparse (categorical list) features it has, the mean
sparse list length, how many dense features are turned into generated
sparse features by bucketization, the boundary count used for that, and
the hash modulus that caps embedding indices.

A ``TransformPlan`` pins every per-feature parameter needed to preprocess
a table deterministically: which dense features are bucketized and with
which boundary arrays, the per-feature hash seed and modulus, and which
dense features are log-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Dense values produced by the synthetic generator are uniform over
# [0, DENSE_VALUE_RANGE); plan boundaries are quantiles of that law.
DENSE_VALUE_RANGE = 1.0e6

PRESET_NAMES = ("RM1", "RM2", "RM3", "RM4", "RM5")


@dataclass(frozen=True)
class FeatureSchema:
    """Shape of one raw feature table and its transform parameters."""

    num_dense: int
    num_sparse: int
    avg_sparse_len: float
    num_generated_sparse: int
    bucket_size: int
    max_embedding_index: int

    @property
    def num_features(self) -> int:
        """Raw columns stored per partition (dense + sparse)."""
        return self.num_dense + self.num_sparse

    @property
    def num_output_sparse(self) -> int:
        """Sparse feature groups in a mini-batch (original + generated)."""
        return self.num_sparse + self.num_generated_sparse

    def to_dict(self) -> dict:
        return {
            "num_dense": self.num_dense,
            "num_sparse": self.num_sparse,
            "avg_sparse_len": self.avg_sparse_len,
            "num_generated_sparse": self.num_generated_sparse,
            "bucket_size": self.bucket_size,
            "max_embedding_index": self.max_embedding_index,
        }


@dataclass(frozen=True)
class RmPreset:
    name: str
    schema: FeatureSchema


# Dataset-shape presets for one public configuration (RM1) and four
# production-scale synthetic configurations (RM2-RM5).
_PRESET_ROWS: dict[str, tuple[int, int, float, int, int, int]] = {
    # name: (dense, sparse, avg_len, generated, bucket_size, max_embedding_index)
    "RM1": (13, 26, 1.0, 13, 1024, 500_000),
    "RM2": (504, 42, 20.0, 21, 1024, 500_000),
    "RM3": (504, 42, 20.0, 42, 1024, 500_000),
    "RM4": (504, 42, 20.0, 42, 2048, 500_000),
    "RM5": (504, 42, 20.0, 42, 4096, 500_000),
}


def preset(name: str) -> RmPreset:
    """Return one of the built-in RM1-RM5 dataset presets."""
    try:
        row = _PRESET_ROWS[name]
    except KeyError:
        raise ConfigError([f"unknown preset {name!r}; expected one of {', '.join(PRESET_NAMES)}"]) from None
    dense, sparse, avg_len, generated, buckets, max_idx = row
    return RmPreset(
        name=name,
        schema=FeatureSchema(
            num_dense=dense,
            num_sparse=sparse,
            avg_sparse_len=avg_len,
            num_generated_sparse=generated,
            bucket_size=buckets,
            max_embedding_index=max_idx,
        ),
    )


@dataclass(frozen=True)
class BucketizeSpec:
    """One generated sparse feature: a source dense column plus boundaries."""

    dense_index: int
    boundaries: np.ndarray  # float32, strictly ascending


@dataclass(frozen=True)
class HashSpec:
    """Hash parameters for one (original or generated) sparse feature."""

    sparse_index: int
    seed: int
    max_value: int


@dataclass(frozen=True)
class TransformPlan:
    """Deterministic per-feature transform parameters for one schema.

    ``hash_specs`` covers sparse feature indices ``0..num_sparse-1``
    (original features) followed by ``num_sparse..num_sparse+g-1``
    (generated features, in ``bucketize_specs`` order).
    """

    bucketize_specs: list[BucketizeSpec] = field(default_factory=list)
    hash_specs: list[HashSpec] = field(default_factory=list)
    log_specs: list[int] = field(default_factory=list)


def quantile_boundaries(count: int, upper: float = DENSE_VALUE_RANGE) -> np.ndarray:
    """Equally spaced quantile cut points of the uniform [0, upper) law.

    Returns ``count`` strictly ascending float32 boundaries; spacing is
    wide enough that float32 rounding cannot introduce ties.
    """
    if count == 0:
        return np.empty(0, dtype=np.float32)
    edges = np.arange(1, count + 1, dtype=np.float64) * (upper / (count + 1))
    return edges.astype(np.float32)


def derive_transform_plan(schema: FeatureSchema, seed: int) -> TransformPlan:
    """Build the canonical transform plan for a schema.

    Pure function of (schema, seed): the first ``num_generated_sparse``
    dense features are bucketized in index order; every sparse feature
    (original then generated) gets a hash spec with seed ``seed + index``
    and modulus ``max_embedding_index``; every dense feature gets a log
    spec.
    """
    boundaries = quantile_boundaries(schema.bucket_size)
    bucketize_specs = [
        BucketizeSpec(dense_index=i, boundaries=boundaries)
        for i in range(schema.num_generated_sparse)
    ]
    hash_specs = [
        HashSpec(sparse_index=i, seed=seed + i, max_value=schema.max_embedding_index)
        for i in range(schema.num_output_sparse)
    ]
    log_specs = list(range(schema.num_dense))
    return TransformPlan(bucketize_specs, hash_specs, log_specs)


_CONFIG_KEYS = (
    "num_dense",
    "num_sparse",
    "avg_sparse_len",
    "num_generated_sparse",
    "bucket_size",
    "max_embedding_index",
)


def validate_config(doc: dict) -> FeatureSchema:
    """Validate a parsed JSON config document into a ``FeatureSchema``.

    A ``preset`` key, when present, overrides all other keys. Otherwise
    all six schema keys are required. Raises ``ConfigError`` carrying the
    complete list of violations, each prefixed with its field path.
    """
    if not isinstance(doc, dict):
        raise ConfigError(["config: expected a JSON object"])

    if "preset" in doc:
        name = doc["preset"]
        if not isinstance(name, str) or name not in _PRESET_ROWS:
            raise ConfigError([f"preset: unknown preset {name!r}"])
        return preset(name).schema

    errors: list[str] = []
    values: dict[str, float] = {}
    for key in _CONFIG_KEYS:
        if key not in doc:
            errors.append(f"{key}: missing required key")
            continue
        raw = doc[key]
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            errors.append(f"{key}: expected a number, got {type(raw).__name__}")
            continue
        values[key] = raw

    for key in ("num_dense", "num_sparse", "num_generated_sparse", "bucket_size", "max_embedding_index"):
        if key in values and values[key] != int(values[key]):
            errors.append(f"{key}: expected an integer")
        elif key in values:
            values[key] = int(values[key])

    def have(*keys: str) -> bool:
        return all(k in values and not any(e.startswith(f"{k}:") for e in errors) for k in keys)

    if have("num_dense") and values["num_dense"] < 0:
        errors.append("num_dense: must be >= 0")
    if have("num_sparse") and values["num_sparse"] < 0:
        errors.append("num_sparse: must be >= 0")
    if have("num_generated_sparse") and values["num_generated_sparse"] < 0:
        errors.append("num_generated_sparse: must be >= 0")
    if have("num_dense", "num_generated_sparse") and values["num_generated_sparse"] > values["num_dense"]:
        errors.append("num_generated_sparse: generated exceeds dense")
    if have("avg_sparse_len") and values["avg_sparse_len"] < 1:
        errors.append("avg_sparse_len: must be >= 1")
    if have("bucket_size") and values["bucket_size"] < 0:
        errors.append("bucket_size: must be >= 0")
    if have("max_embedding_index") and values["max_embedding_index"] < 1:
        errors.append("max_embedding_index: must be >= 1")

    if errors:
        raise ConfigError(errors)

    return FeatureSchema(
        num_dense=values["num_dense"],
        num_sparse=values["num_sparse"],
        avg_sparse_len=float(values["avg_sparse_len"]),
        num_generated_sparse=values["num_generated_sparse"],
        bucket_size=values["bucket_size"],
        max_embedding_index=values["max_embedding_index"],
    )
