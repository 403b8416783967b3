"""recprep: recommendation-model ETL preprocessing with deployment planning.

The package covers the full path from synthetic raw feature tables to
training-ready mini-batches:

- ``schema``: dataset shapes, RM1-RM5 presets, transform plans
- ``datagen``: seeded synthetic raw table generation
- ``columnar``: the PSF1 single-file partition format
- ``transforms``: bucketize / hash / log kernels and batch assembly
- ``pipeline``: threaded extract-transform-load runs with deployment
  emulation (colocated, disagg_cpu, isp) and worker provisioning
- ``sysmodel``: capacity, cost, and energy planning for deployments
"""

from .errors import ConfigError, FormatError, PipelineError, UnknownFeatureError
from .schema import (
    FeatureSchema,
    RmPreset,
    TransformPlan,
    derive_transform_plan,
    preset,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FormatError",
    "PipelineError",
    "UnknownFeatureError",
    "FeatureSchema",
    "RmPreset",
    "TransformPlan",
    "derive_transform_plan",
    "preset",
    "validate_config",
    "__version__",
]
