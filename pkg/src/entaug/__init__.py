"""Entropy-driven adaptive data augmentation and entropy-regularized training."""

from .errors import (
    CheckpointError,
    ConfigError,
    EntaugError,
    IngestError,
    InvalidInputError,
    UndefinedValueError,
)
from .image import Image, write_ppm
from .numcore import (
    LossConfig,
    SIGN_ENTROPY_MIN,
    SIGN_NEG_ENTROPY,
    cross_entropy,
    ent_loss,
    magnitude,
    normalized_entropy,
    softmax,
    total_loss_and_grad,
)
from .policy import EntropyCache, augment_batch, augment_batch_random
from .trainer import RunConfig, bench_throughput, compare, train
from .transforms import TransformKind, TransformSpec, apply, sample_transform, spec_for

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "EntaugError",
    "EntropyCache",
    "Image",
    "IngestError",
    "InvalidInputError",
    "LossConfig",
    "RunConfig",
    "SIGN_ENTROPY_MIN",
    "SIGN_NEG_ENTROPY",
    "TransformKind",
    "TransformSpec",
    "UndefinedValueError",
    "apply",
    "augment_batch",
    "augment_batch_random",
    "bench_throughput",
    "compare",
    "cross_entropy",
    "ent_loss",
    "magnitude",
    "normalized_entropy",
    "sample_transform",
    "softmax",
    "spec_for",
    "total_loss_and_grad",
    "train",
    "write_ppm",
]
