"""Per-sample magnitude determination and the adaptive batch procedure.

The entropy cache stores, for every training sample, the normalized
entropy of the model's most recent softmax output for it, along with the
derived magnitude 1 - entropy.  Reading magnitudes from the cache makes
the augmentation step cost O(k) per sample with zero extra forward
passes; the fresh-forward source recomputes them with an inference pass
and exists for comparison.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import numcore, rng as rng_mod, transforms
from .errors import ConfigError, InvalidInputError
from .image import Image
from .model import Network

SOURCE_CACHED = "cached"
SOURCE_FRESH = "fresh_forward"
ENTROPY_SOURCES = (SOURCE_CACHED, SOURCE_FRESH)


@dataclass
class SampleState:
    sample_index: int
    norm_entropy: float
    mag: float
    last_update_epoch: int


class EntropyCache:
    """Per-sample entropy/magnitude store, updated from training forwards.

    Before any update a sample is assumed maximally uncertain:
    entropy 1, magnitude 0, last_update_epoch -1.
    """

    def __init__(self, n_samples: int):
        if n_samples < 1:
            raise InvalidInputError(f"cache needs n_samples >= 1, got {n_samples}")
        self.norm_entropy = np.ones(n_samples, dtype=np.float64)
        self.mag = np.zeros(n_samples, dtype=np.float64)
        self.last_update_epoch = np.full(n_samples, -1, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.mag)

    def _check_index(self, i: int) -> None:
        if not 0 <= i < len(self):
            raise InvalidInputError(f"sample index {i} out of range for cache of {len(self)}")

    def state(self, i: int) -> SampleState:
        self._check_index(i)
        return SampleState(i, float(self.norm_entropy[i]), float(self.mag[i]), int(self.last_update_epoch[i]))

    def update(self, i: int, probs, epoch: int) -> None:
        self._check_index(i)
        h = numcore.normalized_entropy(probs)
        self.norm_entropy[i] = h
        self.mag[i] = min(1.0, max(0.0, 1.0 - h))
        self.last_update_epoch[i] = epoch

    def update_batch(self, indices: np.ndarray, probs: np.ndarray, epoch: int) -> None:
        """Vectorized update from a (batch, k) matrix of softmax rows."""
        indices = np.asarray(indices)
        if np.any(indices < 0) or np.any(indices >= len(self)):
            raise InvalidInputError("sample index out of range in batch update")
        p = np.asarray(probs, dtype=np.float64)
        logp = np.log(np.maximum(p, numcore.EPS_LOG))
        plogp = np.where(p >= numcore.EPS_LOG, p * logp, 0.0)
        h = -plogp.sum(axis=1) / np.log(p.shape[1])
        self.norm_entropy[indices] = h
        self.mag[indices] = np.clip(1.0 - h, 0.0, 1.0)
        self.last_update_epoch[indices] = epoch

    def snapshot_means(self) -> tuple[float, float]:
        """(mean normalized entropy, mean magnitude) over all samples."""
        return float(self.norm_entropy.mean()), float(self.mag.mean())

    def to_arrays(self) -> dict:
        return {
            "cache.norm_entropy": self.norm_entropy.copy(),
            "cache.mag": self.mag.copy(),
            "cache.last_update_epoch": self.last_update_epoch.copy(),
        }

    @classmethod
    def from_arrays(cls, arrays: dict) -> "EntropyCache":
        cache = cls(len(arrays["cache.mag"]))
        cache.norm_entropy[...] = arrays["cache.norm_entropy"]
        cache.mag[...] = arrays["cache.mag"]
        cache.last_update_epoch[...] = arrays["cache.last_update_epoch"]
        return cache


def _apply_one(img: Image, m: float, rng: np.random.Generator, fill: int) -> Image:
    kind = transforms.sample_transform(rng)
    return transforms.apply(transforms.spec_for(kind), img, m, rng, fill)


def augment_batch(
    batch: list,
    cache: EntropyCache,
    source: str = SOURCE_CACHED,
    *,
    model: Optional[Network] = None,
    normalizer: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    seed: int = 0,
    epoch: int = 0,
    fill: int = transforms.DEFAULT_FILL,
) -> list[Image]:
    """Entropy-adaptive augmentation of one batch.

    ``batch`` is a list of (Image, label, sample_index) tuples.  For each
    sample, the magnitude comes from the cache (``cached``) or from an
    inference pass of ``model`` on the normalized, un-augmented images
    (``fresh_forward``; no parameter or cache updates).  One operation is
    then drawn uniformly per sample and applied at that magnitude.  Any
    baseline crop/flip must be composed by the caller before this step.
    """
    if source not in ENTROPY_SOURCES:
        raise ConfigError(f"unknown entropy source {source!r}")
    if source == SOURCE_FRESH:
        if model is None or normalizer is None:
            raise ConfigError("fresh_forward entropy source requires a model and a normalizer")
        stack = np.stack([img.pixels for img, _, _ in batch])
        trace = model.forward(normalizer(stack), mode="eval")
        probs = numcore.softmax_rows(np.asarray(trace.logits, dtype=np.float64))
        logp = np.log(np.maximum(probs, numcore.EPS_LOG))
        plogp = np.where(probs >= numcore.EPS_LOG, probs * logp, 0.0)
        mags = np.clip(1.0 + plogp.sum(axis=1) / np.log(probs.shape[1]), 0.0, 1.0)
    else:
        indices = [idx for _, _, idx in batch]
        for i in indices:
            cache._check_index(i)
        mags = cache.mag[indices]
    out = []
    for (img, _, idx), m in zip(batch, mags):
        rng = rng_mod.sample_stream(seed, epoch, idx)
        out.append(_apply_one(img, float(m), rng, fill))
    return out


def augment_batch_random(
    batch: list,
    *,
    seed: int = 0,
    epoch: int = 0,
    fill: int = transforms.DEFAULT_FILL,
) -> list[Image]:
    """Non-adaptive control: same operation space, m drawn uniform on [0, 1].

    Draw order per sample: operation, magnitude, then any sign inside apply.
    """
    out = []
    for img, _, idx in batch:
        rng = rng_mod.sample_stream(seed, epoch, idx)
        kind = transforms.sample_transform(rng)
        m = float(rng.random())
        out.append(transforms.apply(transforms.spec_for(kind), img, m, rng, fill))
    return out
