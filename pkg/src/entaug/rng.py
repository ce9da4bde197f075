"""Seeded random-stream construction.

Every stochastic decision in the pipeline draws from a generator keyed by
(global seed, purpose, ...context).  Purpose constants keep the streams
domain-separated: the baseline crop/flip of a sample and its augmentation
draw must not replay each other's values.
"""

import numpy as np

STREAM_AUG = 0        # per-sample augmentation: op choice, signs, uniform m
STREAM_BASELINE = 1   # per-sample crop offsets and flip coin
STREAM_SHUFFLE = 2    # per-epoch sample order
STREAM_INIT = 3       # weight initialization
STREAM_SUBSET = 4     # stratified subset selection
STREAM_SYNTH = 5      # synthetic dataset generation
STREAM_BENCH = 6      # throughput-bench cache population


def stream(*keys: int) -> np.random.Generator:
    """Generator keyed by a tuple of non-negative integers."""
    return np.random.default_rng(list(keys))


def sample_stream(seed: int, epoch: int, sample_index: int) -> np.random.Generator:
    """Augmentation stream for one sample at one epoch.

    Equal (seed, epoch, sample_index) triples yield identical draw
    sequences; differing triples yield independent-looking streams.
    """
    return stream(seed, STREAM_AUG, epoch, sample_index)


def baseline_stream(seed: int, epoch: int, sample_index: int) -> np.random.Generator:
    """Crop/flip stream for one sample at one epoch."""
    return stream(seed, STREAM_BASELINE, epoch, sample_index)
