"""Adaptation-set selection and clone augmentation.

The few architectures measured on an unseen device decide how well the
predictor specializes to it. Random selection can land all its picks in a
narrow latency band; the targeted uniform strategy instead ranks the
training pool's architectures by latency, splits the ranks into one bin per
requested sample, and draws one architecture per bin, guaranteeing coverage
of the whole latency distribution.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class SamplingStrategy(Enum):
    TARGETED_UNIFORM = "targeted_uniform"
    RANDOM = "random"


@dataclass(frozen=True)
class AdaptationSet:
    """Architectures to measure on a target device."""

    device_id: str
    arch_indices: tuple
    strategy: SamplingStrategy
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "arch_indices", tuple(int(i) for i in self.arch_indices))
        if len(set(self.arch_indices)) != len(self.arch_indices):
            raise ValueError("adaptation architectures must be distinct")


def rank_bins(train_latencies, n: int):
    """Pool the training devices' latency-ranked architectures into n bins.

    Each device's architectures are ranked ascending by measured latency
    (ties broken by architecture index); ranks are cut into n contiguous
    bins of equal size, the last bin absorbing any remainder. Bin b then
    holds, from every device, the architectures it ranked into b, so with M
    devices and X architectures each bin pools about M*X/n entries.
    """
    if not train_latencies:
        raise ValueError("train_latencies must cover at least one device")
    index_sets = {dev: frozenset(idx for idx, _ in rows) for dev, rows in train_latencies.items()}
    sizes = {len(s) for s in index_sets.values()}
    first = next(iter(index_sets.values()))
    if len(sizes) != 1 or any(s != first for s in index_sets.values()):
        raise ValueError("every device must list the same architecture index set")
    for dev, rows in train_latencies.items():
        if len(rows) != len(index_sets[dev]):
            raise ValueError(f"device {dev!r} lists duplicate architecture indices")
    x = len(first)
    if not 1 <= n <= x:
        raise ValueError(f"sample count must be in [1, {x}], got {n}")

    base = x // n
    bins = [[] for _ in range(n)]
    for dev in sorted(train_latencies):
        ranked = sorted(train_latencies[dev], key=lambda pair: (pair[1], pair[0]))
        for rank, (arch, _) in enumerate(ranked):
            b = min(rank // base, n - 1)
            bins[b].append(arch)
    return bins


def targeted_uniform_sample(train_latencies, n: int, seed: int, device_id: str = "") -> AdaptationSet:
    """Pick one architecture per pooled latency-rank bin.

    A pick that duplicates an earlier bin's choice is redrawn within the
    bin; a bin with no unpicked entries left falls back to a uniform draw
    over all architectures not selected yet.
    """
    bins = rank_bins(train_latencies, n)
    all_archs = sorted({idx for rows in train_latencies.values() for idx, _ in rows})
    rng = np.random.default_rng(seed)
    picked = []
    picked_set = set()
    for pool in bins:
        fresh = [a for a in pool if a not in picked_set]
        if fresh:
            choice = int(fresh[rng.integers(len(fresh))])
        else:
            remaining = [a for a in all_archs if a not in picked_set]
            choice = int(remaining[rng.integers(len(remaining))])
        picked.append(choice)
        picked_set.add(choice)
    return AdaptationSet(
        device_id=device_id,
        arch_indices=tuple(picked),
        strategy=SamplingStrategy.TARGETED_UNIFORM,
        seed=seed,
    )


def random_sample(arch_indices, n: int, seed: int, device_id: str = "") -> AdaptationSet:
    """Uniform selection without replacement; the no-prior baseline."""
    indices = list(arch_indices)
    if not 1 <= n <= len(indices):
        raise ValueError(f"sample count must be in [1, {len(indices)}], got {n}")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(indices), size=n, replace=False)
    return AdaptationSet(
        device_id=device_id,
        arch_indices=tuple(int(indices[i]) for i in picked),
        strategy=SamplingStrategy.RANDOM,
        seed=seed,
    )


def augment(samples, k: int) -> list:
    """Each row repeated k times (original plus k-1 clones), content unchanged."""
    if k < 1:
        raise ValueError(f"augmentation factor must be >= 1, got {k}")
    return [sample for sample in samples for _ in range(k)]
