"""Hardware-runtime descriptors built from per-operator counter profiles.

A device-runtime is characterized by profiling each of the 15 operator
variants: mean latency plus six CPU performance counters per inference run.
The descriptor normalizes each counter by the operator latency, turning
absolute event counts into event rates (events/second), which is what lets
descriptors from runtimes with wildly different latency scales live in one
feature space.
"""

from dataclasses import dataclass, field

import numpy as np

from .archspace import NUM_VARIANTS, OperatorVariant

COUNTER_NAMES = (
    "cpu_cycles",
    "instructions",
    "cache_references",
    "cache_misses",
    "l1_dcache_loads",
    "l1_dcache_load_misses",
)
NUM_COUNTERS = len(COUNTER_NAMES)

# Descriptor layout: per variant (ascending variant index), six counter
# entries followed by the operator latency.
VALUES_PER_VARIANT = NUM_COUNTERS + 1
DESCRIPTOR_LENGTH = NUM_VARIANTS * VALUES_PER_VARIANT  # 105

LATENCY_SLOTS = tuple(
    v * VALUES_PER_VARIANT + NUM_COUNTERS for v in range(NUM_VARIANTS)
)


@dataclass(frozen=True)
class CounterSet:
    """Mean per-run event counts for the six collected counters."""

    cpu_cycles: float
    instructions: float
    cache_references: float
    cache_misses: float
    l1_dcache_loads: float
    l1_dcache_load_misses: float

    def __post_init__(self):
        for name in COUNTER_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"counter {name} must be finite and >= 0, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in COUNTER_NAMES])

    @classmethod
    def from_array(cls, values) -> "CounterSet":
        values = np.asarray(values, dtype=float)
        if values.shape != (NUM_COUNTERS,):
            raise ValueError(f"expected {NUM_COUNTERS} counter values, got shape {values.shape}")
        return cls(*values.tolist())


@dataclass(frozen=True)
class OperatorProfile:
    """Characterization of one operator variant on one device-runtime."""

    variant: OperatorVariant
    latency_s: float
    counters: CounterSet
    n_runs: int = 1000

    def __post_init__(self):
        if not np.isfinite(self.latency_s) or self.latency_s <= 0:
            raise ValueError(f"latency_s must be finite and > 0, got {self.latency_s}")
        if self.n_runs < 1:
            raise ValueError(f"n_runs must be >= 1, got {self.n_runs}")


def normalize_counters(profile: OperatorProfile) -> np.ndarray:
    """Counter rates in events/second: each count divided by the latency."""
    if profile.latency_s <= 0:
        raise ValueError(f"latency_s must be > 0, got {profile.latency_s}")
    return profile.counters.as_array() / profile.latency_s


@dataclass(frozen=True)
class HardwareDescriptor:
    """Per-device-runtime feature vector: 15 variants x (6 counters + latency)."""

    device_id: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (DESCRIPTOR_LENGTH,):
            raise ValueError(
                f"descriptor must have length {DESCRIPTOR_LENGTH}, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("descriptor values must be finite")
        if np.any(values < 0):
            raise ValueError("descriptor counter entries must be >= 0")
        latencies = values[list(LATENCY_SLOTS)]
        if np.any(latencies <= 0):
            raise ValueError("descriptor latency entries must be > 0")

    def __eq__(self, other):
        if not isinstance(other, HardwareDescriptor):
            return NotImplemented
        return self.device_id == other.device_id and np.array_equal(self.values, other.values)

    def variant_latencies(self) -> np.ndarray:
        return self.values[list(LATENCY_SLOTS)]


def _profiles_by_variant(profiles) -> list:
    by_index = {}
    for profile in profiles:
        idx = profile.variant.index
        if idx in by_index:
            raise ValueError(f"duplicate profile for variant {profile.variant.name}")
        by_index[idx] = profile
    missing = [v for v in range(NUM_VARIANTS) if v not in by_index]
    if missing:
        raise ValueError(f"missing profiles for variant indices {missing}")
    return [by_index[v] for v in range(NUM_VARIANTS)]


def build_descriptor(device_id: str, profiles) -> HardwareDescriptor:
    """Descriptor with latency-normalized counter rates."""
    ordered = _profiles_by_variant(profiles)
    values = np.empty(DESCRIPTOR_LENGTH)
    for v, profile in enumerate(ordered):
        offset = v * VALUES_PER_VARIANT
        values[offset : offset + NUM_COUNTERS] = normalize_counters(profile)
        values[offset + NUM_COUNTERS] = profile.latency_s
    return HardwareDescriptor(device_id=device_id, values=values)


def build_raw_descriptor(device_id: str, profiles) -> HardwareDescriptor:
    """Same layout but with raw mean counts in the counter entries.

    Kept for ablation: this is the descriptor a predictor sees when counter
    normalization is switched off.
    """
    ordered = _profiles_by_variant(profiles)
    values = np.empty(DESCRIPTOR_LENGTH)
    for v, profile in enumerate(ordered):
        offset = v * VALUES_PER_VARIANT
        values[offset : offset + NUM_COUNTERS] = profile.counters.as_array()
        values[offset + NUM_COUNTERS] = profile.latency_s
    return HardwareDescriptor(device_id=device_id, values=values)
