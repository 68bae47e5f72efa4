"""Layer-wise lookup-table latency estimation.

The classic cheap estimator: profile each operator variant once, then price
a network as overhead plus the sum of its operators' latencies. Exact on
runtimes that execute the graph as written; systematically overestimates on
engines that fuse or elide work, which is the failure mode the regression
predictor exists to fix.
"""

from dataclasses import dataclass, field

import numpy as np

from .archspace import CellArchitecture, MacroConfig, NUM_VARIANTS, operator_multiset
from .counters import HardwareDescriptor, _profiles_by_variant


@dataclass(frozen=True)
class LatencyLUT:
    device_id: str
    per_variant_latency_s: np.ndarray = field(repr=False)
    overhead_s: float = 0.0

    def __post_init__(self):
        table = np.asarray(self.per_variant_latency_s, dtype=float)
        object.__setattr__(self, "per_variant_latency_s", table)
        if table.shape != (NUM_VARIANTS,):
            raise ValueError(f"per_variant_latency_s must have shape ({NUM_VARIANTS},)")
        if np.any(~np.isfinite(table)) or np.any(table < 0):
            raise ValueError("per-variant latencies must be finite and >= 0")
        if self.overhead_s < 0:
            raise ValueError(f"overhead_s must be >= 0, got {self.overhead_s}")

    def predict(self, arch: CellArchitecture, macro: MacroConfig) -> float:
        counts = operator_multiset(arch, macro)
        return self.overhead_s + float(np.dot(counts, self.per_variant_latency_s))


def lut_build(profiles, overhead_s: float = 0.0, device_id: str = "") -> LatencyLUT:
    """Table from one profile per operator variant, in canonical order."""
    ordered = _profiles_by_variant(profiles)
    table = np.array([p.latency_s for p in ordered])
    return LatencyLUT(device_id=device_id, per_variant_latency_s=table, overhead_s=overhead_s)


def lut_from_descriptor(descriptor: HardwareDescriptor, overhead_s: float = 0.0) -> LatencyLUT:
    """Table read off a hardware descriptor's per-variant latency entries."""
    return LatencyLUT(
        device_id=descriptor.device_id,
        per_variant_latency_s=descriptor.variant_latencies(),
        overhead_s=overhead_s,
    )


def lut_predict(lut: LatencyLUT, arch: CellArchitecture, macro: MacroConfig) -> float:
    return lut.predict(arch, macro)
