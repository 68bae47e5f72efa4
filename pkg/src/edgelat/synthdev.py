"""Synthetic device-runtime oracle and measurement dataset handling.

Real measurement collection (compiling engines, running perf on physical
boards) is out of scope; this module stands in for it with parametric
devices whose ground truth is analytically known:

* ADDITIVE runtimes execute the operator stack as-is, so end-to-end latency
  is overhead plus the sum of per-operator latencies. A lookup-table
  estimator is exact here by construction.
* OPTIMIZED runtimes emulate a graph-optimizing engine: skip-connections
  are elided and the summed compute cost shrinks by a fusion discount
  proportional to the cell's convolution fraction. Additive estimators
  systematically overestimate on these devices.

All randomness is keyed per (seed, entity, purpose), so regenerating a pool
with one more device leaves the existing devices' measurements untouched.
Datasets round-trip through a line-oriented text format (`edgelat-dataset
v1`) so externally measured data can enter the same pipeline.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .archspace import (
    ALL_VARIANTS,
    NUM_ARCHITECTURES,
    NUM_VARIANTS,
    CellArchitecture,
    MacroConfig,
    OperatorKind,
    OperatorVariant,
    architecture_from_index,
    fusable_fraction,
    operator_multiset,
)
from .counters import (
    COUNTER_NAMES,
    DESCRIPTOR_LENGTH,
    NUM_COUNTERS,
    CounterSet,
    HardwareDescriptor,
    OperatorProfile,
    build_descriptor,
    build_raw_descriptor,
)
from .errors import CalibrationError, DataFormatError, ReferentialError
from .seeding import derive_seed, keyed_rng, lognormal_factors


class RuntimeKind(Enum):
    ADDITIVE = "additive"
    OPTIMIZED = "optimized"


@dataclass(frozen=True)
class RuntimeModel:
    """Execution-engine behavior. Fusion parameters only apply to OPTIMIZED."""

    kind: RuntimeKind
    fusion_discount: float = 0.35
    skip_elision: bool = True

    def __post_init__(self):
        if not 0.0 <= self.fusion_discount < 1.0:
            raise ValueError(f"fusion_discount must be in [0, 1), got {self.fusion_discount}")


# Variant indices of skip-connections at each channel width; these are the
# entries an optimizing runtime elides.
_SKIP_SLOTS = tuple(
    v.index for v in ALL_VARIANTS if v.kind is OperatorKind.SKIP_CONNECT
)
_NONE_SLOTS = tuple(v.index for v in ALL_VARIANTS if v.kind is OperatorKind.NONE)

NONE_LATENCY_FLOOR_S = 1e-7

# Relative per-operator cost shape before calibration. Absolute scale is set
# by calibrating the pool mean to each device's target latency.
_KIND_COST_SCALE = {
    OperatorKind.NONE: 1.0,  # replaced by NONE_LATENCY_FLOOR_S after scaling
    OperatorKind.SKIP_CONNECT: 0.08,
    OperatorKind.CONV_1X1: 1.0,
    OperatorKind.CONV_3X3: 2.4,
    OperatorKind.AVGPOOL_3X3: 0.45,
}
_WIDTH_COST_SCALE = {16: 1.0, 32: 1.9, 64: 3.6}
# Per-variant deviation across devices: small, because same-runtime devices
# rank architectures almost identically; device identity is mostly a scale.
_BASE_JITTER_CV = 0.06

# Intrinsic per-run event counts for a unit-cost operator. An operator's
# event counts scale with its compute cost and are nearly device-independent
# (every device executes the same arithmetic); what differs across devices
# is how fast those events retire. Event rates (counts / latency) therefore
# encode per-variant device speed, while raw counts barely separate devices
# at all; the descriptor ablation hinges on exactly this asymmetry.
_UNIT_WORK = {
    "cpu_cycles": 3.0e7,
    "instructions": 2.0e7,
    "cache_references": 4.0e5,
    "cache_misses": 5.0e4,
    "l1_dcache_loads": 1.2e7,
    "l1_dcache_load_misses": 1.5e5,
}
_WORK_JITTER_CV = 0.15


@dataclass(frozen=True)
class SyntheticDevice:
    """Parametric ground-truth generator for one device-runtime."""

    device_id: str
    runtime: RuntimeModel
    base_latency_s: np.ndarray = field(repr=False)
    rate_profile: np.ndarray = field(repr=False)
    overhead_s: float
    noise_cv: float = 0.03
    seed: int = 0

    def __post_init__(self):
        base = np.asarray(self.base_latency_s, dtype=float)
        rates = np.asarray(self.rate_profile, dtype=float)
        object.__setattr__(self, "base_latency_s", base)
        object.__setattr__(self, "rate_profile", rates)
        if base.shape != (NUM_VARIANTS,):
            raise ValueError(f"base_latency_s must have shape ({NUM_VARIANTS},)")
        if np.any(~np.isfinite(base)) or np.any(base <= 0):
            raise ValueError("base_latency_s entries must be finite and > 0")
        if rates.shape != (NUM_VARIANTS, NUM_COUNTERS):
            raise ValueError(f"rate_profile must have shape ({NUM_VARIANTS}, {NUM_COUNTERS})")
        if np.any(~np.isfinite(rates)) or np.any(rates <= 0):
            raise ValueError("rate_profile entries must be finite and > 0")
        if self.overhead_s < 0:
            raise ValueError(f"overhead_s must be >= 0, got {self.overhead_s}")
        if not 0.0 <= self.noise_cv <= 0.5:
            raise ValueError(f"noise_cv must be in [0, 0.5], got {self.noise_cv}")


@dataclass(frozen=True)
class LatencySample:
    device_id: str
    arch_index: int
    latency_s: float

    def __post_init__(self):
        if not 0 <= self.arch_index < NUM_ARCHITECTURES:
            raise ValueError(f"arch_index out of range: {self.arch_index}")
        if not np.isfinite(self.latency_s) or self.latency_s <= 0:
            raise ValueError(f"latency_s must be finite and > 0, got {self.latency_s}")


def profile_operator(device: SyntheticDevice, variant: OperatorVariant, n_runs: int = 1000) -> OperatorProfile:
    """Characterize one operator variant: noisy mean latency plus counters
    consistent with the device's per-variant event rates."""
    if not isinstance(variant, OperatorVariant):
        raise ValueError(f"expected an OperatorVariant, got {type(variant).__name__}")
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    rng = keyed_rng(device.seed, variant.index, "profile")
    draws = lognormal_factors(rng, device.noise_cv, n_runs)
    latency = float(device.base_latency_s[variant.index] * np.mean(draws))
    counters = CounterSet.from_array(device.rate_profile[variant.index] * latency)
    return OperatorProfile(variant=variant, latency_s=latency, counters=counters, n_runs=n_runs)


def device_profiles(device: SyntheticDevice, n_runs: int = 1000) -> list:
    return [profile_operator(device, variant, n_runs) for variant in ALL_VARIANTS]


def _noiseless_e2e(device: SyntheticDevice, arch: CellArchitecture, macro: MacroConfig) -> float:
    counts = operator_multiset(arch, macro)
    runtime = device.runtime
    if runtime.kind is RuntimeKind.ADDITIVE:
        return device.overhead_s + float(np.dot(counts, device.base_latency_s))
    effective = counts.astype(float)
    if runtime.skip_elision:
        effective[list(_SKIP_SLOTS)] = 0.0
    compute = float(np.dot(effective, device.base_latency_s))
    discounted = compute * (1.0 - runtime.fusion_discount * fusable_fraction(arch))
    return device.overhead_s + discounted


def measure_e2e(device: SyntheticDevice, arch: CellArchitecture, macro: MacroConfig) -> LatencySample:
    """End-to-end latency of one network on this device, with measurement noise."""
    rng = keyed_rng(device.seed, arch.index, "e2e")
    factor = float(lognormal_factors(rng, device.noise_cv, ()))
    latency = _noiseless_e2e(device, arch, macro) * factor
    return LatencySample(device_id=device.device_id, arch_index=arch.index, latency_s=latency)


@dataclass(frozen=True)
class DeviceSpec:
    """One entry of a pool configuration: runtime behavior plus the mean
    end-to-end latency the calibration should hit over the dataset range."""

    device_id: str
    runtime: RuntimeModel
    target_mean_s: float
    overhead_s: float = None
    noise_cv: float = 0.03

    def __post_init__(self):
        if not self.device_id or any(ch.isspace() for ch in self.device_id):
            raise ValueError(f"device_id must be non-empty without whitespace: {self.device_id!r}")
        if self.target_mean_s <= 0:
            raise ValueError(f"target_mean_s must be > 0, got {self.target_mean_s}")

    def resolved_overhead(self) -> float:
        if self.overhead_s is None:
            return 0.03 * self.target_mean_s
        return self.overhead_s


@dataclass(frozen=True)
class PoolSpec:
    devices: tuple
    arch_range: tuple = (0, 2699)
    macro: MacroConfig = MacroConfig()

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        if not self.devices:
            raise ValueError("pool spec must name at least one device")
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError("pool spec device ids must be unique")
        _check_arch_range(self.arch_range)


def _check_arch_range(arch_range):
    lo, hi = arch_range
    if not (0 <= lo <= hi < NUM_ARCHITECTURES):
        raise ValueError(f"arch range must satisfy 0 <= lo <= hi <= {NUM_ARCHITECTURES - 1}, got {arch_range}")


def default_pool_spec() -> PoolSpec:
    """Seven devices at the scale split seen on real edge runtimes: four
    additive CPU-style runtimes around a second per inference, three
    graph-optimizing accelerator-style runtimes tens of milliseconds."""
    additive = RuntimeModel(kind=RuntimeKind.ADDITIVE)
    optimized = RuntimeModel(kind=RuntimeKind.OPTIMIZED, fusion_discount=0.35, skip_elision=True)
    return PoolSpec(
        devices=(
            DeviceSpec("additive-a", additive, target_mean_s=1.0),
            DeviceSpec("additive-b", additive, target_mean_s=0.9),
            DeviceSpec("additive-c", additive, target_mean_s=1.1),
            DeviceSpec("additive-d", additive, target_mean_s=0.6),
            DeviceSpec("optimized-a", optimized, target_mean_s=0.05),
            DeviceSpec("optimized-b", optimized, target_mean_s=0.03),
            DeviceSpec("optimized-c", optimized, target_mean_s=0.07),
        )
    )


@lru_cache(maxsize=8)
def _range_multisets(lo: int, hi: int, cells_per_stage: int):
    """Counts matrix and convolution fractions for an architecture range."""
    macro = MacroConfig(cells_per_stage=cells_per_stage)
    n = hi - lo + 1
    counts = np.empty((n, NUM_VARIANTS))
    fractions = np.empty(n)
    for row, idx in enumerate(range(lo, hi + 1)):
        arch = architecture_from_index(idx)
        counts[row] = operator_multiset(arch, macro)
        fractions[row] = fusable_fraction(arch)
    counts.setflags(write=False)
    fractions.setflags(write=False)
    return counts, fractions


def _mean_effective_counts(runtime: RuntimeModel, arch_range, macro: MacroConfig) -> np.ndarray:
    """Mean over the range of each variant's latency weight in the e2e sum."""
    lo, hi = arch_range
    counts, fractions = _range_multisets(lo, hi, macro.cells_per_stage)
    if runtime.kind is RuntimeKind.ADDITIVE:
        return counts.mean(axis=0)
    effective = counts.copy()
    if runtime.skip_elision:
        effective[:, list(_SKIP_SLOTS)] = 0.0
    effective *= (1.0 - runtime.fusion_discount * fractions)[:, None]
    return effective.mean(axis=0)


def _draw_base_latencies(pool_seed: int, spec: DeviceSpec, arch_range, macro: MacroConfig) -> np.ndarray:
    rng = keyed_rng(pool_seed, spec.device_id, "base")
    jitter = lognormal_factors(rng, _BASE_JITTER_CV, NUM_VARIANTS)
    raw = np.array(
        [_KIND_COST_SCALE[v.kind] * _WIDTH_COST_SCALE[v.channels] for v in ALL_VARIANTS]
    )
    raw *= jitter
    raw[list(_NONE_SLOTS)] = 0.0  # absent operator: no e2e contribution

    overhead = spec.resolved_overhead()
    if spec.target_mean_s <= overhead:
        raise CalibrationError(
            f"device {spec.device_id}: target mean {spec.target_mean_s} s is not above "
            f"its overhead {overhead} s"
        )
    weights = _mean_effective_counts(spec.runtime, arch_range, macro)
    denom = float(np.dot(weights, raw))
    scale = (spec.target_mean_s - overhead) / denom
    base = raw * scale
    base[list(_NONE_SLOTS)] = NONE_LATENCY_FLOOR_S
    return base


def _draw_rate_profile(pool_seed: int, spec: DeviceSpec, base_latency_s: np.ndarray) -> np.ndarray:
    rng = keyed_rng(pool_seed, spec.device_id, "rates")
    cost_shape = np.array(
        [_KIND_COST_SCALE[v.kind] * _WIDTH_COST_SCALE[v.channels] for v in ALL_VARIANTS]
    )
    work = cost_shape[:, None] * np.array([_UNIT_WORK[name] for name in COUNTER_NAMES])[None, :]
    work *= lognormal_factors(rng, _WORK_JITTER_CV, (NUM_VARIANTS, NUM_COUNTERS))
    return work / base_latency_s[:, None]


def make_device_pool(spec: PoolSpec, seed: int) -> list:
    """Instantiate a pool, calibrating each device's operator latencies so
    its mean end-to-end latency over the spec's range hits the target."""
    devices = []
    for dev_spec in spec.devices:
        base = _draw_base_latencies(seed, dev_spec, spec.arch_range, spec.macro)
        rates = _draw_rate_profile(seed, dev_spec, base)
        devices.append(
            SyntheticDevice(
                device_id=dev_spec.device_id,
                runtime=dev_spec.runtime,
                base_latency_s=base,
                rate_profile=rates,
                overhead_s=dev_spec.resolved_overhead(),
                noise_cv=dev_spec.noise_cv,
                seed=derive_seed(seed, dev_spec.device_id),
            )
        )
    return devices


# --- measurement datasets ---------------------------------------------------

IMPORTED_RUNTIME_TAG = "imported"
_VALID_RUNTIME_TAGS = (RuntimeKind.ADDITIVE.value, RuntimeKind.OPTIMIZED.value, IMPORTED_RUNTIME_TAG)


@dataclass(frozen=True)
class DeviceRecord:
    """Dataset-resident device metadata: identity, runtime tag, descriptors."""

    device_id: str
    runtime_tag: str
    descriptor: HardwareDescriptor
    raw_descriptor: HardwareDescriptor = None

    def __post_init__(self):
        if self.runtime_tag not in _VALID_RUNTIME_TAGS:
            raise ValueError(
                f"runtime_tag must be one of {_VALID_RUNTIME_TAGS}, got {self.runtime_tag!r}"
            )


@dataclass
class MeasurementDataset:
    devices: list
    samples: list
    macro: MacroConfig = MacroConfig()

    def __post_init__(self):
        self._by_device = {}
        for record in self.devices:
            if record.device_id in self._by_device:
                raise ReferentialError(f"duplicate device id {record.device_id!r}")
            self._by_device[record.device_id] = record
        self._latency = {}
        for sample in self.samples:
            if sample.device_id not in self._by_device:
                raise ReferentialError(
                    f"sample references unknown device {sample.device_id!r}"
                )
            key = (sample.device_id, sample.arch_index)
            if key in self._latency:
                raise ReferentialError(
                    f"duplicate sample for device {sample.device_id!r}, architecture {sample.arch_index}"
                )
            self._latency[key] = sample.latency_s

    def __eq__(self, other):
        if not isinstance(other, MeasurementDataset):
            return NotImplemented
        return (
            self.devices == other.devices
            and self.samples == other.samples
            and self.macro == other.macro
        )

    def device_ids(self) -> list:
        return list(self._by_device)

    def device(self, device_id: str) -> DeviceRecord:
        try:
            return self._by_device[device_id]
        except KeyError:
            raise ReferentialError(f"unknown device {device_id!r}") from None

    def has_sample(self, device_id: str, arch_index: int) -> bool:
        return (device_id, arch_index) in self._latency

    def latency(self, device_id: str, arch_index: int) -> float:
        try:
            return self._latency[(device_id, arch_index)]
        except KeyError:
            raise ReferentialError(
                f"no sample for device {device_id!r}, architecture {arch_index}"
            ) from None

    def arch_indices(self, device_id: str) -> list:
        self.device(device_id)
        return sorted(a for (d, a) in self._latency if d == device_id)


def generate_dataset(pool, arch_range=(0, 2699), macro: MacroConfig = MacroConfig(), n_runs: int = 1000) -> MeasurementDataset:
    """Measure every (device, architecture) pair in the range and build both
    descriptor flavors per device from fresh operator profiles."""
    _check_arch_range(arch_range)
    lo, hi = arch_range
    records = []
    samples = []
    for device in pool:
        profiles = device_profiles(device, n_runs=n_runs)
        records.append(
            DeviceRecord(
                device_id=device.device_id,
                runtime_tag=device.runtime.kind.value,
                descriptor=build_descriptor(device.device_id, profiles),
                raw_descriptor=build_raw_descriptor(device.device_id, profiles),
            )
        )
        for idx in range(lo, hi + 1):
            samples.append(measure_e2e(device, architecture_from_index(idx), macro))
    return MeasurementDataset(devices=records, samples=samples, macro=macro)


# --- dataset file format ------------------------------------------------------

DATASET_HEADER = "edgelat-dataset v1"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def export_dataset(dataset: MeasurementDataset, path) -> None:
    lines = [DATASET_HEADER]
    for record in dataset.devices:
        lines.append(
            f"device {record.device_id} runtime={record.runtime_tag} "
            f"macro.cells_per_stage={dataset.macro.cells_per_stage}"
        )
        lines.append("descriptor " + " ".join(_fmt(v) for v in record.descriptor.values))
        if record.raw_descriptor is not None:
            lines.append(
                "raw_descriptor " + " ".join(_fmt(v) for v in record.raw_descriptor.values)
            )
    for sample in dataset.samples:
        lines.append(f"sample {sample.device_id} {sample.arch_index} {_fmt(sample.latency_s)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_floats(tokens, lineno, expected):
    if len(tokens) != expected:
        raise DataFormatError(f"expected {expected} values, got {len(tokens)}", line=lineno)
    try:
        return np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise DataFormatError(f"bad numeric value ({exc})", line=lineno) from None


def import_dataset(path) -> MeasurementDataset:
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.readlines()

    header_seen = False
    cells_per_stage = None
    pending = None  # device metadata awaiting its descriptor lines
    devices = []
    samples = []
    seen_pairs = set()

    def flush_pending(lineno):
        nonlocal pending
        if pending is None:
            return
        dev_id, tag, desc, raw_desc = pending
        if desc is None:
            raise DataFormatError(f"device {dev_id!r} has no descriptor line", line=lineno)
        devices.append(
            DeviceRecord(
                device_id=dev_id,
                runtime_tag=tag,
                descriptor=HardwareDescriptor(dev_id, desc),
                raw_descriptor=None if raw_desc is None else HardwareDescriptor(dev_id, raw_desc),
            )
        )
        pending = None

    for lineno, line in enumerate(raw_lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not header_seen:
            if stripped != DATASET_HEADER:
                raise DataFormatError(
                    f"expected header {DATASET_HEADER!r}, got {stripped!r}", line=lineno
                )
            header_seen = True
            continue
        tokens = stripped.split()
        kind = tokens[0]
        if kind == "device":
            flush_pending(lineno)
            if len(tokens) != 4:
                raise DataFormatError("device line needs id, runtime=, macro.cells_per_stage=", line=lineno)
            dev_id = tokens[1]
            if not tokens[2].startswith("runtime="):
                raise DataFormatError(f"expected runtime=<tag>, got {tokens[2]!r}", line=lineno)
            tag = tokens[2][len("runtime="):]
            if tag not in _VALID_RUNTIME_TAGS:
                raise DataFormatError(f"unknown runtime tag {tag!r}", line=lineno)
            if not tokens[3].startswith("macro.cells_per_stage="):
                raise DataFormatError(
                    f"expected macro.cells_per_stage=<int>, got {tokens[3]!r}", line=lineno
                )
            try:
                cps = int(tokens[3].split("=", 1)[1])
            except ValueError:
                raise DataFormatError("macro.cells_per_stage must be an integer", line=lineno) from None
            if cells_per_stage is None:
                cells_per_stage = cps
            elif cells_per_stage != cps:
                raise DataFormatError(
                    f"inconsistent macro.cells_per_stage: {cps} vs {cells_per_stage}", line=lineno
                )
            pending = (dev_id, tag, None, None)
        elif kind == "descriptor":
            if pending is None:
                raise DataFormatError("descriptor line outside a device block", line=lineno)
            if pending[2] is not None:
                raise DataFormatError(f"device {pending[0]!r} already has a descriptor", line=lineno)
            values = _parse_floats(tokens[1:], lineno, DESCRIPTOR_LENGTH)
            pending = (pending[0], pending[1], values, pending[3])
        elif kind == "raw_descriptor":
            if pending is None:
                raise DataFormatError("raw_descriptor line outside a device block", line=lineno)
            if pending[3] is not None:
                raise DataFormatError(f"device {pending[0]!r} already has a raw_descriptor", line=lineno)
            values = _parse_floats(tokens[1:], lineno, DESCRIPTOR_LENGTH)
            pending = (pending[0], pending[1], pending[2], values)
        elif kind == "sample":
            flush_pending(lineno)
            if len(tokens) != 4:
                raise DataFormatError("sample line needs device, arch index, latency", line=lineno)
            try:
                arch_index = int(tokens[2])
                latency = float(tokens[3])
            except ValueError as exc:
                raise DataFormatError(f"bad sample value ({exc})", line=lineno) from None
            try:
                sample = LatencySample(device_id=tokens[1], arch_index=arch_index, latency_s=latency)
            except ValueError as exc:
                raise DataFormatError(str(exc), line=lineno) from None
            pair = (sample.device_id, sample.arch_index)
            if pair in seen_pairs:
                raise ReferentialError(
                    f"duplicate sample for device {pair[0]!r}, architecture {pair[1]}", line=lineno
                )
            seen_pairs.add(pair)
            samples.append(sample)
        else:
            raise DataFormatError(f"unknown record type {kind!r}", line=lineno)

    if not header_seen:
        raise DataFormatError(f"missing header {DATASET_HEADER!r}", line=1)
    flush_pending(len(raw_lines))
    macro = MacroConfig(cells_per_stage=cells_per_stage if cells_per_stage is not None else 5)
    return MeasurementDataset(devices=devices, samples=samples, macro=macro)
