"""Experiment orchestration: pooling, trials, the error-bound metric,
ablations, and adaptation-budget sweeps.

The protocol mirrors the evaluation this toolkit exists to reproduce:
train on architectures [0, 899] from a pool of known devices plus a few
adaptation measurements from the held-out device, then score the +-10%
error-bound accuracy on architectures [1800, 2699]. Trials re-draw the
adaptation set from a per-trial derived seed; within a trial every compared
method sees the same adaptation indices (for a given sampling strategy),
so differences come from the method and not from luckier samples.
"""

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .archspace import architecture_from_index, encode_architecture
from .baselines import LatencyLUT, lut_from_descriptor
from .errors import ConfigError
from .regressor import TrainConfig, descriptor_features
from .sampler import SamplingStrategy, augment, random_sample, targeted_uniform_sample
from .seeding import derive_seed
from .synthdev import MeasurementDataset

ALL_NONE_ARCH_INDEX = 0


class Pooling(Enum):
    RUNTIME = "runtime"
    COMBINED = "combined"
    SINGLE_DEVICE_LOOCV = "single_device_loocv"


class Normalization(Enum):
    NORMALIZED = "normalized"
    RAW = "raw"


class Method(Enum):
    # Full regression predictor: honors the config's sampling strategy,
    # descriptor normalization, and augmentation factor.
    LPM = "lpm"
    # Reference configuration it improves on: random sampling, raw
    # counters, no augmentation.
    LPM_BASELINE = "lpm_baseline"
    LUT = "lut"


@dataclass(frozen=True)
class ExperimentConfig:
    test_device_id: str
    pooling: Pooling = Pooling.RUNTIME
    train_range: tuple = (0, 899)
    test_range: tuple = (1800, 2699)
    n_adapt: int = 10
    k_augment: int = 7
    strategy: SamplingStrategy = SamplingStrategy.TARGETED_UNIFORM
    normalization: Normalization = Normalization.NORMALIZED
    method: Method = Method.LPM
    n_trials: int = 10
    seed: int = 0
    train_device_id: str = None
    dataset_path: str = None  # provenance echo for reports

    def __post_init__(self):
        for name in ("train_range", "test_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ConfigError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
        t_lo, t_hi = self.train_range
        e_lo, e_hi = self.test_range
        if max(t_lo, e_lo) <= min(t_hi, e_hi):
            raise ConfigError(
                f"train_range {self.train_range} and test_range {self.test_range} must be disjoint"
            )
        if self.n_adapt < 1:
            raise ConfigError(f"n_adapt must be >= 1, got {self.n_adapt}")
        if self.k_augment < 1:
            raise ConfigError(f"k_augment must be >= 1, got {self.k_augment}")
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")

    def resolved(self) -> "ExperimentConfig":
        """Apply the method presets to the free fields."""
        if self.method is Method.LPM_BASELINE:
            return replace(
                self,
                strategy=SamplingStrategy.RANDOM,
                normalization=Normalization.RAW,
                k_augment=1,
            )
        return self


@dataclass
class EvalReport:
    per_trial_accuracy: list
    mean_accuracy: float
    std_accuracy: float
    pairs: list  # (arch_index, predicted_s, true_s) for the last trial
    config: ExperimentConfig
    wall_time_s: float

    def __post_init__(self):
        for acc in self.per_trial_accuracy:
            if not 0.0 <= acc <= 100.0:
                raise ValueError(f"accuracy {acc} outside [0, 100]")


# Guard for the inclusive boundary: 10% of a latency is rarely exactly
# representable, so a pair sitting on the bound may land a few ulps above.
_BOUND_EPS = 1e-12


def bound_accuracy(pairs, bound: float = 0.10) -> float:
    """Percentage of pairs whose prediction is within `bound` of the truth,
    boundary inclusive."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("bound_accuracy needs at least one (predicted, true) pair")
    within = 0
    for predicted, true in pairs:
        if true <= 0:
            raise ValueError(f"true latency must be > 0, got {true}")
        if abs(predicted - true) / true <= bound + _BOUND_EPS:
            within += 1
    return 100.0 * within / len(pairs)


def build_training_pool(dataset: MeasurementDataset, config: ExperimentConfig) -> list:
    test = dataset.device(config.test_device_id)
    if config.pooling is Pooling.RUNTIME:
        pool = [
            d.device_id
            for d in dataset.devices
            if d.device_id != test.device_id and d.runtime_tag == test.runtime_tag
        ]
    elif config.pooling is Pooling.COMBINED:
        pool = [d.device_id for d in dataset.devices if d.device_id != test.device_id]
    else:
        if config.train_device_id is None:
            raise ConfigError(
                "single_device_loocv pooling needs train_device_id (or use run_experiment, "
                "which iterates over the candidates)"
            )
        dataset.device(config.train_device_id)
        if config.train_device_id == test.device_id:
            raise ConfigError("training device must differ from the test device")
        pool = [config.train_device_id]
    if not pool:
        raise ConfigError(
            f"empty training pool for test device {config.test_device_id!r} "
            f"under {config.pooling.value} pooling"
        )
    return pool


def loocv_candidates(dataset: MeasurementDataset, config: ExperimentConfig) -> list:
    """Single-device trainers rotated through leave-one-out evaluation:
    every device sharing the test device's runtime."""
    test = dataset.device(config.test_device_id)
    return [
        d.device_id
        for d in dataset.devices
        if d.device_id != test.device_id and d.runtime_tag == test.runtime_tag
    ]


def _descriptor_block(dataset, device_id, normalization) -> np.ndarray:
    """Descriptor feature block (log scaled) for training rows."""
    record = dataset.device(device_id)
    if normalization is Normalization.NORMALIZED:
        return descriptor_features(record.descriptor.values)
    if record.raw_descriptor is None:
        raise ConfigError(f"dataset has no raw descriptor for device {device_id!r}")
    return descriptor_features(record.raw_descriptor.values)


def trial_adaptation_indices(dataset: MeasurementDataset, config: ExperimentConfig, trial: int) -> tuple:
    """Adaptation architectures for one trial. Depends only on (dataset,
    pool, strategy, seed, trial), so methods compared under the same
    strategy receive identical sets."""
    config = config.resolved()
    pool = build_training_pool(dataset, config)
    lo, hi = config.train_range
    seed = derive_seed(config.seed, "adapt", trial)
    if config.strategy is SamplingStrategy.TARGETED_UNIFORM:
        tables = {
            dev: [(a, dataset.latency(dev, a)) for a in range(lo, hi + 1)] for dev in pool
        }
        selection = targeted_uniform_sample(
            tables, config.n_adapt, seed, device_id=config.test_device_id
        )
    else:
        selection = random_sample(
            range(lo, hi + 1), config.n_adapt, seed, device_id=config.test_device_id
        )
    return selection.arch_indices


def _encodings_for(indices) -> np.ndarray:
    return np.stack([encode_architecture(architecture_from_index(i)) for i in indices])


def _assemble_training(dataset, pool, config, adapt_indices):
    lo, hi = config.train_range
    train_archs = list(range(lo, hi + 1))
    enc = _encodings_for(train_archs)

    blocks_x, blocks_y = [], []
    for dev in pool:
        desc = _descriptor_block(dataset, dev, config.normalization)
        blocks_x.append(np.hstack([enc, np.tile(desc, (len(train_archs), 1))]))
        blocks_y.append(np.array([dataset.latency(dev, a) for a in train_archs]))

    test_desc = _descriptor_block(dataset, config.test_device_id, config.normalization)
    adapt_rows = [
        (
            np.concatenate([encode_architecture(architecture_from_index(a)), test_desc]),
            dataset.latency(config.test_device_id, a),
        )
        for a in adapt_indices
    ]
    cloned = augment(adapt_rows, config.k_augment)
    blocks_x.append(np.stack([row for row, _ in cloned]))
    blocks_y.append(np.array([target for _, target in cloned]))
    return np.vstack(blocks_x), np.concatenate(blocks_y)


def training_matrix(dataset: MeasurementDataset, config: ExperimentConfig, trial: int = 0):
    """Feature matrix, latency targets, and adaptation indices for one trial."""
    config = config.resolved()
    adapt_indices = trial_adaptation_indices(dataset, config, trial)
    pool = build_training_pool(dataset, config)
    X, y = _assemble_training(dataset, pool, config, adapt_indices)
    return X, y, adapt_indices


def _lut_for_device(dataset: MeasurementDataset, device_id: str) -> LatencyLUT:
    """LUT from the device's own operator profiles (via its descriptor).

    The overhead term is the measured latency of the empty, all-NONE
    network when the dataset contains it, otherwise the device's smallest
    measured latency.
    """
    record = dataset.device(device_id)
    if dataset.has_sample(device_id, ALL_NONE_ARCH_INDEX):
        overhead = dataset.latency(device_id, ALL_NONE_ARCH_INDEX)
    else:
        overhead = min(dataset.latency(device_id, a) for a in dataset.arch_indices(device_id))
    return lut_from_descriptor(record.descriptor, overhead_s=overhead)


def _run_lpm_trial(dataset, config, trial, train):
    adapt_indices = trial_adaptation_indices(dataset, config, trial)
    e_lo, e_hi = config.test_range
    leaked = [a for a in adapt_indices if e_lo <= a <= e_hi]
    if leaked:
        raise RuntimeError(f"adaptation set leaked test architectures: {leaked}")

    pool = build_training_pool(dataset, config)
    X, y = _assemble_training(dataset, pool, config, adapt_indices)
    estimator = train.estimator()
    estimator.seed = derive_seed(config.seed, "train", trial)
    estimator.fit(X, y)

    test_archs = list(range(e_lo, e_hi + 1))
    test_desc = _descriptor_block(dataset, config.test_device_id, config.normalization)
    X_test = np.hstack([_encodings_for(test_archs), np.tile(test_desc, (len(test_archs), 1))])
    predicted = estimator.predict(X_test)
    pairs = [
        (a, float(p), dataset.latency(config.test_device_id, a))
        for a, p in zip(test_archs, predicted)
    ]
    accuracy = bound_accuracy([(p, t) for _, p, t in pairs])
    return accuracy, pairs


def run_experiment(dataset: MeasurementDataset, config: ExperimentConfig, train: TrainConfig = None, jobs: int = 1) -> EvalReport:
    """Run the full protocol for one configuration and aggregate trials."""
    config = config.resolved()
    train = train or TrainConfig()
    started = time.perf_counter()

    if config.method is Method.LUT:
        lut = _lut_for_device(dataset, config.test_device_id)
        e_lo, e_hi = config.test_range
        pairs = [
            (
                a,
                lut.predict(architecture_from_index(a), dataset.macro),
                dataset.latency(config.test_device_id, a),
            )
            for a in range(e_lo, e_hi + 1)
        ]
        accuracy = bound_accuracy([(p, t) for _, p, t in pairs])
        return EvalReport(
            per_trial_accuracy=[accuracy],
            mean_accuracy=accuracy,
            std_accuracy=0.0,
            pairs=pairs,
            config=config,
            wall_time_s=time.perf_counter() - started,
        )

    if config.pooling is Pooling.SINGLE_DEVICE_LOOCV and config.train_device_id is None:
        candidates = loocv_candidates(dataset, config)
        if not candidates:
            raise ConfigError(
                f"no single-device training candidates share runtime with {config.test_device_id!r}"
            )
        accuracies, pairs = [], []
        for candidate in candidates:
            sub = run_experiment(
                dataset, replace(config, train_device_id=candidate), train=train, jobs=jobs
            )
            accuracies.extend(sub.per_trial_accuracy)
            pairs = sub.pairs
        return EvalReport(
            per_trial_accuracy=accuracies,
            mean_accuracy=float(np.mean(accuracies)),
            std_accuracy=float(np.std(accuracies)),
            pairs=pairs,
            config=config,
            wall_time_s=time.perf_counter() - started,
        )

    trials = list(range(config.n_trials))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(lambda t: _run_lpm_trial(dataset, config, t, train), trials))
    else:
        results = [_run_lpm_trial(dataset, config, t, train) for t in trials]

    accuracies = [acc for acc, _ in results]
    return EvalReport(
        per_trial_accuracy=accuracies,
        mean_accuracy=float(np.mean(accuracies)),
        std_accuracy=float(np.std(accuracies)),
        pairs=results[-1][1],
        config=config,
        wall_time_s=time.perf_counter() - started,
    )


# --- ablation stack -----------------------------------------------------------

ABLATION_LABELS = (
    "baseline",
    "+targeted-sampling",
    "+counter-normalization",
    "+clone-augmentation",
)


@dataclass(frozen=True)
class AblationRow:
    pooling: Pooling
    label: str
    report: EvalReport
    delta_vs_baseline: float


def ablation_configs(test_device_id, pooling, n_adapt=10, k_augment=7, n_trials=10, seed=0, **overrides):
    """The four stacked configurations, identical seeds and budgets."""
    common = dict(
        test_device_id=test_device_id,
        pooling=pooling,
        n_adapt=n_adapt,
        n_trials=n_trials,
        seed=seed,
        method=Method.LPM,
        **overrides,
    )
    return [
        (
            ABLATION_LABELS[0],
            ExperimentConfig(
                strategy=SamplingStrategy.RANDOM,
                normalization=Normalization.RAW,
                k_augment=1,
                **common,
            ),
        ),
        (
            ABLATION_LABELS[1],
            ExperimentConfig(
                strategy=SamplingStrategy.TARGETED_UNIFORM,
                normalization=Normalization.RAW,
                k_augment=1,
                **common,
            ),
        ),
        (
            ABLATION_LABELS[2],
            ExperimentConfig(
                strategy=SamplingStrategy.TARGETED_UNIFORM,
                normalization=Normalization.NORMALIZED,
                k_augment=1,
                **common,
            ),
        ),
        (
            ABLATION_LABELS[3],
            ExperimentConfig(
                strategy=SamplingStrategy.TARGETED_UNIFORM,
                normalization=Normalization.NORMALIZED,
                k_augment=k_augment,
                **common,
            ),
        ),
    ]


def run_ablation_stack(
    dataset: MeasurementDataset,
    test_device_id: str,
    poolings=(Pooling.RUNTIME, Pooling.COMBINED),
    n_adapt: int = 10,
    k_augment: int = 7,
    n_trials: int = 10,
    seed: int = 0,
    train: TrainConfig = None,
    jobs: int = 1,
) -> list:
    """One row per stacked technique per pooling mode, with gains relative
    to the first (random sampling, raw counters, no augmentation) row."""
    rows = []
    for pooling in poolings:
        baseline_mean = None
        for label, config in ablation_configs(
            test_device_id, pooling, n_adapt=n_adapt, k_augment=k_augment, n_trials=n_trials, seed=seed
        ):
            report = run_experiment(dataset, config, train=train, jobs=jobs)
            if baseline_mean is None:
                baseline_mean = report.mean_accuracy
            rows.append(
                AblationRow(
                    pooling=pooling,
                    label=label,
                    report=report,
                    delta_vs_baseline=report.mean_accuracy - baseline_mean,
                )
            )
    return rows


def run_adaptation_sweep(
    dataset: MeasurementDataset,
    test_device_id: str,
    n_values,
    k_values,
    pooling: Pooling = Pooling.COMBINED,
    n_trials: int = 5,
    seed: int = 0,
    train: TrainConfig = None,
    jobs: int = 1,
) -> dict:
    """Mean accuracy per (adaptation count, augmentation factor) cell."""
    base = ExperimentConfig(test_device_id=test_device_id, pooling=pooling, n_trials=n_trials, seed=seed)
    t_lo, t_hi = base.train_range
    for n in n_values:
        if not 1 <= n <= t_hi - t_lo + 1:
            raise ConfigError(f"n_adapt {n} outside the training range size {t_hi - t_lo + 1}")
    grid = {}
    for n in n_values:
        for k in k_values:
            config = replace(base, n_adapt=n, k_augment=k)
            report = run_experiment(dataset, config, train=train, jobs=jobs)
            grid[(n, k)] = report.mean_accuracy
    return grid


# --- report serialization ------------------------------------------------------

REPORT_HEADER = "edgelat-report v1"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def config_lines(config: ExperimentConfig) -> list:
    lines = [
        f"config test_device {config.test_device_id}",
        f"config pooling {config.pooling.value}",
        f"config train_range {config.train_range[0]} {config.train_range[1]}",
        f"config test_range {config.test_range[0]} {config.test_range[1]}",
        f"config n_adapt {config.n_adapt}",
        f"config k_augment {config.k_augment}",
        f"config strategy {config.strategy.value}",
        f"config normalization {config.normalization.value}",
        f"config method {config.method.value}",
        f"config n_trials {config.n_trials}",
        f"config seed {config.seed}",
    ]
    if config.train_device_id is not None:
        lines.append(f"config train_device {config.train_device_id}")
    if config.dataset_path is not None:
        lines.append(f"config dataset {config.dataset_path}")
    return lines


def write_report(report: EvalReport, path) -> None:
    # Wall time stays out of the file so identical seeds give identical bytes.
    lines = [REPORT_HEADER, "kind experiment"]
    lines.extend(config_lines(report.config))
    for t, acc in enumerate(report.per_trial_accuracy):
        lines.append(f"trial {t} accuracy {_fmt(acc)}")
    lines.append(f"summary mean {_fmt(report.mean_accuracy)} stddev {_fmt(report.std_accuracy)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ablation_report(rows, path) -> None:
    lines = [REPORT_HEADER, "kind ablation"]
    if rows:
        lines.extend(config_lines(rows[0].report.config))
    for row in rows:
        lines.append(
            f"row {row.pooling.value} {row.label} mean {_fmt(row.report.mean_accuracy)} "
            f"stddev {_fmt(row.report.std_accuracy)} delta {_fmt(row.delta_vs_baseline)}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sweep_report(grid, path, config_echo=None) -> None:
    lines = [REPORT_HEADER, "kind sweep"]
    if config_echo is not None:
        lines.extend(config_lines(config_echo))
    for (n, k) in sorted(grid):
        lines.append(f"cell n_adapt {n} k_augment {k} mean {_fmt(grid[(n, k)])}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pairs_csv(report: EvalReport, path) -> None:
    """Last-trial (architecture, predicted, true) rows for external plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arch_index", "predicted_s", "true_s"])
        for arch, predicted, true in report.pairs:
            writer.writerow([arch, _fmt(predicted), _fmt(true)])


def format_report_table(report: EvalReport) -> str:
    rows = [("trial", "accuracy")]
    rows.extend((str(t), f"{acc:.2f}") for t, acc in enumerate(report.per_trial_accuracy))
    rows.append(("mean±std", f"{report.mean_accuracy:.2f} ± {report.std_accuracy:.2f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(2)]
    lines = ["  ".join(col.rjust(widths[i]) for i, col in enumerate(row)) for row in rows]
    lines.append(f"wall time: {report.wall_time_s:.2f} s")
    return "\n".join(lines)


def format_ablation_table(rows) -> str:
    table = [("pooling", "configuration", "mean", "stddev", "delta")]
    for row in rows:
        table.append(
            (
                row.pooling.value,
                row.label,
                f"{row.report.mean_accuracy:.2f}",
                f"{row.report.std_accuracy:.2f}",
                f"{row.delta_vs_baseline:+.2f}",
            )
        )
    widths = [max(len(r[i]) for r in table) for i in range(5)]
    return "\n".join(
        "  ".join(col.ljust(widths[i]) if i < 2 else col.rjust(widths[i]) for i, col in enumerate(row))
        for row in table
    )


def format_sweep_table(grid) -> str:
    n_values = sorted({n for n, _ in grid})
    k_values = sorted({k for _, k in grid})
    header = ["n_adapt"] + [f"K={k}" for k in k_values]
    table = [tuple(header)]
    for n in n_values:
        table.append(tuple([str(n)] + [f"{grid[(n, k)]:.2f}" for k in k_values]))
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    return "\n".join(
        "  ".join(col.rjust(widths[i]) for i, col in enumerate(row)) for row in table
    )
