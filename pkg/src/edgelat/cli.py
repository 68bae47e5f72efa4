"""Command-line interface.

Subcommands: gen-pool, import, train, predict, evaluate, ablate, sweep.
Experiment settings come from a YAML document; command-line flags override
the document. Exit codes: 0 success, 2 configuration error, 3 data/file
error, 4 internal error.
"""

import sys
import time
from dataclasses import replace

import click
import numpy as np
import yaml

from .archspace import NUM_ARCHITECTURES, MacroConfig, architecture_from_index
from .errors import ConfigError, DataFormatError, EdgelatError
from .harness import (
    ExperimentConfig,
    Method,
    Normalization,
    Pooling,
    bound_accuracy,
    format_ablation_table,
    format_report_table,
    format_sweep_table,
    run_ablation_stack,
    run_adaptation_sweep,
    run_experiment,
    training_matrix,
    write_ablation_report,
    write_pairs_csv,
    write_report,
    write_sweep_report,
)
from .regressor import MlpLatencyRegressor, TrainConfig
from .sampler import SamplingStrategy
from .seeding import derive_seed
from .synthdev import (
    DeviceSpec,
    PoolSpec,
    RuntimeKind,
    RuntimeModel,
    default_pool_spec,
    export_dataset,
    generate_dataset,
    import_dataset,
    make_device_pool,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _run(body):
    try:
        body()
    except DataFormatError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except (ConfigError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (EdgelatError, RuntimeError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)


def _load_yaml(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def _reject_unknown(doc, allowed, context):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{context}: unknown key(s): {', '.join(unknown)}")


def _parse_enum(enum_cls, value, key):
    try:
        return enum_cls(str(value))
    except ValueError:
        options = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{key} must be one of: {options} (got {value!r})") from None


def _parse_range(value, key):
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{key} must be a [lo, hi] pair, got {value!r}")
    return int(value[0]), int(value[1])


_EXPERIMENT_KEYS = (
    "dataset",
    "test_device",
    "train_device",
    "pooling",
    "train_range",
    "test_range",
    "n_adapt",
    "k_augment",
    "strategy",
    "normalization",
    "method",
    "n_trials",
    "seed",
    "epochs",
    "batch_size",
    "learning_rate",
)


def load_experiment_config(path, dataset_override=None, seed_override=None):
    """Experiment document -> (ExperimentConfig, TrainConfig, dataset path).

    Every key has a default except test_device; flags passed to the CLI win
    over document values.
    """
    doc = _load_yaml(path)
    _reject_unknown(doc, _EXPERIMENT_KEYS, str(path))
    if "test_device" not in doc:
        raise ConfigError(f"{path}: missing required key: test_device")
    dataset_path = dataset_override or doc.get("dataset")
    if dataset_path is None:
        raise ConfigError(f"{path}: missing required key: dataset (or pass --dataset)")
    seed = int(seed_override if seed_override is not None else doc.get("seed", 0))

    config = ExperimentConfig(
        test_device_id=str(doc["test_device"]),
        pooling=_parse_enum(Pooling, doc.get("pooling", "runtime"), "pooling"),
        train_range=_parse_range(doc.get("train_range", [0, 899]), "train_range"),
        test_range=_parse_range(doc.get("test_range", [1800, 2699]), "test_range"),
        n_adapt=int(doc.get("n_adapt", 10)),
        k_augment=int(doc.get("k_augment", 7)),
        strategy=_parse_enum(SamplingStrategy, doc.get("strategy", "targeted_uniform"), "strategy"),
        normalization=_parse_enum(Normalization, doc.get("normalization", "normalized"), "normalization"),
        method=_parse_enum(Method, doc.get("method", "lpm"), "method"),
        n_trials=int(doc.get("n_trials", 10)),
        seed=seed,
        train_device_id=None if doc.get("train_device") is None else str(doc["train_device"]),
        dataset_path=str(dataset_path),
    )
    train = TrainConfig(
        epochs=int(doc.get("epochs", 200)),
        batch_size=int(doc.get("batch_size", 128)),
        learning_rate=float(doc.get("learning_rate", 1e-3)),
        seed=seed,
    )
    return config, train, str(dataset_path)


_POOL_KEYS = ("arch_range", "cells_per_stage", "devices")
_DEVICE_KEYS = (
    "id",
    "runtime",
    "target_mean_s",
    "overhead_s",
    "noise_cv",
    "fusion_discount",
    "skip_elision",
)


def load_pool_spec(path) -> PoolSpec:
    doc = _load_yaml(path)
    _reject_unknown(doc, _POOL_KEYS, str(path))
    entries = doc.get("devices")
    if not entries:
        raise ConfigError(f"{path}: missing required key: devices")
    devices = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}: devices[{i}] must be a mapping")
        _reject_unknown(entry, _DEVICE_KEYS, f"{path}: devices[{i}]")
        for key in ("id", "runtime", "target_mean_s"):
            if key not in entry:
                raise ConfigError(f"{path}: devices[{i}]: missing required key: {key}")
        kind = _parse_enum(RuntimeKind, entry["runtime"], f"devices[{i}].runtime")
        runtime = RuntimeModel(
            kind=kind,
            fusion_discount=float(entry.get("fusion_discount", 0.35)),
            skip_elision=bool(entry.get("skip_elision", True)),
        )
        devices.append(
            DeviceSpec(
                device_id=str(entry["id"]),
                runtime=runtime,
                target_mean_s=float(entry["target_mean_s"]),
                overhead_s=None if entry.get("overhead_s") is None else float(entry["overhead_s"]),
                noise_cv=float(entry.get("noise_cv", 0.03)),
            )
        )
    return PoolSpec(
        devices=tuple(devices),
        arch_range=_parse_range(doc.get("arch_range", [0, 2699]), "arch_range"),
        macro=MacroConfig(cells_per_stage=int(doc.get("cells_per_stage", 5))),
    )


def _parse_indices(spec: str):
    """Either 'lo:hi' (inclusive) or a comma-separated index list."""
    if ":" in spec:
        lo_s, hi_s = spec.split(":", 1)
        lo, hi = int(lo_s), int(hi_s)
        if lo > hi:
            raise ValueError(f"bad index range {spec!r}")
        indices = list(range(lo, hi + 1))
    else:
        indices = [int(tok) for tok in spec.split(",") if tok.strip()]
        if not indices:
            raise ValueError("no architecture indices given")
    for idx in indices:
        if not 0 <= idx < NUM_ARCHITECTURES:
            raise ValueError(f"architecture index {idx} outside [0, {NUM_ARCHITECTURES - 1}]")
    return indices


@click.group()
def main():
    """Latency prediction toolkit for edge device runtimes."""


@main.command("gen-pool")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Pool spec YAML; omit for the default 7-device pool.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--arch-range", default=None, help="lo:hi override of the spec's range.")
def cmd_gen_pool(spec_path, out, seed, arch_range):
    """Generate a synthetic device pool and write its measurement dataset."""

    def body():
        spec = load_pool_spec(spec_path) if spec_path else default_pool_spec()
        if arch_range is not None:
            lo, hi = (int(t) for t in arch_range.split(":", 1))
            spec = replace(spec, arch_range=(lo, hi))
        pool = make_device_pool(spec, seed)
        dataset = generate_dataset(pool, spec.arch_range, spec.macro)
        export_dataset(dataset, out)
        click.echo(f"wrote {out}: {len(dataset.devices)} devices, {len(dataset.samples)} samples")
        rows = [("device", "runtime", "mean latency [s]")]
        for device in pool:
            lats = [dataset.latency(device.device_id, a) for a in dataset.arch_indices(device.device_id)]
            rows.append((device.device_id, device.runtime.kind.value, f"{np.mean(lats):.4g}"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        for row in rows:
            click.echo("  ".join(col.ljust(widths[i]) for i, col in enumerate(row)))

    _run(body)


@main.command("import")
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_import(src, out):
    """Validate an external dataset file and rewrite it canonically."""

    def body():
        dataset = import_dataset(src)
        export_dataset(dataset, out)
        click.echo(
            f"imported {len(dataset.devices)} devices, {len(dataset.samples)} samples -> {out}"
        )

    _run(body)


@main.command("train")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=None, type=int, help="Override the config seed.")
def cmd_train(dataset_path, config_path, out, seed):
    """Train the regression predictor on trial 0's training set and save it."""

    def body():
        config, train, ds_path = load_experiment_config(config_path, dataset_path, seed)
        if config.method is Method.LUT:
            raise ConfigError("method lut has no trainable model; use evaluate instead")
        dataset = import_dataset(ds_path)
        X, y, adapt = training_matrix(dataset, config, trial=0)
        estimator = train.estimator()
        estimator.seed = derive_seed(config.seed, "train", 0)
        started = time.perf_counter()
        estimator.fit(X, y)
        elapsed = time.perf_counter() - started
        estimator.save(out)
        click.echo(f"trained on {X.shape[0]} rows (adaptation archs: {list(adapt)})")
        click.echo(f"final training loss (log-space MSE): {estimator.final_loss_:.6g}")
        click.echo(f"training time: {elapsed:.1f} s; model written to {out}")

    _run(body)


@main.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--device", "device_id", required=True)
@click.option("--archs", required=True, help="Comma-separated indices or lo:hi range.")
@click.option("--raw-descriptor", is_flag=True, help="Feed the raw-count descriptor instead of rates.")
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Also write CSV here.")
def cmd_predict(model_path, dataset_path, device_id, archs, raw_descriptor, out):
    """Predict latency for architectures on a device in the dataset."""

    def body():
        model = MlpLatencyRegressor.load(model_path)
        dataset = import_dataset(dataset_path)
        record = dataset.device(device_id)
        descriptor = record.raw_descriptor if raw_descriptor else record.descriptor
        if descriptor is None:
            raise ConfigError(f"dataset has no raw descriptor for device {device_id!r}")
        indices = _parse_indices(archs)
        rows = [("arch", "predicted_s", "true_s", "within_10pct")]
        csv_rows = []
        for idx in indices:
            predicted = model.predict_latency(architecture_from_index(idx), descriptor)
            if dataset.has_sample(device_id, idx):
                true = dataset.latency(device_id, idx)
                within = bound_accuracy([(predicted, true)]) == 100.0
                rows.append((str(idx), f"{predicted:.6g}", f"{true:.6g}", "yes" if within else "no"))
                csv_rows.append((idx, predicted, true))
            else:
                rows.append((str(idx), f"{predicted:.6g}", "-", "-"))
                csv_rows.append((idx, predicted, ""))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        for row in rows:
            click.echo("  ".join(col.rjust(widths[i]) for i, col in enumerate(row)))
        if out:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write("arch_index,predicted_s,true_s\n")
                for idx, predicted, true in csv_rows:
                    true_txt = format(true, ".17g") if true != "" else ""
                    fh.write(f"{idx},{format(predicted, '.17g')},{true_txt}\n")

    _run(body)


@main.command("evaluate")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Report file path.")
@click.option("--csv", "csv_path", default=None, type=click.Path(dir_okay=False),
              help="Write last-trial (arch, predicted, true) pairs.")
@click.option("--seed", default=None, type=int, help="Override the config seed.")
@click.option("--jobs", default=1, type=int, show_default=True)
def cmd_evaluate(dataset_path, config_path, out, csv_path, seed, jobs):
    """Run the evaluation protocol and report error-bound accuracy."""

    def body():
        config, train, ds_path = load_experiment_config(config_path, dataset_path, seed)
        dataset = import_dataset(ds_path)
        report = run_experiment(dataset, config, train=train, jobs=jobs)
        click.echo(format_report_table(report))
        if out:
            write_report(report, out)
            click.echo(f"report written to {out}")
        if csv_path:
            write_pairs_csv(report, csv_path)
            click.echo(f"pairs written to {csv_path}")

    _run(body)


@main.command("ablate")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--test-device", "test_device_id", required=True)
@click.option("--poolings", default="runtime,combined", show_default=True)
@click.option("--n-adapt", default=10, type=int, show_default=True)
@click.option("--k-augment", default=7, type=int, show_default=True)
@click.option("--trials", default=10, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--jobs", default=1, type=int, show_default=True)
def cmd_ablate(dataset_path, test_device_id, poolings, n_adapt, k_augment, trials, seed, out, jobs):
    """Stacked-technique ablation: sampling, normalization, augmentation."""

    def body():
        pooling_list = [_parse_enum(Pooling, tok.strip(), "poolings") for tok in poolings.split(",") if tok.strip()]
        dataset = import_dataset(dataset_path)
        rows = run_ablation_stack(
            dataset,
            test_device_id,
            poolings=tuple(pooling_list),
            n_adapt=n_adapt,
            k_augment=k_augment,
            n_trials=trials,
            seed=seed,
            jobs=jobs,
        )
        click.echo(format_ablation_table(rows))
        if out:
            write_ablation_report(rows, out)
            click.echo(f"report written to {out}")

    _run(body)


@main.command("sweep")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--test-device", "test_device_id", required=True)
@click.option("--n-values", default="10,25,50,100", show_default=True)
@click.option("--k-values", default="1,4,7", show_default=True)
@click.option("--pooling", default="combined", show_default=True)
@click.option("--trials", default=5, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--jobs", default=1, type=int, show_default=True)
def cmd_sweep(dataset_path, test_device_id, n_values, k_values, pooling, trials, seed, out, jobs):
    """Accuracy grid over adaptation-sample count and augmentation factor."""

    def body():
        ns = [int(t) for t in n_values.split(",") if t.strip()]
        ks = [int(t) for t in k_values.split(",") if t.strip()]
        dataset = import_dataset(dataset_path)
        pool_mode = _parse_enum(Pooling, pooling, "pooling")
        grid = run_adaptation_sweep(
            dataset, test_device_id, ns, ks, pooling=pool_mode, n_trials=trials, seed=seed, jobs=jobs
        )
        click.echo(format_sweep_table(grid))
        if out:
            echo = ExperimentConfig(
                test_device_id=test_device_id, pooling=pool_mode, n_trials=trials, seed=seed
            )
            write_sweep_report(grid, out, config_echo=echo)
            click.echo(f"report written to {out}")

    _run(body)


if __name__ == "__main__":
    main()
