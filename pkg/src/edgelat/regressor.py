"""Latency regression network, written from scratch on numpy.

The estimator maps a 135-dimensional row (30-dim architecture encoding
concatenated with a 105-dim hardware descriptor) to end-to-end latency. It
fits a small rectifier network on log latency with mean squared error and
adaptive-moment gradient descent; log space makes a +-10 percent accuracy
band roughly uniform across runtimes whose latencies differ by 30x.

Backprop is hand-rolled, so `gradient_check` compares the analytic
gradients against central finite differences and is part of the test gate.
Everything is deterministic given (rows, estimator parameters): weight
initialization, epoch shuffles, and batch order all derive from the seed.
"""

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .archspace import CellArchitecture, encode_architecture
from .counters import HardwareDescriptor
from .errors import DataFormatError
from .seeding import keyed_rng
from .validation import check_feature_matrix, check_positive_targets, check_sample_weight

FEATURE_DIM = 135  # 30 architecture + 105 descriptor entries

# Descriptor entries span nine orders of magnitude (event rates ~1e9,
# latencies ~1e-4) and a device's overall speed multiplies them; in log
# space that multiplier becomes an additive shift, the same shape the log
# latency target has, so the regression needs mostly linear structure to
# carry a device's scale. The epsilon keeps zero counter entries finite.
_LOG_EPS = 1e-12


def descriptor_features(values) -> np.ndarray:
    return np.log(np.asarray(values, dtype=float) + _LOG_EPS)


def feature_vector(arch: CellArchitecture, descriptor: HardwareDescriptor) -> np.ndarray:
    return np.concatenate([encode_architecture(arch), descriptor_features(descriptor.values)])


@dataclass(frozen=True)
class TrainConfig:
    """Training regime knobs, bundled for the harness and CLI."""

    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def estimator(self) -> "MlpLatencyRegressor":
        return MlpLatencyRegressor(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )


def _init_params(layer_sizes, seed, output_bias=0.0):
    """Seeded uniform fan-scaled weights. Biases start at zero except the
    output bias (the target mean, so first predictions sit on the pool's
    latency scale); the input-to-output shortcut starts at zero so the
    linear pathway is learned, not injected."""
    rng = keyed_rng(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    biases[-1][:] = output_bias
    skip = np.zeros(layer_sizes[0])
    return weights, biases, skip


def _forward(weights, biases, skip, X):
    """Hidden activations per layer and the flat output vector.

    The output sums the rectifier stack with a direct linear term. The
    shortcut matters for cross-device transfer: a device's log-space offset
    rides the linear path, which is exact at descriptors the hidden layers
    never saw during training.
    """
    activations = [X]
    for W, b in zip(weights[:-1], biases[:-1]):
        activations.append(np.maximum(activations[-1] @ W + b, 0.0))
    out = activations[-1] @ weights[-1] + biases[-1]
    return activations, out[:, 0] + X @ skip


def loss_and_gradients(weights, biases, skip, X, targets, sample_weight):
    """Weighted MSE (normalized by total weight) and its parameter gradients.

    Normalizing by the weight sum makes a row with weight k contribute the
    same full-batch gradient as k physical clones of that row.
    """
    w_total = float(np.sum(sample_weight))
    activations, out = _forward(weights, biases, skip, X)
    residual = out - targets
    loss = float(np.dot(sample_weight, residual * residual) / w_total)

    grad_flat = 2.0 * sample_weight * residual / w_total
    grad_out = grad_flat[:, None]
    grad_skip = X.T @ grad_flat
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    delta = grad_out
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = activations[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (activations[layer] > 0.0)
    return loss, grads_w, grads_b, grad_skip


class MlpLatencyRegressor(BaseEstimator, RegressorMixin):
    """Feedforward latency predictor with a scikit-learn estimator surface.

    fit(X, y) expects raw (unstandardized) feature rows and latencies in
    seconds; standardization statistics are computed on the training rows
    only and baked into the fitted model. predict returns seconds.
    """

    def __init__(
        self,
        hidden_layer_sizes=(128, 128),
        epochs=200,
        batch_size=128,
        learning_rate=1e-3,
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        seed=0,
        arch_dims=30,
        descriptor_damping=0.1,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.seed = seed
        # Descriptor features beyond arch_dims are standardized to
        # descriptor_damping sigma instead of unit sigma. Devices are few
        # and far apart; damping keeps the rectifier stack in a common
        # activation regime across devices (so architecture structure
        # transfers) while the linear shortcut, whose weights rescale
        # freely, still reads the full descriptor.
        self.arch_dims = arch_dims
        self.descriptor_damping = descriptor_damping

    # -- fitting ---------------------------------------------------------

    def fit(self, X, y, sample_weight=None):
        X = check_feature_matrix(X)
        y = check_positive_targets(y, X.shape[0])
        weight = check_sample_weight(sample_weight, X.shape[0])
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

        self.n_features_in_ = X.shape[1]
        self.layer_sizes_ = [X.shape[1], *self.hidden_layer_sizes, 1]
        self.target_transform_ = "log"

        self.feature_mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0  # constant features pass through unscaled
        if self.descriptor_damping != 1.0 and X.shape[1] > self.arch_dims:
            std[self.arch_dims :] /= self.descriptor_damping
        self.feature_std_ = std
        Xs = (X - self.feature_mean_) / self.feature_std_

        targets = np.log(y)
        target_mean = float(np.dot(weight, targets) / np.sum(weight))
        weights, biases, skip = _init_params(self.layer_sizes_, self.seed, output_bias=target_mean)

        m_w = [(np.zeros_like(W), np.zeros_like(W)) for W in weights]
        m_b = [(np.zeros_like(b), np.zeros_like(b)) for b in biases]
        m_s = [(np.zeros_like(skip), np.zeros_like(skip))]
        step = 0
        n = Xs.shape[0]
        start = time.perf_counter()
        for epoch in range(self.epochs):
            perm = keyed_rng(self.seed, "shuffle", epoch).permutation(n)
            for lo in range(0, n, self.batch_size):
                batch = perm[lo : lo + self.batch_size]
                _, grads_w, grads_b, grad_skip = loss_and_gradients(
                    weights, biases, skip, Xs[batch], targets[batch], weight[batch]
                )
                step += 1
                self._adam_update(weights, grads_w, m_w, step)
                self._adam_update(biases, grads_b, m_b, step)
                self._adam_update([skip], [grad_skip], m_s, step)

        self.weights_ = weights
        self.biases_ = biases
        self.skip_weights_ = skip
        self.final_loss_ = loss_and_gradients(weights, biases, skip, Xs, targets, weight)[0]
        self.fit_seconds_ = time.perf_counter() - start
        return self

    def _adam_update(self, params, grads, moments, step):
        b1, b2 = self.beta1, self.beta2
        correct1 = 1.0 - b1**step
        correct2 = 1.0 - b2**step
        for p, g, (m, v) in zip(params, grads, moments):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + self.epsilon)

    # -- prediction ------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("this MlpLatencyRegressor instance is not fitted yet")

    def predict(self, X) -> np.ndarray:
        """Predicted latencies in seconds; strictly positive by construction."""
        self._check_fitted()
        X = check_feature_matrix(X, expected_dim=self.n_features_in_)
        Xs = (X - self.feature_mean_) / self.feature_std_
        _, out = _forward(self.weights_, self.biases_, self.skip_weights_, Xs)
        return np.exp(out)

    def predict_latency(self, arch: CellArchitecture, descriptor: HardwareDescriptor) -> float:
        return float(self.predict(feature_vector(arch, descriptor)[None, :])[0])

    # -- persistence -----------------------------------------------------

    MODEL_HEADER = "edgelat-model v1"

    def save(self, path) -> None:
        self._check_fitted()
        fmt = lambda v: format(float(v), ".17g")
        lines = [self.MODEL_HEADER]
        lines.append("layer_sizes " + " ".join(str(s) for s in self.layer_sizes_))
        lines.append(f"seed {self.seed}")
        lines.append(f"epochs {self.epochs}")
        lines.append(f"batch_size {self.batch_size}")
        lines.append(f"learning_rate {fmt(self.learning_rate)}")
        lines.append(f"beta1 {fmt(self.beta1)}")
        lines.append(f"beta2 {fmt(self.beta2)}")
        lines.append(f"epsilon {fmt(self.epsilon)}")
        lines.append(f"arch_dims {self.arch_dims}")
        lines.append(f"descriptor_damping {fmt(self.descriptor_damping)}")
        lines.append(f"target_transform {self.target_transform_}")
        lines.append(f"final_loss {fmt(self.final_loss_)}")
        lines.append("feature_mean " + " ".join(fmt(v) for v in self.feature_mean_))
        lines.append("feature_std " + " ".join(fmt(v) for v in self.feature_std_))
        lines.append("skip_weights " + " ".join(fmt(v) for v in self.skip_weights_))
        for layer, (W, b) in enumerate(zip(self.weights_, self.biases_)):
            lines.append(f"weights {layer} {W.shape[0]} {W.shape[1]}")
            for row in W:
                lines.append(" ".join(fmt(v) for v in row))
            lines.append(f"biases {layer} {b.shape[0]}")
            lines.append(" ".join(fmt(v) for v in b))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "MlpLatencyRegressor":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != cls.MODEL_HEADER:
            raise DataFormatError(f"expected header {cls.MODEL_HEADER!r}", line=1)

        scalars = {}
        vectors = {}
        weights = {}
        biases = {}
        i = 1
        while i < len(lines):
            line = lines[i].strip()
            i += 1
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            key = tokens[0]
            if key == "weights":
                layer, rows, cols = (int(t) for t in tokens[1:4])
                mat = np.array(
                    [[float(v) for v in lines[i + r].split()] for r in range(rows)]
                )
                if mat.shape != (rows, cols):
                    raise DataFormatError(f"weight block {layer} has wrong shape", line=i)
                weights[layer] = mat
                i += rows
            elif key == "biases":
                layer, size = int(tokens[1]), int(tokens[2])
                vec = np.array([float(v) for v in lines[i].split()])
                if vec.shape != (size,):
                    raise DataFormatError(f"bias block {layer} has wrong shape", line=i)
                biases[layer] = vec
                i += 1
            elif key in ("feature_mean", "feature_std", "skip_weights"):
                vectors[key] = np.array([float(v) for v in tokens[1:]])
            else:
                scalars[key] = tokens[1:]

        try:
            layer_sizes = [int(s) for s in scalars["layer_sizes"]]
            model = cls(
                hidden_layer_sizes=tuple(layer_sizes[1:-1]),
                epochs=int(scalars["epochs"][0]),
                batch_size=int(scalars["batch_size"][0]),
                learning_rate=float(scalars["learning_rate"][0]),
                beta1=float(scalars["beta1"][0]),
                beta2=float(scalars["beta2"][0]),
                epsilon=float(scalars["epsilon"][0]),
                seed=int(scalars["seed"][0]),
                arch_dims=int(scalars["arch_dims"][0]),
                descriptor_damping=float(scalars["descriptor_damping"][0]),
            )
            model.layer_sizes_ = layer_sizes
            model.n_features_in_ = layer_sizes[0]
            model.target_transform_ = scalars["target_transform"][0]
            model.final_loss_ = float(scalars["final_loss"][0])
            model.feature_mean_ = vectors["feature_mean"]
            model.feature_std_ = vectors["feature_std"]
            model.skip_weights_ = vectors["skip_weights"]
            model.weights_ = [weights[k] for k in range(len(layer_sizes) - 1)]
            model.biases_ = [biases[k] for k in range(len(layer_sizes) - 1)]
        except KeyError as exc:
            raise DataFormatError(f"model file missing field {exc}") from None
        return model


@dataclass(frozen=True)
class GradientCheckReport:
    max_rel_error: float
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(model, X, y, sample_weight=None, n_params=64, step=1e-5, tolerance=1e-4, seed=0) -> GradientCheckReport:
    """Analytic backprop vs central finite differences on a random parameter
    subset. Coordinates whose gradient magnitude sits below the finite
    difference noise floor are skipped rather than compared."""
    X = check_feature_matrix(X)
    y = check_positive_targets(y, X.shape[0])
    weight = check_sample_weight(sample_weight, X.shape[0])
    targets = np.log(y)

    if hasattr(model, "weights_"):
        Xs = (X - model.feature_mean_) / model.feature_std_
        weights = [W.copy() for W in model.weights_]
        biases = [b.copy() for b in model.biases_]
        skip = model.skip_weights_.copy()
    else:
        Xs = X
        layer_sizes = [X.shape[1], *model.hidden_layer_sizes, 1]
        target_mean = float(np.dot(weight, targets) / np.sum(weight))
        weights, biases, skip = _init_params(layer_sizes, model.seed, output_bias=target_mean)
        # a zero shortcut has zero finite-difference response; perturb it so
        # the check exercises that path too
        rng0 = keyed_rng(seed, "gradient-check-skip")
        skip = rng0.uniform(-0.05, 0.05, size=skip.shape)

    _, grads_w, grads_b, grad_skip = loss_and_gradients(weights, biases, skip, Xs, targets, weight)
    params = weights + biases + [skip]
    grads = grads_w + grads_b + [grad_skip]

    coords = [
        (tensor_idx, flat_idx)
        for tensor_idx, tensor in enumerate(params)
        for flat_idx in range(tensor.size)
    ]
    rng = keyed_rng(seed, "gradient-check")
    chosen = rng.permutation(len(coords))[: min(n_params, len(coords))]

    noise_floor = 1e-5
    max_rel = 0.0
    for c in chosen:
        tensor_idx, flat_idx = coords[c]
        tensor = params[tensor_idx]
        original = tensor.flat[flat_idx]
        tensor.flat[flat_idx] = original + step
        loss_hi = loss_and_gradients(weights, biases, skip, Xs, targets, weight)[0]
        tensor.flat[flat_idx] = original - step
        loss_lo = loss_and_gradients(weights, biases, skip, Xs, targets, weight)[0]
        tensor.flat[flat_idx] = original
        numeric = (loss_hi - loss_lo) / (2.0 * step)
        analytic = grads[tensor_idx].flat[flat_idx]
        denom = max(abs(analytic), abs(numeric))
        if denom < noise_floor:
            continue
        max_rel = max(max_rel, abs(analytic - numeric) / denom)
    return GradientCheckReport(max_rel_error=max_rel, tolerance=tolerance, n_checked=len(chosen))
