"""Training loop, optimizers, stratified cross-validation and metrics files.

All randomness flows through ``numpy.random.default_rng`` seeded from the
config, and per-fold generators are derived from (seed, fold) sequences, so
every run is exactly reproducible; the JSONL metrics files produced here are
byte-identical across reruns except for the wall_time fields.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import (
    BatchNorm2DLayer,
    ChannelsFirstLayer,
    Conv2DLayer,
    DenseLayer,
    FlattenLayer,
    LAULayerComplex,
    LAULayerReal,
    MaxPool2DLayer,
    Network,
    ReLULayer,
    SquashLayer,
    softmax_cross_entropy,
)
from .transforms import standardize_apply, standardize_fit

METRICS_FORMAT = "lehmernet.metrics.v1"

LAU_KINDS = ("real", "complex")


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    """Hyperparameters shared by the CLI, estimators and benchmarks.

    The defaults are the tabular benchmark settings (these reproduce the
    accuracy table); the MNIST command overrides epochs/batch_size/
    learning_rate/lau_units to 10 / 64 / 1e-3 / 32.
    """

    epochs: int = 150
    batch_size: int = 16
    learning_rate: float = 3e-2
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    folds: int = 10
    lau_kind: str = "real"
    lau_units: int = 3
    suddency_bound: float = 0.0  # 0 disables the clamp

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.lau_units < 1:
            raise ValueError("lau_units must be >= 1")
        if self.lau_kind not in LAU_KINDS:
            raise ValueError(f"lau_kind must be one of {LAU_KINDS}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.suddency_bound < 0:
            raise ValueError("suddency_bound must be >= 0 (0 disables)")


@dataclass
class FoldReport:
    fold_index: int
    train_size: int
    test_size: int
    test_accuracy: float
    epochs_run: int
    wall_time: float


@dataclass
class RunMetrics:
    """Aggregate of one cross-validation run."""

    dataset: str
    config: TrainConfig
    folds: list = field(default_factory=list)
    mean_accuracy: float = 0.0
    std_accuracy: float = 0.0

    def summary(self):
        """Benchmark-table style string, e.g. '95% (4%)' (mean and fold std)."""
        return (
            f"{100.0 * self.mean_accuracy:.0f}% "
            f"({100.0 * self.std_accuracy:.0f}%)"
        )


class SGDMomentum:
    """Classic momentum: velocity = mu*velocity + grad; param -= lr*velocity."""

    def __init__(self, learning_rate, momentum=0.9):
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self._velocity = {}

    def step(self, net):
        for key, layer, name in net.param_items():
            grad = getattr(layer, "d_" + name)
            param = getattr(layer, name)
            vel = self._velocity.get(key)
            if vel is None:
                vel = self._velocity[key] = np.zeros_like(param)
            vel *= self.momentum
            vel += grad
            param -= self.learning_rate * vel


class Adam:
    """Adam with bias correction; the first step moves by ~lr*sign(grad)."""

    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {}
        self._u = {}

    def step(self, net):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for key, layer, name in net.param_items():
            grad = getattr(layer, "d_" + name)
            param = getattr(layer, name)
            m = self._m.get(key)
            if m is None:
                m = self._m[key] = np.zeros_like(param)
                self._u[key] = np.zeros_like(param)
            u = self._u[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            u *= self.beta2
            u += (1.0 - self.beta2) * grad * grad
            m_hat = m / bc1
            u_hat = u / bc2
            param -= self.learning_rate * m_hat / (np.sqrt(u_hat) + self.eps)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return SGDMomentum(config.learning_rate, config.momentum)
    return Adam(config.learning_rate, config.beta1, config.beta2,
                config.adam_eps)


def _clamp_suddency(net, bound):
    for layer in net.layers:
        if isinstance(layer, LAULayerReal):
            np.clip(layer.s, -bound, bound, out=layer.s)
        elif isinstance(layer, LAULayerComplex):
            np.clip(layer.a, -bound, bound, out=layer.a)
            np.clip(layer.b, -bound, bound, out=layer.b)


def train_model(net, features, labels, config, rng):
    """Minibatch-train a network in place; returns per-epoch mean losses.

    Zero epochs is a no-op (parameters untouched).  Raises
    TrainingDivergedError the moment a batch loss stops being finite.
    """
    n = features.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if labels.shape != (n,):
        raise ValueError("labels must match the number of samples")
    optimizer = make_optimizer(config)
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = net.forward(features[idx], train=True)
            loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"training diverged: non-finite loss in epoch {epoch}"
                )
            net.backward(dlogits)
            optimizer.step(net)
            if config.suddency_bound:
                _clamp_suddency(net, config.suddency_bound)
            total += loss * idx.size
        losses.append(total / n)
    return losses


def predict_classes(net, features, batch_size=256):
    """Argmax class predictions, evaluated in inference mode in chunks."""
    n = features.shape[0]
    out = np.empty(n, dtype=np.int64)
    for start in range(0, n, batch_size):
        logits = net.forward(features[start : start + batch_size], train=False)
        out[start : start + batch_size] = logits.argmax(axis=1)
    return out


def evaluate(net, features, labels, batch_size=256):
    """Accuracy of argmax predictions against integer labels."""
    if features.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = predict_classes(net, features, batch_size)
    return float(np.mean(preds == labels))


def stratified_kfold(labels, k, seed=0):
    """Index pairs (train, test) for k stratified folds.

    Each class is shuffled independently, then members are dealt round-robin
    into folds through a cursor that keeps rotating across classes, so
    per-class fold counts differ by at most one even for classes with fewer
    than k members.  Requires 2 <= k <= n_samples.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if k < 2:
        raise ValueError("k must be >= 2 (a single fold is degenerate)")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available samples")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    cursor = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        for idx in members:
            folds[cursor % k].append(int(idx))
            cursor += 1
    splits = []
    everything = set(range(n))
    for fold in folds:
        test = np.array(sorted(fold), dtype=np.int64)
        train = np.array(sorted(everything - set(fold)), dtype=np.int64)
        splits.append((train, test))
    return splits


def build_tabular_network(n_features, n_classes, config, rng):
    """LAU bank followed by an affine map to class logits."""
    lau_cls = LAULayerReal if config.lau_kind == "real" else LAULayerComplex
    return Network(
        [
            lau_cls(n_features, config.lau_units, rng),
            DenseLayer(config.lau_units, n_classes, rng),
        ],
        input_shape=(n_features,),
    )


def build_conv_network(image_shape, n_classes, config, rng):
    """Small conv stack feeding a squashed LAU head.

    conv(8) -> batchnorm -> relu -> pool2 -> conv(16) -> batchnorm -> relu
    -> pool2 -> flatten -> squash -> LAU -> affine logits.  ``image_shape``
    is the per-sample shape before channel normalization: (H, W) or (H, W, C).
    """
    lau_cls = LAULayerReal if config.lau_kind == "real" else LAULayerComplex
    if len(image_shape) == 2:
        h, w = image_shape
        channels = 1
    else:
        h, w, channels = image_shape
    if h % 4 or w % 4:
        raise ValueError("image sides must be divisible by 4 (two 2x2 pools)")
    flat = 16 * (h // 4) * (w // 4)
    return Network(
        [
            ChannelsFirstLayer(),
            Conv2DLayer(channels, 8, kernel_size=3, padding=1, rng=rng),
            BatchNorm2DLayer(8),
            ReLULayer(),
            MaxPool2DLayer(2),
            Conv2DLayer(8, 16, kernel_size=3, padding=1, rng=rng),
            BatchNorm2DLayer(16),
            ReLULayer(),
            MaxPool2DLayer(2),
            FlattenLayer(),
            SquashLayer(),
            lau_cls(flat, config.lau_units, rng),
            DenseLayer(config.lau_units, n_classes, rng),
        ],
        input_shape=tuple(image_shape),
    )


def build_mlp_network(image_shape, n_classes, config, rng):
    """Flat image model: flatten, squash into (1/e, e), LAU bank, logits."""
    lau_cls = LAULayerReal if config.lau_kind == "real" else LAULayerComplex
    flat = int(np.prod(image_shape))
    return Network(
        [
            FlattenLayer(),
            SquashLayer(),
            lau_cls(flat, config.lau_units, rng),
            DenseLayer(config.lau_units, n_classes, rng),
        ],
        input_shape=tuple(image_shape),
    )


def cross_validate(dataset, config, model_builder=None):
    """Stratified k-fold cross-validation with leak-free standardization.

    Range statistics are fit on each training fold only; the fold network is
    built fresh with a generator derived from (seed, fold_index).  Returns a
    RunMetrics with one FoldReport per fold plus mean/std accuracy.
    """
    builder = model_builder or build_tabular_network
    features, labels = dataset.features, dataset.labels
    n_classes = dataset.n_classes
    reports = []
    for fold_index, (train_idx, test_idx) in enumerate(
        stratified_kfold(labels, config.folds, config.seed)
    ):
        started = time.perf_counter()
        rng = np.random.default_rng([config.seed, fold_index])
        stats = standardize_fit(features[train_idx])
        x_train = standardize_apply(stats, features[train_idx])
        x_test = standardize_apply(stats, features[test_idx])
        net = builder(features.shape[1], n_classes, config, rng)
        losses = train_model(net, x_train, labels[train_idx], config, rng)
        accuracy = evaluate(net, x_test, labels[test_idx])
        reports.append(
            FoldReport(
                fold_index=fold_index,
                train_size=int(train_idx.size),
                test_size=int(test_idx.size),
                test_accuracy=accuracy,
                epochs_run=len(losses),
                wall_time=time.perf_counter() - started,
            )
        )
    accuracies = np.array([r.test_accuracy for r in reports])
    return RunMetrics(
        dataset=dataset.name,
        config=config,
        folds=reports,
        mean_accuracy=float(accuracies.mean()),
        std_accuracy=float(accuracies.std()),
    )


def metrics_records(run, command="crossval"):
    """Flatten a RunMetrics into the JSONL record sequence."""
    records = [
        {
            "record": "run",
            "format": METRICS_FORMAT,
            "command": command,
            "dataset": run.dataset,
            "variant": run.config.lau_kind,
            "seed": run.config.seed,
            "config": asdict(run.config),
        }
    ]
    for report in run.folds:
        records.append({"record": "fold", **asdict(report)})
    records.append(
        {
            "record": "aggregate",
            "mean_accuracy": run.mean_accuracy,
            "std_accuracy": run.std_accuracy,
            "n_folds": len(run.folds),
            "summary": run.summary(),
        }
    )
    return records


def write_metrics_records(records, path, append=False):
    """Write records as JSON lines (sorted keys, one object per line)."""
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_metrics(path):
    """Parse a JSONL metrics file back into a list of dicts."""
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from None
    return records


def metrics_without_timing(path):
    """Canonical re-serialization with wall_time dropped, for byte compares.

    Two runs of the same configuration must agree exactly on this string;
    wall-clock fields are the only sanctioned difference between reruns.
    """
    lines = []
    for record in read_metrics(path):
        record = {k: v for k, v in record.items() if k != "wall_time"}
        lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + "\n"
