"""Tests for optimizers, fold construction, the training loop, and metrics.

Optimizer steps are checked against hand-computed update sequences on a
one-parameter stub; harness behavior is pinned with stub networks whose
predictions are known exactly; end-to-end learning is exercised on easy
synthetic blobs.
"""

import json

import numpy as np
import pytest

from lehmernet.datasets import make_synthetic_blobs
from lehmernet.layers import Layer, Network
from lehmernet.training import (
    METRICS_FORMAT,
    Adam,
    SGDMomentum,
    TrainConfig,
    TrainingDivergedError,
    cross_validate,
    make_optimizer,
    metrics_records,
    metrics_without_timing,
    read_metrics,
    stratified_kfold,
    train_model,
    write_metrics_records,
)

RNG_SEED = 77113


class _ScalarParamLayer(Layer):
    """One trainable scalar with an externally assigned gradient."""

    TYPE = "stub_scalar"
    param_names = ("p",)

    def __init__(self, value):
        self.p = np.array([float(value)])
        self.d_p = np.zeros(1)

    def forward(self, x, train=False):
        return x

    def backward(self, dout):
        return dout


class _ConstantLogitsLayer(Layer):
    """Parameter-free layer emitting all-zero logits for any input."""

    TYPE = "stub_logits"

    def __init__(self, n_classes):
        self.n_classes = int(n_classes)

    def forward(self, x, train=False):
        self._n = x.shape[0]
        return np.zeros((self._n, self.n_classes))

    def backward(self, dout):
        return np.zeros((self._n, 1))


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


def test_sgd_momentum_hand_sequence():
    # lr 0.1, momentum 0.9, constant gradient 2:
    # v1 = 2, p1 = 1 - 0.2 = 0.8; v2 = 0.9*2 + 2 = 3.8, p2 = 0.8 - 0.38 = 0.42
    layer = _ScalarParamLayer(1.0)
    net = Network([layer])
    opt = SGDMomentum(learning_rate=0.1, momentum=0.9)

    layer.d_p[:] = 2.0
    opt.step(net)
    assert layer.p[0] == pytest.approx(0.8, abs=1e-15)

    layer.d_p[:] = 2.0
    opt.step(net)
    assert layer.p[0] == pytest.approx(0.42, abs=1e-15)


def test_adam_first_step_magnitude():
    # bias-corrected first step is lr * g / (|g| + eps) regardless of g scale
    layer = _ScalarParamLayer(1.0)
    net = Network([layer])
    opt = Adam(learning_rate=0.1)

    layer.d_p[:] = 2.0
    opt.step(net)
    assert layer.p[0] == pytest.approx(1.0 - 0.0999999995, abs=1e-12)


def test_adam_step_direction_follows_sign():
    layer = _ScalarParamLayer(0.0)
    net = Network([layer])
    opt = Adam(learning_rate=0.01)
    layer.d_p[:] = -5.0
    opt.step(net)
    assert layer.p[0] > 0.0


def test_zero_gradient_leaves_parameters_unchanged():
    for opt in (SGDMomentum(learning_rate=0.5), Adam(learning_rate=0.5)):
        layer = _ScalarParamLayer(3.25)
        net = Network([layer])
        layer.d_p[:] = 0.0
        opt.step(net)
        assert layer.p[0] == 3.25


def test_make_optimizer_dispatch():
    config = TrainConfig(optimizer="sgd", learning_rate=0.2)
    assert isinstance(make_optimizer(config), SGDMomentum)
    config = TrainConfig(optimizer="adam", learning_rate=0.2)
    assert isinstance(make_optimizer(config), Adam)


# ---------------------------------------------------------------------------
# configuration validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": -1},
        {"batch_size": 0},
        {"learning_rate": 0.0},
        {"learning_rate": -1.0},
        {"folds": 1},
        {"lau_units": 0},
        {"lau_kind": "quaternion"},
        {"optimizer": "lbfgs"},
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def test_zero_epochs_changes_nothing():
    data = make_synthetic_blobs(30, 3, 2, seed=4)
    config = TrainConfig(epochs=0, folds=2)
    layer = _ScalarParamLayer(1.5)
    net = Network([layer, _ConstantLogitsLayer(2)])
    losses = train_model(
        net, np.abs(data.features) + 0.5, data.labels, config,
        np.random.default_rng(0),
    )
    assert losses == []
    assert layer.p[0] == 1.5


def test_training_reduces_loss_on_blobs():
    data = make_synthetic_blobs(90, 4, 3, seed=0)
    from lehmernet.training import build_tabular_network
    from lehmernet.transforms import standardize_apply, standardize_fit

    X = standardize_apply(standardize_fit(data.features), data.features)
    config = TrainConfig(epochs=25, folds=2, seed=0)
    rng = np.random.default_rng(0)
    net = build_tabular_network(4, 3, config, rng)
    losses = train_model(net, X, data.labels, config, rng)
    assert len(losses) == 25
    assert losses[-1] < losses[0]


def test_divergence_raises_informative_error():
    data = make_synthetic_blobs(60, 4, 3, seed=1)
    config = TrainConfig(
        epochs=2, folds=2, learning_rate=1e200, optimizer="sgd"
    )
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingDivergedError):
            cross_validate(data, config)


def test_same_seed_reproduces_parameters_exactly():
    data = make_synthetic_blobs(60, 4, 3, seed=2)
    from lehmernet.training import build_tabular_network
    from lehmernet.transforms import standardize_apply, standardize_fit

    X = standardize_apply(standardize_fit(data.features), data.features)

    def run():
        config = TrainConfig(epochs=5, folds=2, seed=9)
        rng = np.random.default_rng(9)
        net = build_tabular_network(4, 3, config, rng)
        train_model(net, X, data.labels, config, rng)
        return {name: getattr(layer, attr).copy()
                for name, layer, attr in net.param_items()}

    first, second = run(), run()
    for name in first:
        assert np.array_equal(first[name], second[name]), name


def test_suddency_bound_clamps_parameters():
    data = make_synthetic_blobs(60, 4, 3, seed=3)
    for kind, names in (("real", ("s",)), ("complex", ("a", "b"))):
        config = TrainConfig(
            epochs=10, folds=2, lau_kind=kind, suddency_bound=1.5,
            learning_rate=0.5,
        )
        run = cross_validate(data, config)
        assert run.folds  # training completed under the bound
    # direct check on a trained network
    from lehmernet.training import build_tabular_network
    from lehmernet.transforms import standardize_apply, standardize_fit

    X = standardize_apply(standardize_fit(data.features), data.features)
    config = TrainConfig(epochs=10, folds=2, suddency_bound=0.5,
                         learning_rate=0.5)
    rng = np.random.default_rng(0)
    net = build_tabular_network(4, 3, config, rng)
    train_model(net, X, data.labels, config, rng)
    assert np.all(np.abs(net.layers[0].s) <= 0.5 + 1e-12)


# ---------------------------------------------------------------------------
# stratified folds
# ---------------------------------------------------------------------------


def test_stratified_folds_partition_and_balance():
    rng = np.random.default_rng(RNG_SEED)
    labels = rng.permutation(np.repeat([0, 1, 2], [12, 18, 24]))
    folds = stratified_kfold(labels, k=6, seed=3)
    assert len(folds) == 6

    all_test = np.concatenate([test for _, test in folds])
    assert sorted(all_test.tolist()) == list(range(len(labels)))

    for train_idx, test_idx in folds:
        assert set(train_idx).isdisjoint(test_idx)
        assert sorted(train_idx.tolist() + test_idx.tolist()) == list(
            range(len(labels))
        )
        counts = np.bincount(labels[test_idx], minlength=3)
        assert np.array_equal(counts, [2, 3, 4])


def test_stratified_folds_handle_stragglers():
    # class sizes not divisible by k: per-fold class counts differ by <= 1
    labels = np.repeat([0, 1], [7, 5])
    folds = stratified_kfold(labels, k=3, seed=0)
    for cls in (0, 1):
        per_fold = [np.sum(labels[test] == cls) for _, test in folds]
        assert max(per_fold) - min(per_fold) <= 1
    total = sum(len(test) for _, test in folds)
    assert total == len(labels)


def test_stratified_folds_rare_class_appears_once():
    labels = np.array([0] * 10 + [1])
    folds = stratified_kfold(labels, k=5, seed=1)
    hits = sum(int(np.any(labels[test] == 1)) for _, test in folds)
    assert hits == 1


def test_stratified_folds_seeded_and_validated():
    labels = np.repeat([0, 1, 2], 10)
    a = stratified_kfold(labels, k=5, seed=42)
    b = stratified_kfold(labels, k=5, seed=42)
    for (_, ta), (_, tb) in zip(a, b):
        assert np.array_equal(ta, tb)
    c = stratified_kfold(labels, k=5, seed=43)
    assert any(
        not np.array_equal(ta, tc) for (_, ta), (_, tc) in zip(a, c)
    )

    with pytest.raises(ValueError):
        stratified_kfold(labels, k=1, seed=0)
    with pytest.raises(ValueError):
        stratified_kfold(labels, k=31, seed=0)


# ---------------------------------------------------------------------------
# cross-validation harness
# ---------------------------------------------------------------------------


def test_cross_validate_accuracy_of_constant_predictor():
    # a constant-logits model predicts class 0 everywhere; on balanced
    # three-class data with balanced folds every fold scores exactly 1/3
    data = make_synthetic_blobs(90, 4, 3, seed=5)

    def builder(n_features, n_classes, config, rng):
        return Network([_ConstantLogitsLayer(n_classes)])

    config = TrainConfig(epochs=1, folds=3)
    run = cross_validate(data, config, model_builder=builder)
    assert run.dataset == data.name
    assert len(run.folds) == 3
    for fold in run.folds:
        assert fold.test_accuracy == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert run.mean_accuracy == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert run.std_accuracy == pytest.approx(0.0, abs=1e-12)


def test_cross_validate_learns_blobs():
    data = make_synthetic_blobs(120, 4, 3, seed=0)
    for kind in ("real", "complex"):
        config = TrainConfig(epochs=40, folds=3, lau_kind=kind, seed=0)
        run = cross_validate(data, config)
        assert run.mean_accuracy >= 0.9, (kind, run.mean_accuracy)


def test_fold_reports_carry_sizes_and_time():
    data = make_synthetic_blobs(60, 3, 2, seed=6)
    config = TrainConfig(epochs=2, folds=4)
    run = cross_validate(data, config)
    for fold in run.folds:
        assert fold.train_size + fold.test_size == 60
        assert fold.epochs_run == 2
        assert fold.wall_time >= 0.0


def test_run_summary_format():
    data = make_synthetic_blobs(60, 3, 2, seed=7)
    run = cross_validate(data, TrainConfig(epochs=1, folds=2))
    text = run.summary()
    assert "%" in text and "(" in text and text.endswith(")")


# ---------------------------------------------------------------------------
# metrics files
# ---------------------------------------------------------------------------


def _small_run(seed=0, epochs=2):
    data = make_synthetic_blobs(60, 3, 2, seed=8)
    return cross_validate(data, TrainConfig(epochs=epochs, folds=2, seed=seed))


def test_metrics_records_structure():
    run = _small_run()
    records = metrics_records(run, command="crossval")
    assert records[0]["record"] == "run"
    assert records[0]["format"] == METRICS_FORMAT
    assert records[0]["config"]["epochs"] == 2
    fold_records = [r for r in records if r["record"] == "fold"]
    assert len(fold_records) == 2
    assert records[-1]["record"] == "aggregate"
    assert records[-1]["n_folds"] == 2


def test_metrics_write_read_round_trip(tmp_path):
    run = _small_run()
    records = metrics_records(run)
    path = tmp_path / "metrics.jsonl"
    write_metrics_records(records, str(path))
    assert read_metrics(str(path)) == records

    # every line parses as standalone JSON with sorted keys
    for line in path.read_text().splitlines():
        parsed = json.loads(line)
        assert json.dumps(parsed, sort_keys=True) == line


def test_metrics_append_mode(tmp_path):
    run = _small_run()
    records = metrics_records(run)
    path = tmp_path / "metrics.jsonl"
    write_metrics_records(records, str(path))
    write_metrics_records(records, str(path), append=True)
    assert read_metrics(str(path)) == records + records


def test_metrics_read_reports_bad_line(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"record": "run"}\nnot json\n')
    with pytest.raises(ValueError, match="line 2"):
        read_metrics(str(path))


def test_metrics_without_timing_is_rerun_stable(tmp_path):
    path_a = tmp_path / "a.jsonl"
    path_b = tmp_path / "b.jsonl"
    write_metrics_records(metrics_records(_small_run(seed=5)), str(path_a))
    write_metrics_records(metrics_records(_small_run(seed=5)), str(path_b))
    # raw files may differ in wall_time; the stripped view may not
    assert metrics_without_timing(str(path_a)) == metrics_without_timing(
        str(path_b)
    )
    assert "wall_time" not in metrics_without_timing(str(path_a))
    assert "wall_time" in path_a.read_text()


def test_metrics_differ_across_seeds(tmp_path):
    path_a = tmp_path / "a.jsonl"
    path_b = tmp_path / "b.jsonl"
    write_metrics_records(metrics_records(_small_run(seed=1)), str(path_a))
    write_metrics_records(metrics_records(_small_run(seed=2)), str(path_b))
    assert metrics_without_timing(str(path_a)) != metrics_without_timing(
        str(path_b)
    )
