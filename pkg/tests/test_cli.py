"""End-to-end tests of the command-line interface.

Each test drives ``main`` with an argv list and inspects the exit code and
captured output. Training commands run with tiny budgets; the synthetic IDX
fixtures make the image pipeline testable without the real archive.
"""

import gzip
import json
import struct

import numpy as np
import pytest

from lehmernet.cli import main
from lehmernet.datasets import IDX_MAGIC_IMAGES, IDX_MAGIC_LABELS
from lehmernet.layers import load_checkpoint
from lehmernet.training import metrics_without_timing, read_metrics

E_PI = 23.140692632779267  # e**pi, denominator annihilator at suddency 1+i


# ---------------------------------------------------------------------------
# transform
# ---------------------------------------------------------------------------


def test_transform_prints_contraharmonic(capsys):
    code = main(["transform", "--values", "1,2,3", "--suddency", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.strip() == "L = 2.33333333333"


def test_transform_weighted(capsys):
    code = main(
        ["transform", "--values", "2,4", "--weights", "3,1", "--suddency", "1"]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "L = 2.5"


def test_transform_complex_output(capsys):
    code = main(
        [
            "transform",
            "--values", "1,2.718281828459045",
            "--suddency", "0",
            "--imag", "1",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "L = 1.37451400854 +0.347003969874i" == out.strip()


def test_transform_negative_imag_sign(capsys):
    code = main(
        ["transform", "--values", "1,2.718281828459045",
         "--suddency", "0", "--imag", "-1"]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "-0.347003969874i" in out


def test_transform_domain_error_exits_2(capsys):
    code = main(["transform", "--values", "0,1", "--suddency", "1"])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.err.startswith("error:")


def test_transform_singular_warns_on_stderr(capsys):
    code = main(
        ["transform", "--values", f"1,{E_PI}", "--suddency", "1", "--imag", "1"]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "near-singular" in captured.err
    assert captured.out.startswith("L = ")


def test_transform_rejects_malformed_values(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["transform", "--values", "1,abc", "--suddency", "1"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def test_gradcheck_named_subset(capsys):
    code = main(
        ["gradcheck", "--check", "relau", "--check", "softplus", "--scale", "0.5"]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("[PASS]") == 2
    assert "2/2 checks passed" in out


def test_gradcheck_unknown_name_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["gradcheck", "--check", "nonexistent"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# crossval
# ---------------------------------------------------------------------------


def _crossval_args(tabular_root, metrics_path=None, extra=()):
    args = [
        "crossval",
        "--dataset", "iris",
        "--data-root", str(tabular_root),
        "--epochs", "2",
        "--folds", "3",
        "--seed", "1",
    ]
    if metrics_path is not None:
        args += ["--metrics", str(metrics_path)]
    return args + list(extra)


def test_crossval_runs_and_reports(tabular_root, capsys):
    code = main(_crossval_args(tabular_root))
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("fold ") == 3
    assert "iris (real):" in out


def test_crossval_writes_metrics(tabular_root, tmp_path, capsys):
    path = tmp_path / "metrics.jsonl"
    code = main(_crossval_args(tabular_root, path))
    capsys.readouterr()
    assert code == 0
    records = read_metrics(str(path))
    assert records[0]["record"] == "run"
    assert records[0]["dataset"] == "iris"
    assert [r["record"] for r in records[1:-1]] == ["fold"] * 3
    assert records[-1]["record"] == "aggregate"


def test_crossval_reruns_identically_modulo_timing(tabular_root, tmp_path, capsys):
    path_a = tmp_path / "a.jsonl"
    path_b = tmp_path / "b.jsonl"
    assert main(_crossval_args(tabular_root, path_a)) == 0
    assert main(_crossval_args(tabular_root, path_b)) == 0
    capsys.readouterr()
    assert metrics_without_timing(str(path_a)) == metrics_without_timing(
        str(path_b)
    )


def test_crossval_append_accumulates(tabular_root, tmp_path, capsys):
    path = tmp_path / "acc.jsonl"
    assert main(_crossval_args(tabular_root, path)) == 0
    assert main(_crossval_args(tabular_root, path, extra=["--append"])) == 0
    capsys.readouterr()
    records = read_metrics(str(path))
    assert sum(1 for r in records if r["record"] == "run") == 2


def test_crossval_complex_variant(tabular_root, capsys):
    code = main(_crossval_args(tabular_root) + ["--lau", "complex"])
    out = capsys.readouterr().out
    assert code == 0
    assert "iris (complex):" in out


def test_crossval_missing_data_exits_2(tmp_path, capsys):
    code = main(
        ["crossval", "--dataset", "wine", "--data-root", str(tmp_path),
         "--epochs", "1"]
    )
    captured = capsys.readouterr()
    assert code == 2
    assert "fetch_datasets" in captured.err


def test_crossval_rejects_unknown_dataset(tabular_root):
    with pytest.raises(SystemExit) as exc:
        main(["crossval", "--dataset", "cifar", "--data-root", str(tabular_root)])
    assert exc.value.code == 2


def test_crossval_rejects_bad_hyperparameters(tabular_root, capsys):
    code = main(_crossval_args(tabular_root) + ["--learning-rate", "-1"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train-mnist
# ---------------------------------------------------------------------------


def _write_idx_pair(directory, prefix, images, labels):
    ipath = directory / f"{prefix}-images-idx3-ubyte.gz"
    lpath = directory / f"{prefix}-labels-idx1-ubyte.gz"
    n, h, w = images.shape
    with gzip.open(ipath, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, n, h, w))
        fh.write(images.astype(np.uint8).tobytes())
    with gzip.open(lpath, "wb") as fh:
        fh.write(struct.pack(">II", IDX_MAGIC_LABELS, n))
        fh.write(labels.astype(np.uint8).tobytes())


@pytest.fixture()
def tiny_idx_root(tmp_path):
    """A data root holding an 8x8 ten-class stand-in for the IDX archive."""
    rng = np.random.default_rng(424242)
    root = tmp_path / "root"
    mnist = root / "mnist"
    mnist.mkdir(parents=True)
    # class k gets a bright kth row so the task is learnable in principle
    def make(n):
        labels = rng.integers(0, 10, n, dtype=np.uint8)
        images = rng.integers(0, 40, (n, 8, 8), dtype=np.uint8)
        for i, k in enumerate(labels):
            images[i, k % 8, :] = 255
        return images, labels

    train_images, train_labels = make(48)
    test_images, test_labels = make(16)
    _write_idx_pair(mnist, "train", train_images, train_labels)
    _write_idx_pair(mnist, "t10k", test_images, test_labels)
    return root


def test_train_mnist_missing_files_exits_2(tmp_path, capsys):
    code = main(["train-mnist", "--data-root", str(tmp_path), "--epochs", "1"])
    captured = capsys.readouterr()
    assert code == 2
    assert "fetch_datasets.py --mnist" in captured.err


def test_train_mnist_end_to_end(tiny_idx_root, tmp_path, capsys):
    ckpt = tmp_path / "model.ckpt"
    metrics = tmp_path / "run.jsonl"
    code = main(
        [
            "train-mnist",
            "--data-root", str(tiny_idx_root),
            "--arch", "conv",
            "--epochs", "2",
            "--batch-size", "8",
            "--units", "4",
            "--learning-rate", "0.01",
            "--checkpoint", str(ckpt),
            "--metrics", str(metrics),
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("epoch ") == 2
    assert "test accuracy:" in out
    assert "checkpoint written" in out

    records = read_metrics(str(metrics))
    kinds = [r["record"] for r in records]
    assert kinds[0] == "run"
    assert kinds.count("epoch") == 2
    assert kinds[-1] == "aggregate"
    assert records[0]["arch"] == "conv"

    net = load_checkpoint(str(ckpt))
    logits = net.forward(np.zeros((2, 8, 8)))
    assert logits.shape == (2, 10)


def test_train_mnist_subset_and_mlp(tiny_idx_root, capsys):
    code = main(
        [
            "train-mnist",
            "--data-root", str(tiny_idx_root),
            "--arch", "mlp",
            "--subset", "24",
            "--epochs", "1",
            "--batch-size", "8",
            "--units", "4",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "(24 train, 16 test" in out


def test_train_mnist_complex_variant(tiny_idx_root, capsys):
    code = main(
        [
            "train-mnist",
            "--data-root", str(tiny_idx_root),
            "--lau", "complex",
            "--epochs", "1",
            "--batch-size", "8",
            "--units", "4",
        ]
    )
    assert code == 0
    assert "test accuracy:" in capsys.readouterr().out


def test_train_mnist_zero_epochs(tiny_idx_root, capsys):
    code = main(
        ["train-mnist", "--data-root", str(tiny_idx_root), "--epochs", "0",
         "--batch-size", "8", "--units", "4"]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "epoch " not in out
    assert "test accuracy:" in out


def test_train_mnist_rejects_nonpositive_subset(tiny_idx_root, capsys):
    code = main(
        ["train-mnist", "--data-root", str(tiny_idx_root), "--subset", "-5",
         "--epochs", "1"]
    )
    captured = capsys.readouterr()
    assert code == 2
    assert "--subset" in captured.err


def test_train_mnist_determinism(tiny_idx_root, tmp_path, capsys):
    paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl"]
    for path in paths:
        code = main(
            [
                "train-mnist",
                "--data-root", str(tiny_idx_root),
                "--epochs", "1",
                "--batch-size", "8",
                "--units", "4",
                "--metrics", str(path),
            ]
        )
        assert code == 0
    capsys.readouterr()
    assert metrics_without_timing(str(paths[0])) == metrics_without_timing(
        str(paths[1])
    )


# ---------------------------------------------------------------------------
# top-level parser
# ---------------------------------------------------------------------------


def test_no_command_exits_with_usage():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for sub in ("transform", "gradcheck", "crossval", "train-mnist"):
        assert sub in out
