"""Shared fixtures: exported benchmark CSVs and cached cross-validation runs."""

import subprocess
import sys
import time
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
FETCH_SCRIPT = REPO_ROOT / "scripts" / "fetch_datasets.py"


@pytest.fixture(scope="session")
def tabular_root(tmp_path_factory):
    """Export iris/wine/wdbc CSVs once per session via the fetch script."""
    root = tmp_path_factory.mktemp("tabular-data")
    result = subprocess.run(
        [sys.executable, str(FETCH_SCRIPT), "--tabular", "--data-root", str(root)],
        capture_output=True,
        text=True,
    )
    if result.returncode != 0:
        raise RuntimeError(f"dataset export failed:\n{result.stderr}")
    return root


@pytest.fixture(scope="session")
def benchmark_runs(tabular_root):
    """Run all six dataset x variant cross-validation cells once, timed.

    Returns {(dataset, kind): (RunMetrics, elapsed_seconds)} at the library's
    default training configuration, shared by the benchmark-table and
    determinism acceptance checks so the expensive cells run only once.
    """
    from lehmernet.datasets import load_named_tabular
    from lehmernet.training import TrainConfig, cross_validate

    results = {}
    for name in ("iris", "wine", "wbc"):
        dataset = load_named_tabular(name, str(tabular_root))
        for kind in ("real", "complex"):
            started = time.perf_counter()
            run = cross_validate(dataset, TrainConfig(lau_kind=kind))
            results[(name, kind)] = (run, time.perf_counter() - started)
    return results
