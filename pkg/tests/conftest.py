"""Shared fixtures: small fitted archives built through the real CLI."""
import numpy as np
import pytest

from wombler.archive import write_data_csv
from wombler.cli import main as cli_main


def synth_dataset(path, n=14, seed=5):
    """Small bumpy dataset written as an input CSV; returns (coords, y)."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 5.0, size=(n, 2))
    y = 3.0 * np.sin(coords[:, 0]) + 0.5 * coords[:, 1] + rng.normal(0.0, 0.4, n)
    write_data_csv(path, coords, y)
    return coords, y


@pytest.fixture(scope="session")
def fitted_archive(tmp_path_factory):
    """matern52 archive with theta, z, and beta draws, built via the CLI."""
    root = tmp_path_factory.mktemp("fitted")
    data_csv = root / "data.csv"
    synth_dataset(data_csv)
    arch = root / "archive"
    rc = cli_main(
        [
            "fit",
            "--input",
            str(data_csv),
            "--archive",
            str(arch),
            "--kernel",
            "matern2",
            "--iterations",
            "360",
            "--burn-in",
            "160",
            "--seed",
            "11",
        ]
    )
    assert rc == 0
    assert cli_main(["zbeta", "--archive", str(arch)]) == 0
    return arch


@pytest.fixture(scope="session")
def gradient_only_archive(tmp_path_factory):
    """matern32 archive (no curvature support) with draws, via the CLI."""
    root = tmp_path_factory.mktemp("gradonly")
    data_csv = root / "data.csv"
    synth_dataset(data_csv, n=10, seed=9)
    arch = root / "archive"
    rc = cli_main(
        [
            "fit",
            "--input",
            str(data_csv),
            "--archive",
            str(arch),
            "--kernel",
            "matern1",
            "--iterations",
            "140",
            "--burn-in",
            "60",
            "--seed",
            "4",
        ]
    )
    assert rc == 0
    assert cli_main(["zbeta", "--archive", str(arch)]) == 0
    return arch
