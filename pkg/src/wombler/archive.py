"""Durable on-disk state shared by the pipeline subcommands.

One archive directory carries a fitted model between invocations: the input
data, the retained covariance-parameter chain, its summaries, and (after the
composition-sampling step) the latent-field and trend draws. Files are plain
CSV and JSON written with round-trip float formatting and no timestamps, so
rerunning a step with the same seed and inputs reproduces every byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .model import FitResult, PosteriorDraws, SpatialDataset

MANIFEST_FILE = "manifest.json"
DATA_FILE = "data.csv"
THETA_FILE = "theta.csv"
SUMMARY_FILE = "summaries.json"
Z_FILE = "z.csv"
BETA_FILE = "beta.csv"

DATA_COLUMNS = ("x", "y", "val")
CURVE_COLUMNS = ("x", "y")


class ArchiveError(RuntimeError):
    """A required archive file is absent, malformed, or inconsistent."""


def fmt(value) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(value))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(obj) -> str:
    return sha256_bytes(canonical_json(obj).encode())


def jsonable(obj):
    """Recursively convert numpy containers/scalars; non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if math.isfinite(val) else None
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"
    )


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return fmt(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(c) for c in row])


def _read_table(path, columns) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ArchiveError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header] != list(columns):
            raise ArchiveError(
                f"{path}: expected header with columns {','.join(columns)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(columns):
                raise ArchiveError(
                    f"{path}: line {lineno}: expected {len(columns)} columns "
                    f"({','.join(columns)}), got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ArchiveError(
                    f"{path}: line {lineno}: could not parse numbers from {row!r}"
                ) from None
    if not rows:
        raise ArchiveError(f"{path}: no data rows")
    return np.array(rows)


def read_data_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an input CSV with header x,y,val; errors report line numbers."""
    table = _read_table(path, DATA_COLUMNS)
    return table[:, :2], table[:, 2]


def write_data_csv(path, coords, y) -> None:
    coords = np.asarray(coords, dtype=float)
    y = np.asarray(y, dtype=float)
    write_csv(
        path, DATA_COLUMNS, ((c[0], c[1], v) for c, v in zip(coords, y))
    )


def read_curve_csv(path) -> np.ndarray:
    """Read ordered curve vertices from a CSV with header x,y."""
    return _read_table(path, CURVE_COLUMNS)


def write_curve_csv(path, points) -> None:
    points = np.asarray(points, dtype=float)
    write_csv(path, CURVE_COLUMNS, points)


def save_fit(archive_dir, data: SpatialDataset, fit: FitResult, input_digest: str) -> Path:
    """Create a model archive: data copy, theta chain, summaries, manifest."""
    root = Path(archive_dir)
    root.mkdir(parents=True, exist_ok=True)
    write_data_csv(root / DATA_FILE, data.coords, data.y)
    write_csv(
        root / THETA_FILE,
        ("iter", "sigma2", "phi", "tau2"),
        ((i + 1, row[0], row[1], row[2]) for i, row in enumerate(fit.chain)),
    )
    write_json(
        root / SUMMARY_FILE,
        {"params": fit.summaries, "accept_rates": fit.accept_rates},
    )
    config = asdict(fit.config)
    manifest = {
        "format": 1,
        "family": fit.family,
        "seed": fit.config.seed,
        "config": config,
        "config_digest": config_digest({"family": fit.family, "config": config}),
        "inputs": {
            "source": input_digest,
            DATA_FILE: sha256_file(root / DATA_FILE),
        },
    }
    write_json(root / MANIFEST_FILE, manifest)
    return root


def load_manifest(archive_dir) -> dict:
    path = Path(archive_dir) / MANIFEST_FILE
    if not path.exists():
        raise ArchiveError(
            f"{archive_dir}: not a model archive (missing {MANIFEST_FILE}); "
            "run the fit step first"
        )
    return load_json(path)


def load_data(archive_dir) -> SpatialDataset:
    coords, y = read_data_csv(Path(archive_dir) / DATA_FILE)
    return SpatialDataset(coords, y)


def load_chain(archive_dir) -> np.ndarray:
    path = Path(archive_dir) / THETA_FILE
    if not path.exists():
        raise ArchiveError(
            f"{archive_dir}: missing {THETA_FILE}; run the fit step first"
        )
    table = _read_table(path, ("iter", "sigma2", "phi", "tau2"))
    return table[:, 1:]


def load_summaries(archive_dir) -> dict:
    path = Path(archive_dir) / SUMMARY_FILE
    if not path.exists():
        raise ArchiveError(
            f"{archive_dir}: missing {SUMMARY_FILE}; run the fit step first"
        )
    return load_json(path)


def save_draws(archive_dir, draws: PosteriorDraws) -> None:
    root = Path(archive_dir)
    n = draws.z.shape[1]
    p = draws.beta.shape[1]
    write_csv(
        root / Z_FILE, [f"z_{i + 1}" for i in range(n)], draws.z
    )
    write_csv(
        root / BETA_FILE, [f"beta_{j}" for j in range(p)], draws.beta
    )


def load_draws(archive_dir) -> PosteriorDraws:
    """Load aligned (theta, z, beta) draws; names the step to run if absent."""
    root = Path(archive_dir)
    chain = load_chain(root)
    for name in (Z_FILE, BETA_FILE):
        if not (root / name).exists():
            raise ArchiveError(
                f"{archive_dir}: missing {name}; run the zbeta step first"
            )
    z = _read_z(root / Z_FILE)
    beta = _read_z(root / BETA_FILE)
    if z.shape[0] != chain.shape[0] or beta.shape[0] != chain.shape[0]:
        raise ArchiveError(
            f"{archive_dir}: draw files are misaligned with {THETA_FILE} "
            f"({chain.shape[0]} theta rows, {z.shape[0]} z rows, "
            f"{beta.shape[0]} beta rows); rerun the zbeta step"
        )
    manifest = load_manifest(root)
    return PosteriorDraws(
        theta=chain,
        z=z,
        beta=beta,
        meta={"family": manifest["family"], "seed": manifest["seed"]},
    )


def _read_z(path) -> np.ndarray:
    """Read a draws matrix CSV whose header just labels the columns."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ArchiveError(f"{path}: empty file")
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise ArchiveError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ArchiveError(
                    f"{path}: line {lineno}: could not parse numbers from {row!r}"
                ) from None
    if not rows:
        raise ArchiveError(f"{path}: no data rows")
    return np.array(rows)


def has_draws(archive_dir) -> bool:
    root = Path(archive_dir)
    return (root / Z_FILE).exists() and (root / BETA_FILE).exists()


def write_out_manifest(out_dir, command: str, seed: int, config: dict, inputs: dict) -> None:
    """Manifest for a derived-output directory: seed, config digest, input digests."""
    payload = {
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": inputs,
    }
    payload["config_digest"] = config_digest(
        {"command": command, "seed": seed, "config": config}
    )
    write_json(Path(out_dir) / MANIFEST_FILE, payload)
