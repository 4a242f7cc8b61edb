"""CSV / JSON persistence.

CSV files use ``,`` and ``\\n`` with shortest round-trip float formatting, so a
value read back with ``float()`` is bit-identical to the one written.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .model import Dataset, GeneratorSpec, PpcaParams


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` (dicts or sequences) under ``header``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            values = [row.get(h) for h in header] if isinstance(row, dict) else row
            out.writerow([fmt(v) for v in values])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def metadata_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_dataset(ds: Dataset, path) -> tuple[Path, Path]:
    """Dataset CSV (header ``x0..x{p-1}``) plus a sidecar metadata JSON."""
    path = Path(path)
    header = [f"x{j}" for j in range(ds.p)]
    write_csv(path, header, ds.rows.tolist())
    meta = {
        "n": ds.n,
        "p": ds.p,
        "seed": ds.seed,
        "generator": ds.generator.to_dict(),
        "truth": ds.truth.to_dict() if ds.truth is not None else None,
    }
    return path, write_json(metadata_path(path), meta)


def read_dataset(path) -> Dataset:
    header, body = read_csv(path)
    expected = [f"x{j}" for j in range(len(header))]
    if header != expected:
        raise InvalidInputError(f"{path}: header must be x0..x{len(header) - 1}, got {header}")
    try:
        rows = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric entry ({exc})") from exc
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise InvalidInputError(f"{path}: no observations")
    meta_file = metadata_path(path)
    generator, seed, truth = GeneratorSpec(), None, None
    if meta_file.exists():
        meta = json.loads(meta_file.read_text())
        generator = GeneratorSpec.from_dict(meta.get("generator", "iid"))
        seed = meta.get("seed")
        if meta.get("truth"):
            truth = PpcaParams.from_dict(meta["truth"])
    return Dataset(rows, generator, seed, truth)


def read_params(path) -> PpcaParams:
    """Parameter JSON: ``{"w": ..., "sigma2": ...}`` or a FitResult with ``theta_hat``."""
    d = json.loads(Path(path).read_text())
    if "theta_hat" in d:
        d = d["theta_hat"]
    return PpcaParams.from_dict(d)
