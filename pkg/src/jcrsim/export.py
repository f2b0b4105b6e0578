"""Artifact writers: CSV tables, 16-bit PGM images, JSON metrics and the manifest."""

from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

SCHEMA_VERSION = 1
FORMATS = ("csv", "pgm", "json")
PGM_MAXVAL = 65535


@dataclass(frozen=True, eq=False)
class Table:
    columns: tuple
    rows: np.ndarray


@dataclass(frozen=True, eq=False)
class Image:
    """dB image (rows follow ``row_axis``) with the display range used for PGM mapping."""

    pixels_db: np.ndarray
    row_axis: np.ndarray
    col_axis: np.ndarray
    row_label: str
    col_label: str
    dynamic_range_db: float


@dataclass(eq=False)
class ResultBundle:
    name: str
    experiment: str
    seed: int
    scenario: dict
    metrics: dict
    tables: dict = field(default_factory=dict)
    images: dict = field(default_factory=dict)
    wall_time_s: float = 0.0


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def json_bytes(obj) -> bytes:
    return (json.dumps(clean(obj), indent=2, sort_keys=True) + "\n").encode("utf-8")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".12g")


def csv_bytes(table: Table) -> bytes:
    lines = [",".join(table.columns)]
    rows = np.atleast_2d(table.rows)
    if rows.size and rows.shape[1] != len(table.columns):
        raise ConfigError(f"table has {rows.shape[1]} columns, header lists {len(table.columns)}")
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode("ascii")


def pgm_levels(pixels_db: np.ndarray, dynamic_range_db: float) -> np.ndarray:
    """Map ``[-dynamic_range_db, 0]`` dB linearly onto ``[0, 65535]``."""
    scaled = (np.asarray(pixels_db, dtype=float) + dynamic_range_db) / dynamic_range_db
    scaled = np.nan_to_num(scaled, nan=0.0, posinf=1.0, neginf=0.0)
    return np.rint(np.clip(scaled, 0.0, 1.0) * PGM_MAXVAL).astype(">u2")


def pgm_bytes(image: Image) -> bytes:
    levels = pgm_levels(image.pixels_db, image.dynamic_range_db)
    h, w = levels.shape
    return f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode("ascii") + levels.tobytes()


def axes_bytes(image: Image) -> bytes:
    return json_bytes({
        "schema_version": SCHEMA_VERSION,
        "rows": {"label": image.row_label, "values": image.row_axis},
        "cols": {"label": image.col_label, "values": image.col_axis},
        "mapping": {
            "unit": "dB relative to image peak",
            "db_at_zero": -image.dynamic_range_db,
            "db_at_maxval": 0.0,
            "maxval": PGM_MAXVAL,
            "byte_order": "big-endian",
        },
    })


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, parts[1].split())
    maxval = int(parts[2])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[3], dtype=dtype).reshape(h, w)


def render(bundle: ResultBundle, formats=FORMATS) -> dict[str, bytes]:
    """File name -> content for the requested formats (manifest excluded)."""
    formats = set(formats)
    bad = formats - set(FORMATS)
    if bad:
        raise ConfigError(f"unknown export format(s) {sorted(bad)}; choose from {FORMATS}")
    files = {}
    if "json" in formats:
        files["metrics.json"] = json_bytes({
            "schema_version": SCHEMA_VERSION,
            "scenario": bundle.name,
            "experiment": bundle.experiment,
            "seed": bundle.seed,
            "metrics": bundle.metrics,
        })
    if "csv" in formats:
        for name, table in bundle.tables.items():
            files[f"{name}.csv"] = csv_bytes(table)
    if "pgm" in formats:
        for name, image in bundle.images.items():
            files[f"{name}.pgm"] = pgm_bytes(image)
            files[f"{name}.axes.json"] = axes_bytes(image)
    return files


def export_artifacts(bundle: ResultBundle, out_dir, formats=FORMATS) -> Path:
    """Write artifacts then the manifest; the directory appears only when complete."""
    from . import __version__

    out_dir = Path(out_dir)
    files = render(bundle, formats)
    parent = out_dir.parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.partial-", dir=parent))
    except OSError as exc:
        raise ConfigError(f"output directory {parent} is not writable: {exc.strerror}") from None
    try:
        entries = []
        for fname in sorted(files):
            content = files[fname]
            (tmp / fname).write_bytes(content)
            entries.append({"file": fname, "bytes": len(content),
                            "sha256": hashlib.sha256(content).hexdigest()})
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "scenario": bundle.scenario,
            "name": bundle.name,
            "seed": bundle.seed,
            "version": __version__,
            "wall_time_s": round(bundle.wall_time_s, 3),
            "artifacts": entries,
        }
        (tmp / "manifest.json").write_bytes(json_bytes(manifest))
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out_dir


def verify_manifest(out_dir) -> list[str]:
    """Names of listed artifacts that are missing or fail their checksum."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    bad = []
    for entry in manifest["artifacts"]:
        p = out_dir / entry["file"]
        if not p.is_file() or hashlib.sha256(p.read_bytes()).hexdigest() != entry["sha256"]:
            bad.append(entry["file"])
    return bad
