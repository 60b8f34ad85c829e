"""Data ingestion, run configuration, and report/manifest writing.

CSV layout for datasets: covariate columns first (any names), then either
exact/bracket endpoints in ``y_lower``/``y_upper`` or a single ``band_code``
column translated through a :class:`BracketMap`.  Open-ended top bands must
carry a finite top-code in the map, so every ingested bracket is finite.
"""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Dataset

__all__ = [
    "BracketMap",
    "ConfigError",
    "DataError",
    "ingest_csv",
    "dataset_to_csv",
    "build_manifest",
]


class ConfigError(ValueError):
    """Invalid run configuration; CLI exit code 1."""


class DataError(ValueError):
    """Invalid input data; CLI exit code 2."""


@dataclass(frozen=True)
class BracketMap:
    """Ordered band codes with their (finite) numeric bounds.

    Bands must be monotone and non-overlapping; a shared boundary between
    adjacent bands is allowed.  The open-ended top band is represented by its
    top-code upper bound.
    """

    bands: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        if not self.bands:
            raise ConfigError("bracket map needs at least one band")
        seen = set()
        prev_upper = None
        for code, lower, upper in self.bands:
            if code in seen:
                raise ConfigError(f"duplicate band code {code!r}")
            seen.add(code)
            if not (np.isfinite(lower) and np.isfinite(upper)):
                raise ConfigError(
                    f"band {code!r} has non-finite bounds; map open bands to a top-code"
                )
            if lower > upper:
                raise ConfigError(f"band {code!r} has lower > upper")
            if prev_upper is not None and lower < prev_upper:
                raise ConfigError(f"band {code!r} overlaps its predecessor")
            prev_upper = upper

    @classmethod
    def from_json(cls, obj: dict) -> "BracketMap":
        try:
            bands = tuple(
                (str(b["code"]), float(b["lower"]), float(b["upper"]))
                for b in obj["bands"]
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed bracket map: {exc}") from exc
        return cls(bands)

    def to_json(self) -> dict:
        return {
            "bands": [
                {"code": c, "lower": lo, "upper": hi} for c, lo, hi in self.bands
            ]
        }

    def lookup(self, code: str) -> tuple[float, float]:
        for c, lo, hi in self.bands:
            if c == code:
                return lo, hi
        raise KeyError(code)


def ingest_csv(path, bracket_map: BracketMap | None = None) -> Dataset:
    """Read a dataset CSV, mapping band codes through ``bracket_map`` if given.

    Exact outcomes arrive as zero-width brackets (equal ``y_lower`` and
    ``y_upper``).  Malformed rows are rejected with their 1-based data row
    number.
    """
    try:
        # round_trip parsing so repr-precision CSVs reproduce floats exactly
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if frame.shape[0] == 0:
        raise DataError(f"{path}: no data rows")

    if "band_code" in frame.columns:
        if bracket_map is None:
            raise DataError(f"{path}: band_code column present but no bracket map given")
        covars = [c for c in frame.columns if c != "band_code"]
        codes = frame["band_code"].astype(str)
        known = {c for c, _, _ in bracket_map.bands}
        bad = ~codes.isin(known)
        if bad.any():
            row = int(np.argmax(bad.to_numpy()))
            raise DataError(
                f"{path}: unknown band code {codes.iloc[row]!r} at data row {row + 1}"
            )
        bounds = np.array([bracket_map.lookup(c) for c in codes])
        y_lo, y_hi = bounds[:, 0], bounds[:, 1]
    elif {"y_lower", "y_upper"} <= set(frame.columns):
        covars = [c for c in frame.columns if c not in ("y_lower", "y_upper")]
        y_lo = frame["y_lower"].to_numpy(dtype=float)
        y_hi = frame["y_upper"].to_numpy(dtype=float)
        bad = ~(np.isfinite(y_lo) & np.isfinite(y_hi)) | (y_lo > y_hi)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(
                f"{path}: invalid bracket (y_lower, y_upper) = "
                f"({y_lo[row]!r}, {y_hi[row]!r}) at data row {row + 1}"
            )
    else:
        raise DataError(
            f"{path}: expected either y_lower/y_upper columns or a band_code column"
        )

    if not covars:
        raise DataError(f"{path}: no covariate columns found")
    try:
        x = frame[covars].to_numpy(dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric covariates: {exc}") from exc
    if not np.isfinite(x).all():
        row = int(np.argmax(~np.isfinite(x).all(axis=1)))
        raise DataError(f"{path}: non-finite covariate at data row {row + 1}")
    return Dataset(x, y_lo, y_hi)


def dataset_to_csv(data: Dataset, path) -> None:
    """Write a dataset with repr-precision floats (lossless round trip)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(data.dim)] + ["y_lower", "y_upper"])
        for i in range(data.n):
            writer.writerow(
                [repr(float(v)) for v in data.x[i]]
                + [repr(float(data.y_lo[i])), repr(float(data.y_hi[i]))]
            )


def build_manifest(command: str, config: dict) -> dict:
    """Everything needed to reproduce a run bit-for-bit: config plus versions."""
    import scipy

    from . import __version__

    return {
        "command": command,
        "config": config,
        "versions": {
            "bracketset": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
    }


def write_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
