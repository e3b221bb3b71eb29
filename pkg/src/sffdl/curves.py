"""Sampled curves and their CSV/JSON serialization."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class Curve:
    """A function of time, optionally with extra index axes.

    ``values`` has the time axis first. For matrix-valued curves such as
    ``C_mn(t)`` the remaining axes are labelled by ``index_names`` and
    enumerated by ``index_values``.
    """

    times: np.ndarray
    values: np.ndarray
    n_realizations: int = 1
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    index_names: tuple[str, ...] = ()
    index_values: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.times.ndim != 1 or self.values.shape[0] != self.times.size:
            raise ValueError("values must have the time axis first")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr shape must match values")
        if len(self.index_names) != self.values.ndim - 1:
            raise ValueError("need one index name per non-time axis")
        if not self.index_values:
            self.index_values = tuple(np.arange(n) for n in self.values.shape[1:])

    def __len__(self):
        return self.times.size

    def window(self, t_lo: float, t_hi: float) -> "Curve":
        keep = (self.times >= t_lo) & (self.times <= t_hi)
        return Curve(
            self.times[keep],
            self.values[keep],
            self.n_realizations,
            None if self.stderr is None else self.stderr[keep],
            dict(self.metadata),
            self.index_names,
            self.index_values,
        )

    # --- serialization -------------------------------------------------

    def to_csv(self, path, value_name: str = "value") -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = ["t", *self.index_names, value_name]
        if self.stderr is not None:
            header.append(f"{value_name}_stderr")
        with path.open("w", newline="") as fh:
            fh.write(f"# schema={SCHEMA_VERSION}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for idx in np.ndindex(self.values.shape):
                row = [_fmt(self.times[idx[0]])]
                row += [_fmt(self.index_values[a][i]) for a, i in enumerate(idx[1:])]
                row.append(_fmt(self.values[idx]))
                if self.stderr is not None:
                    row.append(_fmt(self.stderr[idx]))
                writer.writerow(row)
        return path

    def sidecar(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "n_realizations": int(self.n_realizations),
            "n_times": int(self.times.size),
            "index_names": list(self.index_names),
            **_jsonable(self.metadata),
        }

    def write(self, stem, value_name: str = "value") -> tuple[Path, Path]:
        """Write ``<stem>.csv`` plus a ``<stem>.json`` sidecar."""
        # append rather than with_suffix: stems like "lam0.1" contain dots
        stem = str(stem)
        csv_path = self.to_csv(Path(stem + ".csv"), value_name)
        json_path = Path(stem + ".json")
        json_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True))
        return csv_path, json_path

    @classmethod
    def from_csv(cls, path) -> "Curve":
        """Read a curve written by :meth:`to_csv` (metadata is not restored)."""
        path = Path(path)
        with path.open() as fh:
            first = fh.readline()
            if not first.startswith("# schema="):
                raise ValueError(f"{path}: missing schema line")
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        has_err = header[-1].endswith("_stderr")
        n_idx = len(header) - (3 if has_err else 2)
        times = np.unique(body[:, 0])
        index_values = tuple(np.unique(body[:, 1 + a]) for a in range(n_idx))
        shape = (times.size, *(v.size for v in index_values))
        vcol = 1 + n_idx
        values = body[:, vcol].reshape(shape)
        stderr = body[:, vcol + 1].reshape(shape) if has_err else None
        return cls(times, values, 1, stderr, {}, tuple(header[1 : 1 + n_idx]), index_values)


def _fmt(x) -> str:
    x = float(x)
    if math.isinf(x) or math.isnan(x):
        return repr(x)
    return repr(x) if x != int(x) or abs(x) >= 1e15 else str(int(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None  # strict JSON has no NaN/inf
    if hasattr(obj, "__dataclass_fields__"):
        from dataclasses import asdict

        return _jsonable(asdict(obj))
    return obj


def log_times(t_min: float, t_max: float, points_per_decade: int = 400) -> np.ndarray:
    """Logarithmically spaced time grid."""
    n = max(2, int(round(np.log10(t_max / t_min) * points_per_decade)) + 1)
    return np.geomspace(t_min, t_max, n)


def mean_and_stderr(total, total_sq, n: int):
    """Sample mean and standard error of the mean from running sums."""
    mean = np.asarray(total) / n
    if n < 2:
        return mean, np.zeros_like(mean, dtype=float)
    var = np.maximum(np.asarray(total_sq) / n - np.abs(mean) ** 2, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)
