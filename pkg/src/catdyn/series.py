"""Columnar time series with deterministic CSV/JSON serialization."""

import json
from dataclasses import dataclass, field

import numpy as np


def fmt(x):
    """17 significant digits; stable text for nan/inf."""
    return format(float(x), ".17g")


@dataclass
class TimeSeries:
    columns: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = {}
        length = None
        for name, vals in self.columns.items():
            arr = np.asarray(vals, dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"column {name!r} is not one-dimensional")
            if length is not None and arr.size != length:
                raise ValueError("time series must be rectangular")
            length = arr.size
            cols[str(name)] = arr
        self.columns = cols

    def __len__(self):
        return next(iter(self.columns.values())).size if self.columns else 0

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        if list(self.columns) != list(other.columns) or self.metadata != other.metadata:
            return False
        return all(np.array_equal(self.columns[k], other.columns[k], equal_nan=True)
                   for k in self.columns)

    def to_csv(self):
        names = list(self.columns)
        lines = [",".join(names)]
        for i in range(len(self)):
            lines.append(",".join(fmt(self.columns[k][i]) for k in names))
        return "\n".join(lines) + "\n"

    def to_json(self):
        doc = {
            "metadata": self.metadata,
            "columns": {k: [fmt(x) for x in v] for k, v in self.columns.items()},
        }
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        cols = {k: np.array([float(x) for x in v]) for k, v in doc["columns"].items()}
        return cls(cols, doc.get("metadata", {}))

    def write(self, path, fmt_name="csv"):
        text = self.to_csv() if fmt_name == "csv" else self.to_json()
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
        return path
