"""Dataset ingestion, lag-window piling and Gaussian sufficient statistics.

Piled rows are lag windows ``(X_{t-q}, ..., X_t)`` stacked across all
replicates; replicate boundaries are kept so dependence-aware statistics
never form lag products across replicates.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed dataset or degenerate statistics."""


class ParseError(DataError):
    """Unparseable dataset file; message carries row/column location."""


@dataclass
class TimeSeriesDataset:
    """m replicate series, each n_j x p, sharing variable names."""

    replicates: list[np.ndarray]
    variable_names: list[str]

    def __post_init__(self):
        if not self.replicates:
            raise DataError("dataset has no replicates")
        p = len(self.variable_names)
        for j, rep in enumerate(self.replicates):
            rep = np.asarray(rep, dtype=float)
            if rep.ndim != 2 or rep.shape[1] != p:
                raise DataError(f"replicate {j} has shape {rep.shape}, expected (*, {p})")
            if not np.all(np.isfinite(rep)):
                raise DataError(f"replicate {j} contains missing or non-finite values")
            self.replicates[j] = rep

    @property
    def m(self) -> int:
        return len(self.replicates)

    @property
    def p(self) -> int:
        return len(self.variable_names)

    @property
    def lengths(self) -> list[int]:
        return [rep.shape[0] for rep in self.replicates]


@dataclass
class PiledMatrix:
    """Row-stacked lag windows with replicate segmentation.

    Column ``(q - l) * p + g`` holds variable g at lag l; segment j holds
    ``n_j - q`` consecutive rows.
    """

    data: np.ndarray
    segment_lengths: list[int]
    p: int
    q: int

    @property
    def N(self) -> int:
        return self.data.shape[0]

    def segments(self) -> list[np.ndarray]:
        out = []
        start = 0
        for n in self.segment_lengths:
            out.append(self.data[start:start + n])
            start += n
        return out


@dataclass
class SufficientStats:
    covariance: np.ndarray
    means: np.ndarray
    N: int


# ---------------------------------------------------------------------------
# piling

def pile(ds: TimeSeriesDataset, q: int) -> PiledMatrix:
    """Stack lag-q windows of every usable replicate into one matrix.

    Replicates shorter than q+1 are excluded with a warning.
    """
    if q < 0:
        raise DataError(f"lag must be non-negative, got {q}")
    p = ds.p
    blocks, seg_lengths = [], []
    for j, rep in enumerate(ds.replicates):
        n = rep.shape[0]
        if n < q + 1:
            warnings.warn(f"replicate {j} has length {n} < q+1 = {q + 1}; excluded",
                          stacklevel=2)
            continue
        cols = [rep[l:n - q + l] for l in range(q + 1)]
        blocks.append(np.hstack(cols))
        seg_lengths.append(n - q)
    if not blocks:
        raise DataError(f"no replicate long enough for lag q={q}")
    return PiledMatrix(np.vstack(blocks), seg_lengths, p=p, q=q)


def _segment_order(pm: PiledMatrix) -> list[int]:
    """Content-keyed segment order so sums are replicate-order invariant."""
    keys = []
    for i, seg in enumerate(pm.segments()):
        keys.append((hashlib.sha256(np.ascontiguousarray(seg).tobytes()).digest(), i))
    keys.sort()
    return [i for _, i in keys]


def sufficient_stats(pm: PiledMatrix, center: bool = True) -> SufficientStats:
    """Mean vector and MLE covariance (divide by N) of the piled matrix.

    Per-segment Gram matrices are accumulated in a content-keyed order so
    the result is bit-identical under replicate reordering.
    """
    N = pm.N
    if center and N < 2:
        raise DataError(f"need at least 2 rows to center, got {N}")
    segs = pm.segments()
    order = _segment_order(pm)
    d = pm.data.shape[1]
    total = np.zeros(d)
    for i in order:
        total += segs[i].sum(axis=0)
    means = total / N
    shift = means if center else np.zeros(d)
    gram = np.zeros((d, d))
    for i in order:
        x = segs[i] - shift
        gram += x.T @ x
    cov = gram / N
    cov = (cov + cov.T) / 2.0
    return SufficientStats(covariance=cov, means=means, N=N)


# ---------------------------------------------------------------------------
# file formats

def _format_value(x: float) -> str:
    return repr(float(x)) if np.isfinite(x) else format(x, ".17g")


def load_dataset(path, format: str | None = None) -> TimeSeriesDataset:
    """Load a dataset from CSV (long format) or JSON."""
    path = str(path)
    if format is None:
        format = "json" if path.endswith(".json") else "csv"
    if format == "csv":
        return _load_csv(path)
    if format == "json":
        return _load_json(path)
    raise ParseError(f"unknown dataset format {format!r}")


def _load_csv(path) -> TimeSeriesDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header[:2] != ["replicate", "time"]:
            raise ParseError(f"{path}: header must start with 'replicate,time', got {header[:2]}")
        names = header[2:]
        if not names:
            raise ParseError(f"{path}: no variable columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            try:
                rep_id = int(row[0])
                t = float(row[1])
                values = [float(c) for c in row[2:]]
            except ValueError as exc:
                bad = next((i for i, c in enumerate(row) if not _is_number(c)), None)
                raise ParseError(f"{path}: row {lineno}, column {bad}: non-numeric cell {row[bad]!r}"
                                 if bad is not None else f"{path}: row {lineno}: {exc}") from None
            rows.append((rep_id, t, values))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    rows.sort(key=lambda r: (r[0], r[1]))
    replicates = []
    current_id, block = None, []
    order = []
    for rep_id, _, values in rows:
        if rep_id != current_id:
            if block:
                replicates.append(np.array(block))
            current_id, block = rep_id, []
            order.append(rep_id)
        block.append(values)
    if block:
        replicates.append(np.array(block))
    return TimeSeriesDataset(replicates=replicates, variable_names=names)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _load_json(path) -> TimeSeriesDataset:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        names = list(doc["variables"])
        reps = [np.array(rep, dtype=float) for rep in doc["replicates"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    return TimeSeriesDataset(replicates=reps, variable_names=names)


def save_dataset_csv(ds: TimeSeriesDataset, path) -> None:
    """Write long-format CSV; finite doubles printed with full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "time"] + list(ds.variable_names))
        for j, rep in enumerate(ds.replicates):
            for t in range(rep.shape[0]):
                writer.writerow([j, t] + [_format_value(x) for x in rep[t]])


def save_dataset_json(ds: TimeSeriesDataset, path) -> None:
    doc = {
        "variables": list(ds.variable_names),
        "replicates": [[[float(x) for x in row] for row in rep] for rep in ds.replicates],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")
