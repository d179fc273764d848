"""Text file formats for observations, matrices, traces and run manifests.

Observation file::

    tensor3 n1 n2 n3 nnz
    i1 i2 i3 value        (nnz lines, 1-based indices)

Matrix file::

    matrix rows cols
    v11 v12 ... v1c       (rows lines)

Values are written with 17 significant digits so that a write/read round
trip reproduces every float64 exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .observations import ObservationSet

__all__ = [
    "FormatError",
    "read_observations",
    "write_observations",
    "read_matrix",
    "write_matrix",
    "TRACE_COLUMNS",
    "TraceWriter",
    "write_trace",
    "read_trace",
    "RunManifest",
    "file_digest",
]

TRACE_COLUMNS = ("iter", "seconds", "cost", "grad_norm_sq", "step", "beta", "train_rmse", "test_rmse")


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""

    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if text:
                yield lineno, text.split()


def _header(path, it, keyword, n_fields):
    try:
        lineno, tok = next(it)
    except StopIteration:
        raise FormatError(path, 1, "empty file") from None
    if tok[0] != keyword or len(tok) != n_fields + 1:
        raise FormatError(path, lineno, f"expected header '{keyword}' with {n_fields} sizes")
    try:
        sizes = [int(t) for t in tok[1:]]
    except ValueError:
        raise FormatError(path, lineno, "header sizes must be integers") from None
    if any(s < 0 for s in sizes):
        raise FormatError(path, lineno, "header sizes must be non-negative")
    return lineno, sizes


def _float(path, lineno, text):
    try:
        v = float(text)
    except ValueError:
        raise FormatError(path, lineno, f"not a number: {text!r}") from None
    if not np.isfinite(v):
        raise FormatError(path, lineno, f"non-finite value {text!r}")
    return v


def read_observations(path):
    """Parse an observation file into an :class:`ObservationSet` (0-based indices)."""
    it = _lines(path)
    hline, (n1, n2, n3, nnz) = _header(path, it, "tensor3", 4)
    dims = (n1, n2, n3)
    if min(dims) < 1:
        raise FormatError(path, hline, "dimensions must be positive")
    idx = np.empty((nnz, 3), dtype=np.int64)
    vals = np.empty(nnz)
    seen = {}
    count = 0
    for lineno, tok in it:
        if count == nnz:
            raise FormatError(path, lineno, f"more than {nnz} entries")
        if len(tok) != 4:
            raise FormatError(path, lineno, "expected 'i1 i2 i3 value'")
        try:
            ijk = tuple(int(t) for t in tok[:3])
        except ValueError:
            raise FormatError(path, lineno, "indices must be integers") from None
        for k, (i, n) in enumerate(zip(ijk, dims)):
            if not 1 <= i <= n:
                raise FormatError(path, lineno, f"index {i} out of range 1..{n} in mode {k + 1}")
        if ijk in seen:
            raise FormatError(path, lineno, f"duplicate index {ijk} (first on line {seen[ijk]})")
        seen[ijk] = lineno
        idx[count] = np.array(ijk) - 1
        vals[count] = _float(path, lineno, tok[3])
        count += 1
    if count != nnz:
        raise FormatError(path, hline, f"header announces {nnz} entries, found {count}")
    return ObservationSet(dims, idx, vals)


def write_observations(path, obs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tensor3 {} {} {} {}\n".format(*obs.dims, len(obs)))
        for (i, j, k), v in zip(obs.indices + 1, obs.values):
            fh.write(f"{i} {j} {k} {v:.17g}\n")


def read_matrix(path):
    it = _lines(path)
    hline, (rows, cols) = _header(path, it, "matrix", 2)
    M = np.empty((rows, cols))
    r = 0
    for lineno, tok in it:
        if r == rows:
            raise FormatError(path, lineno, f"more than {rows} rows")
        if len(tok) != cols:
            raise FormatError(path, lineno, f"expected {cols} values, found {len(tok)}")
        M[r] = [_float(path, lineno, t) for t in tok]
        r += 1
    if r != rows:
        raise FormatError(path, hline, f"header announces {rows} rows, found {r}")
    return M


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"matrix {M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _trace_row(tr):
    row = [tr.iter] + [f"{getattr(tr, c):.17g}" for c in TRACE_COLUMNS[1:-1]]
    row.append("" if tr.test_rmse is None else f"{tr.test_rmse:.17g}")
    return row


class TraceWriter:
    """Streaming CSV sink for :class:`solver.IterTrace` records."""

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(TRACE_COLUMNS)

    def __call__(self, tr):
        self._w.writerow(_trace_row(tr))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_trace(path, trace):
    with TraceWriter(path) as w:
        for tr in trace:
            w(tr)


def read_trace(path):
    """Read a trace CSV back as a list of :class:`solver.IterTrace`."""
    from .solver import IterTrace

    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise FormatError(path, 1, "unexpected trace header")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRACE_COLUMNS):
            raise FormatError(path, lineno, "wrong number of columns")
        test = float(row[-1]) if row[-1] else None
        out.append(IterTrace(int(row[0]), *(float(v) for v in row[1:-1]), test))
    return out


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to repeat a command-line run."""

    command: str
    config: dict
    seed: int | None = None
    inputs: dict = field(default_factory=dict)
    version: str = ""

    def add_input(self, name, path):
        self.inputs[name] = {"path": str(path), "sha256": file_digest(path)}

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))
