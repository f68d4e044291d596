"""CSV ingestion and emission, with atomic file writes."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ParseError, SchemaError

__all__ = [
    "atomic_write_text",
    "load_csv",
    "save_csv",
    "dataset_to_csv",
    "load_predictions",
    "format_float",
    "write_table",
]


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary sibling file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def format_float(x) -> str:
    """Shortest text that parses back to the same double; empty for None."""
    if x is None:
        return ""
    return repr(float(x))


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except FileNotFoundError:
        raise SchemaError(f"input file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc.reason})") from None


def _check_header(path, header):
    if not header:
        raise SchemaError(f"{path}: missing header row")
    seen = set()
    for name in header:
        if name in seen:
            raise SchemaError(f"{path}: duplicate column name {name!r}")
        seen.add(name)


def _parse_cell(path, text, line, column) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{path}: line {line}, column {column!r}: not a number: {text!r}",
                         row=line, column=column) from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: line {line}, column {column!r}: non-finite value {text!r}",
                         row=line, column=column)
    return v


def load_csv(path, label_column: str, class_names=None, feature_columns=None) -> Dataset:
    """Read a headed CSV into a :class:`Dataset`.

    Every column except ``label_column`` is a feature unless
    ``feature_columns`` narrows the selection. Labels become dense ids in
    order of first appearance, or follow ``class_names`` when it is given.
    Parse errors carry the 1-based file line and the column name.
    """
    rows = _read_rows(path)
    if not rows:
        raise SchemaError(f"{path}: missing header row")
    header, body = rows[0], rows[1:]
    _check_header(path, header)
    if label_column not in header:
        raise SchemaError(f"{path}: label column {label_column!r} not found")
    if feature_columns is None:
        feature_columns = [h for h in header if h != label_column]
    else:
        feature_columns = list(feature_columns)
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: columns not found: {missing}")
    if not feature_columns:
        raise SchemaError(f"{path}: no feature columns")
    if not body:
        raise SchemaError(f"{path}: no data rows")
    li = header.index(label_column)
    fi = [header.index(c) for c in feature_columns]
    registry = {} if class_names is None else {str(c): i for i, c in enumerate(class_names)}
    X = np.empty((len(body), len(fi)))
    y = np.empty(len(body), dtype=np.intp)
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise ParseError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}",
                             row=line)
        label = row[li]
        if label not in registry:
            if class_names is not None:
                raise ParseError(f"{path}: line {line}: label {label!r} not among the declared classes",
                                 row=line, column=label_column)
            registry[label] = len(registry)
        y[r] = registry[label]
        for k, j in enumerate(fi):
            X[r, k] = _parse_cell(path, row[j], line, header[j])
    names = list(registry) if class_names is None else [str(c) for c in class_names]
    if len(names) < 2:
        raise SchemaError(f"{path}: need at least two classes, found {names}")
    return Dataset(X, y, tuple(feature_columns), tuple(names))


def dataset_to_csv(d: Dataset, label_column: str = "label") -> str:
    if label_column in d.feature_names:
        raise SchemaError(f"label column {label_column!r} clashes with a feature name")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(d.feature_names) + [label_column])
    for x, lab in zip(d.features, d.labels):
        w.writerow([repr(float(v)) for v in x] + [d.class_names[lab]])
    return buf.getvalue()


def save_csv(d: Dataset, path, label_column: str = "label") -> None:
    """Write ``d`` with round-trip-exact floats and class names as labels."""
    atomic_write_text(path, dataset_to_csv(d, label_column))


def load_predictions(path, true_column: str = "true", predicted_column: str = "predicted",
                     class_names=None):
    """Read paired labels; returns ``(true_ids, predicted_ids, class_names)``.

    Without ``class_names`` the registry is built in order of first
    appearance, scanning the true column before the predicted one.
    """
    rows = _read_rows(path)
    if not rows:
        raise SchemaError(f"{path}: missing header row")
    header, body = rows[0], rows[1:]
    _check_header(path, header)
    for c in (true_column, predicted_column):
        if c not in header:
            raise SchemaError(f"{path}: column {c!r} not found")
    ti, pi = header.index(true_column), header.index(predicted_column)
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"{path}: line {r + 2} has {len(row)} fields, header has {len(header)}",
                             row=r + 2)
    if class_names is None:
        names = list(dict.fromkeys([row[ti] for row in body] + [row[pi] for row in body]))
    else:
        names = [str(c) for c in class_names]
    index = {c: i for i, c in enumerate(names)}
    out = []
    for col, ci in ((true_column, ti), (predicted_column, pi)):
        ids = []
        for r, row in enumerate(body):
            if row[ci] not in index:
                raise ParseError(f"{path}: line {r + 2}: unknown class {row[ci]!r}", row=r + 2, column=col)
            ids.append(index[row[ci]])
        out.append(np.array(ids, dtype=np.intp))
    return out[0], out[1], tuple(names)


def write_table(path, header, rows) -> None:
    """Atomically write a CSV table; float cells use :func:`format_float`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, float) or v is None else v for v in row])
    atomic_write_text(path, buf.getvalue())
