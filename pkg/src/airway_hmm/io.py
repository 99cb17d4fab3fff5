"""Delimited-text matrices and label files, JSON reports, sequence manifests.

Matrices carry a mandatory header ``frame,<label>,...`` with 1-based frame ids.
Floats are written with 17 significant digits so files re-parse exactly.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FRAME_COL = "frame"


class FileFormatError(ValueError):
    """Malformed or dimension-mismatched input file."""


def atomic_write(path: str | os.PathLike[str], text: str) -> Path:
    """Write via a temp file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_matrix(labels: Sequence[str], matrix: np.ndarray, index: Iterable | None = None,
                  index_name: str = FRAME_COL) -> str:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(labels):
        raise FileFormatError(f"matrix shape {matrix.shape} does not match {len(labels)} labels")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([index_name, *labels])
    index = range(1, matrix.shape[0] + 1) if index is None else index
    for idx, row in zip(index, matrix):
        writer.writerow([_fmt(idx) if isinstance(idx, float) else idx, *map(_fmt, row)])
    return buf.getvalue()


def write_matrix(path, labels: Sequence[str], matrix: np.ndarray, **kw) -> Path:
    return atomic_write(path, format_matrix(labels, matrix, **kw))


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FileFormatError(f"{path}: file is empty")
    return rows


def read_matrix(path, labels: Sequence[str] | None = None, allow_inf: bool = False,
                index_name: str = FRAME_COL) -> tuple[list[str], np.ndarray]:
    """Parse a labelled matrix; when ``labels`` is given the header must match it.

    A leading index column (``frame`` by default) is optional and dropped.
    ``allow_inf`` admits ``inf`` entries, as in exported cost matrices.
    """
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    skip = 1 if header and header[0] == index_name else 0
    names = header[skip:]
    if labels is not None and list(names) != list(labels):
        raise FileFormatError(f"{path}: header labels {names} do not match the tree labels {list(labels)}")
    data = np.empty((len(rows) - 1, len(names)), dtype=np.float64)
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FileFormatError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        try:
            data[i - 2] = [float(v) for v in row[skip:]]
        except ValueError:
            raise FileFormatError(f"{path}: row {i} contains a non-numeric entry") from None
    ok = ~np.isnan(data) & (np.isposinf(data) | np.isfinite(data)) if allow_inf else np.isfinite(data)
    if not np.all(ok):
        bad = int(np.flatnonzero(~np.all(ok, axis=1))[0]) + 2
        raise FileFormatError(f"{path}: row {bad} contains a non-finite entry")
    return names, data


def format_labels(columns: dict[str, Sequence[str]]) -> str:
    names = list(columns)
    n = len(next(iter(columns.values())))
    if any(len(v) != n for v in columns.values()):
        raise FileFormatError("label columns differ in length")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([FRAME_COL, *names])
    for i in range(n):
        writer.writerow([i + 1, *(columns[c][i] for c in names)])
    return buf.getvalue()


def write_labels(path, columns: dict[str, Sequence[str]]) -> Path:
    return atomic_write(path, format_labels(columns))


def read_label_columns(path) -> dict[str, list[str]]:
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    cols: dict[str, list[str]] = {h: [] for h in header}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FileFormatError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        for h, v in zip(header, row):
            cols[h].append(v.strip())
    return cols


def read_labels(path, labels: Sequence[str], column: str | None = None,
                prefer: Sequence[str] = ("label", "predicted", "truth")) -> np.ndarray:
    """Read one label column as class indices.

    Without ``column`` the first column from ``prefer`` present in the file is used.
    """
    cols = read_label_columns(path)
    if column is None:
        column = next((c for c in prefer if c in cols), None)
        if column is None:
            raise FileFormatError(f"{path}: none of the columns {list(prefer)} present")
    if column not in cols:
        raise FileFormatError(f"{path}: missing column {column!r}")
    lookup = {name: i for i, name in enumerate(labels)}
    out = np.empty(len(cols[column]), dtype=np.int64)
    for i, name in enumerate(cols[column]):
        if name not in lookup:
            raise FileFormatError(f"{path}: row {i + 2} has unknown label {name!r}")
        out[i] = lookup[name]
    return out


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    likelihoods: Path
    logits: Path | None = None
    truth: Path | None = None


@dataclass(frozen=True)
class SequenceManifest:
    entries: tuple[ManifestEntry, ...]
    tree: str | None = None
    split: str = ""


def load_manifest(path) -> SequenceManifest:
    """Load a JSON manifest ``{tree, split, sequences: [{id, likelihoods, logits?, truth?}]}``.

    Relative paths resolve against the manifest's directory; referenced files must exist.
    """
    path = Path(path)
    doc = read_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("sequences"), list):
        raise FileFormatError(f"{path}: manifest needs a 'sequences' list")
    base = path.parent

    def resolve(p) -> Path:
        q = Path(p)
        q = q if q.is_absolute() else base / q
        if not q.exists():
            raise FileNotFoundError(f"{path}: referenced file {q} does not exist")
        return q

    entries, seen = [], set()
    for i, e in enumerate(doc["sequences"]):
        if not isinstance(e, dict) or "id" not in e or "likelihoods" not in e:
            raise FileFormatError(f"{path}: sequence {i} needs 'id' and 'likelihoods'")
        sid = str(e["id"])
        if sid in seen:
            raise FileFormatError(f"{path}: duplicate sequence id {sid!r}")
        seen.add(sid)
        entries.append(ManifestEntry(
            id=sid,
            likelihoods=resolve(e["likelihoods"]),
            logits=resolve(e["logits"]) if e.get("logits") else None,
            truth=resolve(e["truth"]) if e.get("truth") else None,
        ))
    tree = doc.get("tree")
    if tree is not None and tree != "phantom_tree" and not Path(tree).is_absolute():
        tree = str(base / tree)
    return SequenceManifest(entries=tuple(entries), tree=tree, split=str(doc.get("split", "")))


def write_manifest(path, manifest: SequenceManifest) -> Path:
    base = Path(path).parent

    def rel(p: Path | None):
        if p is None:
            return None
        try:
            return os.path.relpath(p, base)
        except ValueError:
            return str(p)

    doc = {
        "tree": manifest.tree,
        "split": manifest.split,
        "sequences": [
            {k: v for k, v in {"id": e.id, "likelihoods": rel(e.likelihoods), "logits": rel(e.logits),
                               "truth": rel(e.truth)}.items() if v is not None}
            for e in manifest.entries
        ],
    }
    return write_json(path, doc)
