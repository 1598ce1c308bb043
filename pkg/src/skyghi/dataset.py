"""Manifest and feature-matrix CSV files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import IoFailure, MalformedRow, MissingHeader

MANIFEST_HEADER = ["path", "ghi", "label"]
LABEL_CODES = {"clear": 0, "cloudy": 1}
NO_LABEL = -1


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    ghi: float | None = None
    label: str | None = None


def _open(path, mode):
    try:
        return open(path, mode, newline="")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _parse_ghi(text, line):
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line, f"ghi {text!r} is not a number") from None
    if not math.isfinite(value) or value < 0:
        raise MalformedRow(line, f"ghi {text!r} must be a finite non-negative number")
    return value


def _parse_label(text, line):
    if text == "":
        return None
    if text not in LABEL_CODES:
        raise MalformedRow(line, f"label {text!r} is neither 'clear' nor 'cloudy'")
    return text


def read_manifest(path) -> list[ManifestRecord]:
    """Parse a ``path,ghi,label`` manifest; empty ghi/label fields are allowed."""
    with _open(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MANIFEST_HEADER:
            raise MissingHeader(f"{path}: first row must be 'path,ghi,label'")
        records = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(line, f"expected 3 fields, got {len(row)}")
            p, ghi, label = (f.strip() for f in row)
            if not p:
                raise MalformedRow(line, "empty image path")
            records.append(ManifestRecord(p, _parse_ghi(ghi, line), _parse_label(label, line)))
    return records


def write_manifest(path, records) -> None:
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in records:
            w.writerow([r.image_path, "" if r.ghi is None else repr(float(r.ghi)), r.label or ""])


def feature_header(k: int) -> list[str]:
    return [f"pcnp{i}" for i in range(k)] + ["ghi", "label"]


def write_features(path, counts, ghi=None, labels=None) -> None:
    """Write integer PCNP rows with optional ghi / label passthrough columns."""
    counts = np.asarray(counts, dtype=np.int64)
    n, k = counts.shape
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(feature_header(k))
        for i in range(n):
            g = "" if ghi is None or ghi[i] is None else repr(float(ghi[i]))
            lab = "" if labels is None or labels[i] is None else labels[i]
            w.writerow([str(int(c)) for c in counts[i]] + [g, lab])


@dataclass
class FeatureTable:
    counts: np.ndarray   # (n, k) float64
    ghi: np.ndarray      # (n,) float64, NaN where missing
    labels: np.ndarray   # (n,) int64, -1 where missing

    @property
    def k(self) -> int:
        return self.counts.shape[1]

    def __len__(self):
        return len(self.counts)


def read_features(path) -> FeatureTable:
    with _open(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-2:] != ["ghi", "label"] or not all(
                h == f"pcnp{i}" for i, h in enumerate(header[:-2])) or len(header) < 3:
            raise MissingHeader(f"{path}: expected header pcnp0,...,pcnp<k-1>,ghi,label")
        k = len(header) - 2
        rows, ghi, labels = [], [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != k + 2:
                raise MalformedRow(line, f"expected {k + 2} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[:k]])
            except ValueError:
                raise MalformedRow(line, "non-numeric PCNP value") from None
            g = _parse_ghi(row[k], line)
            ghi.append(math.nan if g is None else g)
            lab = _parse_label(row[k + 1], line)
            labels.append(NO_LABEL if lab is None else LABEL_CODES[lab])
    counts = np.array(rows, dtype=np.float64).reshape(len(rows), k)
    return FeatureTable(counts, np.array(ghi, dtype=np.float64), np.array(labels, dtype=np.int64))
