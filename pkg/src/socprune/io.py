"""Dataset and report files.

A dataset is a directory of three text files: ``manifest.txt`` (key-value
header with the shapes, the split index sets and a free-text provenance
line), ``predictions.csv`` (one row per model/sample pair with the class
probabilities) and ``labels.csv`` (one row per sample).  The format is
deliberately dumb so that any external training stack can produce it with
a few lines of code.

Reports are written either as ``json-text`` (the full PruneReport, loss-
lessly round-trippable) or ``csv-summary`` (a single row with the five
headline columns).  All writes go through a temp file and an atomic
rename, so a crashed writer never leaves a half-file that parses.

Floats are serialized with 17 significant digits, so the file carries the
exact double.  Loading a dataset re-runs the tensor constructor, whose row
renormalization can move entries by one ulp; values that already sum to
exactly 1 (like the shipped fixture) round-trip bit-for-bit.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .core import LabelVector, PredictionTensor, SplitSpec, validate_tensor
from .errors import DomainError, IoError, ParseError, ShapeMismatch, VersionMismatch
from .pipeline import CellDiagnostic, PruneReport

DATA_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1

FORMAT_JSON = "json-text"
FORMAT_CSV = "csv-summary"
REPORT_FORMATS = (FORMAT_JSON, FORMAT_CSV)

MANIFEST_NAME = "manifest.txt"
PREDICTIONS_NAME = "predictions.csv"
LABELS_NAME = "labels.csv"

_MANIFEST_MAGIC = "socprune-dataset"
_REPORT_KIND = "socprune-report"

# one-row headline summary; the column set is part of the contract.
SUMMARY_COLUMNS = (
    "accuracy_full",
    "accuracy_pruned",
    "models_full",
    "models_pruned",
    "threshold",
)


def _fmt(x: float) -> str:
    # 17 significant digits: enough for exact float64 round-trips.
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> None:
    """Write text to path via temp file + rename; IoError on OS failure."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-io-")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
        tmp = None
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)


def _read_text(path) -> str:
    try:
        with open(os.fspath(path), "r") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {os.fspath(path)}: {exc}") from exc


def _format_ranges(indices) -> str:
    """Sorted index set as compact ranges: '0-4,7,9-11'; 'none' if empty."""
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        return "none"
    parts = []
    start = prev = int(idx[0])
    for v in idx[1:]:
        v = int(v)
        if v == prev + 1:
            prev = v
            continue
        parts.append(f"{start}-{prev}" if prev > start else f"{start}")
        start = prev = v
    parts.append(f"{start}-{prev}" if prev > start else f"{start}")
    return ",".join(parts)


def _parse_ranges(text: str, lineno: int) -> np.ndarray:
    if text == "none":
        return np.empty(0, dtype=np.int64)
    out = []
    for token in text.split(","):
        lo, sep, hi = token.partition("-")
        try:
            a = int(lo)
            b = int(hi) if sep else a
        except ValueError:
            raise ParseError(f"bad index range {token!r}", line=lineno) from None
        if a < 0 or b < a:
            raise ParseError(f"bad index range {token!r}", line=lineno)
        out.extend(range(a, b + 1))
    return np.asarray(out, dtype=np.int64)


def _parse_int_field(value: str, key: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{key} must be an integer, got {value!r}", line=lineno) from None


def _parse_manifest(text: str) -> dict:
    lines = text.splitlines()
    fields = {}
    saw_magic = False
    saw_end = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not saw_magic:
            if line != _MANIFEST_MAGIC:
                raise ParseError(
                    f"not a dataset manifest (expected {_MANIFEST_MAGIC!r})", line=lineno
                )
            saw_magic = True
            continue
        if line == "end":
            saw_end = True
            break
        key, _, value = line.partition(" ")
        value = value.strip()
        if key in fields:
            raise ParseError(f"duplicate manifest key {key!r}", line=lineno)
        fields[key] = (value, lineno)
    if not saw_magic:
        raise ParseError("empty manifest", line=1)
    if not saw_end:
        raise ParseError("manifest is truncated (no 'end' line)", line=len(lines))

    def required(key):
        if key not in fields:
            raise ParseError(f"manifest is missing {key!r}", line=len(lines))
        return fields[key]

    value, lineno = required("format_version")
    version = _parse_int_field(value, "format_version", lineno)
    if version != DATA_FORMAT_VERSION:
        raise VersionMismatch(
            f"dataset format_version {version} unsupported (expected {DATA_FORMAT_VERSION})"
        )

    out = {"format_version": version, "provenance": fields.get("provenance", ("", 0))[0]}
    for key in ("num_models", "num_samples", "num_classes"):
        value, lineno = required(key)
        out[key] = _parse_int_field(value, key, lineno)
        if out[key] < 1:
            raise ParseError(f"{key} must be positive, got {out[key]}", line=lineno)
    for key in ("train_indices", "valid_indices", "test_indices"):
        value, lineno = required(key)
        out[key] = _parse_ranges(value, lineno)
    return out


def _predictions_header(num_classes: int) -> str:
    return "model_id,sample_id," + ",".join(f"p_{j}" for j in range(num_classes))


def write_predictions(path, t: PredictionTensor, y: LabelVector, splits: SplitSpec,
                      provenance: str = "") -> None:
    """Materialize a dataset directory (manifest + predictions + labels).

    Refuses to write tensors that would not read back: the tensor is
    validated first and the splits are checked against its sample count.
    """
    validate_tensor(t)
    if y.num_samples != t.num_samples:
        raise ShapeMismatch(
            f"labels cover {y.num_samples} samples, tensor has {t.num_samples}"
        )
    if y.num_classes != t.num_classes:
        raise ShapeMismatch(
            f"labels declare {y.num_classes} classes, tensor has {t.num_classes}"
        )
    splits.validate_against(t.num_samples)

    path = os.fspath(path)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create dataset directory {path}: {exc}") from exc

    manifest = [
        _MANIFEST_MAGIC,
        f"format_version {DATA_FORMAT_VERSION}",
        f"num_models {t.num_models}",
        f"num_samples {t.num_samples}",
        f"num_classes {t.num_classes}",
        f"provenance {' '.join(str(provenance).split())}",
        f"train_indices {_format_ranges(splits.train_indices)}",
        f"valid_indices {_format_ranges(splits.valid_indices)}",
        f"test_indices {_format_ranges(splits.test_indices)}",
        "end",
    ]
    atomic_write_text(os.path.join(path, MANIFEST_NAME), "\n".join(manifest) + "\n")

    rows = [_predictions_header(t.num_classes)]
    for i in range(t.num_models):
        for n in range(t.num_samples):
            probs = ",".join(_fmt(v) for v in t.probs[i, n])
            rows.append(f"{i},{n},{probs}")
    atomic_write_text(os.path.join(path, PREDICTIONS_NAME), "\n".join(rows) + "\n")

    rows = ["sample_id,label"]
    for n in range(t.num_samples):
        rows.append(f"{n},{int(y.labels[n])}")
    atomic_write_text(os.path.join(path, LABELS_NAME), "\n".join(rows) + "\n")


def read_predictions(path):
    """Load a dataset directory back into (tensor, labels, splits).

    Every parse failure points at the offending file line; shape claims in
    the manifest are cross-checked against both tables, and the loaded
    tensor goes through the full core validation (so a 0.7,0.7 row comes
    back as RowNotNormalized, not as silent garbage).
    """
    path = os.fspath(path)
    manifest = _parse_manifest(_read_text(os.path.join(path, MANIFEST_NAME)))
    num_models = manifest["num_models"]
    num_samples = manifest["num_samples"]
    num_classes = manifest["num_classes"]

    labels = np.full(num_samples, -1, dtype=np.int64)
    seen = np.zeros(num_samples, dtype=bool)
    lines = _read_text(os.path.join(path, LABELS_NAME)).splitlines()
    if not lines or lines[0] != "sample_id,label":
        raise ParseError("labels header must be 'sample_id,label'", line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"labels row needs 2 fields, got {len(parts)}", line=lineno)
        try:
            n, lab = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer labels row {line!r}", line=lineno) from None
        if not 0 <= n < num_samples:
            raise ParseError(f"sample_id {n} outside [0, {num_samples})", line=lineno)
        if seen[n]:
            raise ParseError(f"duplicate label for sample {n}", line=lineno)
        if not 0 <= lab < num_classes:
            raise ParseError(f"label {lab} outside [0, {num_classes})", line=lineno)
        labels[n] = lab
        seen[n] = True
    if not seen.all():
        missing = int(np.argmin(seen))
        raise ParseError(f"no label for sample {missing}")

    probs = np.zeros((num_models, num_samples, num_classes))
    filled = np.zeros((num_models, num_samples), dtype=bool)
    lines = _read_text(os.path.join(path, PREDICTIONS_NAME)).splitlines()
    header = _predictions_header(num_classes)
    if not lines or lines[0] != header:
        raise ParseError(
            f"predictions header does not match manifest num_classes={num_classes}", line=1
        )
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2 + num_classes:
            raise ParseError(
                f"predictions row has {len(parts) - 2} probability columns, "
                f"manifest claims {num_classes}",
                line=lineno,
            )
        try:
            i, n = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer model/sample id in {line!r}", line=lineno) from None
        if not 0 <= i < num_models:
            raise ParseError(f"model_id {i} outside [0, {num_models})", line=lineno)
        if not 0 <= n < num_samples:
            raise ParseError(f"sample_id {n} outside [0, {num_samples})", line=lineno)
        if filled[i, n]:
            raise ParseError(f"duplicate row for model {i}, sample {n}", line=lineno)
        try:
            probs[i, n] = [float(v) for v in parts[2:]]
        except ValueError:
            raise ParseError(f"non-numeric probability in {line!r}", line=lineno) from None
        filled[i, n] = True
    if not filled.all():
        i, n = np.unravel_index(int(np.argmin(filled)), filled.shape)
        raise ParseError(f"no predictions row for model {int(i)}, sample {int(n)}")

    validate_tensor(probs)
    t = PredictionTensor(probs=probs)
    y = LabelVector(labels=labels, num_classes=num_classes)
    splits = SplitSpec(
        train_indices=manifest["train_indices"],
        valid_indices=manifest["valid_indices"],
        test_indices=manifest["test_indices"],
    )
    splits.validate_against(num_samples)
    return t, y, splits


def _report_to_dict(report: PruneReport) -> dict:
    return {
        "kind": _REPORT_KIND,
        "format_version": REPORT_FORMAT_VERSION,
        "best_alpha": report.best_alpha,
        "best_lambda": report.best_lambda,
        "threshold_used": report.threshold_used,
        "weights": [float(v) for v in report.weights],
        "selected": list(report.selected),
        "full_accuracy": report.full_accuracy,
        "pruned_accuracy": report.pruned_accuracy,
        "num_models_full": report.num_models_full,
        "num_models_pruned": report.num_models_pruned,
        "cells": [
            {
                "alpha": c.alpha,
                "lam": c.lam,
                "threshold": c.threshold,
                "accuracy": c.accuracy,
                "num_pruned": c.num_pruned,
                "status": c.status,
            }
            for c in report.cells
        ],
    }


def render_report(report: PruneReport, format: str = FORMAT_JSON) -> str:
    """Report as text in either format; what write_report puts on disk."""
    if format == FORMAT_JSON:
        # sort_keys pins the byte layout; allow_nan=False enforces the
        # no-NaN report contract at the boundary.
        return json.dumps(_report_to_dict(report), indent=2, sort_keys=True,
                          allow_nan=False) + "\n"
    if format == FORMAT_CSV:
        values = (
            _fmt(report.full_accuracy),
            _fmt(report.pruned_accuracy),
            str(report.num_models_full),
            str(report.num_models_pruned),
            _fmt(report.threshold_used),
        )
        return ",".join(SUMMARY_COLUMNS) + "\n" + ",".join(values) + "\n"
    raise DomainError(f"unknown report format {format!r} (use {REPORT_FORMATS})")


def write_report(report: PruneReport, path, format: str = FORMAT_JSON) -> None:
    """Serialize a report; json-text is lossless, csv-summary is the headline row."""
    atomic_write_text(path, render_report(report, format))


def read_report(path) -> PruneReport:
    """Inverse of write_report for the json-text format."""
    text = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid report JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(data, dict) or data.get("kind") != _REPORT_KIND:
        raise ParseError(f"not a {_REPORT_KIND} file")
    version = data.get("format_version")
    if version != REPORT_FORMAT_VERSION:
        raise VersionMismatch(
            f"report format_version {version} unsupported (expected {REPORT_FORMAT_VERSION})"
        )
    try:
        cells = tuple(
            CellDiagnostic(
                alpha=float(c["alpha"]),
                lam=float(c["lam"]),
                threshold=float(c["threshold"]),
                accuracy=float(c["accuracy"]),
                num_pruned=int(c["num_pruned"]),
                status=str(c["status"]),
            )
            for c in data["cells"]
        )
        return PruneReport(
            best_alpha=float(data["best_alpha"]),
            best_lambda=float(data["best_lambda"]),
            threshold_used=float(data["threshold_used"]),
            weights=np.asarray(data["weights"], dtype=np.float64),
            selected=tuple(int(i) for i in data["selected"]),
            full_accuracy=float(data["full_accuracy"]),
            pruned_accuracy=float(data["pruned_accuracy"]),
            num_models_full=int(data["num_models_full"]),
            num_models_pruned=int(data["num_models_pruned"]),
            cells=cells,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed report payload: {exc}") from None


def read_summary(path) -> dict:
    """Read back a csv-summary row as a plain dict."""
    lines = [line for line in _read_text(path).splitlines() if line]
    if len(lines) != 2:
        raise ParseError(f"summary must be header + one row, got {len(lines)} lines")
    if tuple(lines[0].split(",")) != SUMMARY_COLUMNS:
        raise ParseError(f"summary header must be {','.join(SUMMARY_COLUMNS)}", line=1)
    parts = lines[1].split(",")
    if len(parts) != len(SUMMARY_COLUMNS):
        raise ParseError(f"summary row has {len(parts)} fields, expected 5", line=2)
    try:
        return {
            "accuracy_full": float(parts[0]),
            "accuracy_pruned": float(parts[1]),
            "models_full": int(parts[2]),
            "models_pruned": int(parts[3]),
            "threshold": float(parts[4]),
        }
    except ValueError as exc:
        raise ParseError(f"malformed summary row: {exc}", line=2) from None
