"""Labeled feature-vector databases: ingestion, relevance matrices, synthetic data.

A dataset is an ordered list of records, each carrying a string id, a
hierarchical label path (e.g. ``("c.1", "c.1.12", "c.1.12.7")``) and a fixed-
dimension feature vector.  Labels use ``/`` as the level separator in files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

LABEL_SEP = "/"

_FORMATS = ("csv", "json")


@dataclass(frozen=True, eq=False)
class DomainRecord:
    """One database item: id, hierarchical label path, feature vector."""

    id: str
    label: tuple[str, ...]
    features: np.ndarray

    def label_prefix(self, level: int) -> tuple[str, ...]:
        """First ``level`` components of the label path."""
        if level < 1 or level > len(self.label):
            raise ValueError(
                f"record {self.id!r} has label depth {len(self.label)}, "
                f"cannot take level {level}"
            )
        return self.label[:level]


@dataclass(eq=False)
class Dataset:
    """Ordered collection of records sharing one feature dimension."""

    records: tuple[DomainRecord, ...]
    dim: int

    @classmethod
    def from_records(cls, records) -> "Dataset":
        """Build a validated dataset; raises ValueError on any invariant breach."""
        records = tuple(records)
        if len(records) < 2:
            raise ValueError("a dataset needs at least 2 records")
        dim = records[0].features.shape[0]
        seen: set[str] = set()
        for row, rec in enumerate(records, start=1):
            if rec.features.ndim != 1 or rec.features.shape[0] != dim:
                raise ValueError(f"dimension mismatch at row {row}")
            if not np.all(np.isfinite(rec.features)):
                raise ValueError(f"non-finite feature at row {row} (id {rec.id!r})")
            if not rec.label or any(not part for part in rec.label):
                raise ValueError(f"empty label component at row {row} (id {rec.id!r})")
            if rec.id in seen:
                raise ValueError(f"duplicate id {rec.id!r} at row {row}")
            seen.add(rec.id)
        return cls(records=records, dim=dim)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(rec.id for rec in self.records)

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        """N x d float64 matrix of all feature vectors (read-only)."""
        mat = np.array([rec.features for rec in self.records], dtype=np.float64)
        mat.setflags(write=False)
        return mat


@dataclass(eq=False)
class RelevanceMatrix:
    """Binary N x N matrix: entry (i, q) is 1 iff records i and q share a label
    prefix of the given depth.  Symmetric with unit diagonal by construction."""

    entries: np.ndarray
    level: int


def _parse_features(values, row: int) -> np.ndarray:
    feats = np.empty(len(values), dtype=np.float64)
    for col, raw in enumerate(values):
        try:
            feats[col] = float(raw)
        except (TypeError, ValueError):
            raise ValueError(f"unparseable number {raw!r} at row {row}") from None
    return feats


def _parse_label(raw: str) -> tuple[str, ...]:
    return tuple(str(raw).split(LABEL_SEP))


def load_dataset(path, format: str | None = None) -> Dataset:
    """Load a dataset from CSV (``id,label,f1,...,fd``) or JSON.

    The format is inferred from the file suffix when not given.  Row order is
    preserved; all dataset invariants are validated.
    """
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    if fmt not in _FORMATS:
        raise ValueError(f"unknown dataset format {fmt!r}; expected one of {_FORMATS}")
    if fmt == "csv":
        records = _load_csv(path)
    else:
        records = _load_json(path)
    return Dataset.from_records(records)


def _load_csv(path: Path) -> list[DomainRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"empty dataset file: {path}")
    header = rows[0]
    if len(header) < 3 or header[0] != "id" or header[1] != "label":
        raise ValueError(f"{path}: expected header 'id,label,f1,...,fd'")
    dim = len(header) - 2
    records = []
    for row, cells in enumerate(rows[1:], start=1):
        if len(cells) - 2 != dim:
            raise ValueError(f"dimension mismatch at row {row}")
        records.append(
            DomainRecord(cells[0], _parse_label(cells[1]), _parse_features(cells[2:], row))
        )
    if not records:
        raise ValueError(f"empty dataset file: {path}")
    return records


def _load_json(path: Path) -> list[DomainRecord]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list) or not doc:
        raise ValueError(f"empty dataset file: {path}")
    records = []
    for row, entry in enumerate(doc, start=1):
        try:
            rec_id, label, feats = entry["id"], entry["label"], entry["features"]
        except (TypeError, KeyError):
            raise ValueError(f"malformed record at row {row}") from None
        records.append(DomainRecord(str(rec_id), _parse_label(label), _parse_features(feats, row)))
    return records


def save_dataset(ds: Dataset, path, format: str | None = None) -> None:
    """Write a dataset back to CSV or JSON; inverse of load_dataset."""
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    if fmt not in _FORMATS:
        raise ValueError(f"unknown dataset format {fmt!r}; expected one of {_FORMATS}")
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "label"] + [f"f{i}" for i in range(1, ds.dim + 1)])
            for rec in ds.records:
                writer.writerow(
                    [rec.id, LABEL_SEP.join(rec.label)] + [repr(float(v)) for v in rec.features]
                )
    else:
        doc = [
            {
                "id": rec.id,
                "label": LABEL_SEP.join(rec.label),
                "features": [float(v) for v in rec.features],
            }
            for rec in ds.records
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def relevance_matrix(ds: Dataset, level: int) -> RelevanceMatrix:
    """Pairwise label agreement at the given depth.

    Requires every record's label path to reach ``level``.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    prefixes = [rec.label_prefix(level) for rec in ds.records]
    codes: dict[tuple[str, ...], int] = {}
    gid = np.array([codes.setdefault(p, len(codes)) for p in prefixes])
    entries = (gid[:, None] == gid[None, :]).astype(np.float64)
    return RelevanceMatrix(entries=entries, level=level)


def generate_synthetic(
    n_classes: int,
    per_class: int,
    dim: int,
    spread: float,
    separation: float,
    seed: int,
) -> Dataset:
    """Deterministic labeled blobs: one isotropic Gaussian per class.

    Class means are drawn so their expected pairwise distance is roughly
    ``separation``; points scatter with standard deviation ``spread``.  The
    whole cloud is then shifted into the nonnegative orthant so that every
    edge-weighting scheme (including the ones that reject negative features)
    applies to the result.  Labels are single-level class names.
    """
    if n_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("n_classes, per_class and dim must all be >= 1")
    if spread <= 0:
        raise ValueError("spread must be > 0")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, dim)) * (separation / np.sqrt(2.0 * dim))
    points = np.vstack(
        [centers[c] + spread * rng.standard_normal((per_class, dim)) for c in range(n_classes)]
    )
    low = points.min()
    if low < 0:
        points -= low
    records = []
    for c in range(n_classes):
        for j in range(per_class):
            records.append(
                DomainRecord(
                    id=f"c{c}_r{j:03d}",
                    label=(f"class{c}",),
                    features=points[c * per_class + j].copy(),
                )
            )
    return Dataset.from_records(records)


def split_queries(ds: Dataset, per_label: int, mode: str, seed: int = 0):
    """Split a dataset into (database, query set) grouped by first label level.

    ``disjoint`` carves the last ``per_label`` records of each group out of the
    database; ``overlapping`` samples queries that also stay in the database.
    Returns ``(database, queries)``.
    """
    if per_label < 1:
        raise ValueError("per_label must be >= 1")
    if mode not in ("disjoint", "overlapping"):
        raise ValueError(f"unknown query mode {mode!r}")
    groups: dict[str, list[int]] = {}
    for idx, rec in enumerate(ds.records):
        groups.setdefault(rec.label[0], []).append(idx)
    query_idx: list[int] = []
    if mode == "disjoint":
        for label, members in groups.items():
            if len(members) <= per_label:
                raise ValueError(
                    f"group {label!r} has {len(members)} records; cannot carve "
                    f"{per_label} disjoint queries"
                )
            query_idx.extend(members[-per_label:])
    else:
        rng = np.random.default_rng(seed)
        for members in groups.values():
            if len(members) < per_label:
                raise ValueError("group smaller than requested query count")
            picked = rng.choice(len(members), size=per_label, replace=False)
            query_idx.extend(members[i] for i in sorted(picked))
    query_set = set(query_idx)
    queries = Dataset.from_records(ds.records[i] for i in sorted(query_set))
    if mode == "disjoint":
        database = Dataset.from_records(
            rec for i, rec in enumerate(ds.records) if i not in query_set
        )
    else:
        database = ds
    return database, queries


def dataset_fingerprint(ds: Dataset) -> str:
    """Short stable hash binding derived artifacts (pools, models) to a dataset."""
    h = hashlib.sha256()
    for rec in ds.records:
        h.update(rec.id.encode("utf-8"))
        h.update(b"\x1f")
        h.update(LABEL_SEP.join(rec.label).encode("utf-8"))
        h.update(b"\x1f")
        h.update(np.ascontiguousarray(rec.features, dtype=np.float64).tobytes())
        h.update(b"\x1e")
    return h.hexdigest()[:16]
