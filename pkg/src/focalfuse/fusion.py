"""Per-sample probability tables and their late fusion by averaging."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ParseError, ShapeError

SIMPLEX_TOL = 1e-9


@dataclass
class PredictionTable:
    ids: list[str]
    labels: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.probs = np.atleast_2d(np.asarray(self.probs, dtype=np.float64))
        n = len(self.ids)
        if self.labels.shape != (n,) or self.probs.shape[0] != n:
            raise ShapeError(
                f"{n} ids, {self.labels.shape[0]} labels and {self.probs.shape[0]} probability rows"
            )
        if len(set(self.ids)) != n:
            raise AlignmentError("prediction table has duplicate sample ids")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ShapeError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def sorted_by_id(self) -> "PredictionTable":
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        return PredictionTable([self.ids[i] for i in order], self.labels[order], self.probs[order])

    def check_simplex(self, tol: float = SIMPLEX_TOL) -> None:
        if np.any(self.probs < 0) or np.any(np.abs(self.probs.sum(axis=1) - 1.0) > tol):
            raise ShapeError("probability rows are not on the simplex")


def late_fuse(pa, pb) -> np.ndarray:
    """Elementwise mean of two probability vectors (or two stacks of them)."""
    pa = np.asarray(pa, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ShapeError(f"cannot fuse shapes {pa.shape} and {pb.shape}")
    # (a + b) / 2 is symmetric in its arguments bit for bit
    return (pa + pb) * 0.5


def fuse_tables(a: PredictionTable, b: PredictionTable) -> PredictionTable:
    if a.n_classes != b.n_classes:
        raise ShapeError(f"tables have {a.n_classes} and {b.n_classes} classes")
    ia = {s: i for i, s in enumerate(a.ids)}
    ib = {s: i for i, s in enumerate(b.ids)}
    only_a = sorted(set(ia) - set(ib))
    only_b = sorted(set(ib) - set(ia))
    if only_a or only_b:
        first = (only_a or only_b)[0]
        side = "first" if only_a else "second"
        raise AlignmentError(
            f"sample id {first!r} appears only in the {side} table "
            f"({len(only_a)} + {len(only_b)} unmatched ids)"
        )
    ids = sorted(ia)
    ra = np.array([ia[s] for s in ids], dtype=np.int64)
    rb = np.array([ib[s] for s in ids], dtype=np.int64)
    la, lb = a.labels[ra], b.labels[rb]
    bad = np.flatnonzero(la != lb)
    if len(bad):
        s = ids[bad[0]]
        raise AlignmentError(f"sample id {s!r} has label {la[bad[0]]} in one table and {lb[bad[0]]} in the other")
    return PredictionTable(ids, la, late_fuse(a.probs[ra], b.probs[rb]))


# -- prediction-table files ------------------------------------------------------


def write_prediction_table(table: PredictionTable, path, fingerprint: str = "") -> None:
    K = table.n_classes
    header = ",".join(["id", "label"] + [f"p{k}" for k in range(K)])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fingerprint:
            fh.write(f"# config_fingerprint={fingerprint}\n")
        fh.write(header + "\n")
        for sid, lbl, row in zip(table.ids, table.labels, table.probs):
            fh.write(f"{sid},{int(lbl)}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_prediction_table(path) -> tuple[PredictionTable, dict[str, str]]:
    """Parse a prediction file; returns the table and its ``#`` metadata."""
    path = str(path)
    meta: dict[str, str] = {}
    ids, labels, rows = [], [], []
    header = None
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.startswith("#"):
                key, _, value = raw[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if not raw.strip():
                continue
            row = next(csv.reader([raw]))
            if header is None:
                K = len(row) - 2
                if row[:2] != ["id", "label"] or K < 1 or row[2:] != [f"p{k}" for k in range(K)]:
                    raise ParseError("header must be id,label,p0..p{K-1}", lineno, path)
                header = row
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno, path)
            sid = row[0]
            if sid in seen:
                raise ParseError(f"duplicate id {sid!r} (first on line {seen[sid]})", lineno, path)
            seen[sid] = lineno
            try:
                lbl = int(row[1])
                p = np.array(row[2:], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", lineno, path) from None
            if not 0 <= lbl < K:
                raise ParseError(f"label {lbl} outside [0, {K})", lineno, path)
            if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
                raise ParseError("probabilities must be finite, non-negative and sum to 1", lineno, path)
            ids.append(sid)
            labels.append(lbl)
            rows.append(p)
    if header is None:
        raise ParseError("missing header", None, path)
    K = len(header) - 2
    probs = np.array(rows) if rows else np.zeros((0, K))
    return PredictionTable(ids, np.array(labels, dtype=np.int64), probs), meta
