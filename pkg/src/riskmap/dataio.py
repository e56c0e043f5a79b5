"""CSV and JSON formats shared by the command-line tools.

All CSVs are UTF-8 with comma separators and a header row; parse errors
carry the file name and line number so the CLI can point at the offending
row.  JSON output is written with Python's shortest round-trip float
representation, which reparses to the identical double.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .model import ObservedData


class DataFormatError(ValueError):
    """Malformed input file; formatted as ``path:line: message``."""

    def __init__(self, path, lineno: int | None, message: str):
        self.path = path
        self.lineno = lineno
        where = f"{path}:{lineno}" if lineno is not None else str(path)
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class DataTable:
    """Node ids with their observed counts and populations, in file order."""

    ids: tuple[str, ...]
    data: ObservedData


def read_data_csv(path) -> DataTable:
    """Load an ``id,count,population`` CSV."""
    ids: list[str] = []
    counts: list[int] = []
    pops: list[int] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(path, 1, "empty file")
        expected = ["id", "count", "population"]
        if [h.strip().lower() for h in header[:3]] != expected:
            raise DataFormatError(path, 1, f"expected header {','.join(expected)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) < 3:
                raise DataFormatError(path, lineno, "expected three columns")
            nid = rec[0].strip()
            if nid in seen:
                raise DataFormatError(path, lineno, f"duplicate id {nid!r}")
            seen.add(nid)
            try:
                y, n = int(rec[1]), int(rec[2])
            except ValueError:
                raise DataFormatError(path, lineno,
                                      "count and population must be integers") from None
            if y < 0 or n < 0:
                raise DataFormatError(path, lineno,
                                      "count and population must be nonnegative")
            if n == 0 and y > 0:
                raise DataFormatError(path, lineno,
                                      "zero population cannot have cases")
            ids.append(nid)
            counts.append(y)
            pops.append(n)
    if not ids:
        raise DataFormatError(path, None, "no data rows")
    return DataTable(ids=tuple(ids),
                     data=ObservedData(np.array(counts), np.array(pops)))


def read_truth_csv(path) -> dict[str, int]:
    """Load an ``id,true_class`` CSV into an id-to-class mapping."""
    out: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(path, 1, "empty file")
        if [h.strip().lower() for h in header[:2]] != ["id", "true_class"]:
            raise DataFormatError(path, 1, "expected header id,true_class")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) < 2:
                raise DataFormatError(path, lineno, "expected two columns")
            nid = rec[0].strip()
            if nid in out:
                raise DataFormatError(path, lineno, f"duplicate id {nid!r}")
            try:
                cls = int(rec[1])
            except ValueError:
                raise DataFormatError(path, lineno, "true_class must be an integer") from None
            if cls < 0:
                raise DataFormatError(path, lineno, "true_class must be nonnegative")
            out[nid] = cls
    if not out:
        raise DataFormatError(path, None, "no data rows")
    return out


def write_data_csv(path, ids, data: ObservedData) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "count", "population"])
        for nid, y, n in zip(ids, data.counts, data.populations):
            writer.writerow([nid, int(y), int(n)])


def write_edges_csv(path, ids, edges: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_a", "id_b"])
        for a, b in edges:
            writer.writerow([ids[a], ids[b]])


def write_truth_csv(path, ids, labels: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "true_class"])
        for nid, cls in zip(ids, labels):
            writer.writerow([nid, int(cls)])


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
