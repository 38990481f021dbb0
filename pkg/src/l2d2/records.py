"""Line-record file format shared by every artifact.

A file is one plain-text header line, ``l2d2-dataset v1``, followed by one
JSON object per line. Each object carries a ``kind`` field; the known
kinds are ``drawing``, ``state_action``, ``trajectory_boundary``,
``camera``, ``model``, ``scene``, ``manifest`` and ``report``. Keys are
sorted and floats use shortest round-trip repr, so identical content
always produces identical bytes. Full schemas are documented in
docs/formats.md.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import FormatError
from .types import (
    Action,
    DemoDataset,
    Drawing,
    SystemState,
)

HEADER = "l2d2-dataset v1"


def dump_record(record: dict) -> str:
    """Serialize one record to its canonical single-line form."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_records(path, records) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for rec in records:
            fh.write(dump_record(rec) + "\n")


def append_records(path, records) -> None:
    """Append records to an existing file, writing the header if new."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", encoding="utf-8") as fh:
        if new:
            fh.write(HEADER + "\n")
        for rec in records:
            fh.write(dump_record(rec) + "\n")


def read_records(path) -> list:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise FormatError(f"{path}: expected header {HEADER!r}, got {header!r}")
        out = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: bad record: {e}") from e
            if "kind" not in rec:
                raise FormatError(f"{path}:{lineno}: record missing 'kind'")
            out.append(rec)
        return out


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- dataset files -----------------------------------------------------------


def dataset_records(dataset: DemoDataset):
    """Yield the record stream for a demo dataset."""
    boundary_set = set(dataset.boundaries)
    for i, (state, action) in enumerate(dataset.pairs):
        if i in boundary_set:
            yield {
                "kind": "trajectory_boundary",
                "index": i,
                "provenance": dataset.provenance,
            }
        yield {
            "kind": "state_action",
            "state": state.to_record(),
            "action": action.to_record(),
        }


def write_dataset(path, dataset: DemoDataset) -> None:
    write_records(path, dataset_records(dataset))


def read_dataset(path) -> DemoDataset:
    pairs = []
    boundaries = []
    provenance = None
    for rec in read_records(path):
        kind = rec["kind"]
        if kind == "trajectory_boundary":
            if rec["index"] != len(pairs):
                raise FormatError(
                    f"boundary index {rec['index']} does not match position {len(pairs)}"
                )
            boundaries.append(int(rec["index"]))
            p = rec["provenance"]
            if provenance is not None and p != provenance:
                raise FormatError("mixed provenance within one dataset file")
            provenance = p
        elif kind == "state_action":
            pairs.append(
                (SystemState.from_record(rec["state"]), Action.from_record(rec["action"]))
            )
        else:
            raise FormatError(f"unexpected record kind {kind!r} in dataset file")
    return DemoDataset(
        pairs=pairs,
        provenance=provenance or "reconstructed",
        boundaries=boundaries,
    )


# -- drawing files -----------------------------------------------------------


def drawing_record(drawing: Drawing) -> dict:
    return {"kind": "drawing", **drawing.to_record()}


def write_drawings(path, drawings) -> None:
    write_records(path, (drawing_record(d) for d in drawings))


def read_drawings(path) -> list:
    out = []
    for rec in read_records(path):
        if rec["kind"] != "drawing":
            raise FormatError(f"unexpected record kind {rec['kind']!r} in drawings file")
        out.append(Drawing.from_record(rec))
    return out
