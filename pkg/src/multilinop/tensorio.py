"""Snapshot data model, binary matrix files, dataset manifests and splits.

Matrices are stored in a small self-describing binary format::

    b"MLOPMAT1" | rows: u64 LE | cols: u64 LE | rows*cols f64 LE (row-major)

Reading a file back reproduces the array bit for bit.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

MAGIC = b"MLOPMAT1"
HEADER_SIZE = len(MAGIC) + 16
_MAX_ELEMENTS = (2**63 - 1) // 8


class MatrixFormatError(ValueError):
    """Raised when a matrix file is malformed."""


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centred grid. Fields are flattened row-major (y outer, x inner)."""

    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid needs nx, ny >= 1, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError(f"grid spacing must be positive, got dx={self.dx}, dy={self.dy}")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(ny, nx)`` of an unflattened field."""
        return (self.ny, self.nx)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "dx": self.dx, "dy": self.dy}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid2D":
        return cls(int(d["nx"]), int(d["ny"]), float(d["dx"]), float(d["dy"]))


@dataclass(frozen=True)
class SnapshotLabel:
    fire_id: int
    time_index: int
    condition: str = ""

    def to_dict(self) -> dict:
        return {"fire_id": self.fire_id, "time_index": self.time_index, "condition": self.condition}

    @classmethod
    def from_dict(cls, d: dict) -> "SnapshotLabel":
        return cls(int(d["fire_id"]), int(d["time_index"]), str(d.get("condition", "")))


@dataclass(frozen=True)
class SnapshotMatrix:
    """Column-ordered field snapshots: ``data[:, j]`` is snapshot ``j``."""

    grid: Grid2D
    data: np.ndarray
    labels: tuple[SnapshotLabel, ...] = field(default=())

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"snapshot data must be 2-D, got shape {data.shape}")
        if data.shape[0] != self.grid.size:
            raise ValueError(f"{data.shape[0]} rows do not match grid size {self.grid.size}")
        if data.shape[1] < 1:
            raise ValueError("a snapshot matrix needs at least one column")
        if not np.all(np.isfinite(data)):
            raise ValueError("snapshot data contains non-finite entries")
        labels = tuple(self.labels)
        if len(labels) != data.shape[1]:
            raise ValueError(f"{len(labels)} labels for {data.shape[1]} snapshots")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[1]

    def select(self, columns: Sequence[int]) -> "SnapshotMatrix":
        columns = np.asarray(columns, dtype=np.intp)
        return SnapshotMatrix(self.grid, self.data[:, columns], tuple(self.labels[i] for i in columns))

    def fire_ids(self) -> np.ndarray:
        return np.array([lab.fire_id for lab in self.labels], dtype=np.int64)


@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def part(self, name: str) -> np.ndarray:
        key = {"train": "train", "val": "validation", "validation": "validation", "test": "test"}.get(name)
        if key is None:
            raise KeyError(f"unknown split part {name!r}")
        return getattr(self, key)

    def to_dict(self) -> dict:
        return {k: [int(i) for i in getattr(self, k)] for k in ("train", "validation", "test")}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(*(np.asarray(d[k], dtype=np.intp) for k in ("train", "validation", "test")))


# --------------------------------------------------------------------------
# binary matrices
# --------------------------------------------------------------------------

def write_matrix(m, path) -> None:
    """Write a 2-D array (or the data of a :class:`SnapshotMatrix`) as ``MLOPMAT1``."""
    if isinstance(m, SnapshotMatrix):
        m = m.data
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"only 2-D matrices can be written, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite entries")
    rows, cols = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(payload)


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE:
        raise MatrixFormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    if blob[: len(MAGIC)] != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {blob[:len(MAGIC)]!r}")
    rows, cols = struct.unpack_from("<QQ", blob, len(MAGIC))
    if cols and rows > _MAX_ELEMENTS // cols:
        raise MatrixFormatError(f"{path}: header size {rows}x{cols} overflows")
    n = rows * cols
    available = len(blob) - HEADER_SIZE
    if available < 8 * n:
        raise MatrixFormatError(
            f"{path}: truncated payload, header claims {rows}x{cols} but only {available // 8} values present"
        )
    if available > 8 * n:
        raise MatrixFormatError(f"{path}: {available - 8 * n} trailing bytes after payload")
    out = np.frombuffer(blob, dtype="<f8", count=n, offset=HEADER_SIZE).astype(np.float64)
    return out.reshape(rows, cols)


# --------------------------------------------------------------------------
# manifests
# --------------------------------------------------------------------------

def save_dataset(directory, inputs: SnapshotMatrix, outputs: SnapshotMatrix, extra: dict | None = None) -> Path:
    """Write ``inputs.mlop``, ``outputs.mlop`` and ``manifest.json`` into *directory*.

    Returns the manifest path. Matrix paths in the manifest are relative to it.
    """
    if inputs.labels != outputs.labels:
        raise ValueError("input and output snapshots must carry identical labels")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(inputs.data, directory / "inputs.mlop")
    write_matrix(outputs.data, directory / "outputs.mlop")
    manifest = {
        "grid": inputs.grid.to_dict(),
        "inputs": "inputs.mlop",
        "outputs": "outputs.mlop",
        "labels": [lab.to_dict() for lab in inputs.labels],
    }
    if extra:
        manifest.update(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_dataset(manifest_path) -> tuple[SnapshotMatrix, SnapshotMatrix]:
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = manifest_path.parent
    grid = Grid2D.from_dict(manifest["grid"])
    labels = tuple(SnapshotLabel.from_dict(d) for d in manifest["labels"])

    def _resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    inputs = SnapshotMatrix(grid, read_matrix(_resolve(manifest["inputs"])), labels)
    outputs = SnapshotMatrix(grid, read_matrix(_resolve(manifest["outputs"])), labels)
    return inputs, outputs


# --------------------------------------------------------------------------
# splitting and filtering
# --------------------------------------------------------------------------

def split_by_fire(labels: Iterable[SnapshotLabel], fractions=(0.45, 0.10, 0.45), seed: int = 0) -> DatasetSplit:
    """Partition snapshot columns into train/validation/test without fire leakage.

    Fire ids are shuffled with a seeded generator and handed out greedily: each
    part takes whole fires until its snapshot count reaches its fraction of the
    total, always leaving at least one fire for every later part. The last part
    receives whatever remains.
    """
    labels = list(labels)
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise SplitError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"fractions must sum to 1, got {sum(fractions)!r}")

    fire_of = np.array([lab.fire_id for lab in labels], dtype=np.int64)
    fires, counts = np.unique(fire_of, return_counts=True)
    if len(fires) < 3:
        raise SplitError(f"need at least 3 distinct fires to populate every part, got {len(fires)}")

    order = np.random.default_rng(seed).permutation(len(fires))
    total = len(labels)
    parts: list[list[int]] = [[], [], []]
    pos = 0
    for k in range(2):
        target = fractions[k] * total
        taken = 0
        reserve = 2 - k  # fires that must remain for the later parts
        while pos < len(order) - reserve:
            parts[k].append(fires[order[pos]])
            taken += counts[order[pos]]
            pos += 1
            if taken >= target:
                break
    parts[2] = [fires[i] for i in order[pos:]]

    columns = []
    for fire_set in parts:
        mask = np.isin(fire_of, np.asarray(fire_set, dtype=np.int64))
        columns.append(np.flatnonzero(mask).astype(np.intp))
    return DatasetSplit(*columns)


def filter_snapshots(m: SnapshotMatrix, predicate: Callable[[SnapshotLabel], bool]) -> SnapshotMatrix | None:
    """Keep the columns whose label satisfies *predicate*, in order.

    Returns ``None`` when nothing matches, since a :class:`SnapshotMatrix`
    always holds at least one column.
    """
    keep = [j for j, lab in enumerate(m.labels) if predicate(lab)]
    if not keep:
        return None
    return m.select(keep)


def final_time_columns(labels: Sequence[SnapshotLabel]) -> np.ndarray:
    """Column index of the latest ``time_index`` for every fire, ordered by fire id."""
    best: dict[int, tuple[int, int]] = {}
    for j, lab in enumerate(labels):
        cur = best.get(lab.fire_id)
        if cur is None or lab.time_index > cur[0]:
            best[lab.fire_id] = (lab.time_index, j)
    return np.array([best[f][1] for f in sorted(best)], dtype=np.intp)


def write_json(path, obj) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
