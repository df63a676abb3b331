"""Binary stores for precomputed image features.

Two little-endian formats share the record layout {u64 image_id, payload f32}:

  vector store: magic "IBF1", u32 version=1, u32 count, u32 dim,
                records of {u64 image_id, dim x f32}
  map store:    magic "IBM1", u32 version=1, u32 count, u32 H, u32 W, u32 K,
                records of {u64 image_id, H*W*K x f32 in [x][y][k] order}

Stores are produced offline (or by bowimg.synthetic); this module only reads
them, lazily via a memory map, plus writers used by the generators and tests.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

from .errors import IntegrityError, NotFoundError, StoreFormatError

VECTOR_MAGIC = b"IBF1"
MAP_MAGIC = b"IBM1"
VERSION = 1


def _read_header(path, magic: bytes, n_dims: int) -> Tuple[Tuple[int, ...], int]:
    """Return ((count, *dims), payload_offset) after validating magic/version."""
    header_len = 4 + 4 + 4 + 4 * n_dims
    with open(path, "rb") as f:
        header = f.read(header_len)
    if len(header) < header_len:
        raise StoreFormatError(f"{path}: truncated header ({len(header)} bytes)")
    if header[:4] != magic:
        raise StoreFormatError(f"{path}: bad magic {header[:4]!r}, expected {magic!r}")
    version, count, *dims = struct.unpack(f"<{2 + n_dims}I", header[4:])
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    return (count, *dims), header_len


class _RecordStore:
    """Common index-building and lazy record access."""

    def __init__(self, path, payload_shape: Tuple[int, ...], count: int, offset: int):
        self.path = str(path)
        self._payload_shape = payload_shape
        payload_len = int(np.prod(payload_shape)) if payload_shape else 0
        dtype = np.dtype([("image_id", "<u8"), ("payload", "<f4", (payload_len,))])
        expected = offset + count * dtype.itemsize
        actual = Path(path).stat().st_size
        if actual != expected:
            raise StoreFormatError(
                f"{path}: length mismatch, expected {expected} bytes for {count} records, found {actual}"
            )
        self._records = np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=(count,))
        self._index: Dict[int, int] = {}
        for pos, image_id in enumerate(self._records["image_id"]):
            iid = int(image_id)
            if iid in self._index:
                raise IntegrityError(f"{path}: duplicate image_id {iid}")
            self._index[iid] = pos

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, image_id: int) -> bool:
        return int(image_id) in self._index

    def image_ids(self) -> List[int]:
        return sorted(self._index)

    def _payload(self, image_id: int) -> np.ndarray:
        pos = self._index.get(int(image_id))
        if pos is None:
            raise NotFoundError(f"{self.path}: image_id {image_id} not in store")
        values = np.array(self._records["payload"][pos], dtype=np.float32)
        if not np.all(np.isfinite(values)):
            raise IntegrityError(f"{self.path}: non-finite values for image_id {image_id}")
        return values.reshape(self._payload_shape)


class VectorStore(_RecordStore):
    """Pooled per-image feature vectors (the image side of the classifier input)."""

    def __init__(self, path):
        (count, dim), offset = _read_header(path, VECTOR_MAGIC, 1)
        self.dim = dim
        super().__init__(path, (dim,), count, offset)

    def get_vector(self, image_id: int) -> np.ndarray:
        return self._payload(image_id)


class MapStore(_RecordStore):
    """Spatial convolutional feature maps, one H x W x K grid per image."""

    def __init__(self, path):
        (count, h, w, k), offset = _read_header(path, MAP_MAGIC, 3)
        self.height, self.width, self.channels = h, w, k
        super().__init__(path, (h, w, k), count, offset)

    def get_map(self, image_id: int) -> np.ndarray:
        return self._payload(image_id)


def open_store(path) -> Union[VectorStore, MapStore]:
    """Open either store kind, dispatching on the magic bytes."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == VECTOR_MAGIC:
        return VectorStore(path)
    if magic == MAP_MAGIC:
        return MapStore(path)
    raise StoreFormatError(f"{path}: bad magic {magic!r}")


def _check_record(image_id: int, values: np.ndarray, seen: set, path) -> None:
    if int(image_id) in seen:
        raise IntegrityError(f"{path}: duplicate image_id {image_id}")
    seen.add(int(image_id))
    if not np.all(np.isfinite(values)):
        raise IntegrityError(f"{path}: non-finite values for image_id {image_id}")


def write_vector_store(path, items: Iterable[Tuple[int, np.ndarray]], dim: int) -> None:
    items = [(int(iid), np.asarray(v, dtype=np.float32)) for iid, v in items]
    seen: set = set()
    with open(path, "wb") as f:
        f.write(VECTOR_MAGIC)
        f.write(struct.pack("<3I", VERSION, len(items), dim))
        for image_id, vector in items:
            if vector.shape != (dim,):
                raise IntegrityError(f"{path}: image_id {image_id} has shape {vector.shape}, expected ({dim},)")
            _check_record(image_id, vector, seen, path)
            f.write(struct.pack("<Q", image_id))
            f.write(vector.astype("<f4").tobytes())


def write_map_store(path, items: Iterable[Tuple[int, np.ndarray]], shape: Tuple[int, int, int]) -> None:
    h, w, k = shape
    items = [(int(iid), np.asarray(m, dtype=np.float32)) for iid, m in items]
    seen: set = set()
    with open(path, "wb") as f:
        f.write(MAP_MAGIC)
        f.write(struct.pack("<5I", VERSION, len(items), h, w, k))
        for image_id, grid in items:
            if grid.shape != (h, w, k):
                raise IntegrityError(f"{path}: image_id {image_id} has shape {grid.shape}, expected {(h, w, k)}")
            _check_record(image_id, grid, seen, path)
            f.write(struct.pack("<Q", image_id))
            f.write(grid.astype("<f4").tobytes())


def gap(grid: np.ndarray) -> np.ndarray:
    """Global average pooling: spatial mean per channel of an H x W x K grid."""
    grid = np.asarray(grid)
    if grid.ndim != 3 or grid.shape[0] * grid.shape[1] < 1:
        raise ValueError(f"gap expects a non-empty H x W x K grid, got shape {grid.shape}")
    return grid.mean(axis=(0, 1))
