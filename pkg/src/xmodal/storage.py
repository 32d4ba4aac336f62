"""Binary embedding-set file format.

Layout (all little-endian, fixed width):

    offset  size  field
    0       4     magic "XMEB"
    4       4     version, unsigned 32-bit, currently 1
    8       1     dtype code, 0 = IEEE 754 binary32
    9       1     modality code (audio=0, image=1, teacher_text=2,
                  student_text=3)
    10      8     dim, unsigned 64-bit
    18      8     n_items, unsigned 64-bit
    26      8     label_table_bytes, unsigned 64-bit (= 4 * n_items)
    34      ...   label table: n_items unsigned 32-bit species ids
    ...     ...   payload: n_items * dim binary32 reals, row-major

In-memory sets are float64; files quantize to float32, so a round trip
reproduces values only up to binary32 rounding. Writes go to a
temporary file in the destination directory and are renamed into place,
so readers never observe a partial file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from .embeddings import EmbeddingSet, Modality
from .errors import FileFormatError, PayloadTooShortError

__all__ = [
    "MAGIC",
    "VERSION",
    "write_embedding_set",
    "read_embedding_set",
    "save_params",
    "load_params",
]

MAGIC = b"XMEB"
VERSION = 1
DTYPE_FLOAT32 = 0
HEADER = struct.Struct("<4sIBBQQQ")

PARAMS_MAGIC = b"XMPB"
PARAMS_HEADER = struct.Struct("<4sI16sI")

_MODALITY_CODES = {
    Modality.AUDIO: 0,
    Modality.IMAGE: 1,
    Modality.TEACHER_TEXT: 2,
    Modality.STUDENT_TEXT: 3,
}
_CODE_MODALITIES = {code: modality for modality, code in _MODALITY_CODES.items()}


def write_embedding_set(embedding_set: EmbeddingSet, path: Union[str, Path]) -> None:
    """Serialize the set; atomic (temp file + rename), overwrites."""
    path = Path(path)
    labels = embedding_set.labels
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
        raise FileFormatError("species ids must fit in an unsigned 32-bit label table")
    header = HEADER.pack(
        MAGIC,
        VERSION,
        DTYPE_FLOAT32,
        _MODALITY_CODES[embedding_set.modality],
        embedding_set.dim,
        embedding_set.n_items,
        4 * embedding_set.n_items,
    )
    payload = np.ascontiguousarray(embedding_set.matrix, dtype="<f4").tobytes()
    label_table = np.ascontiguousarray(labels, dtype="<u4").tobytes()
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(header)
            handle.write(label_table)
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_embedding_set(path: Union[str, Path]) -> EmbeddingSet:
    """Parse a file written by :func:`write_embedding_set`.

    The returned set is float64 with ``normalized=False`` (binary32
    rounding breaks exact unit norms even for normalized sources).
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise PayloadTooShortError(HEADER.size, len(raw), "header")
    magic, version, dtype, modality_code, dim, n_items, label_bytes = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FileFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FileFormatError(f"unsupported version {version}, expected {VERSION}")
    if dtype != DTYPE_FLOAT32:
        raise FileFormatError(f"unsupported dtype code {dtype}")
    if modality_code not in _CODE_MODALITIES:
        raise FileFormatError(f"unknown modality code {modality_code}")
    if label_bytes != 4 * n_items:
        raise FileFormatError(f"label table of {label_bytes} bytes does not match {n_items} items")
    expected = HEADER.size + label_bytes + 4 * n_items * dim
    if len(raw) < expected:
        raise PayloadTooShortError(expected, len(raw), "embedding file")
    if len(raw) > expected:
        raise FileFormatError(f"{len(raw) - expected} trailing bytes after declared payload")

    labels = np.frombuffer(raw, dtype="<u4", count=n_items, offset=HEADER.size).astype(np.int64)
    matrix = (
        np.frombuffer(raw, dtype="<f4", count=n_items * dim, offset=HEADER.size + label_bytes)
        .astype(np.float64)
        .reshape(n_items, dim)
    )
    return EmbeddingSet(matrix, labels, _CODE_MODALITIES[modality_code], normalized=False)


def save_params(params: Dict[str, np.ndarray], path: Union[str, Path], config_hash: str) -> None:
    """Write a named-array blob (float64, little-endian), atomically.

    The 16-hex-digit config hash is stored in the header so the blob
    carries its provenance. Arrays are written sorted by name.
    """
    path = Path(path)
    hash_bytes = config_hash.encode("ascii")
    if len(hash_bytes) != 16:
        raise FileFormatError(f"config hash must be 16 hex digits, got {config_hash!r}")
    chunks = [PARAMS_HEADER.pack(PARAMS_MAGIC, VERSION, hash_bytes, len(params))]
    for name in sorted(params):
        # asarray keeps 0-d shapes (ascontiguousarray would promote to 1-d).
        array = np.asarray(params[name], dtype="<f8", order="C")
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(array.tobytes())
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(b"".join(chunks))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_params(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], str]:
    """Read a params blob; returns (arrays, config_hash)."""
    raw = Path(path).read_bytes()
    if len(raw) < PARAMS_HEADER.size:
        raise PayloadTooShortError(PARAMS_HEADER.size, len(raw), "params header")
    magic, version, hash_bytes, count = PARAMS_HEADER.unpack_from(raw)
    if magic != PARAMS_MAGIC:
        raise FileFormatError(f"bad magic {magic!r}, expected {PARAMS_MAGIC!r}")
    if version != VERSION:
        raise FileFormatError(f"unsupported version {version}, expected {VERSION}")
    offset = PARAMS_HEADER.size
    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(raw):
            raise PayloadTooShortError(offset + 2, len(raw), "params blob")
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + name_len + 1 > len(raw):
            raise PayloadTooShortError(offset + name_len + 1, len(raw), "params blob")
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        if offset + 8 * ndim > len(raw):
            raise PayloadTooShortError(offset + 8 * ndim, len(raw), "params blob")
        shape = struct.unpack_from(f"<{ndim}Q", raw, offset)
        offset += 8 * ndim
        n_values = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        end = offset + 8 * n_values
        if end > len(raw):
            raise PayloadTooShortError(end, len(raw), "params blob")
        params[name] = (
            np.frombuffer(raw, dtype="<f8", count=n_values, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset = end
    if offset != len(raw):
        raise FileFormatError(f"{len(raw) - offset} trailing bytes after declared arrays")
    return params, hash_bytes.decode("ascii")
