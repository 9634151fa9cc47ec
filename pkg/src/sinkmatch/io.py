"""On-disk formats: binary fragment-embedding files, CSV matrices and
ground-truth JSONL.

Embedding file layout, all little-endian::

    b"EMB1" | u32 version=1 | u32 num_samples | u32 dim
    per sample: u32 sample_id | u32 num_fragments | u8 has_global
                | num_fragments*dim f32 (raw, row-major) | [dim f32 global]
"""

import json
import struct

import numpy as np

from .exceptions import FormatError, InvalidInput
from .fragments import ingest_set

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_SAMPLE = struct.Struct("<IIB")
_F32 = np.dtype("<f4")


def write_embeddings(path, samples):
    """Write fragment sets (their raw fragments and stored globals)."""
    samples = list(samples)
    if not samples:
        raise InvalidInput("cannot write an empty embedding file")
    dim = samples[0].dim
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(samples), dim))
        for s in samples:
            if s.dim != dim:
                raise InvalidInput(f"sample {s.sample_id!r} has dim {s.dim}, expected {dim}")
            has_global = s.stored_global is not None
            fh.write(_SAMPLE.pack(int(s.sample_id), s.n_fragments, int(has_global)))
            fh.write(np.ascontiguousarray(s.raw, dtype=_F32).tobytes())
            if has_global:
                fh.write(np.ascontiguousarray(s.stored_global, dtype=_F32).tobytes())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        end = self.offset + n
        if end > len(self.data):
            raise FormatError(
                f"truncated file: needed {n} bytes for {what}, "
                f"{len(self.data) - self.offset} left", self.offset)
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk


def read_embeddings(path):
    """Read an embedding file into a list of :class:`FragmentSet`."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())

    magic, version, num_samples, dim = _HEADER.unpack(reader.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dim == 0:
        raise FormatError("dimension must be positive", 12)

    samples = []
    for _ in range(num_samples):
        start = reader.offset
        sample_id, count, has_global = _SAMPLE.unpack(reader.take(_SAMPLE.size, "sample header"))
        if count == 0:
            raise InvalidInput(f"sample {sample_id} at byte offset {start} has no fragments")
        if has_global not in (0, 1):
            raise FormatError(f"has_global flag must be 0 or 1, got {has_global}", start + 8)
        raw = np.frombuffer(reader.take(count * dim * 4, f"fragments of sample {sample_id}"),
                            dtype=_F32).reshape(count, dim)
        glob = None
        if has_global:
            glob = np.frombuffer(reader.take(dim * 4, f"global of sample {sample_id}"), dtype=_F32)
        if not np.all(np.isfinite(raw)) or (glob is not None and not np.all(np.isfinite(glob))):
            raise FormatError(f"non-finite payload in sample {sample_id}", start)
        samples.append(ingest_set(raw.astype(np.float64),
                                  None if glob is None else glob.astype(np.float64),
                                  sample_id=sample_id))
    if reader.offset != len(reader.data):
        raise FormatError(f"{len(reader.data) - reader.offset} trailing bytes", reader.offset)
    return samples


def read_matrix_csv(path):
    """Parse a rectangular comma-separated matrix of decimal floats."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(cell) for cell in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"ragged CSV: line {lineno} has {len(rows[-1])} columns, expected {len(rows[0])}")
    if not rows:
        raise FormatError("empty CSV")
    return np.array(rows)


def format_matrix_csv(values):
    # repr-precision floats so a CSV round-trip is lossless
    return "".join(",".join(format(float(x), ".17g") for x in row) + "\n" for row in values)


def write_matrix_csv(path, values):
    with open(path, "w") as fh:
        fh.write(format_matrix_csv(values))


def read_truth_jsonl(path):
    """Ground-truth pairs from lines of ``{"image_id": .., "caption_id": ..}``."""
    from .retrieval import GroundTruth

    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                pairs.append((int(record["image_id"]), int(record["caption_id"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"line {lineno}: bad ground-truth record ({exc})") from None
    return GroundTruth(pairs)
