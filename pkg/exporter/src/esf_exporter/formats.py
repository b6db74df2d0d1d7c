"""Binary interchange formats shared with the selection toolchain.

Implemented from the documented layouts (all integers little-endian):

ESF embedding file
    ``ESF1`` | u32 n | u32 d | u32 flags | payload | [id table]
    flags bit 0: payload dtype (0 = f32, 1 = f64); bit 1: id table
    present (n u32 entries). Payload is n*d row-major floats.

Patch archive
    ``PAR1`` | u32 count | u32 size | u32 channels | u8 pixels
    (count * size * size * channels, row-major, plan order).
"""

import os
import struct
import tempfile

import numpy as np

ESF_MAGIC = b"ESF1"
PAR_MAGIC = b"PAR1"

ESF_FLAG_F64 = 1
ESF_FLAG_IDS = 2


class ExportFormatError(Exception):
    """A file does not conform to its documented layout."""


def atomic_write(path, data):
    """Write bytes via a temp file + rename in the target directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_esf_f32(path, embeddings, patch_ids):
    """Write an (n, d) embedding matrix as an f32 ESF file with an id table."""
    e = np.asarray(embeddings, dtype=np.float32)
    if e.ndim != 2:
        raise ExportFormatError(f"embeddings must be 2-D, got shape {e.shape}")
    n, d = e.shape
    ids = np.asarray(patch_ids, dtype=np.uint32)
    if ids.shape != (n,) or np.unique(ids).size != n:
        raise ExportFormatError(f"patch ids must be {n} unique values")
    blob = (
        ESF_MAGIC
        + struct.pack("<III", n, d, ESF_FLAG_IDS)
        + e.astype("<f4").tobytes()
        + ids.astype("<u4").tobytes()
    )
    atomic_write(path, blob)


def read_patch_archive(path):
    """Read a PAR1 archive -> (count, size, size, channels) uint8 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PAR_MAGIC:
        raise ExportFormatError(f"{path}: bad magic {blob[:4]!r}")
    count, size, channels = struct.unpack_from("<III", blob, 4)
    expected = 16 + count * size * size * channels
    if len(blob) != expected:
        raise ExportFormatError(f"{path}: pixel block size mismatch")
    return (
        np.frombuffer(blob, dtype=np.uint8,
                      count=count * size * size * channels, offset=16)
        .reshape(count, size, size, channels)
        .copy()
    )


def read_manifest(path):
    """Manifest lines ``image_id<TAB or ,>path`` -> ordered (id, path) list."""
    entries = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "\t" if "\t" in line else ","
            parts = [p.strip() for p in line.split(sep, 1)]
            if len(parts) != 2:
                raise ExportFormatError(
                    f"{path}:{lineno}: expected 'image_id{sep}path'"
                )
            image_id, rel = parts
            full = rel if os.path.isabs(rel) else os.path.join(base, rel)
            entries.append((image_id, full))
    return entries
