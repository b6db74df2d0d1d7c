"""File formats: embedding files (ESF), checkpoints, images, CSVs, config.

All multi-byte integers are little-endian. Binary layouts:

ESF embedding file
    magic ``ESF1`` | u32 n | u32 d | u32 flags | payload | [id table]
    flags bit 0: payload dtype (0 = f32, 1 = f64); bit 1: id table present.
    Payload is n*d row-major floats; the id table is n u32 patch ids.

MLP checkpoint
    magic ``MLP1`` | u32 c | u32 hidden | f64 parameters in the order
    w1 (c*hidden, row-major), b1 (hidden), w2 (hidden), b2 (1).

Patch archive
    magic ``PAR1`` | u32 count | u32 size | u32 channels | u8 pixels
    (count * size * size * channels, row-major per patch, plan order).

Raw image
    magic ``RIM1`` | u32 width | u32 height | u32 channels | u32 dtype
    (0 = u8, 1 = f32) | payload row-major. Binary PPM (P6) is also read
    and written for 8-bit images.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError, InputError

ESF_MAGIC = b"ESF1"
MLP_MAGIC = b"MLP1"
PAR_MAGIC = b"PAR1"
RIM_MAGIC = b"RIM1"

ESF_FLAG_F64 = 1
ESF_FLAG_IDS = 2


def atomic_write(path, data):
    """Write bytes to ``path`` via a temp file + rename in one directory."""
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


def write_esf(path, embeddings, dtype="f64", patch_ids=None):
    """Write one image's embedding matrix as an ESF file."""
    e = np.asarray(embeddings)
    if e.ndim != 2:
        raise InputError(f"embeddings must be 2-D, got shape {e.shape}")
    if dtype not in ("f32", "f64"):
        raise InputError(f"dtype must be 'f32' or 'f64', got {dtype!r}")
    n, d = e.shape
    flags = 0
    if dtype == "f64":
        flags |= ESF_FLAG_F64
        payload = e.astype("<f8").tobytes()
    else:
        payload = e.astype("<f4").tobytes()
    parts = [ESF_MAGIC, struct.pack("<III", n, d, flags), payload]
    if patch_ids is not None:
        ids = np.asarray(patch_ids, dtype=np.uint32)
        if ids.shape != (n,):
            raise InputError(f"patch_ids must have shape ({n},)")
        if np.unique(ids).size != n:
            raise InputError("patch_ids must be unique")
        parts[1] = struct.pack("<III", n, d, flags | ESF_FLAG_IDS)
        parts.append(ids.astype("<u4").tobytes())
    atomic_write(path, b"".join(parts))


def read_esf(path):
    """Read an ESF file -> (embeddings float64 (n, d), patch_ids or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != ESF_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}", offset=0)
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header", offset=4)
    n, d, flags = struct.unpack_from("<III", blob, 4)
    itemsize = 8 if flags & ESF_FLAG_F64 else 4
    payload_len = n * d * itemsize
    expected = 16 + payload_len + (4 * n if flags & ESF_FLAG_IDS else 0)
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload length {len(blob) - 16} does not match header "
            f"(expected file size {expected})",
            offset=16,
        )
    dt = "<f8" if flags & ESF_FLAG_F64 else "<f4"
    e = np.frombuffer(blob, dtype=dt, count=n * d, offset=16)
    e = e.reshape(n, d).astype(np.float64)
    ids = None
    if flags & ESF_FLAG_IDS:
        ids = np.frombuffer(blob, dtype="<u4", count=n, offset=16 + payload_len)
        if np.unique(ids).size != n:
            raise FormatError(f"{path}: duplicate patch ids", offset=16 + payload_len)
        ids = ids.astype(np.uint32)
    return e, ids


def read_embeddings_any(path):
    """Load embeddings from an ESF file or a plain numeric CSV grid."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == ESF_MAGIC:
        return read_esf(path)
    if str(path).endswith(".esf"):
        raise FormatError(f"{path}: bad magic {head!r}", offset=0)
    try:
        e = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: not an ESF file or numeric CSV: {exc}",
                          offset=0) from None
    return e, None


def write_checkpoint(path, model):
    """Serialize an MlpModel (f64 parameters)."""
    c = model.input_dim
    hidden = model.b1.size
    parts = [
        MLP_MAGIC,
        struct.pack("<II", c, hidden),
        model.w1.astype("<f8").tobytes(),
        model.b1.astype("<f8").tobytes(),
        np.asarray(model.w2).astype("<f8").tobytes(),
        struct.pack("<d", float(model.b2)),
    ]
    atomic_write(path, b"".join(parts))


def read_checkpoint(path):
    from .mlp import MlpModel

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MLP_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}", offset=0)
    c, hidden = struct.unpack_from("<II", blob, 4)
    count = c * hidden + hidden + hidden + 1
    if len(blob) != 12 + 8 * count:
        raise FormatError(f"{path}: parameter block size mismatch", offset=12)
    params = np.frombuffer(blob, dtype="<f8", count=count, offset=12)
    w1 = params[: c * hidden].reshape(c, hidden).copy()
    off = c * hidden
    b1 = params[off:off + hidden].copy()
    off += hidden
    w2 = params[off:off + hidden].copy()
    b2 = float(params[-1])
    return MlpModel(w1=w1, b1=b1, w2=w2, b2=b2)


def write_patch_archive(path, patches):
    """Concatenated uint8 patches (count, size, size, 3) in plan order."""
    p = np.asarray(patches)
    if p.ndim != 4 or p.shape[3] != 3 or p.shape[1] != p.shape[2]:
        raise InputError(f"patches must be (count, size, size, 3), got {p.shape}")
    blob = (
        PAR_MAGIC
        + struct.pack("<III", p.shape[0], p.shape[1], p.shape[3])
        + p.astype(np.uint8).tobytes()
    )
    atomic_write(path, blob)


def read_patch_archive(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PAR_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}", offset=0)
    count, size, channels = struct.unpack_from("<III", blob, 4)
    expected = 16 + count * size * size * channels
    if len(blob) != expected:
        raise FormatError(f"{path}: pixel block size mismatch", offset=16)
    return (
        np.frombuffer(blob, dtype=np.uint8, count=count * size * size * channels,
                      offset=16)
        .reshape(count, size, size, channels)
        .copy()
    )


def write_image(path, pixels):
    """Write an image as binary PPM (uint8) or RIM1 raw (uint8/f32)."""
    p = np.asarray(pixels)
    if p.ndim != 3 or p.shape[2] != 3:
        raise InputError(f"expected (H, W, 3) pixels, got {p.shape}")
    if str(path).endswith(".ppm"):
        if p.dtype != np.uint8:
            raise InputError("PPM output requires uint8 pixels")
        header = f"P6\n{p.shape[1]} {p.shape[0]}\n255\n".encode()
        atomic_write(path, header + p.tobytes())
        return
    dtype_flag = 0 if p.dtype == np.uint8 else 1
    payload = p.tobytes() if dtype_flag == 0 else p.astype("<f4").tobytes()
    blob = (
        RIM_MAGIC
        + struct.pack("<IIII", p.shape[1], p.shape[0], p.shape[2], dtype_flag)
        + payload
    )
    atomic_write(path, blob)


def _read_ppm(blob, path):
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM", offset=0)
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported", offset=0)
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(blob, dtype=np.uint8, count=width * height * 3,
                           offset=pos)
    if pixels.size != width * height * 3:
        raise FormatError(f"{path}: truncated pixel data", offset=pos)
    return pixels.reshape(height, width, 3).copy()


def read_image(path):
    """Read a PPM (P6) or RIM1 raw image -> (H, W, 3) uint8/float32 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] == b"P6":
        return _read_ppm(blob, path)
    if blob[:4] == RIM_MAGIC:
        width, height, channels, dtype_flag = struct.unpack_from("<IIII", blob, 4)
        count = width * height * channels
        if dtype_flag == 0:
            pixels = np.frombuffer(blob, dtype=np.uint8, count=count, offset=20)
        elif dtype_flag == 1:
            pixels = np.frombuffer(blob, dtype="<f4", count=count, offset=20)
        else:
            raise FormatError(f"{path}: unknown dtype flag {dtype_flag}", offset=16)
        if pixels.size != count:
            raise FormatError(f"{path}: truncated pixel data", offset=20)
        return pixels.reshape(height, width, channels).copy()
    raise FormatError(f"{path}: not a PPM or RIM1 image", offset=0)


def write_json(path, obj):
    atomic_write(path, (json.dumps(obj, indent=2) + "\n").encode())


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_config(path):
    """Flat key = value config file with '#' comments -> str dict."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def read_mos_csv(path):
    """MOS ground-truth CSV ``image_id,mos`` -> {image_id: mos}."""
    import csv as _csv

    out = {}
    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames != ["image_id", "mos"]:
            raise FormatError(f"{path}: header must be image_id,mos")
        for row in reader:
            out[row["image_id"]] = float(row["mos"])
    return out


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
                raise FormatError(f"{path}:{lineno}: expected 'image_id{sep}path'")
            image_id, rel = parts
            full = rel if os.path.isabs(rel) else os.path.join(base, rel)
            entries.append((image_id, full))
    return entries
