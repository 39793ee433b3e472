"""JSON-plus-tensor-blob container used for scenes, vocabularies and checkpoints.

Layout::

    <utf-8 JSON document>\\n<blob><blob>...

The JSON document carries a ``tensors`` manifest of
``{"name", "offset", "nbytes"}`` entries; offsets count from the first byte
after the newline. Each blob is::

    8-byte magic | dtype byte | rank (u32) | rank x extent (u32) | row-major payload

All integers and floats are little-endian.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from sctc.errors import ParseError

MAGIC = b"TNSRBLOB"
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


def encode_blob(array, dtype="<f4"):
    dt = np.dtype(dtype)
    arr = np.ascontiguousarray(array, dtype=dt)
    head = MAGIC + struct.pack("<BI", DTYPE_CODES[dt], arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def decode_blob(buf, offset, name):
    """Decode one blob starting at ``offset`` in ``buf``; returns (array, end)."""
    pos = offset
    if buf[pos:pos + 8] != MAGIC:
        raise ParseError("bad blob magic", offset=pos, field=name)
    pos += 8
    if len(buf) < pos + 5:
        raise ParseError("truncated blob header", offset=pos, field=name)
    code, rank = struct.unpack_from("<BI", buf, pos)
    if code not in DTYPES:
        raise ParseError(f"unknown dtype code {code}", offset=pos, field=name)
    pos += 5
    if rank > 8:
        raise ParseError(f"implausible rank {rank}", offset=pos - 4, field=name)
    if len(buf) < pos + 4 * rank:
        raise ParseError("truncated blob extents", offset=pos, field=name)
    shape = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    dt = DTYPES[code]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(buf) < pos + nbytes:
        raise ParseError(
            f"truncated tensor payload: need {nbytes} bytes, have {len(buf) - pos}",
            offset=pos, field=name,
        )
    arr = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape)
    return arr.astype(np.float64), pos + nbytes


def dumps(meta, tensors, dtype="<f4"):
    blobs = []
    manifest = []
    offset = 0
    for name, arr in tensors.items():
        blob = encode_blob(arr, dtype)
        manifest.append({"name": name, "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    doc = dict(meta)
    doc["tensors"] = manifest
    head = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return head + b"\n" + b"".join(blobs)


def loads(buf):
    """Parse a container; returns (meta dict, {name: float64 array})."""
    end = buf.find(b"\n")
    if end < 0:
        raise ParseError("missing JSON header terminator", offset=len(buf), field="header")
    try:
        meta = json.loads(buf[:end].decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError("header is not UTF-8", offset=exc.start, field="header") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON header: {exc.msg}", offset=exc.pos, field="header") from None
    if not isinstance(meta, dict) or not isinstance(meta.get("tensors"), list):
        raise ParseError("header lacks a tensor manifest", offset=0, field="tensors")
    base = end + 1
    tensors = {}
    for entry in meta["tensors"]:
        try:
            name, off, nbytes = entry["name"], int(entry["offset"]), int(entry["nbytes"])
        except (KeyError, TypeError, ValueError):
            raise ParseError("malformed manifest entry", offset=0, field="tensors") from None
        start = base + off
        if start > len(buf):
            raise ParseError("blob offset past end of file", offset=start, field=name)
        arr, stop = decode_blob(buf, start, name)
        if stop - start != nbytes:
            raise ParseError(
                f"blob size {stop - start} disagrees with manifest {nbytes}", offset=start, field=name
            )
        tensors[name] = arr
    return meta, tensors


def write(path, meta, tensors, dtype="<f4"):
    with open(path, "wb") as fh:
        fh.write(dumps(meta, tensors, dtype))


def read(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
