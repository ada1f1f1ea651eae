"""Binary checkpoint container used repo-wide.

Layout (all integers little-endian):

    magic   4 bytes  b"LDDR"
    version u16      currently 1
    count   u32      number of entries
    entry:  name_len u16, name UTF-8, rank u8, dims u32 * rank,
            payload float32 little-endian, row-major

Round-trips are bit-exact: payloads are written and read as raw float32
bytes, never re-encoded.
"""

import struct
from collections import OrderedDict

import numpy as np

from .errors import FormatError, LengthError

MAGIC = b"LDDR"
VERSION = 1


def save_entries(path, entries):
    """Write an ordered mapping name -> float32 ndarray."""
    items = list(entries.items())
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(items)))
        for name, arr in items:
            # note: ascontiguousarray would promote rank 0 to rank 1
            arr = np.asarray(arr, dtype="<f4")
            if arr.ndim and not arr.flags.c_contiguous:
                arr = np.ascontiguousarray(arr)
            name_b = name.encode("utf-8")
            if len(name_b) > 0xFFFF:
                raise FormatError(f"entry name too long: {name!r}")
            if arr.ndim > 0xFF:
                raise FormatError(f"rank {arr.ndim} exceeds container limit")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def load_entries(path):
    """Read the container back into an ordered mapping name -> ndarray."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 10:
        raise LengthError("truncated header")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    out = OrderedDict()
    off = 10
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            payload = blob[off : off + 4 * n]
            if len(payload) != 4 * n:
                raise LengthError(f"entry {name!r}: payload truncated")
            off += 4 * n
        except struct.error as exc:
            raise LengthError(f"truncated container: {exc}") from exc
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return out
