"""Flat tensor files: one or more consecutive records of

    b"TNSR" | u32 version=1 | u8 dtype | u8 rank | u64 dims[rank] | payload

All integers and payloads are little-endian, payloads row-major.
"""

import struct

import numpy as np

MAGIC = b"TNSR"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint8"): 2}


class FormatError(ValueError):
    """Malformed or unsupported file contents."""


def encode(array):
    arr = np.asarray(array)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    code = CODES.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise TypeError(f"unsupported dtype {arr.dtype}; use float32, float64 or uint8")
    if arr.ndim > 255:
        raise ValueError("rank exceeds 255")
    head = MAGIC + struct.pack("<IBB", VERSION, code, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()


def decode_all(data):
    """Parse every record in ``data``; raises :class:`FormatError`."""
    out = []
    pos = 0
    view = memoryview(data)
    while pos < len(data):
        if len(data) - pos < 10:
            raise FormatError("truncated header")
        if bytes(view[pos:pos + 4]) != MAGIC:
            raise FormatError("bad magic")
        version, code, rank = struct.unpack_from("<IBB", data, pos + 4)
        if version != VERSION:
            raise FormatError(f"unsupported version {version}")
        if code not in DTYPES:
            raise FormatError(f"unknown dtype code {code}")
        pos += 10
        if len(data) - pos < 8 * rank:
            raise FormatError("truncated dims")
        dims = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        dtype = DTYPES[code]
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = count * dtype.itemsize
        if len(data) - pos < nbytes:
            raise FormatError("payload shorter than header dims")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).reshape(dims).copy()
        out.append(arr.astype(dtype.newbyteorder("="), copy=False))
        pos += nbytes
    if not out:
        raise FormatError("empty tensor file")
    return out


def write_tensors(path, arrays):
    with open(path, "wb") as fh:
        for arr in arrays:
            fh.write(encode(arr))


def read_tensors(path):
    with open(path, "rb") as fh:
        return decode_all(fh.read())


def write_tensor(path, array):
    write_tensors(path, [array])


def read_tensor(path):
    arrays = read_tensors(path)
    if len(arrays) != 1:
        raise FormatError(f"expected one tensor, found {len(arrays)}")
    return arrays[0]
