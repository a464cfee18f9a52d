import struct

import numpy as np
import pytest

from dualuv.imageio import read_pgm, read_ppm, to_uint8, write_pgm, write_ppm
from dualuv.tensorio import FormatError, decode_all, encode, read_tensor, read_tensors, write_tensors


@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.uint8])
def test_tensor_roundtrip(tmp_path, rng, dtype):
    arrays = [(rng.random((3, 4, 2)) * 200).astype(dtype), np.array(7, dtype=dtype), np.zeros((0, 5), dtype)]
    write_tensors(tmp_path / "t.tnsr", arrays)
    back = read_tensors(tmp_path / "t.tnsr")
    for a, b in zip(arrays, back):
        assert a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)


def test_tensor_header_layout():
    blob = encode(np.array([[1.0, 2.0]], dtype=np.float64))
    assert blob[:4] == b"TNSR"
    assert struct.unpack_from("<IBB", blob, 4) == (1, 1, 2)
    assert struct.unpack_from("<2Q", blob, 10) == (1, 2)
    assert np.frombuffer(blob[26:], "<f8").tolist() == [1.0, 2.0]
    assert encode(np.array([True, False]))[-2:] == b"\x01\x00"


def test_tensor_rejects_bad_input(tmp_path):
    good = encode(np.arange(4, dtype=np.float32))
    cases = {
        "bad magic": b"XNSR" + good[4:],
        "unsupported version": good[:4] + struct.pack("<I", 2) + good[8:],
        "unknown dtype": good[:8] + b"\x09" + good[9:],
        "payload shorter": good[:-1],
        "truncated header": good[:6],
        "empty": b"",
    }
    for msg, blob in cases.items():
        with pytest.raises(FormatError, match=msg):
            decode_all(blob)
    with pytest.raises(TypeError):
        encode(np.zeros(2, dtype=np.int32))
    write_tensors(tmp_path / "two.tnsr", [np.zeros(1), np.zeros(2)])
    with pytest.raises(FormatError):
        read_tensor(tmp_path / "two.tnsr")


def test_ppm_pgm_roundtrip(tmp_path, rng):
    rgb = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
    write_ppm(tmp_path / "a.ppm", rgb)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), rgb)
    gray = rng.integers(0, 256, (6, 3), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", gray)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), gray)
    assert (tmp_path / "a.pgm").read_bytes()[:11] == b"P5\n3 6\n255\n"


def test_image_header_comments_and_errors(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n255\n\x00\xff")
    assert read_pgm(p).tolist() == [[0, 255]]
    p.write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(FormatError):
        read_pgm(p)
    with pytest.raises(FormatError, match="bad magic"):
        read_ppm(p)
    p.write_bytes(b"P5\n2 1\n65535\n\x00\x00\x00\x00")
    with pytest.raises(FormatError):
        read_pgm(p)
    with pytest.raises(ValueError):
        write_ppm(tmp_path / "x.ppm", np.zeros((2, 2)))


def test_to_uint8_rounding():
    assert to_uint8(np.array([0.0, 1.0, 0.5, -1.0, 2.0, 1 / 255])).tolist() == [0, 255, 128, 0, 255, 1]
    assert to_uint8(np.array([True, False])).tolist() == [255, 0]
