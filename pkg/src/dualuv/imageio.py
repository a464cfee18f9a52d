"""Binary PPM (P6) and PGM (P5) images with 8-bit samples."""

import numpy as np

from .tensorio import FormatError


def to_uint8(image):
    """Map ``[0, 1]`` floats to bytes with round-half-up; bytes pass through."""
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    if image.dtype == np.bool_:
        return image.astype(np.uint8) * 255
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path, image):
    img = to_uint8(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM needs an (H, W, 3) image")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def write_pgm(path, image):
    img = to_uint8(image)
    if img.ndim != 2:
        raise ValueError("PGM needs an (H, W) image")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def _read_header(data, magic):
    if data[:2] != magic:
        raise FormatError(f"bad magic: expected {magic.decode()}")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise FormatError("non-numeric header field") from None
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError("only 8-bit images (maxval 255) are supported")
    return w, h, pos + 1


def _read(path, magic, channels):
    with open(path, "rb") as fh:
        data = fh.read()
    w, h, start = _read_header(data, magic)
    n = w * h * channels
    if len(data) - start < n:
        raise FormatError("pixel data shorter than header dims")
    img = np.frombuffer(data, dtype=np.uint8, count=n, offset=start)
    return img.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_ppm(path):
    """``(H, W, 3)`` uint8."""
    return _read(path, b"P6", 3)


def read_pgm(path):
    """``(H, W)`` uint8."""
    return _read(path, b"P5", 1)
