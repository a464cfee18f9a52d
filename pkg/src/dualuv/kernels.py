"""Backend selection for the hot loops.

The Cython extension ``dualuv._kernels`` is used when it was built; otherwise
the numpy versions in ``dualuv._kernels_py`` are used. ``set_backend`` lets
tests and the benchmark pin either one.
"""

import contextlib

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _native
except ImportError:  # extension not built
    _native = None

_BACKENDS = {"python": _kernels_py}
if _native is not None:
    _BACKENDS["cython"] = _native

_active = _BACKENDS.get("cython", _kernels_py)

EDT_FAR = 1e19


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "cython" if _active is _native and _native is not None else "python"


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    _active = _BACKENDS[name]


@contextlib.contextmanager
def using(name):
    prev = backend_name()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def raster_triangles(xy, z, width, height, cull=1, last_wins=False):
    """Scan-convert ``(F, 3, 2)`` pixel-space triangles with per-vertex depths.

    ``cull=1`` keeps only triangles with negative signed area (front-facing
    under the camera convention), ``cull=0`` keeps both windings.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64).reshape(-1, 3, 2)
    z = np.ascontiguousarray(z, dtype=np.float64).reshape(-1, 3)
    return _active.raster_triangles(xy, z, int(width), int(height), int(cull), bool(last_wins))


def accumulate_texels(rows, cols, weights, features, height, width):
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    features = np.ascontiguousarray(features, dtype=np.float64).reshape(len(rows), -1)
    return _active.accumulate_texels(rows, cols, weights, features, int(height), int(width))


def composite_splats(mean2d, conic, colors, opacity, bbox, width, height):
    return _active.composite_splats(
        np.ascontiguousarray(mean2d, dtype=np.float64),
        np.ascontiguousarray(conic, dtype=np.float64),
        np.ascontiguousarray(colors, dtype=np.float64),
        np.ascontiguousarray(opacity, dtype=np.float64),
        np.ascontiguousarray(bbox, dtype=np.int64),
        int(width),
        int(height),
    )


def edt_squared(mask):
    """Exact squared Euclidean distance to the nearest True pixel (inf if none)."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    out = np.asarray(_active.edt_squared(mask), dtype=np.float64)
    out[out >= EDT_FAR] = np.inf
    return out
