"""Surface-aligned UV feature grids.

Core grid: visible surface samples read image features at their projection
and write them to the texel owning their uv. Shell grid: samples on the
normal-offset shell that land outside the body silhouette do the same on a
coarser grid, addressed by the uv of the base surface point they came from.

Texel convention for an ``H x W`` grid: column ``floor(u W)``, row
``floor((1 - v) H)`` (row 0 is the top, v = 1).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .raster import pixel_index, point_visibility, rasterize, shell_mask

SCATTER_EPS = 1e-8
CORE_GRID = (512, 512)
SHELL_GRID = (128, 128)
ENCODING_FREQUENCIES = 8
MAX_MASK_RATIO = 0.5


def bilinear_sample(F, xy):
    """Four-tap bilinear lookup at continuous pixel positions.

    Pixel ``(i, j)`` has its center at ``(j + 0.5, i + 0.5)``; taps outside
    the image are clamped to the border. ``F`` is ``(H, W)`` or ``(H, W, C)``;
    ``xy`` is ``(N, 2)`` and may be a dual, in which case the result carries
    derivatives with respect to the query positions.
    """
    F = np.asarray(F, dtype=np.float64)
    squeeze = F.ndim == 2
    if squeeze:
        F = F[:, :, None]
    h, w = F.shape[:2]
    gx = xy[:, 0] - 0.5
    gy = xy[:, 1] - 0.5
    j0 = np.floor(ad.value(gx))
    i0 = np.floor(ad.value(gy))
    fx = (gx - j0).reshape(-1, 1)
    fy = (gy - i0).reshape(-1, 1)
    j0 = j0.astype(np.int64)
    i0 = i0.astype(np.int64)
    ja, jb = np.clip(j0, 0, w - 1), np.clip(j0 + 1, 0, w - 1)
    ia, ib = np.clip(i0, 0, h - 1), np.clip(i0 + 1, 0, h - 1)
    top = F[ia, ja] * (1.0 - fx) + F[ia, jb] * fx
    bottom = F[ib, ja] * (1.0 - fx) + F[ib, jb] * fx
    out = top * (1.0 - fy) + bottom * fy
    return out[:, 0] if squeeze else out


def uv_to_texel(uv, height, width):
    """Owning texel ``(row, col)`` of each uv; coordinates are clamped to the grid."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    cols = np.clip(np.floor(uv[:, 0] * width), 0, width - 1).astype(np.int64)
    rows = np.clip(np.floor((1.0 - uv[:, 1]) * height), 0, height - 1).astype(np.int64)
    return rows, cols


def texel_centers(height, width):
    """``(H, W, 2)`` uv of every texel center."""
    cols = (np.arange(width) + 0.5) / width
    rows = 1.0 - (np.arange(height) + 0.5) / height
    return np.stack(np.meshgrid(cols, rows), axis=-1)


@dataclass(frozen=True, eq=False)
class UVFeatureGrid:
    """Normalized features, accumulated kernel weight and coverage."""

    features: np.ndarray
    weight: np.ndarray

    @property
    def shape(self):
        return self.features.shape[:2]

    @property
    def channels(self):
        return self.features.shape[2]

    @property
    def coverage(self):
        return self.weight > 0


def _tent_taps(uv, height, width):
    """Radius-1 tent: bilinear weights on the four nearest texel centers."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    gx = uv[:, 0] * width - 0.5
    gy = (1.0 - uv[:, 1]) * height - 0.5
    j0 = np.floor(gx)
    i0 = np.floor(gy)
    fx, fy = gx - j0, gy - i0
    rows, cols, wts = [], [], []
    for di, dj, wt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)), (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        r = (i0 + di).astype(np.int64)
        c = (j0 + dj).astype(np.int64)
        ok = (r >= 0) & (r < height) & (c >= 0) & (c < width)
        rows.append(np.where(ok, r, 0))
        cols.append(np.where(ok, c, 0))
        wts.append(np.where(ok, wt, 0.0))
    # interleave so contributions stay ordered by sample index
    return np.stack(rows, 1).ravel(), np.stack(cols, 1).ravel(), np.stack(wts, 1).ravel()


def scatter_to_uv(uv, features, mask, grid=CORE_GRID, kernel="nearest", eps=SCATTER_EPS):
    """``U = sum m k f / (sum m k + eps)`` on an ``(H, W)`` texel grid.

    With the nearest kernel each unmasked sample adds weight 1 to the texel
    owning its uv. Contributions are summed in ascending sample order.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    height, width = grid
    features = np.asarray(features, dtype=np.float64)
    features = features.reshape(len(features), -1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    if not (len(uv) == len(features) == len(mask)):
        raise ValueError("uv, features and mask must be aligned")
    m = mask.astype(np.float64)
    if kernel == "nearest":
        rows, cols = uv_to_texel(uv, height, width)
        weights = m
        feats = features
    elif kernel == "tent":
        rows, cols, k = _tent_taps(uv, height, width)
        weights = k * np.repeat(m, 4)
        feats = np.repeat(features, 4, axis=0)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    acc, wsum = kernels.accumulate_texels(rows, cols, weights, feats, height, width)
    return UVFeatureGrid(acc / (wsum + eps)[:, :, None], wsum)


def filter_outside_mask(mask, pixels, image_mask):
    """Drop samples whose projected pixel lands on background."""
    image_mask = np.asarray(image_mask, dtype=bool)
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    h, w = image_mask.shape
    out = np.asarray(mask, dtype=bool).copy()
    inside = np.all(np.isfinite(pixels), axis=1) & (pixels[:, 0] >= 0) & (pixels[:, 0] < w) & (pixels[:, 1] >= 0) & (pixels[:, 1] < h)
    keep = np.zeros(len(out), dtype=bool)
    if inside.any():
        rows, cols = pixel_index(pixels[inside])
        keep[inside] = image_mask[rows, cols]
    return out & keep


def core_uv_encode(mesh, cam, F, samples, grid=CORE_GRID, kernel="nearest", eps=SCATTER_EPS,
                   eps_rel=None, image_mask=None):
    """Rasterize, test sample visibility, project, sample ``F`` and scatter."""
    db = rasterize(mesh, cam)
    pos = samples.positions(mesh)
    kwargs = {} if eps_rel is None else {"eps_rel": eps_rel}
    mask, pix = point_visibility(pos, db, cam, face_ids=samples.face_ids, **kwargs)
    if image_mask is not None:
        mask = filter_outside_mask(mask, pix, image_mask)
    feats = np.zeros((len(samples), np.shape(F)[2] if np.ndim(F) == 3 else 1))
    if mask.any():
        feats[mask] = bilinear_sample(F, pix[mask]).reshape(int(mask.sum()), -1)
    return scatter_to_uv(samples.uv, feats, mask, grid, kernel, eps)


def shell_uv_encode(mesh, shell, cam, F, samples, coarse_grid=SHELL_GRID, kernel="nearest", eps=SCATTER_EPS):
    """Scatter features seen only through the shell (outside the body's
    silhouette) at the base-surface uv of each shell sample."""
    pos = samples.positions(shell.mesh)
    gate = shell_mask(mesh, shell, cam, pos)
    mask = gate.samples
    feats = np.zeros((len(samples), np.shape(F)[2] if np.ndim(F) == 3 else 1))
    if mask.any():
        feats[mask] = bilinear_sample(F, gate.sample_pixels[mask]).reshape(int(mask.sum()), -1)
    return scatter_to_uv(samples.uv, feats, mask, coarse_grid, kernel, eps)


@dataclass(frozen=True, eq=False)
class UVPositionMap:
    positions: np.ndarray
    coverage: np.ndarray
    overlap: bool = False


def uv_plane_triangles(mesh, grid):
    height, width = grid
    xy = np.empty(mesh.uvs.shape)
    xy[..., 0] = mesh.uvs[..., 0] * width
    xy[..., 1] = (1.0 - mesh.uvs[..., 1]) * height
    return xy


def uv_position_map(mesh, grid=CORE_GRID, vertices=None):
    """Rasterize the atlas in the uv plane, interpolating 3D positions.

    Overlapping charts resolve to the last face written, with a warning.
    """
    height, width = grid
    verts = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    xy = uv_plane_triangles(mesh, grid)
    z = np.ones((mesh.n_faces, 3))
    _, face, bary, writes = kernels.raster_triangles(xy, z, width, height, cull=0, last_wins=True)
    cov = face >= 0
    pos = np.zeros((height, width, 3))
    if cov.any():
        tri = verts[mesh.faces[face[cov]]]
        pos[cov] = np.einsum("nk,nkd->nd", bary[cov], tri)
    overlap = bool((writes > 1).any())
    if overlap:
        warnings.warn(f"uv charts overlap on {int((writes > 1).sum())} texels; last face wins", stacklevel=2)
    return UVPositionMap(pos, cov, overlap)


def sinusoidal_encode(x, L=ENCODING_FREQUENCIES):
    """Per channel and frequency ``l`` in ``[0, L)`` emit ``sin(2^l pi x)``,
    ``cos(2^l pi x)``. ``(..., C)`` in, ``(..., 2 L C)`` out, grouped by
    input channel."""
    if L < 1:
        raise ValueError("L must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    freqs = (2.0 ** np.arange(L)) * np.pi
    arg = x[..., :, None] * freqs
    enc = np.stack([np.sin(arg), np.cos(arg)], axis=-1)
    return enc.reshape(x.shape[:-1] + (x.shape[-1] * 2 * L,))


def random_uv_mask(grid, ratio, seed):
    """Zero exactly ``floor(ratio * covered)`` covered texels.

    Returns the masked grid and the boolean map of dropped texels.
    """
    if not 0.0 <= ratio <= MAX_MASK_RATIO:
        raise ValueError(f"mask ratio must lie in [0, {MAX_MASK_RATIO}]")
    covered = np.flatnonzero(grid.coverage)
    k = int(np.floor(ratio * len(covered)))
    dropped = np.zeros(grid.shape, dtype=bool)
    if k:
        rng = np.random.default_rng(seed)
        dropped.flat[rng.choice(covered, size=k, replace=False)] = True
    features = grid.features.copy()
    weight = grid.weight.copy()
    features[dropped] = 0.0
    weight[dropped] = 0.0
    return UVFeatureGrid(features, weight), dropped


def sample_texture(texture, uv):
    """Nearest-texel lookup of an ``(H, W, C)`` texture at ``(N, 2)`` uvs."""
    texture = np.asarray(texture, dtype=np.float64)
    rows, cols = uv_to_texel(uv, texture.shape[0], texture.shape[1])
    return texture[rows, cols]


def render_texture(mesh, cam, texture, background=0.0):
    """Rasterize a textured mesh: per-pixel uv from perspective-correct
    barycentrics, then nearest-texel lookup. Returns ``(image, coverage)``."""
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim == 2:
        texture = texture[:, :, None]
    db = rasterize(mesh, cam)
    cov = db.coverage
    image = np.full((cam.height, cam.width, texture.shape[2]), background, dtype=np.float64)
    if cov.any():
        uv = np.einsum("nk,nkd->nd", db.bary[cov], mesh.uvs[db.face[cov]])
        image[cov] = sample_texture(texture, uv)
    return image, cov
