"""Time the Cython kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each workload runs under both backends; the table reports the best of N
wall-clock runs and the speed-up, and checks the outputs agree.
"""

import argparse
import time

import numpy as np

from dualuv import kernels
from dualuv.camera import PinholeCamera, look_at
from dualuv.gaussians import GaussianSet, splat_render
from dualuv.mesh import icosphere, sample_surface_uniform
from dualuv.raster import distance_transform, rasterize
from dualuv.uvscatter import scatter_to_uv


def workloads():
    gen = np.random.default_rng(0)
    R, t = look_at([0.3, 0.2, 3.0], [0, 0, 0])
    cam = PinholeCamera(600, 600, 256, 256, 512, 512, R, t)
    sphere = icosphere(4)

    uv = gen.random((200000, 2))
    feats = gen.random((200000, 3))
    mask = gen.random(200000) < 0.6

    blobs = gen.random((512, 512)) < 0.002

    n = 300
    s = sample_surface_uniform(sphere, n, 1)
    q = gen.normal(size=(n, 4))
    g = GaussianSet(s.positions(sphere), q / np.linalg.norm(q, axis=1, keepdims=True),
                    gen.uniform(0.01, 0.06, (n, 3)), gen.random((n, 3)), gen.uniform(0.3, 0.9, n),
                    s.face_ids, s.bary)
    small = PinholeCamera(150, 150, 64, 64, 128, 128, R, t)

    return {
        "rasterize icosphere(4) @ 512^2": (lambda: rasterize(sphere, cam).depth, 1e-12),
        "scatter 200k samples -> 256^2": (lambda: scatter_to_uv(uv, feats, mask, grid=(256, 256)).features, 1e-12),
        "distance transform 512^2": (lambda: distance_transform(blobs).distance, 0.0),
        "splat 300 gaussians @ 128^2": (lambda: splat_render(g, small)[0], 1e-12),
    }


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("Cython extension not built; run `python3 setup.py build_ext --inplace` first")
    print(f"{'workload':36s} " + " ".join(f"{b:>10s}" for b in backends) + "   speed-up  agree")
    for name, (fn, tol) in workloads().items():
        times, outs = {}, {}
        for b in backends:
            with kernels.using(b):
                times[b], outs[b] = best_of(fn, args.repeat)
        row = f"{name:36s} " + " ".join(f"{times[b] * 1e3:8.1f}ms" for b in backends)
        if "cython" in times:
            a, c = outs["python"], outs["cython"]
            fin = np.isfinite(a)
            agree = np.array_equal(fin, np.isfinite(c)) and (np.abs(a[fin] - c[fin]).max(initial=0.0) <= tol)
            row += f"   {times['python'] / times['cython']:7.1f}x  {'yes' if agree else 'NO'}"
        print(row)


if __name__ == "__main__":
    main()
