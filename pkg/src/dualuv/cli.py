"""``dualuv`` command line.

Exit codes: 0 success, 1 numerical failure, 2 I/O, format or usage error.
"""

import argparse
import csv
import hashlib
import json
import sys

import numpy as np

from . import __version__
from .camera import load_camera
from .config import ConfigError, load_config
from .gaussians import load_gaussians, rig_to_pose, splat_render
from .imageio import read_pgm, read_ppm, write_pgm, write_ppm
from .mesh import build_shell, read_obj, sample_surface_uniform
from .raster import rasterize
from .sampler import REGIMES, load_vocab, refine_external, sample_scene
from .skinning import load_rig, make_tube_body
from .tensorio import FormatError, read_tensor, read_tensors, write_tensors
from .tracker import (
    BodyParams, FrameObservation, OptimConfig, OptimizationError, StageWeights, load_correspondence,
    head_override, load_keypoints, load_params, pose_body, run_stage, save_params,
)
from .tracker.stages import STAGES, VIEWS
from .uvscatter import core_uv_encode, render_texture, shell_uv_encode

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2
MAE_THRESHOLD = 0.05


def derive_seed(seed, name):
    """Fan one seed out to independent named consumers."""
    h = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    return (int(seed) ^ h) & 0x7FFFFFFFFFFFFFFF


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_image_features(path):
    if path.endswith(".ppm"):
        return read_ppm(path).astype(np.float64) / 255.0
    feats = np.asarray(read_tensor(path), dtype=np.float64)
    if feats.ndim == 2:
        feats = feats[:, :, None]
    if feats.ndim != 3:
        raise FormatError("feature tensor must be (H, W) or (H, W, C)")
    return feats


def _load_body(path):
    return make_tube_body() if path is None else load_rig(path)


# -- commands ------------------------------------------------------------


def cmd_mesh_info(args, cfg):
    mesh = read_obj(args.mesh)
    info = {
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "bbox_min": mesh.vertices.min(axis=0).tolist() if mesh.n_vertices else None,
        "bbox_max": mesh.vertices.max(axis=0).tolist() if mesh.n_vertices else None,
        "surface_area": float(mesh.face_areas.sum()),
        "uv_min": mesh.uvs.reshape(-1, 2).min(axis=0).tolist() if mesh.n_faces else None,
        "uv_max": mesh.uvs.reshape(-1, 2).max(axis=0).tolist() if mesh.n_faces else None,
        "degenerate_faces": int((mesh.face_areas <= 0).sum()),
    }
    _dump_json(info, args.out)
    return EXIT_OK


def cmd_sample_surface(args, cfg):
    mesh = read_obj(args.mesh)
    count = cfg["samples"] if args.count is None else args.count
    samples = sample_surface_uniform(mesh, count, derive_seed(cfg["seed"], "sample-surface"))
    write_tensors(args.out, [samples.as_array()])
    return EXIT_OK


def cmd_rasterize(args, cfg):
    mesh = read_obj(args.mesh)
    cam = load_camera(args.camera)
    db = rasterize(mesh, cam, cull_backfaces=not args.no_cull)
    write_tensors(args.out, [db.depth, db.face.astype(np.float64), db.bary])
    if args.mask:
        write_pgm(args.mask, db.coverage)
    return EXIT_OK


def cmd_encode_uv(args, cfg):
    mesh = read_obj(args.mesh)
    cam = load_camera(args.camera)
    feats = _load_image_features(args.features)
    if feats.shape[:2] != (cam.height, cam.width):
        raise FormatError(f"feature map is {feats.shape[:2]}, camera expects {(cam.height, cam.width)}")
    samples = sample_surface_uniform(mesh, cfg["samples"], derive_seed(cfg["seed"], "encode-uv"))
    core = core_uv_encode(mesh, cam, feats, samples, tuple(cfg["core_grid"]), cfg["kernel"],
                          cfg["scatter_eps"], eps_rel=cfg["visibility_eps"])
    shell = build_shell(mesh, cfg["shell_delta"])
    outer = shell_uv_encode(mesh, shell, cam, feats, samples, tuple(cfg["shell_grid"]), cfg["kernel"], cfg["scatter_eps"])
    write_tensors(args.out, [
        core.features, core.coverage.astype(np.uint8), outer.features, outer.coverage.astype(np.uint8),
    ])
    return EXIT_OK


def cmd_render(args, cfg):
    gset = load_gaussians(args.gaussians)
    cam = load_camera(args.camera)
    with open(args.pose, "r", encoding="utf-8") as fh:
        pose = json.load(fh)
    if pose and len(gset):
        body = _load_body(args.rig)
        posed = pose_body(body, BodyParams.from_dict(pose)).mesh(body)
        gset = rig_to_pose(gset, body.rest_mesh, posed)
    rgb, alpha = splat_render(gset, cam, cfg["background"])
    write_ppm(args.out, rgb)
    if args.raw:
        write_tensors(args.raw, [rgb, alpha])
    return EXIT_OK


def _stage_weights(cfg, stage):
    return StageWeights(**cfg["stage_weights"][stage])


def _optim(cfg, steps):
    o = dict(cfg["optim"])
    if steps is not None:
        o["steps"] = steps
    o["betas"] = tuple(o["betas"])
    o["vertical_axis"] = tuple(o["vertical_axis"])
    return OptimConfig(**o)


def cmd_fit_pose(args, cfg):
    body = _load_body(args.rig)
    init = load_params(args.init)
    init.check(body)
    cam = load_camera(args.camera)
    kset = load_keypoints(args.keypoints)
    mask = read_pgm(args.mask) >= 128
    if mask.shape != (cam.height, cam.width):
        raise FormatError(f"mask is {mask.shape}, camera expects {(cam.height, cam.width)}")
    rest = None
    if args.head_vertices or args.head_table:
        if not (args.head_vertices and args.head_table):
            raise ValueError("--head-vertices and --head-table go together")
        rest, _ = head_override(body, read_tensor(args.head_vertices), load_correspondence(args.head_table))
    obs = FrameObservation(cam, kset, mask, view=args.view, upper_body=args.upper_body)
    stages = STAGES if args.stage == "all" else (args.stage,)
    optim = _optim(cfg, args.steps)
    current = init
    rows = []
    flags = []
    for stage in stages:
        res = run_stage(stage, body, current, obs, _stage_weights(cfg, stage), optim, prior=init, rest_vertices=rest)
        current = res.final
        rows.extend((stage, k, v) for k, v in enumerate(res.trace))
        flags.extend(f"{stage}: {f}" for f in res.flags)
    save_params(current, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "step", "loss"])
            for stage, k, v in rows:
                w.writerow([stage, k, repr(float(v))])
    for f in flags:
        print(f"warning: {f}", file=sys.stderr)
    return EXIT_OK


def cmd_compose_prompts(args, cfg):
    vocab = load_vocab(args.vocab)
    lines = []
    for i in range(args.count):
        scene = sample_scene(vocab, args.regime, derive_seed(cfg["seed"], f"scene:{i}"), negative_k=args.negatives)
        rec = json.loads(scene.to_json())
        if args.refine:
            ref = refine_external(scene, args.refine)
            rec["refined"] = ref.text
            rec["refine_ok"] = ref.refined
            if ref.error:
                rec["refine_error"] = ref.error
        lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
    text = "".join(line + "\n" for line in lines)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def roundtrip_report(mesh, cam, texture, samples_count, seed, grid=None, kernel="nearest", eps_rel=None):
    """Render a textured mesh, encode the render back to uv space and
    compare covered texels with the texture."""
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim == 2:
        texture = texture[:, :, None]
    grid = tuple(grid) if grid is not None else texture.shape[:2]
    image, cov = render_texture(mesh, cam, texture)
    samples = sample_surface_uniform(mesh, samples_count, seed)
    uvgrid = core_uv_encode(mesh, cam, image, samples, grid, kernel, eps_rel=eps_rel, image_mask=cov)
    covered = uvgrid.coverage
    if grid != texture.shape[:2]:
        from .uvscatter import sample_texture, texel_centers
        truth = sample_texture(texture, texel_centers(*grid).reshape(-1, 2)).reshape(grid + (texture.shape[2],))
    else:
        truth = texture
    n = int(covered.sum())
    report = {"covered_texels": n, "grid": list(grid), "rendered_pixels": int(cov.sum())}
    if n:
        err = np.abs(uvgrid.features[covered] - truth[covered]).mean(axis=1)
        report.update({
            "mean_abs_error": float(err.mean()),
            "max_abs_error": float(err.max()),
            "fraction_within_0.05": float((err <= MAE_THRESHOLD).mean()),
        })
    else:
        report.update({"mean_abs_error": None, "max_abs_error": None, "fraction_within_0.05": None})
    return report


def cmd_roundtrip(args, cfg):
    mesh = read_obj(args.mesh)
    cam = load_camera(args.camera)
    texture = read_ppm(args.texture).astype(np.float64) / 255.0
    grid = None if args.grid is None else (args.grid, args.grid)
    report = roundtrip_report(mesh, cam, texture, cfg["samples"], derive_seed(cfg["seed"], "roundtrip"),
                              grid, cfg["kernel"], cfg["visibility_eps"])
    _dump_json(report, args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. optim.lr=0.01 (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")

    p = argparse.ArgumentParser(prog="dualuv", description="Dual-UV avatar toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mesh-info", parents=[common], help="summarize an OBJ mesh")
    s.add_argument("mesh")
    s.add_argument("--out", help="JSON output (stdout by default)")
    s.set_defaults(func=cmd_mesh_info)

    s = sub.add_parser("sample-surface", parents=[common], help="area-uniform surface samples")
    s.add_argument("mesh")
    s.add_argument("--count", type=int)
    s.add_argument("--out", required=True, help="tensor file of [face, b0, b1, b2, u, v] rows")
    s.set_defaults(func=cmd_sample_surface)

    s = sub.add_parser("rasterize", parents=[common], help="depth, face id and barycentric buffers")
    s.add_argument("mesh")
    s.add_argument("camera")
    s.add_argument("--out", required=True)
    s.add_argument("--mask", help="also write the coverage mask as PGM")
    s.add_argument("--no-cull", action="store_true", help="keep back-facing triangles")
    s.set_defaults(func=cmd_rasterize)

    s = sub.add_parser("encode-uv", parents=[common], help="scatter image features into core and shell uv grids")
    s.add_argument("mesh")
    s.add_argument("camera")
    s.add_argument("features", help="feature tensor (H, W, C) or PPM image")
    s.add_argument("out")
    s.set_defaults(func=cmd_encode_uv)

    s = sub.add_parser("render", parents=[common], help="splat a gaussian set")
    s.add_argument("gaussians")
    s.add_argument("pose", help="body parameter JSON; {} renders the canonical set")
    s.add_argument("camera")
    s.add_argument("out", help="PPM image")
    s.add_argument("--rig", help="rig file (default: built-in tube body)")
    s.add_argument("--raw", help="also write float rgb and alpha tensors")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("fit-pose", parents=[common], help="refine body parameters against 2D observations")
    s.add_argument("init")
    s.add_argument("keypoints")
    s.add_argument("mask", help="foreground PGM (>= 128 is foreground)")
    s.add_argument("camera")
    s.add_argument("--stage", choices=STAGES + ("all",), default="all")
    s.add_argument("--view", choices=VIEWS, default="front")
    s.add_argument("--upper-body", action="store_true", help="drop wrist keypoints, enable the upright prior")
    s.add_argument("--steps", type=int, help="Adam steps per stage")
    s.add_argument("--rig")
    s.add_argument("--head-vertices", help="tensor of external head vertices")
    s.add_argument("--head-table", help="JSON head-to-body vertex correspondence")
    s.add_argument("--out", required=True)
    s.add_argument("--trace", help="CSV loss trace")
    s.set_defaults(func=cmd_fit_pose)

    s = sub.add_parser("compose-prompts", parents=[common], help="sample scene descriptions")
    s.add_argument("--regime", choices=REGIMES, default="outfit")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--vocab", help="vocabulary JSON (default: shipped lists)")
    s.add_argument("--negatives", type=int, default=0, help="negative terms per scene")
    s.add_argument("--refine", help="external refinement command")
    s.add_argument("--out", help="JSON-lines output (stdout by default)")
    s.set_defaults(func=cmd_compose_prompts)

    s = sub.add_parser("roundtrip", parents=[common], help="texture -> render -> uv round-trip report")
    s.add_argument("mesh")
    s.add_argument("texture", help="PPM texture")
    s.add_argument("camera")
    s.add_argument("--grid", type=int, help="square uv grid size (default: texture size)")
    s.add_argument("--out", help="JSON report (stdout by default)")
    s.set_defaults(func=cmd_roundtrip)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except OptimizationError as exc:
        print(f"dualuv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"dualuv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError, ConfigError, json.JSONDecodeError, ValueError, KeyError, IndexError) as exc:
        print(f"dualuv: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
