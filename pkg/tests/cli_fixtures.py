"""Small on-disk inputs for exercising every CLI command."""

import json

import numpy as np

from dualuv.camera import PinholeCamera, focal_for_fov, look_at, save_camera
from dualuv.gaussians import GaussianSet, save_gaussians
from dualuv.imageio import write_pgm, write_ppm
from dualuv.mesh import icosphere, sample_surface_uniform, write_obj
from dualuv.raster import silhouette
from dualuv.skinning import make_tube_body
from dualuv.tracker import BodyParams, Keypoints2D, pose_body, save_keypoints, save_params


def checker(size=64, cells=8, hi=0.9, lo=0.1):
    idx = np.arange(size) * cells // size
    board = np.where((idx[:, None] + idx[None, :]) % 2 == 0, hi, lo)
    return np.repeat(board[:, :, None], 3, axis=2)


def small_gaussians(mesh, n=6, seed=3):
    gen = np.random.default_rng(seed)
    s = sample_surface_uniform(mesh, n, seed)
    q = gen.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianSet(s.positions(mesh), q, gen.uniform(0.05, 0.25, (n, 3)), gen.random((n, 3)),
                       gen.uniform(0.4, 0.9, n), s.face_ids, s.bary)


def build(d):
    """Write fixtures into directory ``d``; returns a name -> path dict."""
    p = {k: str(d / v) for k, v in {
        "mesh": "sphere.obj", "cam": "cam.json", "bcam": "bcam.json", "tex": "tex.ppm",
        "gauss": "g.tnsr", "empty_pose": "empty.json", "pose": "pose.json", "init": "init.json",
        "kp": "kp.json", "mask": "mask.pgm",
    }.items()}
    mesh = icosphere(2)
    write_obj(mesh, p["mesh"])
    R, t = look_at([0, 0, 3.0], [0, 0, 0])
    f = focal_for_fov(64, 50.0)
    save_camera(PinholeCamera(f, f, 32, 32, 64, 64, R, t), p["cam"])
    write_ppm(p["tex"], checker())
    body = make_tube_body()
    save_gaussians(small_gaussians(body.rest_mesh), p["gauss"])
    with open(p["empty_pose"], "w") as fh:
        fh.write("{}\n")
    truth = BodyParams.zeros(body)
    truth.theta_body[6] = [0.0, 0.0, 0.4]
    truth.theta_glob = np.array([0.0, 0.2, 0.0])
    save_params(truth, p["pose"])
    save_params(truth, p["init"])
    R, t = look_at([0.0, -0.05, 3.6], [0.0, -0.05, 0.0])
    f = focal_for_fov(96, 30.0)
    bcam = PinholeCamera(f, f, 48, 48, 96, 96, R, t)
    save_camera(bcam, p["bcam"])
    posed = pose_body(body, truth)
    labels = list(body.joint_names) + ["v5", "v100"]
    pix = bcam.project(np.concatenate([posed.joints, posed.vertices[[5, 100]]]))[0]
    save_keypoints(Keypoints2D(pix, np.ones(len(labels)), labels), p["kp"])
    write_pgm(p["mask"], silhouette(body.rest_mesh, bcam, vertices=posed.vertices))
    return p


def commands(p, out):
    """One invocation per CLI command; ``out`` is an output directory.
    Returns ``(argv, output files)`` pairs."""
    o = lambda name: str(out / name)
    small = ["--set", "samples=3000"]
    return [
        (["mesh-info", p["mesh"], "--out", o("info.json")], [o("info.json")]),
        (["sample-surface", p["mesh"], "--count", "500", "--seed", "4", "--out", o("s.tnsr")], [o("s.tnsr")]),
        (["rasterize", p["mesh"], p["cam"], "--out", o("r.tnsr"), "--mask", o("r.pgm")], [o("r.tnsr"), o("r.pgm")]),
        (["encode-uv", p["mesh"], p["cam"], p["tex"], o("e.tnsr"), *small, "--set", "core_grid=[32,32]",
          "--set", "shell_grid=[16,16]"], [o("e.tnsr")]),
        (["render", p["gauss"], p["pose"], p["bcam"], o("g.ppm"), "--raw", o("g.tnsr")], [o("g.ppm"), o("g.tnsr")]),
        (["fit-pose", p["init"], p["kp"], p["mask"], p["bcam"], "--stage", "body", "--steps", "5",
          "--out", o("fit.json"), "--trace", o("fit.csv")], [o("fit.json"), o("fit.csv")]),
        (["compose-prompts", "--regime", "role", "--count", "5", "--negatives", "2", "--seed", "9",
          "--out", o("p.jsonl")], [o("p.jsonl")]),
        (["roundtrip", p["mesh"], p["tex"], p["cam"], *small, "--grid", "32", "--out", o("rt.json")], [o("rt.json")]),
    ]


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
