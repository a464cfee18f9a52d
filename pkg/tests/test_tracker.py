import math
from types import SimpleNamespace

import numpy as np
import pytest

from dualuv import autodiff as ad
from dualuv.camera import PinholeCamera, focal_for_fov, look_at
from dualuv.raster import distance_transform, silhouette
from dualuv.tracker import (
    BodyParams, FrameObservation, HeadCorrespondence, Keypoints2D, KeypointSet, OptimConfig,
    OptimizationError, ParamLayout, TrackerWarning, adam_minimize, free_indices, gmof, head_override,
    load_keypoints, load_params, mask_inside_loss, pose_body, pose_reg_loss, reprojection_loss,
    run_stage, save_keypoints, save_params, side_alignment_loss, side_back_constraints, smoothness_loss,
    upright_loss, STAGE_WEIGHTS,
)
from dualuv.tracker.stages import embed, stage_objective, _prepare
from dualuv.tracker.terms import mask_inside_posed, smoothness_posed
from dualuv.transforms import rodrigues

from oracles import central_fd, rel_err


def frontal_camera(w=256):
    R, t = look_at([0.0, -0.05, 3.6], [0.0, -0.05, 0.0])
    f = focal_for_fov(w, 30.0)
    return PinholeCamera(f, f, w / 2, w / 2, w, w, R, t)


def random_params(body, gen, std=0.2):
    p = BodyParams.zeros(body)
    p.theta_glob = gen.normal(0, 0.1, 3)
    p.theta_body = gen.normal(0, std, p.theta_body.shape)
    p.theta_lhand = gen.normal(0, std, p.theta_lhand.shape)
    p.theta_rhand = gen.normal(0, std, p.theta_rhand.shape)
    p.t = gen.normal(0, 0.02, 3)
    return p


def synth_keypoints(body, params, cam, extra_vertices=(5, 100, 300)):
    posed = pose_body(body, params)
    labels = list(body.joint_names) + [f"v{i}" for i in extra_vertices]
    pts = np.concatenate([posed.joints, posed.vertices[list(extra_vertices)]])
    pix = cam.project(pts)[0]
    return Keypoints2D(pix, np.ones(len(labels)), labels)


# -- gmof ------------------------------------------------------------------------------


def test_gmof_examples():
    assert gmof(0.0) == 0.0
    assert gmof(100.0, sigma=100.0) == pytest.approx(5000.0, abs=1e-9)
    assert gmof(1e12, sigma=3.0) == pytest.approx(9.0, rel=1e-12)
    r = np.linspace(0, 500, 200)
    assert np.all(np.diff(gmof(r, 50.0)) >= 0)
    with pytest.raises(ValueError):
        gmof(1.0, sigma=0.0)


def test_gmof_derivative_matches_fd():
    r = np.array([0.3, 7.0, 42.0, 150.0])
    _, d = gmof(r, 30.0, derivative=True)
    h = 1e-5
    fd = (gmof(r + h, 30.0) - gmof(r - h, 30.0)) / (2 * h)
    assert rel_err(d, fd) <= 1e-7


# -- reprojection --------------------------------------------------------------------------


def test_reprojection_self_consistent(tube_body, body_camera, rng):
    p = random_params(tube_body, rng)
    kps = synth_keypoints(tube_body, p, body_camera)
    assert reprojection_loss(p, tube_body, body_camera, kps) <= 1e-12


def test_reprojection_low_confidence_is_empty(tube_body, body_camera, rng):
    p = random_params(tube_body, rng)
    kps = synth_keypoints(tube_body, p, body_camera)
    low = Keypoints2D(kps.xy + 30.0, np.full(len(kps), 0.5), kps.labels)
    with pytest.warns(TrackerWarning):
        assert reprojection_loss(p, tube_body, body_camera, low) == 0.0


def test_reprojection_excluded_wrists_are_insensitive(tube_body, body_camera, rng):
    p = random_params(tube_body, rng)
    kps = synth_keypoints(tube_body, p, body_camera)
    kps = Keypoints2D(kps.xy + rng.normal(0, 5, kps.xy.shape), kps.conf, kps.labels)
    wrists = [kps.labels.index("left_wrist"), kps.labels.index("right_wrist")]

    def loss_of(flat, exclude):
        xy = kps.xy.copy()
        xy[wrists] = flat.reshape(2, 2)
        return reprojection_loss(p, tube_body, body_camera, Keypoints2D(xy, kps.conf, kps.labels),
                                 exclude_wrists=exclude)

    x0 = kps.xy[wrists].ravel()
    assert np.all(central_fd(lambda v: loss_of(v, True), x0, h=1e-3) == 0.0)
    assert np.abs(central_fd(lambda v: loss_of(v, False), x0, h=1e-3)).max() > 0


def test_reprojection_unresolvable_label(tube_body, body_camera):
    kps = Keypoints2D([[1.0, 2.0]], [1.0], ["left_antenna"])
    with pytest.raises(KeyError, match="left_antenna"):
        reprojection_loss(BodyParams.zeros(tube_body), tube_body, body_camera, kps)
    with pytest.raises(KeyError, match="v99999"):
        reprojection_loss(BodyParams.zeros(tube_body), tube_body, body_camera,
                          Keypoints2D([[1.0, 2.0]], [1.0], ["v99999"]))


# -- mask ------------------------------------------------------------------------------------


def test_mask_all_inside(tube_body):
    cam = frontal_camera()
    assert mask_inside_loss(BodyParams.zeros(tube_body), tube_body, cam,
                            distance_transform(np.ones((256, 256), bool))) == 0.0


def test_mask_one_vertex_five_pixels_out():
    mask = np.zeros((64, 200), bool)
    mask[:, :100] = True
    df = distance_transform(mask)
    cam = PinholeCamera(1.0, 1.0, 0.0, 0.0, 200, 64)
    n = 10
    verts = np.column_stack([np.full(n, 40.5), np.linspace(3.5, 60.5, n), np.ones(n)])
    verts[3, 0] = 104.5
    assert mask_inside_posed(SimpleNamespace(vertices=verts), cam, df) == pytest.approx(5.0 / n, abs=1e-12)


def test_mask_gradient_points_toward_mask(tube_body):
    cam = frontal_camera()
    mask = np.zeros((256, 256), bool)
    mask[:, :118] = True
    df = distance_transform(mask)
    p = BodyParams.zeros(tube_body)
    lay = ParamLayout.for_body(tube_body)
    tx = lay.slices["t"].start
    v = p.to_vector()
    fd = central_fd(lambda x: mask_inside_loss(embed(v, [tx], x), tube_body, cam, df), v[[tx]], h=1e-4)
    g = mask_inside_loss(ad.Dual.seed(v), tube_body, cam, df).grad[tx]
    # the mask lies toward -x in the image, which is world -x for this camera
    assert fd[0] > 0 and g > 0


# -- upright, smoothness, pose prior ----------------------------------------------------------------


@pytest.mark.parametrize("angle,expected", [(0.0, 0.0), (math.pi / 2, 1.0), (math.pi / 3, 0.5)])
def test_upright_examples(tube_body, angle, expected):
    p = BodyParams.zeros(tube_body)
    p.theta_glob = np.array([0.0, 0.0, angle])
    assert upright_loss(p, tube_body) == pytest.approx(expected, abs=1e-12)


def test_smoothness_static_and_linear(tube_body, rng):
    cam = frontal_camera()
    p = random_params(tube_body, rng)
    assert smoothness_loss([p, p, p, p], tube_body, cam) == 0.0
    seq = []
    for k in range(4):
        q = p.copy()
        q.t = np.array([0.01 * k, 0.0, 0.0])
        seq.append(q)
    assert smoothness_loss(seq, tube_body, cam) <= 1e-18


def test_smoothness_constant_acceleration(rng):
    cam = PinholeCamera(1.0, 1.0, 0.0, 0.0, 64, 64)
    a = np.array([0.7, -1.3])
    base = np.column_stack([rng.random((20, 2)) * 10, np.ones(20)])
    seq = []
    for k in range(5):
        v = base.copy()
        v[:, :2] += 0.5 * a * k * k + np.array([2.0, 1.0]) * k
        seq.append(SimpleNamespace(vertices=v))
    assert smoothness_posed(seq, cam) == pytest.approx(a @ a, abs=1e-12)


def test_smoothness_short_sequence_warns(tube_body):
    p = BodyParams.zeros(tube_body)
    with pytest.warns(TrackerWarning):
        assert smoothness_loss([p, p], tube_body, frontal_camera()) == 0.0


def test_pose_reg_examples(tube_body, rng):
    p = random_params(tube_body, rng)
    assert pose_reg_loss(p, p) == 0.0
    q = p.copy()
    q.theta_body[2, 1] += 0.1
    assert pose_reg_loss(q, p) == pytest.approx(0.01, abs=1e-15)
    q.t = q.t + 5.0
    q.beta = q.beta + 1.0
    assert pose_reg_loss(q, p) == pytest.approx(0.01, abs=1e-15)
    r = random_params(tube_body, rng)
    pose = lambda x: np.concatenate([x.theta_glob, x.theta_body.ravel(), x.theta_lhand.ravel(),
                                     x.theta_rhand.ravel(), x.theta_jaw])
    oracle = np.linalg.norm(pose(r) - pose(p)) ** 2
    assert abs(pose_reg_loss(r, p) - oracle) <= 1e-12
    assert abs(pose_reg_loss(r.to_vector(), p, tube_body) - oracle) <= 1e-12


def test_term_gradients_match_fd(tube_body, body_camera, rng):
    lay = ParamLayout.for_body(tube_body)
    df = distance_transform(silhouette(tube_body.rest_mesh, body_camera))
    labels = list(tube_body.joint_names) + ["v5", "v300"]
    kps = Keypoints2D(rng.uniform(60, 200, (len(labels), 2)), np.ones(len(labels)), labels)
    prior = random_params(tube_body, rng)
    terms = {
        "reproj": lambda v: reprojection_loss(v, tube_body, body_camera, kps),
        "upright": lambda v: upright_loss(v, tube_body),
        "pose_reg": lambda v: pose_reg_loss(v, prior, tube_body),
        "side": lambda v: side_alignment_loss(v, tube_body, body_camera),
    }
    for _ in range(2):
        v = random_params(tube_body, rng).to_vector()
        v[lay.slices["beta"]] = rng.normal(0, 0.5, 2)
        for name, fn in terms.items():
            g = fn(ad.Dual.seed(v)).grad
            fd = central_fd(fn, v, h=1e-5)
            assert rel_err(g, fd) <= 1e-4, name
    assert np.isfinite(mask_inside_loss(ad.Dual.seed(v), tube_body, body_camera, df).grad).all()


# -- views -----------------------------------------------------------------------------------------


def test_side_alignment_examples(tube_body):
    p = BodyParams.zeros(tube_body)
    R, t = look_at([3.6, 0.0, 0.0], [0.0, 0.0, 0.0])
    side = PinholeCamera(300, 300, 128, 128, 256, 256, R, t)
    assert side_alignment_loss(p, tube_body, side) == pytest.approx(0.0, abs=1e-12)
    assert side_alignment_loss(p, tube_body, frontal_camera()) == pytest.approx(1.0, abs=1e-12)


def test_side_back_config():
    w = STAGE_WEIGHTS["body"]
    side = side_back_constraints("left", w)
    assert side.freeze_translation and side.weights.side == 1e4 and side.weights.head == 0.0
    back = side_back_constraints("back", w)
    assert back.weights.reproj == 0.0 and back.weights.mask == w.mask and back.upright
    assert back.weights.up == w.up
    front = side_back_constraints("front", w)
    assert not front.upright and front.weights == w
    assert side_back_constraints("front", w, upper_body=True).upright
    with pytest.raises(ValueError):
        side_back_constraints("top", w)


def test_side_view_freezes_translation(tube_body):
    lay = ParamLayout.for_body(tube_body)
    idx = free_indices("body", tube_body, lay, freeze_translation=True)
    assert not np.isin(lay.indices("t"), idx).any()


def test_back_view_ignores_keypoints(tube_body, rng):
    cam = frontal_camera()
    p = random_params(tube_body, rng)
    mask = silhouette(tube_body.rest_mesh, cam, vertices=pose_body(tube_body, p).vertices)
    lay = ParamLayout.for_body(tube_body)
    free = free_indices("body", tube_body, lay)
    base = p.to_vector()
    values = []
    for shift in (0.0, 25.0):
        kps = synth_keypoints(tube_body, p, cam)
        kps = Keypoints2D(kps.xy + shift, kps.conf, kps.labels)
        obs = FrameObservation(cam, kps, mask, view="back")
        frame, _ = _prepare("body", tube_body, obs, STAGE_WEIGHTS["body"], OptimConfig())
        loss = stage_objective("body", tube_body, [frame], [base], [base], free, OptimConfig(), layout=lay)
        values.append(loss(ad.Dual.seed(base[free])))
    assert values[0].val == values[1].val
    assert np.array_equal(values[0].grad, values[1].grad)


# -- stages ----------------------------------------------------------------------------------------


def test_stage_fixed_point(tube_body, rng):
    cam = frontal_camera()
    truth = random_params(tube_body, rng)
    kps = synth_keypoints(tube_body, truth, cam)
    mask = silhouette(tube_body.rest_mesh, cam, vertices=pose_body(tube_body, truth).vertices)
    obs = FrameObservation(cam, kps, mask)
    res = run_stage("body", tube_body, truth, obs, optim=OptimConfig(steps=100, mask_slack=2.0))
    assert np.abs(res.final.to_vector() - truth.to_vector()).max() <= 1e-6
    assert len(res.trace) == 101


@pytest.mark.parametrize("stage", ["body", "head", "hand"])
def test_stage_freezing_contract(tube_body, rng, stage):
    cam = frontal_camera()
    truth = random_params(tube_body, rng)
    init = random_params(tube_body, rng)
    init.beta = rng.normal(0, 0.3, 2)
    init.psi = rng.normal(0, 0.3, 2)
    init.theta_jaw = rng.normal(0, 0.1, 3)
    kps = synth_keypoints(tube_body, truth, cam)
    head = Keypoints2D(kps.xy[-3:], np.ones(3), kps.labels[-3:])
    obs = FrameObservation(cam, KeypointSet(kps, dense_head=head, dense_hand=head))
    res = run_stage(stage, tube_body, init, obs, optim=OptimConfig(steps=5, lr=1e-2))
    before, after = init.to_vector(), res.final.to_vector()
    frozen = np.setdiff1d(np.arange(before.size), res.free)
    assert np.array_equal(before[frozen], after[frozen])
    assert not np.array_equal(before[res.free], after[res.free])


def test_unknown_stage(tube_body):
    with pytest.raises(ValueError):
        free_indices("feet", tube_body)


# -- Adam ------------------------------------------------------------------------------------------


def test_adam_quadratic():
    fn = lambda x: ((x[0] - 3.0) ** 2, 2 * (x - 3.0))
    # at the default rate a step moves about 1e-3, so start within reach
    res = adam_minimize(fn, [2.5], 2000)
    assert abs(res.x[0] - 3.0) <= 1e-3
    assert len(res.trace) == 2001 and res.trace[0] == 0.25
    assert abs(adam_minimize(fn, [0.0], 2000, lr=1e-2).x[0] - 3.0) <= 1e-3


def test_adam_zero_gradient():
    x0 = np.array([0.3, -1.0, 2.0])
    res = adam_minimize(lambda x: (1.0, np.zeros(3)), x0, 50)
    assert np.array_equal(res.x, x0)


def test_adam_errors():
    with pytest.raises(OptimizationError) as info:
        adam_minimize(lambda x: (float("nan") if x[0] > 0.005 else x[0], np.array([-1.0])), [0.0], 100, lr=1e-3)
    assert info.value.step > 0
    with pytest.raises(OptimizationError, match="diverged"):
        adam_minimize(lambda x: (1.0 + 100 * x[0], np.array([-1.0])), [0.0], 500, lr=1.0)
    with pytest.raises(ValueError):
        adam_minimize(lambda x: (0.0, x), [0.0], -1)


# -- IO --------------------------------------------------------------------------------------------


def test_params_roundtrip(tube_body, rng, tmp_path):
    p = random_params(tube_body, rng)
    save_params(p, tmp_path / "p.json")
    q = load_params(tmp_path / "p.json")
    assert np.array_equal(q.to_vector(), p.to_vector())
    assert np.array_equal(BodyParams.from_vector(tube_body, p.to_vector()).to_vector(), p.to_vector())
    with pytest.raises(ValueError):
        BodyParams.from_vector(tube_body, np.zeros(3))


def test_keypoints_roundtrip(tmp_path, rng):
    k = Keypoints2D(rng.random((4, 2)), rng.random(4), ["a", "b", "v1", "v2"])
    save_keypoints(KeypointSet(k, dense_head=k), tmp_path / "k.json")
    back = load_keypoints(tmp_path / "k.json")
    assert np.array_equal(back.keypoints.xy, k.xy) and back.keypoints.labels == k.labels
    assert back.dense_hand is None and np.array_equal(back.dense_head.conf, k.conf)
    with pytest.raises(ValueError):
        Keypoints2D([[0, 0]], [1.5], ["a"])


def test_head_override(tube_body, rng):
    head_ids = tube_body.vertex_parts["head"]
    R = rodrigues(rng.normal(size=3))
    src = (tube_body.rest_mesh.vertices[head_ids] - 0.3) @ R.T * 2.0
    table = HeadCorrespondence(head_ids, np.arange(len(head_ids)))
    out, sim = head_override(tube_body, src, table)
    assert np.abs(out - tube_body.rest_mesh.vertices).max() <= 1e-9
    assert sim.scale == pytest.approx(0.5, rel=1e-9)
    with pytest.raises(IndexError):
        head_override(tube_body, src, HeadCorrespondence([10 ** 6], [0]))
    with pytest.raises(ValueError):
        HeadCorrespondence([1, 1], [0, 1])
