import json
import math

import numpy as np
import pytest

from dualuv.losses import (
    DEFAULT_WEIGHTS, LossReport, extract_patches, hand_consistency, l1_image_loss, offset_reg,
    opacity_patch_loss, patch_means, ratio_reg, scale_reg, total_regularization,
)

from oracles import central_fd, rel_err


def test_l1_examples(rng):
    a = rng.random((6, 5, 3))
    assert l1_image_loss(a, a) == 0.0
    assert l1_image_loss(a + 0.1, a) == pytest.approx(0.1, abs=1e-12)
    b = rng.random((6, 5, 3))
    oracle = sum(abs(x - y) for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert abs(l1_image_loss(a, b) - oracle) <= 1e-12
    with pytest.raises(ValueError):
        l1_image_loss(a, b[:, :4])


def test_l1_masked(rng):
    a, b = rng.random((2, 4, 4, 3))
    m = np.zeros((4, 4), bool)
    m[1:3, 1:3] = True
    assert l1_image_loss(a, b, m) == pytest.approx(np.abs(a - b)[1:3, 1:3].mean(), abs=1e-15)


def test_offset_reg_examples(rng):
    assert offset_reg(np.zeros((5, 3))) == 0.0
    assert offset_reg(np.array([[3.0, 4.0, 0.0]])) == 5.0
    d = rng.normal(size=(30, 3))
    oracle = np.mean([math.sqrt(x * x + y * y + z * z) for x, y, z in d])
    assert abs(offset_reg(d) - oracle) <= 1e-12


def test_scale_and_ratio_examples():
    s = np.array([[1.0, 1.0, 1.0]])
    assert scale_reg(s) == 3.0
    assert ratio_reg(s) == 0.0
    assert ratio_reg(np.array([[9.0, 1.0, 1.0]])) == 0.0
    assert ratio_reg(np.array([[18.0, 2.0, 1.0]])) == 9.0
    for bad in ([[0.0, 1.0, 1.0]], [[-1.0, 1.0, 1.0]]):
        with pytest.raises(ValueError):
            scale_reg(np.array(bad))
        with pytest.raises(ValueError):
            ratio_reg(np.array(bad))


def test_hand_consistency_examples(rng):
    face = rng.random((5, 12))
    assert hand_consistency(face[[1, 3]], face) == 0.0
    n = 64
    hand = np.full((1, n), 0.5)
    faces = np.stack([np.full(n, 0.4), np.full(n, 0.9)])
    assert hand_consistency(hand, faces) == pytest.approx(math.sqrt(n) * 0.1, abs=1e-12)
    with pytest.raises(ValueError):
        hand_consistency(hand, np.zeros((0, n)))


def test_hand_consistency_brute_force(rng):
    hand = rng.random((7, 20))
    face = rng.random((9, 20))
    oracle = sum(min(math.dist(h, f) for f in face) for h in hand)
    assert abs(hand_consistency(hand, face) - oracle) <= 1e-9


def test_extract_patches():
    cmap = np.arange(16 * 16 * 3, dtype=float).reshape(16, 16, 3)
    region = np.zeros((16, 16), bool)
    region[:8, :] = True
    region[8:, :4] = True
    p = extract_patches(cmap, region)
    assert p.shape == (2, 8 * 8 * 3)
    assert np.array_equal(p[0], cmap[:8, :8].ravel())
    assert extract_patches(cmap, np.zeros((16, 16), bool)).shape == (0, 192)


def test_opacity_examples():
    entropy = -(0.8 * math.log(0.8) + 0.2 * math.log(0.2))
    assert opacity_patch_loss(np.full((32, 32), 0.8)) == pytest.approx(entropy, abs=1e-12)
    assert opacity_patch_loss(np.full((32, 32), 0.8)) == pytest.approx(0.500402, abs=1e-6)
    clamp = -(0.8 * math.log(1 - 1e-6) + 0.2 * math.log(1e-6))
    assert opacity_patch_loss(np.ones((16, 16))) == pytest.approx(clamp, abs=1e-9)
    assert opacity_patch_loss(np.ones((16, 16))) == pytest.approx(2.7631, abs=1e-4)


def test_opacity_minimizer_is_target():
    f = lambda mu: opacity_patch_loss(np.full((8, 8), mu))
    h = 1e-6
    assert abs((f(0.8 + h) - f(0.8 - h)) / (2 * h)) < 1e-6
    assert f(0.8) < f(0.79) and f(0.8) < f(0.81)
    for ref in (0.3, 0.5, 0.95):
        g = lambda mu: opacity_patch_loss(np.full((8, 8), mu), alpha_ref=ref)
        assert abs((g(ref + h) - g(ref - h)) / (2 * h)) < 1e-6


def test_patch_means_with_remainder():
    a = np.zeros((10, 10))
    a[8:, :] = 1.0
    mu, _, counts = patch_means(a, 8)
    assert mu.shape == (2, 2)
    assert mu[1, 0] == 1.0 and mu[0, 0] == 0.0
    assert counts.tolist() == [64, 16, 16, 4]


def test_total_regularization():
    assert total_regularization({}).total == 0.0
    unit = {k: 1.0 for k in DEFAULT_WEIGHTS}
    assert total_regularization(unit).total == pytest.approx(2.3, abs=1e-12)
    gen = np.random.default_rng(1)
    terms = dict(zip(DEFAULT_WEIGHTS, gen.random(5)))
    rep = total_regularization(terms)
    oracle = float(np.dot(list(terms.values()), [DEFAULT_WEIGHTS[k] for k in terms]))
    assert abs(rep.total - oracle) <= 1e-12
    assert total_regularization(unit, {"scale": 1.0}).total == pytest.approx(3.2)
    with pytest.raises(KeyError):
        total_regularization({"lpips": 1.0})
    with pytest.raises(ValueError):
        total_regularization(unit, {"offset": -1.0})
    back = json.loads(rep.to_json())
    assert back["total"] == rep.total


def test_loss_report_total_invariant():
    rep = LossReport({"a": 2.0, "b": 3.0}, {"a": 0.5, "b": 2.0})
    assert rep.total == 7.0


@pytest.mark.parametrize("name", ["offset", "scale", "ratio", "opacity", "hand"])
def test_analytic_gradients_match_fd(name, rng):
    if name == "offset":
        x = rng.normal(size=(6, 3))
        fn = offset_reg
    elif name == "scale":
        x = rng.uniform(0.1, 1.0, (6, 3))
        fn = scale_reg
    elif name == "ratio":
        x = rng.uniform(0.05, 1.0, (6, 3))
        x[:, 0] *= 30.0
        fn = ratio_reg
    elif name == "opacity":
        x = rng.uniform(0.05, 0.95, (12, 12))
        fn = opacity_patch_loss
    else:
        face = rng.random((4, 6))
        x = rng.random((3, 6))
        fn = lambda v, grad=False: hand_consistency(v, face, grad=grad)
    val, g = fn(x, grad=True)
    assert val == fn(x)
    fd = central_fd(lambda v: fn(v.reshape(x.shape)), x.ravel(), h=1e-4)
    assert rel_err(g.ravel(), fd) <= 1e-5
