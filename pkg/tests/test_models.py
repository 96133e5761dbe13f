import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fullrange_hpe import so3
from fullrange_hpe.models import (EncoderConfig, EncoderNet, HeadConfig, HeadMLP, load_checkpoint, predict_pose,
                                  save_checkpoint)
from fullrange_hpe.nn import Adam
from fullrange_hpe.train import head_loss_and_grad

SMALL = EncoderConfig(image_size=4, hidden=(12, 10), embed_dim=6)


def images(rng, n, size=4):
    return rng.random((n, size, size, 3))


def param_fd(model, loss_fn, h=1e-6):
    """Largest relative error between analytic and central-difference parameter gradients."""
    worst = 0.0
    for name, p in model.named_params():
        grad = dict(model.named_grads())[name]
        flat = p.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            num[i] = (up - down) / (2 * h)
        scale = max(np.max(np.abs(num)), 1e-8)
        worst = max(worst, np.max(np.abs(grad.reshape(-1) - num)) / scale)
    return worst


@pytest.mark.parametrize("act", ["tanh", "relu"])
def test_encoder_parameter_gradients(act):
    rng = np.random.default_rng(0)
    enc = EncoderNet(EncoderConfig(image_size=4, hidden=(12, 10), embed_dim=6, activation=act), seed=1)
    x = images(rng, 5)
    probe = rng.normal(size=(5, 6))
    loss = lambda: float(np.sum(enc.forward(x) * probe))
    enc.zero_grad()
    loss()
    enc.backward(probe)
    assert param_fd(enc, loss) < 1e-4


def test_head_parameter_gradients_through_geodesic_loss():
    rng = np.random.default_rng(1)
    head = HeadMLP(HeadConfig(in_dim=6, width=8), seed=2)
    feats = rng.normal(size=(4, 6))
    target = so3.random_rotations(rng, 4)
    loss = lambda: so3.geodesic_loss(so3.gram_schmidt_6d(head.forward(feats)), target)[0]
    _, gx, bad = head_loss_and_grad(head, feats, target)
    assert bad == 0
    assert param_fd(head, loss) < 1e-4
    # input gradient, skip path included
    num = np.zeros_like(feats)
    for idx in np.ndindex(feats.shape):
        e = np.zeros_like(feats)
        e[idx] = 1e-6
        f = lambda z: so3.geodesic_loss(so3.gram_schmidt_6d(head.forward(z)), target)[0]
        num[idx] = (f(feats + e) - f(feats - e)) / 2e-6
    assert np.max(np.abs(gx - num)) / np.max(np.abs(num)) < 1e-4


def test_embeddings_are_unit_and_deterministic():
    rng = np.random.default_rng(2)
    enc = EncoderNet(SMALL, seed=0)
    x = images(rng, 7)
    e = enc.forward(x)
    assert np.allclose(np.linalg.norm(e, axis=1), 1, atol=1e-6)
    assert np.array_equal(e, enc.forward(x))
    # BLAS blocking depends on batch shape, so chunked inference agrees to rounding only
    np.testing.assert_allclose(enc.embed(x, batch=3), e, atol=1e-12)
    assert np.array_equal(enc.embed(x, batch=3), enc.embed(x, batch=3))


def test_constant_network_gives_one_vector():
    enc = EncoderNet(SMALL, seed=0)
    last = enc.layers_with_params()[-1][1]
    last.params["W"][:] = 0
    last.params["b"][:] = 0
    last.params["b"][2] = 1e-3
    e = enc.forward(images(np.random.default_rng(3), 4))
    np.testing.assert_allclose(e, np.tile(np.eye(6)[2], (4, 1)), atol=1e-12)


def test_encoder_rejects_wrong_size():
    with pytest.raises(ValueError):
        EncoderNet(SMALL).forward(np.zeros((1, 5, 5, 3)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_untrained_predictions_are_rotations(seed):
    enc = EncoderNet(SMALL, seed=seed)
    head = HeadMLP(HeadConfig(in_dim=6, width=16), seed=seed)
    R = predict_pose(enc, head, images(np.random.default_rng(seed), 100))
    assert all(so3.validate_rotation(r, 1e-9) for r in R)
    assert predict_pose(enc, head, images(np.random.default_rng(seed), 1)[0]).shape == (3, 3)


def test_head_architecture():
    head = HeadMLP(HeadConfig(in_dim=64), seed=0)
    shapes = [p.shape for _, p in head.named_params()]
    assert shapes[:8:2] == [(64, 256), (256, 256), (256, 256), (256 + 64, 256)]
    assert shapes[-2:] == [(256, 6), (6,)]


def test_checkpoint_round_trip(tmp_path):
    enc, head = EncoderNet(SMALL, seed=4), HeadMLP(HeadConfig(in_dim=6, width=8), seed=4)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"encoder": enc, "head": head}, {"note": "x"})
    models, meta = load_checkpoint(path)
    assert meta == {"note": "x"}
    assert models["encoder"].checksum() == enc.checksum() and models["head"].checksum() == head.checksum()
    x = images(np.random.default_rng(0), 3)
    assert np.array_equal(predict_pose(models["encoder"], models["head"], x), predict_pose(enc, head, x))
    save_checkpoint(tmp_path / "m2.ckpt", {"encoder": enc, "head": head}, {"note": "x"})
    assert path.read_bytes() == (tmp_path / "m2.ckpt").read_bytes()
    (tmp_path / "junk").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "junk")


def test_adam_minimises_quadratic():
    x = np.array([3.0, -2.0])
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.step([2 * x])
    assert np.all(np.abs(x) < 1e-2)
