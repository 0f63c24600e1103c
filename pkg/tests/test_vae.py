import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from lenia_qd import vae
from lenia_qd.vae import TrainConfig, VaeConfig

import oracles

THREE_POINT = -2.306122921805057  # oracles.three_point_fitness()
TINY = VaeConfig(latent_dim=2, features=4, input_size=8, channels=3)


@pytest.fixture(scope="module")
def model():
    return vae.make_model(VaeConfig(), seed=0)


def crops(rng, n, size=32):
    return rng.random((n, size, size, 3)).astype(np.float32)


def test_shapes_finite_deterministic(model, rng):
    x = crops(rng, 4)
    mean, logvar = vae.encode_batch(model, x)
    assert mean.shape == (4, 8) and logvar.shape == (4, 8)
    assert np.all(np.isfinite(mean)) and np.all(np.isfinite(logvar))
    m2, _ = vae.encode(model, x[1])
    np.testing.assert_array_equal(m2, mean[1])
    again, _ = vae.encode_batch(model, x[[1, 1]])
    np.testing.assert_array_equal(again[0], again[1])
    recon = vae.decode(model, mean)
    assert recon.shape == (4, 32, 32, 3)
    assert np.all((recon > 0) & (recon < 1))


def test_init_is_seeded():
    a, b = vae.make_model(TINY, 3), vae.make_model(TINY, 3)
    for p, q in zip(a.parameters(), b.parameters()):
        assert torch.equal(p, q)


def test_kl_examples():
    z = torch.zeros(1, 8)
    assert vae.kl_divergence(z, z).item() == 0.0
    m = torch.zeros(1, 8, dtype=torch.float64)
    m[0, 0] = 1
    assert vae.kl_divergence(m, torch.zeros_like(m)).item() == 0.5


@given(hnp.arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), hnp.arrays(np.float64, (3, 4), elements=st.floats(-5, 5)))
def test_kl_nonnegative(mean, logvar):
    assert torch.all(vae.kl_divergence(torch.from_numpy(mean), torch.from_numpy(logvar)) >= -1e-12)


def test_gradients_match_finite_differences(rng):
    model = vae.make_model(TINY, seed=1, dtype=torch.float64)
    x = rng.random((3, 8, 8, 3))
    cfg = TrainConfig()
    _, grads = vae.loss_and_gradients(model, x, seed=5, config=cfg)
    for name, p in model.named_parameters():
        def f(values, p=p):
            with torch.no_grad():
                old = p.detach().clone()
                p.copy_(torch.from_numpy(values))
                loss = vae.elbo_loss(model, vae.to_tensor(x, torch.float64), torch.Generator().manual_seed(5), cfg).item()
                p.copy_(old)
            return loss

        fd = oracles.central_differences(f, p.detach().numpy().copy(), eps=1e-6)
        scale = max(np.abs(fd).max(), np.abs(grads[name]).max(), 1e-8)
        assert np.abs(fd - grads[name]).max() / scale < 1e-3, name


def test_zero_learning_rate_keeps_params(rng):
    model = vae.make_model(TINY, 2)
    before = [p.detach().clone() for p in model.parameters()]
    opt = vae.make_optimizer(model, TrainConfig(learning_rate=0.0))
    vae.train_step(model, opt, rng.random((4, 8, 8, 3)), 0, TrainConfig(learning_rate=0.0))
    for p, q in zip(before, model.parameters()):
        assert torch.equal(p, q)


def test_train_step_deterministic(rng):
    x = rng.random((4, 8, 8, 3)).astype(np.float32)
    losses = []
    for _ in range(2):
        model = vae.make_model(TINY, 2)
        opt = vae.make_optimizer(model, TrainConfig())
        losses.append([vae.train_step(model, opt, x, s, TrainConfig()) for s in range(3)])
    assert losses[0] == losses[1]


def test_encoder_separates_clusters():
    rng = np.random.default_rng(0)
    a = np.clip(rng.normal(0.2, 0.03, (32, 16, 16, 3)), 0, 1)
    a[:, 4:12, 4:12, 0] = 0.9
    b = np.clip(rng.normal(0.2, 0.03, (32, 16, 16, 3)), 0, 1)
    b[:, :, :, 2] = 0.8
    data = np.concatenate([a, b]).astype(np.float32)
    cfg = VaeConfig(latent_dim=8, features=16, input_size=16)
    model = vae.make_model(cfg, 0)
    opt = vae.make_optimizer(model, TrainConfig(learning_rate=2e-3))
    for s in range(150):
        vae.train_step(model, opt, data, s, TrainConfig(learning_rate=2e-3))
    za, _ = vae.encode_batch(model, a)
    zb, _ = vae.encode_batch(model, b)
    gap = np.linalg.norm(za.mean(0) - zb.mean(0))
    within = max(np.linalg.norm(za - za.mean(0), axis=1).std(), np.linalg.norm(zb - zb.mean(0), axis=1).std(),
                 za.std(0).max(), zb.std(0).max())
    assert gap > 3 * within


def test_encode_trajectory(model, rng):
    x = crops(rng, 3)
    traj = vae.encode_trajectory(model, x)
    assert traj.shape == (3, 8)
    np.testing.assert_array_equal(traj[1], vae.encode(model, x[1])[0])
    assert vae.encode_trajectory(model, x[:1]).shape == (1, 8)
    same = vae.encode_trajectory(model, np.stack([x[0], x[0]]))
    np.testing.assert_array_equal(same[0], same[1])


def test_unsupervised_descriptor_and_fitness():
    z = np.random.default_rng(0).normal(size=8)
    np.testing.assert_array_equal(vae.unsupervised_descriptor([z, z, z]), z)
    np.testing.assert_allclose(vae.unsupervised_descriptor([z, -z]), 0, atol=1e-15)
    assert vae.unsupervised_fitness([z, z]) == 0
    e = np.zeros(8)
    e[0] = 2
    assert vae.unsupervised_fitness([np.zeros(8), e]) == -1.0
    pts = np.zeros((3, 8))
    pts[1, 0], pts[2, 1] = 3, 4
    assert vae.unsupervised_fitness(pts) == pytest.approx(THREE_POINT, abs=1e-9)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.just(8)), elements=st.floats(-10, 10)))
def test_fitness_nonpositive_and_permutation_invariant(latents):
    f = vae.unsupervised_fitness(latents)
    assert f <= 0
    perm = latents[::-1]
    np.testing.assert_allclose(vae.unsupervised_descriptor(perm), vae.unsupervised_descriptor(latents), atol=1e-12)
    if f == 0:
        assert np.allclose(latents, latents[0])


def test_describe_crops_matches_per_member(model, rng):
    stacks = [crops(rng, 2), crops(rng, 3)]
    d, f = vae.describe_crops(model, stacks)
    for i, s in enumerate(stacks):
        z = vae.encode_trajectory(model, s)
        np.testing.assert_allclose(d[i], vae.unsupervised_descriptor(z), atol=1e-6)
        assert f[i] == pytest.approx(vae.unsupervised_fitness(z), abs=1e-6)


def test_checkpoint_roundtrip(tmp_path, rng):
    model = vae.make_model(TINY, 4)
    opt = vae.make_optimizer(model, TrainConfig())
    x = rng.random((4, 8, 8, 3)).astype(np.float32)
    vae.train_step(model, opt, x, 0, TrainConfig())
    path = tmp_path / "m.npz"
    vae.save_checkpoint(path, model, opt)
    m2, o2 = vae.load_checkpoint(path, TINY, TrainConfig())
    for p, q in zip(model.parameters(), m2.parameters()):
        assert torch.equal(p, q)
    assert vae.train_step(model, opt, x, 1, TrainConfig()) == vae.train_step(m2, o2, x, 1, TrainConfig())
    with pytest.raises(ValueError):
        vae.load_checkpoint_bytes(b"garbage" * 10, TINY)


def test_non_finite_loss():
    model = vae.make_model(TINY, 0)
    x = np.full((2, 8, 8, 3), np.nan, np.float32)
    with pytest.raises((vae.NonFiniteLoss, vae.NonFiniteActivation)):
        vae.train_step(model, vae.make_optimizer(model, TrainConfig()), x, 0, TrainConfig())
