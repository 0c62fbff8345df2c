import numpy as np
import pytest

import neural_rd as nrd


def test_parameter_count():
    assert nrd.make_model(32, 128).parameter_count == 8320
    assert nrd.make_model(32, 128, learned_diffusion=True).trainable_count == 8352


def test_diffusion_only_conserves_mass():
    model = nrd.make_model(8, 8)
    x = np.random.default_rng(0).random((32, 32, 8), dtype=np.float32)
    y = nrd.simulate(model, x, 200)
    assert y.shape == x.shape
    np.testing.assert_allclose(y.sum(axis=(0, 1)), x.sum(axis=(0, 1)), rtol=1e-4)


def test_step_matches_numpy_oracle():
    model = nrd.make_model(4, 6, w1_scale=0.3, seed=3)
    rng = np.random.default_rng(1)
    model.b0 = rng.uniform(-0.2, 0.2, 6).astype(np.float32)
    x = rng.uniform(-0.5, 0.5, (5, 7, 4)).astype(np.float32)

    k = np.array([[1, 2, 1], [2, -12, 2], [1, 2, 1]], dtype=np.float64) / 16
    lap = np.zeros_like(x, dtype=np.float64)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            lap += k[dy + 1, dx + 1] * np.roll(x, (-dy, -dx), axis=(0, 1))
    z = x.astype(np.float64) @ model.w0 + model.b0
    f = (z / (1 + np.exp(-5 * z))) @ model.w1
    want = x + model.diffusion_coefficients * lap + f

    got = nrd.euler_step(model, x)
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_rot90_equivariance():
    model = nrd.make_model(4, 8, w1_scale=0.3, seed=5)
    x = np.random.default_rng(2).uniform(-1, 1, (16, 16, 4)).astype(np.float32)
    a = np.rot90(nrd.euler_step(model, x))
    b = nrd.euler_step(model, np.ascontiguousarray(np.rot90(x)))
    np.testing.assert_allclose(a, b, atol=1e-5)


def test_seed_is_sparse_and_deterministic():
    a = nrd.make_seed(64, 64, 8, rng_seed=4)
    b = nrd.make_seed(64, 64, 8, rng_seed=4)
    assert np.array_equal(a, b)
    assert (a == 0).all(axis=2).mean() > 0.5


def test_model_round_trip(tmp_path):
    model = nrd.make_model(8, 16, w1_scale=0.1, seed=9)
    path = tmp_path / "m.rdmd"
    nrd.save_model(path, model)
    back = nrd.load_model(path)
    assert back.checksum() == model.checksum()
    np.testing.assert_array_equal(back.w1, model.w1)
    with pytest.raises(OSError):
        nrd.load_model(tmp_path / "missing.rdmd")
    path.write_bytes(b"RDMD garbage")
    with pytest.raises(nrd.FormatError):
        nrd.load_model(path)


def test_gradcheck_passes():
    passed, err = nrd.gradcheck()
    assert passed
    assert err < 1e-4


def test_texture_distance_prefers_matching_texture():
    stripes = nrd.load_target("procedural:stripes", 48)
    dots = nrd.load_target("procedural:dots", 48)
    assert nrd.texture_distance(stripes[:32, :32], stripes, n_rot=4) < nrd.texture_distance(dots[:32, :32], stripes, n_rot=4)


def test_trainer_steps():
    target = nrd.load_target("procedural:stripes", 32)
    trainer = nrd.Trainer(nrd.make_model(4, 8), target, grid=16, n_rot=4, pool=8, rng_seed=1)
    reports = [trainer.step() for _ in range(3)]
    assert [r.step for r in reports] == [1, 2, 3]
    assert all(32 <= r.unroll <= 96 for r in reports)
    assert all(np.isfinite(r.loss) for r in reports)
    assert trainer.steps_done == 3
    assert nrd.lr_at(1000) == pytest.approx(2e-4)


def test_bad_arguments_raise():
    with pytest.raises(ValueError):
        nrd.euler_step(nrd.make_model(4, 4), np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(ValueError):
        nrd.load_target("procedural:plaid", 16)
