import math

import numpy as np
import pytest

from ergan import data, gan
from ergan.neural import CheckpointError, sample_noise
from ergan.neural import autodiff as ad

LOG2 = math.log(2.0)


@pytest.fixture(scope="module")
def small_pair():
    X = data.fixture_generate([("dual_peak", 6, 0.05)], seed=3).values
    cfg = gan.TrainConfig.desk(hidden=4, layers=2, epochs=3, batch_size=4, seed=5)
    return gan.train_cluster_gan(X, cfg), X, cfg


def zero_dense(net):
    p = net.params.replace(dense_W=np.zeros_like(net.params["dense_W"]),
                           dense_b=np.zeros_like(net.params["dense_b"]))
    return type(net)(p, net.hidden, net.layers)


# -- networks -----------------------------------------------------------------

def test_generator_output_range_and_determinism():
    gen = gan.GeneratorNet.init(np.random.default_rng(0), 16, 5)
    z = sample_noise(24, 3, 1)
    out = gen(z)
    assert out.shape == (3, 24)
    assert np.all((out > 0) & (out < 1))
    assert np.array_equal(out, gen(z))
    single = gen(z[0])
    assert single.shape == (24,)
    np.testing.assert_allclose(single, out[0], rtol=0, atol=1e-15)


def test_zero_dense_gives_half():
    rng = np.random.default_rng(1)
    gen = zero_dense(gan.GeneratorNet.init(rng, 4, 2))
    assert np.all(gen(sample_noise(24, 2, 0)) == 0.5)
    disc = zero_dense(gan.DiscriminatorNet.init(rng, 4, 2))
    assert disc(rng.uniform(size=24)) == 0.5


def test_discriminator_range_order_and_length():
    rng = np.random.default_rng(2)
    disc = gan.DiscriminatorNet.init(rng, 8, 2)
    x = data.ARCHETYPES["evening_peak"].base
    p = disc(x)
    assert 0 < p < 1
    assert p != disc(x[::-1])
    batch = disc(rng.uniform(-1, 1, (5, 24)))
    assert batch.shape == (5,) and np.all((batch > 0) & (batch < 1))
    with pytest.raises(ValueError, match="length 24"):
        disc(np.zeros(23))


# -- losses -------------------------------------------------------------------

def test_disc_loss_values():
    half = np.full(4, 0.5)
    assert float(gan.disc_loss(half, half).value) == pytest.approx(2 * LOG2, abs=1e-15)
    near = float(gan.disc_loss(np.full(3, 1 - 1e-12), np.full(3, 1e-12)).value)
    assert 0 <= near < 1e-6
    real = np.array([0.9, 0.6, 0.3])
    fake = np.array([0.2, 0.5, 0.7])
    per = [float(gan.disc_loss(real[i:i + 1], fake[i:i + 1]).value) for i in range(3)]
    assert float(gan.disc_loss(real, fake).value) == pytest.approx(np.mean(per), abs=1e-15)


def test_disc_loss_clamps_extremes():
    v = float(gan.disc_loss(np.array([0.0]), np.array([1.0])).value)
    assert math.isfinite(v)
    assert v == pytest.approx(-2 * math.log(1e-7), rel=1e-6)


def test_gen_loss_matched_statistics():
    batch = np.random.default_rng(0).uniform(size=(3, 24))
    v = float(gan.gen_loss(np.full(3, 0.5), batch, batch, 100.0).value)
    assert v == pytest.approx(-LOG2, abs=1e-12)
    assert v == pytest.approx(-0.693147, abs=1e-6)


def test_gen_loss_hand_value():
    rows = np.array([[0.0, 1.0] * 12, [1.0, 0.0] * 12])
    fake = 0.6 * rows + 0.1  # per-pattern mean 0.4, variance 0.09
    real = 0.6 * rows + 0.2  # per-pattern mean 0.5, variance 0.09
    v = float(gan.gen_loss(np.full(2, 0.5), fake, real, 100.0).value)
    assert v == pytest.approx(-LOG2 + 100 * 0.1, abs=1e-10)
    assert v == pytest.approx(9.306853, abs=1e-6)


def test_gen_loss_lambda_zero_is_textbook():
    rng = np.random.default_rng(3)
    s = rng.uniform(0.05, 0.95, 6)
    v = float(gan.gen_loss(s, rng.uniform(size=(6, 24)), rng.uniform(size=(6, 24)), 0.0).value)
    assert v == pytest.approx(np.mean(np.log(1 - s)), abs=1e-14)
    ns = float(gan.gen_loss(s, np.zeros((6, 24)), np.zeros((6, 24)), 0.0, non_saturating=True).value)
    assert ns == pytest.approx(-np.mean(np.log(s)), abs=1e-14)


def test_stat_gap_modes():
    rng = np.random.default_rng(4)
    fake, real = rng.uniform(size=(5, 24)), rng.uniform(size=(5, 24))
    pattern = float(gan.stat_gap(fake, real, "pattern").value)
    expect = (abs(fake.mean(1).mean() - real.mean(1).mean())
              + abs(fake.var(1).mean() - real.var(1).mean()))
    assert pattern == pytest.approx(expect, abs=1e-14)
    hourly = float(gan.stat_gap(fake, real, "hourly").value)
    expect = np.abs(fake.mean(0) - real.mean(0)).sum() + np.abs(fake.var(0) - real.var(0)).sum()
    assert hourly == pytest.approx(expect, abs=1e-13)
    with pytest.raises(ValueError):
        gan.stat_gap(fake, real, "weekly")


# -- config -------------------------------------------------------------------

def test_config_defaults_and_validation():
    full = gan.TrainConfig()
    assert (full.epochs, full.batch_size, full.g_lr, full.d_lr, full.lam) == (10000, 1024, 1e-4, 1e-4, 100.0)
    assert (full.hidden, full.layers, full.stat_mode, full.non_saturating) == (16, 5, "pattern", False)
    assert gan.TrainConfig.desk().epochs == 500
    for bad in (dict(epochs=0), dict(lam=-1.0), dict(g_lr=0.0), dict(stat_mode="x")):
        with pytest.raises(ValueError):
            gan.TrainConfig(**bad)
    assert gan.TrainConfig.from_dict(full.to_dict()) == full


# -- training -----------------------------------------------------------------

def test_one_epoch_bookkeeping():
    X = data.fixture_generate([("morning_peak", 4, 0.05)], seed=0).values
    cfg = gan.TrainConfig.desk(hidden=3, layers=1, epochs=1, batch_size=4)
    pair = gan.train_cluster_gan(X, cfg)
    assert len(pair.history) == 1
    assert pair.g_state.t == 1 and pair.d_state.t == 1


def test_batches_per_epoch_and_batch_cap():
    X = data.fixture_generate([("morning_peak", 10, 0.05)], seed=0).values
    pair = gan.train_cluster_gan(X, gan.TrainConfig.desk(hidden=3, layers=1, epochs=2, batch_size=4))
    assert pair.g_state.t == 6  # ceil(10 / 4) batches x 2 epochs
    pair = gan.train_cluster_gan(X, gan.TrainConfig.desk(hidden=3, layers=1, epochs=2))
    assert pair.g_state.t == 2  # batch capped at the cluster size


def test_training_is_deterministic(small_pair, tmp_path):
    pair, X, cfg = small_pair
    again = gan.train_cluster_gan(X, cfg)
    assert pair.history == again.history
    gan.save_checkpoint(pair, tmp_path / "a.ckpt")
    gan.save_checkpoint(again, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_training_changes_weights_and_stays_finite(small_pair):
    pair, X, cfg = small_pair
    init, _ = gan.init_pair(cfg)
    assert not pair.generator.equals(init.generator)
    assert all(np.all(np.isfinite(v)) for v in pair.generator.values())
    assert all(math.isfinite(g) and math.isfinite(d) for g, d in pair.history)


def test_training_rejects_bad_data():
    with pytest.raises(ValueError):
        gan.train_cluster_gan(np.zeros((0, 24)), gan.TrainConfig.desk(epochs=1))
    with pytest.raises(ValueError):
        gan.train_cluster_gan(np.zeros((3, 12)), gan.TrainConfig.desk(epochs=1))


def test_nonfinite_loss_names_epoch_and_batch(monkeypatch):
    X = data.fixture_generate([("morning_peak", 4, 0.05)], seed=0).values
    real_loss = gan.gen_loss
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        out = real_loss(*a, **k)
        return ad.mul(out, math.nan) if calls["n"] == 2 else out

    monkeypatch.setattr(gan, "gen_loss", flaky)
    cfg = gan.TrainConfig.desk(hidden=3, layers=1, epochs=3, batch_size=2)
    with pytest.raises(gan.TrainingError, match="epoch 0, batch 1"):
        gan.train_cluster_gan(X, cfg)


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(small_pair, tmp_path):
    pair, _, cfg = small_pair
    path = tmp_path / "gan_k0.ckpt"
    gan.save_checkpoint(pair, path)
    back = gan.load_checkpoint(path, cfg)
    assert back.generator.equals(pair.generator)
    assert back.discriminator.equals(pair.discriminator)
    assert back.g_state.m.equals(pair.g_state.m) and back.d_state.v.equals(pair.d_state.v)
    assert back.g_state.t == pair.g_state.t and back.history == pair.history
    assert back.config == pair.config
    z = sample_noise(24, 10, 9)
    assert back.generator_net(z).tobytes() == pair.generator_net(z).tobytes()
    text = path.read_text().splitlines()
    assert text[0] == "ergan-checkpoint 1" and text[1] == "gate_order i,f,g,o"


def test_checkpoint_truncated(small_pair, tmp_path):
    pair, _, _ = small_pair
    path = tmp_path / "c.ckpt"
    gan.save_checkpoint(pair, path)
    lines = path.read_text().splitlines()
    for cut in (3, len(lines) // 2, len(lines) - 1):
        path.write_text("\n".join(lines[:cut]) + "\n")
        with pytest.raises(CheckpointError):
            gan.load_checkpoint(path)


def test_checkpoint_version_and_shape_mismatch(small_pair, tmp_path):
    pair, _, cfg = small_pair
    path = tmp_path / "c.ckpt"
    gan.save_checkpoint(pair, path)
    with pytest.raises(CheckpointError, match="shape mismatch"):
        gan.load_checkpoint(path, gan.TrainConfig.desk(hidden=8, layers=2))
    path.write_text(path.read_text().replace("ergan-checkpoint 1", "ergan-checkpoint 9", 1))
    with pytest.raises(CheckpointError, match="version"):
        gan.load_checkpoint(path)


def test_checkpoint_h16_into_h8(tmp_path):
    cfg16 = gan.TrainConfig.desk(hidden=16, layers=1, epochs=1)
    pair, _ = gan.init_pair(cfg16)
    gan.save_checkpoint(pair, tmp_path / "c.ckpt")
    with pytest.raises(CheckpointError, match="hidden=16"):
        gan.load_checkpoint(tmp_path / "c.ckpt", gan.TrainConfig.desk(hidden=8, layers=1))


def test_history_csv(small_pair, tmp_path):
    pair, _, _ = small_pair
    gan.write_history(pair, tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,g_loss,d_loss" and len(lines) == 1 + len(pair.history)
