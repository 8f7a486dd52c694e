from __future__ import annotations

import numpy as np
import pytest

from pita import autodiff as ad
from pita.data import SyntheticSpec, generate_synthetic, split
from pita.errors import ConfigError, ContractError, ShapeError
from pita.loss import LossConfig, PRESETS
from pita.model import (
    AdamState,
    Autoencoder,
    ModelConfig,
    TrainConfig,
    adam_step,
    batch_loss,
    init_params,
    parameter_count,
    train,
)
from pita.model.training import loss_and_grads

from conftest import fd_grad, rel_err


def tiny(variant, T=10, latent=4, depth=2):
    return ModelConfig.build(variant, T=T, latent_dim=latent, depth=depth)


@pytest.fixture(scope="module")
def tiny_data():
    trajs = generate_synthetic(SyntheticSpec(count=20, steps=10, noise_std=0.05, seed=3))
    return split(trajs, 0.1, 0)


@pytest.mark.parametrize("variant, width", [("simple", 20), ("action-space", 24), ("pita", 60)])
def test_output_widths(variant, width):
    cfg = tiny(variant)
    assert cfg.input_width == 20 and cfg.output_width == width
    assert cfg.decoder_layers[-1] == width and cfg.encoder_layers[-1] == 4


def test_invalid_configs():
    with pytest.raises(ConfigError):
        ModelConfig.build("transformer")
    with pytest.raises(ConfigError):
        ModelConfig.build("simple", activation="gelu")
    with pytest.raises(ConfigError):
        ModelConfig("simple", T=10, latent_dim=4, encoder_layers=(8, 5), decoder_layers=(8, 20))


def test_init_determinism_and_bounds():
    cfg = ModelConfig("simple", T=50, latent_dim=8, encoder_layers=(8,), decoder_layers=(100,))
    a, b = init_params(cfg, 5), init_params(cfg, 5)
    for x, y in zip(a.arrays(), b.arrays()):
        assert x.tobytes() == y.tobytes()
    w, bias = a.layers[0]
    assert w.shape == (100, 8) and np.all(np.abs(w) <= 0.1)
    assert np.all(bias == 0)
    assert not np.array_equal(init_params(cfg, 6).layers[0][0], w)


def test_paper_scale_parameter_count_in_band():
    counts = {v: parameter_count(ModelConfig.build(v, T=350, latent_dim=320, depth=12)) for v in
              ("simple", "action-space", "pita")}
    assert counts == {"simple": 5_948_146, "action-space": 5_950_774, "pita": 6_867_946}
    assert all(5_000_000 <= c <= 12_000_000 for c in counts.values())
    cfg = ModelConfig.build("pita", T=350, latent_dim=320, depth=12)
    assert len(cfg.encoder_layers) == 12 and len(cfg.decoder_layers) == 12


@pytest.mark.parametrize("variant", ["simple", "action-space", "pita"])
def test_shapes_round_trip(variant, rng):
    cfg = tiny(variant)
    model = Autoencoder(cfg, init_params(cfg, 0), pos_scale=2.0, speed_scale=3.0)
    x = rng.normal(size=(5, 10, 2))
    z = model.encode(x)
    assert z.shape == (5, 4)
    dec = model.decode(z)
    assert dec.positions.shape == (5, 10, 2)
    if variant == "simple":
        assert dec.states is None and dec.controls is None
    else:
        assert dec.states.shape == (5, 10, 4) and dec.controls.shape == (5, 10, 2)
        np.testing.assert_array_equal(dec.states[..., :2], dec.positions)
    if variant == "action-space":
        assert len(dec.initial) == 4


def test_zero_input_zero_latent_and_positions():
    for variant in ("simple", "pita"):
        cfg = tiny(variant)
        model = Autoencoder(cfg, init_params(cfg, 1))
        z = model.encode(np.zeros((1, 10, 2)))
        np.testing.assert_array_equal(z, 0.0)
        np.testing.assert_array_equal(model.decode(z).positions, 0.0)


def test_action_space_decoding_is_a_rollout(rng):
    from pita.dynamics import rk4_rollout

    cfg = tiny("action-space")
    model = Autoencoder(cfg, init_params(cfg, 2), speed_scale=4.0)
    dec = model.decode(rng.normal(size=(1, 4)))
    init = np.array([float(np.ravel(c)[0]) for c in dec.initial])
    expected = rk4_rollout(init, dec.controls[0], cfg.dt)
    np.testing.assert_allclose(dec.states[0], expected, atol=1e-12)


def test_encode_rejects_wrong_length(rng):
    cfg = tiny("simple")
    model = Autoencoder(cfg, init_params(cfg, 0))
    with pytest.raises(ContractError):
        model.encode(rng.normal(size=(2, 9, 2)))


def test_adam_zero_gradient_keeps_parameters():
    p = [np.array([1.0, -2.0])]
    state = AdamState.zeros_like(p, lr=0.1)
    new, state = adam_step(p, [np.zeros(2)], state)
    np.testing.assert_array_equal(new[0], p[0])
    assert state.step == 1


def test_adam_constant_gradient_steps_by_lr():
    p = [np.zeros(3)]
    g = [np.array([2.0, -0.5, 1e-3])]
    state = AdamState.zeros_like(p, lr=0.01)
    for _ in range(2000):
        prev = p[0]
        p, state = adam_step(p, g, state)
    np.testing.assert_allclose(p[0] - prev, -0.01 * np.sign(g[0]), rtol=1e-3)


def test_adam_quadratic_bowl():
    p = [np.array([3.0, -4.0, 1.0])]
    start = np.linalg.norm(p[0])
    state = AdamState.zeros_like(p, lr=0.05)
    for _ in range(200):
        p, state = adam_step(p, [2 * p[0]], state)
    assert np.linalg.norm(p[0]) <= start / 100


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState.zeros_like([np.zeros(2)]))


def test_end_to_end_gradient_pita(rng):
    cfg = tiny("pita", latent=3)
    assert max(cfg.encoder_layers + cfg.decoder_layers[:-1]) <= 16
    model = Autoencoder(cfg, init_params(cfg, 0), pos_scale=1.5, speed_scale=2.0)
    batch = np.cumsum(rng.normal(scale=0.2, size=(3, 10, 2)), axis=1)
    lc = LossConfig(**PRESETS["pita-phy"], tau_max=100)
    arrays = model.params.arrays()
    _, _, _, grads = loss_and_grads(model, arrays, batch, 2, lc)
    for k, a in enumerate(arrays):

        def f(v, k=k):
            trial = list(arrays)
            trial[k] = v
            layers = [(trial[i], trial[i + 1]) for i in range(0, len(trial), 2)]
            return float(batch_loss(model, layers, batch, 2, lc)[0])

        assert rel_err(grads[k], fd_grad(f, a)) < 1e-4, k


def test_action_space_gradient(rng):
    cfg = tiny("action-space", T=6, latent=3)
    model = Autoencoder(cfg, init_params(cfg, 4), pos_scale=1.0, speed_scale=2.0)
    batch = np.cumsum(rng.normal(scale=0.1, size=(2, 6, 2)), axis=1)
    lc = LossConfig()
    arrays = model.params.arrays()
    _, _, _, grads = loss_and_grads(model, arrays, batch, 0, lc)
    k = len(arrays) - 2

    def f(v):
        trial = list(arrays)
        trial[k] = v
        layers = [(trial[i], trial[i + 1]) for i in range(0, len(trial), 2)]
        return float(batch_loss(model, layers, batch, 0, lc)[0])

    assert rel_err(grads[k], fd_grad(f, arrays[k])) < 1e-4


def test_single_trajectory_epoch_decreases_loss(tiny_data):
    train_set, _ = tiny_data
    res = train(train_set[:1], [], tiny("simple"), LossConfig(), TrainConfig(epochs=10, batch_size=1, lr=1e-3))
    recs = [s["loss_rec"] for s in res.log.steps]
    assert all(b < a for a, b in zip(recs, recs[1:]))


@pytest.mark.parametrize("variant", ["simple", "action-space", "pita"])
def test_single_sample_overfit(variant):
    # noiseless sample, mild physics weight: both loss terms can reach ~0
    sample = generate_synthetic(SyntheticSpec(count=1, steps=10, seed=3))
    lc = LossConfig(lambda1=1.0, lambda2=0.01) if variant == "pita" else LossConfig()
    res = train(sample, [], tiny(variant), lc, TrainConfig(epochs=500, batch_size=1, lr=1e-3))
    first, last = res.log.steps[0]["loss_total"], res.log.steps[-1]["loss_total"]
    assert last < 0.01 * first


def test_training_is_deterministic(tiny_data):
    train_set, val_set = tiny_data
    runs = [train(train_set, val_set, tiny("pita"), LossConfig(**PRESETS["pita-phy"]),
                  TrainConfig(epochs=3, batch_size=4, lr=1e-3, seed=9)) for _ in range(2)]
    assert runs[0].log.epochs[-1]["val_loss_total"] == runs[1].log.epochs[-1]["val_loss_total"]
    for a, b in zip(runs[0].model.params.arrays(), runs[1].model.params.arrays()):
        assert a.tobytes() == b.tobytes()


def test_zero_lambda2_matches_reconstruction_only(tiny_data):
    train_set, _ = tiny_data
    tc = TrainConfig(epochs=3, batch_size=4, lr=1e-3)
    pita = train(train_set, [], tiny("pita"), LossConfig(lambda1=1.0, lambda2=0.0), tc)
    recs = [s["loss_rec"] for s in pita.log.steps]
    totals = [s["loss_total"] for s in pita.log.steps]
    np.testing.assert_allclose(recs, totals, rtol=1e-12)
    assert all(s["loss_phy"] is not None for s in pita.log.steps)


def test_log_fields_and_resume_continues_tau(tiny_data):
    train_set, val_set = tiny_data
    from pita.model import Checkpoint

    lc = LossConfig(**PRESETS["pita-rec"])
    first = train(train_set, val_set, tiny("pita"), lc, TrainConfig(epochs=2, batch_size=6, lr=1e-3))
    step = first.log.steps[0]
    assert set(step) == {"step", "epoch", "loss_total", "loss_rec", "loss_phy", "alpha"}
    ckpt = Checkpoint(first.model, first.step, first.loss_config, first.adam)
    second = train(train_set, val_set, tiny("pita"), lc, TrainConfig(epochs=2, batch_size=6, lr=1e-3), resume=ckpt)
    assert second.log.steps[0]["step"] == first.step
    assert second.loss_config.tau_max == first.loss_config.tau_max
    assert second.log.steps[0]["alpha"] >= first.log.steps[-1]["alpha"]


def test_train_rejects_mismatched_data(tiny_data):
    train_set, _ = tiny_data
    with pytest.raises(ConfigError):
        train(train_set, [], tiny("simple", T=12), LossConfig(), TrainConfig(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts(tiny_data):
    from pita.errors import NumericalError

    train_set, _ = tiny_data
    with pytest.raises(NumericalError, match="step 0"):
        train(train_set, [], tiny("simple"), LossConfig(lambda1=float("inf")), TrainConfig(epochs=1))


def test_trained_latents_are_distinct(tiny_data):
    train_set, val_set = tiny_data
    res = train(train_set, val_set, tiny("simple"), LossConfig(), TrainConfig(epochs=20, batch_size=4, lr=1e-3))
    z = res.model.encode(np.stack([t.positions for t in train_set]))
    d = np.linalg.norm(z[:, None] - z[None], axis=-1)
    assert np.all(d[~np.eye(len(z), dtype=bool)] > 1e-6)


def test_collapse_guard_property(tiny_data):
    train_set, _ = tiny_data
    X = np.stack([t.positions for t in train_set])
    mags = {}
    for schedule in (True, False):
        lc = LossConfig(lambda1=1.0, lambda2=100.0, gamma=0.595, schedule=schedule)
        res = train(train_set, [], tiny("pita"), lc, TrainConfig(epochs=150, batch_size=6, lr=1e-3))
        mags[schedule] = np.abs(res.model.reconstruct(X)).mean()
    assert mags[False] < mags[True]
