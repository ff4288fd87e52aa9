import csv

import numpy as np
import pytest

import llec.trainer as trainer_mod
from llec.hyperprior import HyperpriorModel
from llec.preprocess import PreprocessConfig
from llec.synth import generate_synthetic
from llec.trainer import (AdamState, InsufficientDataError, TileDataset,
                          TrainConfig, build_dataset, load_checkpoint,
                          save_checkpoint, save_history_csv, train,
                          validation_loss)


def small_dataset(seed: int, n_tiles: int) -> TileDataset:
    stream = generate_synthetic("rotating-spinner", 640, 480, 0.5, 4e5, seed)
    return build_dataset([stream], PreprocessConfig(1024), n_tiles, seed)


# ---- config -------------------------------------------------------------------

def test_lr_schedule_at_reference_scale():
    cfg = TrainConfig()
    # 110K tiles / batch 512 = 215 steps per reference epoch
    assert cfg.lr_decay_every_steps == 1075
    for e in range(5):
        assert cfg.lr_at_epoch(e) == pytest.approx(1e-4)
    for e in range(5, 10):
        assert cfg.lr_at_epoch(e) == pytest.approx(1e-5)
    assert cfg.lr_at_epoch(10) == pytest.approx(1e-6)


def test_lr_step_boundaries():
    cfg = TrainConfig()
    assert cfg.lr_at_step(0) == pytest.approx(1e-4)
    assert cfg.lr_at_step(1074) == pytest.approx(1e-4)
    assert cfg.lr_at_step(1075) == pytest.approx(1e-5)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=-1)
    with pytest.raises(ValueError):
        TrainConfig(early_stop_patience=20, max_epochs=10)


# ---- dataset -----------------------------------------------------------------

def test_build_dataset_shape_and_determinism():
    a = small_dataset(0, 50)
    b = small_dataset(0, 50)
    assert a.tiles.shape[0] >= 50
    assert a.tiles.shape[1] == 512
    assert np.array_equal(a.tiles, b.tiles)
    assert a.provenance == b.provenance


def test_dataset_tiles_are_full_and_nonzero():
    ds = small_dataset(1, 50)
    assert ds.tiles.dtype == np.uint8
    assert (ds.tiles != 0).all()  # occupancy bytes are never zero


def test_insufficient_data_reports_achievable_count():
    stream = generate_synthetic("uniform-noise", 64, 64, 0.01, 1e5, 0)
    with pytest.raises(InsufficientDataError) as err:
        build_dataset([stream], PreprocessConfig(64), 10_000, 0)
    assert "10000" in str(err.value)


def test_build_dataset_rejects_empty_input():
    with pytest.raises(ValueError):
        build_dataset([], PreprocessConfig(1024), 10, 0)


# ---- training loop -------------------------------------------------------------

def test_early_stopping_restores_best_epoch(monkeypatch):
    # validation improves through epoch 3, then plateaus; with patience 10
    # training stops after epoch 13 and returns the epoch-3 weights
    vals = iter([8.0, 7.0, 6.5, 6.0] + [6.0] * 50)
    states = []

    def fake_val(model, tiles, batch_size=2048):
        states.append(model.copy_state())
        return next(vals)

    monkeypatch.setattr(trainer_mod, "validation_loss", fake_val)
    model = HyperpriorModel(tile_size=16, latent_size=2, encoder_hidden=(4,),
                            decoder_hidden=(4,), seed=0)
    tiles = np.random.default_rng(0).integers(1, 256, (8, 16)).astype(np.uint8)
    ds = TileDataset(tiles)
    cfg = TrainConfig(batch_size=8, max_epochs=100, early_stop_patience=10)
    model, history = train(model, ds, ds, cfg)
    assert len(history) == 14
    assert np.argmin([h.val_loss for h in history]) == 3
    best = states[3]
    assert all(np.array_equal(model.params[k], best["params"][k])
               for k in model.params)


def test_training_is_reproducible():
    ds = small_dataset(2, 64)

    def run():
        model = HyperpriorModel(seed=0)
        cfg = TrainConfig(batch_size=32, max_epochs=3, early_stop_patience=3)
        model, history = train(model, ds, ds, cfg)
        return model.digest(), [(h.train_loss, h.val_loss) for h in history]

    assert run() == run()


def test_returned_model_realizes_best_validation():
    ds = small_dataset(3, 64)
    model = HyperpriorModel(seed=1)
    cfg = TrainConfig(batch_size=32, max_epochs=4, early_stop_patience=4)
    model, history = train(model, ds, ds, cfg)
    best = min(h.val_loss for h in history)
    assert validation_loss(model, ds.tiles) == pytest.approx(best)


def test_train_rejects_empty_datasets():
    empty = TileDataset(np.zeros((0, 512), dtype=np.uint8))
    with pytest.raises(ValueError):
        train(HyperpriorModel(seed=0), empty, empty, TrainConfig())


def test_constant_tiles_are_learnable_on_the_training_path():
    # a degenerate distribution (every tile 512 copies of 0x01) collapses the
    # training-path loss from 8 bits/symbol; the inference-path validation
    # does not follow because BN batch variance is zero on constant input
    model = HyperpriorModel(seed=0)
    tiles = np.ones((512, 512), dtype=np.uint8)
    opt = AdamState(model.params)
    first, _ = model.forward_backward(tiles)
    loss = first
    for _ in range(1000):
        loss, grads = model.forward_backward(tiles)
        opt.step(model.params, grads, 1e-4)
    assert first == pytest.approx(8.0, abs=0.5)
    assert loss < 3.5


# ---- persistence ---------------------------------------------------------------

def test_history_csv_roundtrip(tmp_path):
    ds = small_dataset(4, 16)
    model = HyperpriorModel(seed=0)
    cfg = TrainConfig(batch_size=16, max_epochs=2, early_stop_patience=2)
    _, history = train(model, ds, ds, cfg)
    path = tmp_path / "history.csv"
    save_history_csv(history, path)
    with open(path) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == len(history)
    assert float(rows[0]["val_loss"]) == pytest.approx(history[0].val_loss)


def test_checkpoint_roundtrip(tmp_path):
    model = HyperpriorModel(seed=3)
    opt = AdamState(model.params)
    tiles = np.random.default_rng(0).integers(1, 256, (32, 512)).astype(np.uint8)
    for _ in range(3):
        _, grads = model.forward_backward(tiles)
        opt.step(model.params, grads, 1e-4)
    path = tmp_path / "ck.llck"
    save_checkpoint(model, opt, epoch=2, path=path)
    model2, opt2, epoch = load_checkpoint(path)
    assert epoch == 2
    assert model2.to_bytes() == model.to_bytes()
    assert opt2.t == opt.t
    assert all(np.array_equal(opt2.m[k], opt.m[k]) for k in opt.m)
    assert all(np.array_equal(opt2.v[k], opt.v[k]) for k in opt.v)
