"""Structural and gradient tests for the dual-path model."""

import math
from pathlib import Path

import numpy as np
import pytest

from dplab.dpl import (DplBatch, DplModel, TrainConfig, TrainingError,
                       dpl_forward, dpl_loss, evaluate, load_model,
                       loss_tensors, predict, save_model, train, train_step,
                       write_loss_curve)
from dplab.imgcore import PhantomSpec, gen_phantom
from dplab.metrics import mse
from dplab.nn import (Tensor, backward, concat_channels, param_shapes,
                      unet_forward, zero_grad)
from dplab.noise import add_gaussian
from dplab.rng import Rng

GOLDEN_PATH = Path(__file__).parent / "data" / "dpl_forward_golden.npz"


def _phantom_batch(n=2, size=32, seed=0):
    xs, ys = [], []
    for i in range(n):
        clean = gen_phantom(PhantomSpec(size=size, seed=seed + i))
        noisy = add_gaussian(clean, 0.0, 0.005, Rng(7000 + seed + i))
        xs.append(noisy)
        ys.append(clean)
    return np.stack(xs)[:, None], np.stack(ys)[:, None]


def _small_model(kind="dpl", seed=0, lr=1e-4):
    return DplModel(kind=kind, depth=1, base_channels=4, lr=lr, seed=seed)


# ---------------------------------------------------------------------------
# forward structure
# ---------------------------------------------------------------------------

def test_residual_identity_bitwise():
    model = _small_model(seed=3)
    x, _ = _phantom_batch(n=2, size=32)
    batch = dpl_forward(model, Tensor(x))
    recon = batch.residual_out.data + batch.noise_map.data
    assert np.array_equal(recon, batch.x.data)
    # and the residual really is the subtraction of the stored tensors
    assert np.array_equal(batch.residual_out.data,
                          batch.x.data - batch.noise_map.data)


def test_zero_noise_net_passthrough():
    model = _small_model(seed=1)
    for t in model.nets["noise"].values():
        t.data[...] = 0.0
    x, _ = _phantom_batch(n=1, size=32)
    batch = dpl_forward(model, Tensor(x))
    assert np.array_equal(batch.noise_map.data, np.zeros_like(x))
    assert np.array_equal(batch.residual_out.data, batch.x.data)


@pytest.mark.parametrize("depth,size", [(1, 32), (2, 32), (1, 64), (2, 64)])
def test_forward_shapes(depth, size):
    model = DplModel(kind="dpl", depth=depth, base_channels=4, seed=0)
    x, _ = _phantom_batch(n=2, size=size)
    batch = dpl_forward(model, Tensor(x))
    for t in (batch.noise_map, batch.residual_out, batch.context_out,
              batch.fused_out):
        assert t.data.shape == x.shape


def test_fusion_consumes_context_then_residual():
    # regression against a frozen forward, plus a direct check that swapping
    # the concatenation order changes the output
    model = _small_model(seed=11)
    golden = np.load(GOLDEN_PATH)
    x = golden["x"]
    batch = dpl_forward(model, Tensor(x))
    assert np.max(np.abs(batch.fused_out.data - golden["fused"])) <= 1e-12

    swapped = unet_forward(model.cfg_fusion, model.nets["fusion"],
                           concat_channels(batch.residual_out, batch.context_out))
    assert np.max(np.abs(swapped.data - batch.fused_out.data)) > 1e-6


def test_unet_baseline_forward_is_context_path():
    model = _small_model(kind="unet", seed=2)
    x, _ = _phantom_batch(n=1, size=32)
    batch = dpl_forward(model, Tensor(x))
    assert batch.noise_map is None and batch.residual_out is None
    assert batch.fused_out is batch.context_out


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _manual_batch(y_val, pred_val, shape=(2, 1, 16, 16)):
    y = Tensor(np.full(shape, y_val))
    pred = Tensor(np.full(shape, pred_val))
    return DplBatch(x=Tensor(np.zeros(shape)), y=y, noise_map=Tensor(np.zeros(shape)),
                    residual_out=pred, context_out=pred, fused_out=pred)


def test_loss_zero_when_perfect():
    x = Tensor(np.full((1, 1, 16, 16), 0.5))
    batch = DplBatch(x=x, y=x, noise_map=Tensor(np.zeros((1, 1, 16, 16))),
                     residual_out=x, context_out=x, fused_out=x)
    rep = dpl_loss(batch)
    assert rep.l_n == rep.l_c == rep.l_f == rep.l_o == 0.0


def test_loss_hand_value():
    rep = dpl_loss(_manual_batch(0.0, 0.5))
    assert rep.l_n == pytest.approx(0.25, abs=1e-15)
    assert rep.l_c == pytest.approx(0.25, abs=1e-15)
    assert rep.l_f == pytest.approx(0.25, abs=1e-15)
    assert rep.l_o == pytest.approx(0.75, abs=1e-15)


def test_loss_additivity_exact():
    model = _small_model(seed=5)
    x, y = _phantom_batch(n=3, size=32)
    rep = dpl_loss(dpl_forward(model, Tensor(x), Tensor(y)))
    assert rep.l_o == rep.l_n + rep.l_c + rep.l_f  # same accumulation order


def test_loss_matches_metrics_mse():
    model = _small_model(seed=6)
    x, y = _phantom_batch(n=3, size=32)
    batch = dpl_forward(model, Tensor(x), Tensor(y))
    rep = dpl_loss(batch)
    per_image = [mse(batch.residual_out.data[i, 0], y[i, 0]) for i in range(3)]
    assert rep.l_n == pytest.approx(sum(per_image) / 3, abs=1e-12)


def test_gradient_isolation():
    model = _small_model(seed=7)
    x, y = _phantom_batch(n=2, size=32)
    batch = dpl_forward(model, Tensor(x), Tensor(y))
    l_n, l_c, l_f, _ = loss_tensors(batch)

    def grads_nonzero(net):
        return any(t.grad is not None and np.any(t.grad)
                   for t in model.nets[net].values())

    zero_grad(model.flat_params())
    backward(l_n)
    assert grads_nonzero("noise")
    assert not grads_nonzero("context")
    assert not grads_nonzero("fusion")

    zero_grad(model.flat_params())
    backward(l_c)
    assert grads_nonzero("context")
    assert not grads_nonzero("noise")
    assert not grads_nonzero("fusion")

    zero_grad(model.flat_params())
    backward(l_f)
    assert grads_nonzero("noise")    # fusion gradients reach both estimators
    assert grads_nonzero("context")
    assert grads_nonzero("fusion")


def test_train_loss_gradients_match_fd():
    model = _small_model(seed=8)
    x, y = _phantom_batch(n=1, size=16)
    xt, yt = Tensor(x), Tensor(y)

    def loss_value():
        return float(loss_tensors(dpl_forward(model, xt, yt))[3].data)

    zero_grad(model.flat_params())
    backward(loss_tensors(dpl_forward(model, xt, yt))[3])

    pick = Rng(99)
    h = 1e-4
    for net in ("noise", "context", "fusion"):
        tensors = [t for name, t in model.nets[net].items()
                   if name.endswith("weight")]
        for _ in range(5):
            t = tensors[int(pick.uniform() * len(tensors))]
            flat = t.data.ravel()
            k = int(pick.uniform() * flat.size)
            orig = flat[k]
            flat[k] = orig + h
            up = loss_value()
            flat[k] = orig - h
            dn = loss_value()
            flat[k] = orig
            fd = (up - dn) / (2 * h)
            an = t.grad.ravel()[k]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            assert rel < 1e-3, f"{net}: rel {rel:.2e}"


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def test_train_step_zero_lr_freezes_params():
    model = _small_model(seed=9, lr=0.0)
    x, y = _phantom_batch(n=2, size=32)
    before = {n: t.data.copy() for n, t in model.flat_params().items()}
    r1 = train_step(model, x, y)
    r2 = train_step(model, x, y)
    assert r1 == r2
    for name, t in model.flat_params().items():
        assert np.array_equal(t.data, before[name])


def test_train_step_rejects_nonfinite():
    model = _small_model(seed=10)
    x, y = _phantom_batch(n=1, size=32)
    x[0, 0, 0, 0] = np.nan
    with pytest.raises(TrainingError, match="non-finite"):
        train_step(model, x, y, step=3)


def test_train_deterministic():
    pairs = []
    for i in range(6):
        clean = gen_phantom(PhantomSpec(size=32, seed=i))
        pairs.append((add_gaussian(clean, 0.0, 0.005, Rng(300 + i)), clean))
    cfg = TrainConfig(model="dpl", iters=10, batch_size=2, seed=4,
                      depth=1, base_channels=4)
    a = train(cfg, pairs, noise_family="gaussian")
    b = train(cfg, pairs, noise_family="gaussian")
    assert [(it, rep) for it, rep in a.curve] == [(it, rep) for it, rep in b.curve]
    for name, t in a.model.flat_params().items():
        assert np.array_equal(t.data, b.model.flat_params()[name].data)


def test_fixed_batch_loss_decreases():
    x, y = _phantom_batch(n=2, size=32, seed=3)
    model = _small_model(seed=4)
    losses = [train_step(model, x, y).l_o for _ in range(20)]
    assert losses[-1] < losses[0]


def test_train_rejects_empty_and_indivisible():
    with pytest.raises(ValueError):
        train(TrainConfig(), [])
    clean = gen_phantom(PhantomSpec(size=30, seed=0))
    with pytest.raises(ValueError):
        train(TrainConfig(model="dpl", iters=1, depth=2), [(clean, clean)])


def test_unet_baseline_trains_through_same_loop():
    pairs = []
    for i in range(4):
        clean = gen_phantom(PhantomSpec(size=32, seed=i))
        pairs.append((add_gaussian(clean, 0.0, 0.005, Rng(400 + i)), clean))
    cfg = TrainConfig(model="unet", iters=6, batch_size=2, seed=1,
                      depth=1, base_channels=4)
    res = train(cfg, pairs, noise_family="gaussian")
    for _, rep in res.curve:
        assert rep.l_n == 0.0 and rep.l_f == 0.0
        assert rep.l_o == rep.l_c


# ---------------------------------------------------------------------------
# evaluation / persistence
# ---------------------------------------------------------------------------

def test_evaluate_schema_and_sentinel():
    model = _small_model(seed=12)
    clean = gen_phantom(PhantomSpec(size=32, seed=1))
    pairs = [(clean, clean), (np.clip(clean + 0.05, 0, 1), clean)]
    report = evaluate(model, pairs, noise_family="gaussian")
    assert len(report.rows) == 4  # model + noisy per pair
    noisy_self = [r for r in report.rows
                  if r.algorithm == "noisy" and r.image_id == "pair0000"][0]
    assert math.isinf(noisy_self.psnr_db) and noisy_self.ssim == pytest.approx(1.0, abs=1e-9)
    aggs = report.aggregates()
    assert {(r.algorithm, r.noise) for r in aggs} == {("dpl", "gaussian"),
                                                      ("noisy", "gaussian")}
    finite = [r.psnr_db for r in report.rows
              if r.algorithm == "noisy" and math.isfinite(r.psnr_db)]
    noisy_agg = [r for r in aggs if r.algorithm == "noisy"][0]
    assert noisy_agg.psnr_db == pytest.approx(sum(finite) / len(finite), abs=1e-9)


def test_model_save_load_roundtrip(tmp_path):
    model = DplModel(kind="dpl", depth=2, base_channels=4, seed=13)
    p = tmp_path / "m.dplw"
    save_model(model, p)
    back = load_model(p)
    assert back.kind == "dpl"
    assert back.cfg_single.depth == 2
    assert back.cfg_single.base_channels == 4
    x, _ = _phantom_batch(n=1, size=32)
    # float32 storage: outputs agree to storage precision
    a = predict(model, x[0, 0])
    b = predict(back, x[0, 0])
    assert np.max(np.abs(a - b)) < 1e-5


def test_loss_curve_csv_format(tmp_path):
    curve = [(1, dpl_loss(_manual_batch(0.0, 0.5)))]
    path = tmp_path / "loss.csv"
    write_loss_curve(curve, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,l_n,l_c,l_f,l_o"
    assert lines[1].startswith("1,0.25,")
