"""Dual-path denoising model: noise and context estimators fused together.

The noise path predicts the noise field n and yields the intermediate
residual-denoised image x'' = x - n; the context path predicts the clean
image directly; a fusion network consumes the channel concatenation
(context, residual) and produces the final output. The objective is the sum
of the three per-path mean-squared errors against the ground truth, trained
end to end with one Adam instance per sub-network.

The plain single U-Net baseline runs through the same structures with only
the context path active, so both models share one training loop.

Inputs and the predicted noise field are snapped to a 2^-26 fixed-point grid
inside the forward pass (identity gradient, below float32 storage
resolution). On that grid the float64 subtraction and re-addition are exact,
so the residual identity x'' + n == x holds bitwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .imgcore import split_dataset
from .metrics import MetricReport, psnr
from .nn import (Adam, Tensor, UNetConfig, add, backward, concat_channels,
                 init_weights, load_checkpoint, mean_all, mul, save_checkpoint,
                 snap_grid, sub, unet_forward)
from .rng import Rng

MODEL_KINDS = ("dpl", "unet")

# offset separating the data-order stream from the weight-init streams
_SHUFFLE_SEED_OFFSET = 999331


class TrainingError(RuntimeError):
    pass


class DplModel:
    """Parameter sets plus per-network optimizer state."""

    def __init__(self, kind: str = "dpl", depth: int = 2,
                 base_channels: int = 16, lr: float = 1e-4, seed: int = 0):
        if kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}")
        self.kind = kind
        self.lr = lr
        self.cfg_single = UNetConfig(in_channels=1, depth=depth,
                                     base_channels=base_channels)
        self.cfg_fusion = UNetConfig(in_channels=2, depth=depth,
                                     base_channels=base_channels)
        if kind == "dpl":
            self.nets = {
                "noise": init_weights(self.cfg_single, seed),
                "context": init_weights(self.cfg_single, seed + 1),
                "fusion": init_weights(self.cfg_fusion, seed + 2),
            }
        else:
            self.nets = {"context": init_weights(self.cfg_single, seed)}
        self.optimizers = {name: Adam(params, lr=lr)
                           for name, params in self.nets.items()}

    @property
    def depth(self) -> int:
        return self.cfg_single.depth

    def flat_params(self) -> dict:
        """name -> Tensor with sub-network prefixes, registration order."""
        out = {}
        for net in ("noise", "context", "fusion"):
            if net in self.nets:
                for name, tensor in self.nets[net].items():
                    out[f"{net}.{name}"] = tensor
        return out

    def load_flat(self, arrays: dict) -> None:
        for full_name, arr in arrays.items():
            net, name = full_name.split(".", 1)
            if net not in self.nets or name not in self.nets[net]:
                raise ValueError(f"unexpected parameter {full_name!r}")
            if self.nets[net][name].data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {full_name!r}")
            self.nets[net][name].data = arr.astype(np.float64)


@dataclass
class DplBatch:
    x: Tensor                      # snapped network input
    y: Tensor | None               # ground truth
    noise_map: Tensor | None       # predicted noise field
    residual_out: Tensor | None    # x - noise_map
    context_out: Tensor            # direct clean-image prediction
    fused_out: Tensor              # final output


@dataclass
class LossReport:
    l_n: float
    l_c: float
    l_f: float
    l_o: float
    batch_size: int


def dpl_forward(model: DplModel, x: Tensor, y: Tensor | None = None) -> DplBatch:
    """Run all paths; retains every intermediate needed by the losses."""
    x = snap_grid(x)
    context = unet_forward(model.cfg_single, model.nets["context"], x)
    if model.kind == "unet":
        return DplBatch(x=x, y=y, noise_map=None, residual_out=None,
                        context_out=context, fused_out=context)
    noise_map = snap_grid(unet_forward(model.cfg_single, model.nets["noise"], x))
    residual = sub(x, noise_map)
    fused = unet_forward(model.cfg_fusion, model.nets["fusion"],
                         concat_channels(context, residual))
    return DplBatch(x=x, y=y, noise_map=noise_map, residual_out=residual,
                    context_out=context, fused_out=fused)


def loss_tensors(batch: DplBatch):
    """(l_n, l_c, l_f, l_o) scalar tensors; each term is a full-batch MSE."""
    if batch.y is None:
        raise ValueError("batch carries no ground truth")

    def mse_term(pred):
        d = sub(batch.y, pred)
        return mean_all(mul(d, d))

    l_c = mse_term(batch.context_out)
    if batch.residual_out is None:
        return None, l_c, None, l_c
    l_n = mse_term(batch.residual_out)
    l_f = mse_term(batch.fused_out)
    l_o = add(add(l_n, l_c), l_f)
    return l_n, l_c, l_f, l_o


def _report(tensors, batch_size: int) -> LossReport:
    l_n, l_c, l_f, l_o = tensors
    if l_n is None:
        v = float(l_c.data)
        return LossReport(0.0, v, 0.0, v, batch_size)
    return LossReport(float(l_n.data), float(l_c.data), float(l_f.data),
                      float(l_o.data), batch_size)


def dpl_loss(batch: DplBatch) -> LossReport:
    return _report(loss_tensors(batch), batch.x.data.shape[0])


def train_step(model: DplModel, x: np.ndarray, y: np.ndarray,
               step: int | None = None) -> LossReport:
    """Forward, joint backward, one Adam step per sub-network.

    Returns the pre-step losses. Gradients from the fusion term flow into
    both estimators through the concatenation; the per-path terms reach only
    their own networks.
    """
    batch = dpl_forward(model, Tensor(x), Tensor(y))
    tensors = loss_tensors(batch)
    report = _report(tensors, batch.x.data.shape[0])
    if not math.isfinite(report.l_o):
        raise TrainingError(
            f"non-finite loss at step {step}: l_n={report.l_n} "
            f"l_c={report.l_c} l_f={report.l_f}")
    for opt in model.optimizers.values():
        opt.zero_grad()
    backward(tensors[3])
    for opt in model.optimizers.values():
        opt.step()
    return report


def predict(model: DplModel, image: np.ndarray) -> np.ndarray:
    """Denoise one 2-D image with the fused output path."""
    x = Tensor(np.asarray(image, dtype=np.float64)[None, None])
    return dpl_forward(model, x).fused_out.data[0, 0]


@dataclass(frozen=True)
class TrainConfig:
    model: str = "dpl"
    iters: int = 200
    batch_size: int = 4
    lr: float = 1e-4
    seed: int = 0
    depth: int = 2
    base_channels: int = 16
    val_fraction: float = 0.2
    eval_every: int | None = None  # default: iters // 10

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}")
        if self.batch_size < 1 or self.iters < 1:
            raise ValueError("iters and batch_size must be >= 1")


@dataclass
class TrainResult:
    model: DplModel
    curve: list                    # (iter, LossReport) pairs
    train_ids: tuple
    val_ids: tuple
    best_iter: int
    best_val_psnr: float
    val_report: MetricReport = field(default_factory=MetricReport)


def _val_psnr(model: DplModel, pairs, ids) -> float:
    scores = []
    for i in ids:
        noisy, clean = pairs[i]
        p = psnr(predict(model, noisy), clean)
        if math.isfinite(p):
            scores.append(p)
    return sum(scores) / len(scores) if scores else math.inf


def train(config: TrainConfig, pairs, noise_family: str = "unknown") -> TrainResult:
    """Seeded training loop over (noisy, clean) pairs.

    Data order is reshuffled every epoch from a dedicated stream; the best
    validation snapshot (mean fused-output PSNR) is restored into the model
    before returning. Empty datasets and non-finite losses raise.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("dataset is empty")
    shape = np.asarray(pairs[0][0]).shape
    div = 1 << config.depth
    if shape[0] % div or shape[1] % div:
        raise ValueError(f"image size {shape} not divisible by 2^depth = {div}")

    model = DplModel(kind=config.model, depth=config.depth,
                     base_channels=config.base_channels,
                     lr=config.lr, seed=config.seed)
    if len(pairs) == 1:
        train_ids, val_ids = (0,), ()
    else:
        split = split_dataset(list(range(len(pairs))),
                              1.0 - config.val_fraction, seed=config.seed)
        train_ids, val_ids = split.train, split.val
        if not train_ids:
            train_ids, val_ids = val_ids, train_ids

    shuffle_rng = Rng(config.seed + _SHUFFLE_SEED_OFFSET)
    eval_every = config.eval_every or max(1, config.iters // 10)

    curve = []
    best_iter, best_psnr, best_snapshot = 0, -math.inf, None
    it = 0
    while it < config.iters:
        order = list(train_ids)
        shuffle_rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            if it >= config.iters:
                break
            chunk = order[start:start + config.batch_size]
            x = np.stack([pairs[i][0] for i in chunk])[:, None]
            y = np.stack([pairs[i][1] for i in chunk])[:, None]
            it += 1
            report = train_step(model, x, y, step=it)
            curve.append((it, report))
            if val_ids and (it % eval_every == 0 or it == config.iters):
                score = _val_psnr(model, pairs, val_ids)
                if score > best_psnr:
                    best_psnr = score
                    best_iter = it
                    best_snapshot = {name: t.data.copy()
                                     for name, t in model.flat_params().items()}

    if best_snapshot is not None:
        model.load_flat(best_snapshot)
    else:
        best_iter = it
        best_psnr = _val_psnr(model, pairs, val_ids or train_ids)

    result = TrainResult(model=model, curve=curve, train_ids=train_ids,
                         val_ids=val_ids, best_iter=best_iter,
                         best_val_psnr=best_psnr)
    eval_ids = val_ids if val_ids else train_ids
    result.val_report = evaluate(model, [pairs[i] for i in eval_ids],
                                 ids=[f"pair{i:04d}" for i in eval_ids],
                                 noise_family=noise_family)
    return result


def evaluate(model: DplModel, pairs, ids=None,
             noise_family: str = "unknown") -> MetricReport:
    """Per-image metrics of the model output and of the noisy reference."""
    report = MetricReport()
    for k, (noisy, clean) in enumerate(pairs):
        image_id = ids[k] if ids is not None else f"pair{k:04d}"
        report.add(image_id, model.kind, noise_family,
                   predict(model, noisy), clean)
        report.add(image_id, "noisy", noise_family, noisy, clean)
    return report


def save_model(model: DplModel, path) -> None:
    save_checkpoint(model.flat_params(), path)


def load_model(path, lr: float = 1e-4) -> DplModel:
    """Rebuild a model from a checkpoint, inferring its architecture."""
    arrays = load_checkpoint(path)
    if not any(k.startswith("context.") for k in arrays):
        raise ValueError(f"{path} does not look like a model checkpoint")
    kind = "dpl" if any(k.startswith("noise.") for k in arrays) else "unet"
    enc_stages = {int(k.split(".")[1][3:]) for k in arrays
                  if k.startswith("context.enc") and k.endswith("conv1.weight")}
    depth = 1 + max(enc_stages)
    base = arrays["context.enc0.conv1.weight"].shape[0]
    model = DplModel(kind=kind, depth=depth, base_channels=base, lr=lr, seed=0)
    model.load_flat(arrays)
    return model


def write_loss_curve(curve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter", "l_n", "l_c", "l_f", "l_o"])
        for it, rep in curve:
            w.writerow([it, repr(rep.l_n), repr(rep.l_c),
                        repr(rep.l_f), repr(rep.l_o)])
