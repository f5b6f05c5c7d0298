"""Losses, optimisers and the mini-batch training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from msnilm.checkpoint import save_checkpoint
from msnilm.tensor import ShapeError, Tensor, clip, log, mean, mul, sub

logger = logging.getLogger(__name__)

PRED_CLAMP = 1e-7


class NumericAbort(RuntimeError):
    """Training produced a non-finite loss."""


# -- losses ------------------------------------------------------------
def _check_pair(pred: Tensor, target) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} differs from target shape {target.shape}")
    return target


def cross_entropy_loss(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy against continuous targets in [0, 1].

    Predictions are clamped to ``[1e-7, 1 - 1e-7]`` before the logarithms.
    """
    y = _check_pair(pred, target)
    p = clip(pred, PRED_CLAMP, 1.0 - PRED_CLAMP)
    terms = mul(y, log(p)) + mul(sub(1.0, y), log(sub(1.0, p)))
    return -mean(terms)


def mse_loss(pred: Tensor, target) -> Tensor:
    y = _check_pair(pred, target)
    diff = sub(pred, y)
    return mean(mul(diff, diff))


LOSSES = {"cross_entropy": cross_entropy_loss, "mse": mse_loss}


# -- optimisers --------------------------------------------------------
class Adam:
    """Bias-corrected Adam.

    ``m <- b1 m + (1-b1) g``, ``v <- b2 v + (1-b2) g^2``,
    ``theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)``.
    """

    def __init__(self, params: Sequence[Tensor], lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)
            p.data -= update.astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class NesterovSGD:
    """SGD with Nesterov momentum.

    The stored parameters are the look-ahead point ``theta + mu v``, so the
    gradient the caller supplies is already evaluated there. With that
    change of variable the update ``v <- mu v - lr g; theta <- theta + v``
    becomes ``v <- mu v - lr g; stored <- stored + mu v - lr g``.
    """

    def __init__(self, params: Sequence[Tensor], lr=1e-2, momentum=0.9):
        self.params = list(params)
        self.lr, self.momentum = lr, momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        mu = self.momentum
        for p, v in zip(self.params, self.velocity):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            v *= mu
            v -= self.lr * g
            p.data += (mu * v - self.lr * g).astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def make_optimizer(name: str, params, lr: Optional[float] = None):
    if name == "adam":
        return Adam(params, lr=1e-3 if lr is None else lr)
    if name == "sgd_nesterov":
        return NesterovSGD(params, lr=1e-2 if lr is None else lr)
    raise ValueError(f"unknown optimizer {name!r}")


# -- training loop -----------------------------------------------------
@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    loss: str = "cross_entropy"
    optimizer: str = "adam"
    lr: Optional[float] = None
    seed: int = 0
    checkpoint_every: int = 0
    patience: int = 10
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {sorted(LOSSES)}, got {self.loss!r}")
        if self.optimizer not in ("adam", "sgd_nesterov"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainResult:
    curve: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: Optional[float] = None
    epochs_run: int = 0


def _param_norms(model) -> dict:
    return {name: float(np.sqrt((p.data.astype(np.float64) ** 2).sum())) for name, p in model.named_parameters()}


def evaluate_loss(model, x: np.ndarray, y: np.ndarray, loss_name: str, batch_size: int = 64) -> float:
    """Mean loss of ``model`` in eval mode over (N, T) arrays."""
    was_training = model.training
    model.eval()
    loss_fn = LOSSES[loss_name]
    total, n = 0.0, 0
    dtype = model.config.dtype
    for lo in range(0, len(x), batch_size):
        xb = Tensor(x[lo : lo + batch_size, None, :].astype(dtype))
        yb = y[lo : lo + batch_size, None, :].astype(dtype)
        total += loss_fn(model(xb), yb).item() * len(xb.data)
        n += len(xb.data)
    model.train(was_training)
    return total / n


def train(model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
          out_dir: Optional[Path] = None, meta: Optional[dict] = None,
          x_val: Optional[np.ndarray] = None, y_val: Optional[np.ndarray] = None) -> TrainResult:
    """Fit ``model`` to aggregate windows ``x`` and appliance windows ``y`` (both (N, T)).

    When no explicit validation arrays are given, ``cfg.val_fraction`` of the
    windows are held out. The parameters of the epoch with the lowest
    validation loss are restored before returning. Checkpoints go to
    ``out_dir`` every ``cfg.checkpoint_every`` epochs and at the end.
    """
    if len(x) == 0:
        raise ValueError("training set is empty")
    if x.shape != y.shape:
        raise ShapeError(f"aggregate windows {x.shape} and appliance windows {y.shape} differ")
    rng = np.random.default_rng(cfg.seed)
    if x_val is None and cfg.val_fraction > 0 and len(x) > 1:
        order = rng.permutation(len(x))
        n_val = max(1, int(round(cfg.val_fraction * len(x))))
        val_idx, train_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
        x_val, y_val = x[val_idx], y[val_idx]
        x, y = x[train_idx], y[train_idx]

    dtype = model.config.dtype
    params = model.parameters()
    opt = make_optimizer(cfg.optimizer, params, cfg.lr)
    loss_fn = LOSSES[cfg.loss]
    dropout_rng = np.random.default_rng([cfg.seed, 1])
    result = TrainResult()
    best = [p.data.copy() for p in params]
    best_val = math.inf
    stale = 0
    step = 0
    meta = dict(meta or {})

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        perm = rng.permutation(len(x))
        for b, lo in enumerate(range(0, len(x), cfg.batch_size)):
            idx = perm[lo : lo + cfg.batch_size]
            xb = Tensor(x[idx, None, :].astype(dtype))
            yb = y[idx, None, :].astype(dtype)
            opt.zero_grad()
            loss = loss_fn(model(xb, dropout_rng), yb)
            value = loss.item()
            if not math.isfinite(value):
                norms = _param_norms(model)
                worst = sorted(norms.items(), key=lambda kv: -kv[1])[:3]
                raise NumericAbort(
                    f"non-finite loss at epoch {epoch}, batch {b} (step {step}); "
                    f"largest parameter norms: {worst}"
                )
            loss.backward()
            opt.step()
            step += 1
            result.curve.append({"step": step, "epoch": epoch, "train_loss": value, "val_loss": None})
        model.eval()
        val = evaluate_loss(model, x_val, y_val, cfg.loss) if x_val is not None else None
        if result.curve:
            result.curve[-1]["val_loss"] = val
        result.epochs_run = epoch
        logger.info("epoch %d  train %.5f  val %s", epoch, result.curve[-1]["train_loss"], val)
        score = val if val is not None else result.curve[-1]["train_loss"]
        if score < best_val:
            best_val, stale = score, 0
            best = [p.data.copy() for p in params]
            result.best_epoch = epoch
        else:
            stale += 1
        if out_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(Path(out_dir) / f"checkpoint_epoch{epoch:04d}.bin", model, {**meta, "epoch": epoch})
        if cfg.patience and stale >= cfg.patience:
            logger.info("early stop after %d stale epochs", stale)
            break

    for p, b in zip(params, best):
        p.data = b
    model.eval()
    result.best_val_loss = None if best_val == math.inf else best_val
    if out_dir is not None:
        save_checkpoint(Path(out_dir) / "checkpoint.bin", model, {**meta, "epoch": result.best_epoch})
        write_loss_curve(Path(out_dir) / "loss_curve.csv", result.curve)
    return result


def write_loss_curve(path: Path, curve: List[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "epoch", "train_loss", "val_loss"])
        for row in curve:
            val = "" if row["val_loss"] is None else repr(row["val_loss"])
            w.writerow([row["step"], row["epoch"], repr(row["train_loss"]), val])
