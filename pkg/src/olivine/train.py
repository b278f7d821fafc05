"""Loss, Adam, the early-stopping training loop, and the gradient checker."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import model as M
from .dataset import Batch
from .errors import DataError, NumericError
from .rng import make_rng

log = logging.getLogger(__name__)

LOSS_CLAMP = 1e-12


def cross_entropy(probs: np.ndarray, labels: Sequence[int]) -> Tuple[float, np.ndarray]:
    """Mean categorical cross-entropy and its gradient w.r.t. the logits.

    ``probs`` are softmax outputs; the returned gradient is (p - onehot) / B,
    i.e. already composed with the softmax Jacobian.
    """
    labels = np.asarray(labels, dtype=np.int64)
    b, k = probs.shape
    if labels.shape != (b,):
        raise ValueError(f"expected {b} labels, got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range 0..{k - 1}")
    rows = np.arange(b)
    picked = probs[rows, labels].astype(np.promote_types(probs.dtype, np.float64))
    loss = -np.mean(np.log(np.maximum(picked, LOSS_CLAMP)))
    loss = loss if picked.dtype == np.longdouble else float(loss)
    grad = probs.copy()
    grad[rows, labels] -= 1
    return loss, grad / b


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: M.Params, grads: M.Params, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update of every parameter present in ``grads``.

    Updates ``params`` and ``state`` in place.
    """
    if not lr > 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} differs from parameter {name} {params[name].shape}")
    state.t += 1
    b1, b2, t = state.beta1, state.beta2, state.t
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        params[name] = (p - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 20
    batch_size: int = 32
    early_stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def is_better(candidate: EpochRecord, best: Optional[EpochRecord]) -> bool:
    """Higher val accuracy wins, then lower val loss; exact ties keep the earlier epoch."""
    if best is None:
        return True
    if candidate.val_acc != best.val_acc:
        return candidate.val_acc > best.val_acc
    return candidate.val_loss < best.val_loss


@dataclass
class TrainResult:
    checkpoint: bytes
    params: M.Params
    best_epoch: int
    history: List[EpochRecord]


def evaluate_batches(model: M.ModelSpec, params: M.Params, batches: Iterable[Batch]):
    """Infer-mode pass: ``(mean loss, accuracy, predictions, labels)``."""
    losses, preds, labels = [], [], []
    for batch in batches:
        probs, _ = M.forward(model, params, batch.inputs, "infer")
        loss, _ = cross_entropy(probs, batch.labels)
        losses.append(loss * len(batch.labels))
        preds.extend(int(i) for i in np.argmax(probs, axis=1))
        labels.extend(batch.labels)
    if not labels:
        raise DataError("evaluation split is empty")
    correct = sum(p == y for p, y in zip(preds, labels))
    return sum(losses) / len(labels), correct / len(labels), preds, labels


def train_loop(model: M.ModelSpec, params: M.Params,
               train_batches: Callable[[int], Iterable[Batch]],
               val_batches: Callable[[], Iterable[Batch]],
               cfg: TrainConfig,
               evaluate: Optional[Callable[[M.ModelSpec, M.Params], Tuple[float, float]]] = None,
               on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """Train with Adam and early stopping; return the best-epoch checkpoint.

    ``train_batches(epoch)`` yields that epoch's shuffled batches and
    ``val_batches()`` the full validation split. ``evaluate`` overrides the
    validation measurement (returns ``(val_loss, val_acc)``). Epochs are
    numbered from 1; training stops once ``epoch - best_epoch >= patience``.
    ``params`` is updated in place and ends at the last epoch's weights.
    """
    state = AdamState()
    history: List[EpochRecord] = []
    best: Optional[EpochRecord] = None
    best_ckpt = b""
    best_params: M.Params = {}
    trainable = model.trainable_names()
    for epoch in range(1, cfg.max_epochs + 1):
        total_loss, correct, seen = 0.0, 0, 0
        for bi, batch in enumerate(train_batches(epoch)):
            probs, cache = M.forward(model, params, batch.inputs, "train")
            loss, grad_logits = cross_entropy(probs, batch.labels)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = M.backward(model, params, cache, grad_logits)
            adam_step(params, {k: grads[k] for k in trainable}, state, cfg.learning_rate)
            n = len(batch.labels)
            total_loss += loss * n
            correct += int(np.sum(np.argmax(probs, axis=1) == np.asarray(batch.labels)))
            seen += n
        if seen == 0:
            raise DataError("training split is empty")
        if evaluate is not None:
            val_loss, val_acc = evaluate(model, params)
        else:
            val_loss, val_acc, _, _ = evaluate_batches(model, params, val_batches())
        if not math.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        record = EpochRecord(epoch, total_loss / seen, correct / seen, float(val_loss), float(val_acc))
        history.append(record)
        log.info("epoch %d: train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f",
                 epoch, record.train_loss, record.train_acc, record.val_loss, record.val_acc)
        if on_epoch:
            on_epoch(record)
        if is_better(record, best):
            best = record
            best_params = {k: v.copy() for k, v in params.items()}
            best_ckpt = M.save_checkpoint(model, params, M.CheckpointMeta(epoch, record.val_acc))
        if epoch - best.epoch >= cfg.early_stop_patience:
            log.info("early stop after epoch %d (best epoch %d)", epoch, best.epoch)
            break
    return TrainResult(best_ckpt, best_params, best.epoch, history)


@dataclass
class GradCheckReport:
    max_error: float
    checked: int
    skipped_kinks: int
    worst: Optional[Tuple[str, int]] = None


def _kink_pattern(model: M.ModelSpec, cache: M.ForwardCache) -> List[np.ndarray]:
    """Region index (below 0, linear, above 6) of every ReLU6 input."""
    out = []
    for bi, block in enumerate(model.blocks):
        for li, layer in enumerate(block.layers):
            if isinstance(layer, M.Activation) and layer.fn == "relu6":
                x = cache.layer_caches[bi][li]
                out.append((x > 0).astype(np.int8) + (x >= 6))
    return out


def gradient_check_report(model: M.ModelSpec, params: M.Params, batch: Batch, h: float = 1e-5,
                          max_params: int = 2000, seed: int = 0,
                          corrupt: Optional[Tuple[str, int]] = None,
                          dtype=np.float64) -> GradCheckReport:
    """Compare analytic gradients with central differences (L(p+h)-L(p-h))/2h.

    Runs in ``dtype`` (float64 by default, ``np.longdouble`` for extended
    precision) with batch statistics but without touching running stats.
    With fewer than ``max_params`` trainable scalars every one is checked;
    otherwise ``max_params`` are sampled. A coordinate whose +h and -h probes
    put some ReLU6 input on different sides of a kink has no valid central
    difference; it is skipped and counted. ``corrupt=(name, flat_index)``
    doubles one analytic entry, for testing the harness itself.
    """
    p64 = M.cast_params(params, dtype)
    x = batch.inputs.astype(dtype)
    labels = batch.labels

    def probe(p):
        probs, cache = M.forward(model, p, x, "train", update_stats=False)
        return cross_entropy(probs, labels)[0], _kink_pattern(model, cache)

    probs, cache = M.forward(model, p64, x, "train", update_stats=False)
    grads = M.backward(model, p64, cache, cross_entropy(probs, labels)[1])
    names = model.trainable_names()
    coords = [(n, i) for n in names for i in range(p64[n].size)]
    if len(coords) >= max_params:
        pick = make_rng(seed).choice(len(coords), size=max_params, replace=False)
        coords = [coords[j] for j in sorted(pick)]
    if corrupt is not None and corrupt not in coords:
        coords.append(corrupt)
    report = GradCheckReport(0.0, 0, 0)
    for name, i in coords:
        flat = p64[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up, up_kinks = probe(p64)
        flat[i] = orig - h
        down, down_kinks = probe(p64)
        flat[i] = orig
        if any(not np.array_equal(a, b) for a, b in zip(up_kinks, down_kinks)):
            report.skipped_kinks += 1
            continue
        numeric = float((up - down) / (2 * h))
        analytic = float(grads[name].reshape(-1)[i])
        if corrupt == (name, i):
            analytic *= 2
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        report.checked += 1
        if err > report.max_error:
            report.max_error, report.worst = err, (name, i)
    return report


def gradient_check(model: M.ModelSpec, params: M.Params, batch: Batch, h: float = 1e-5,
                   max_params: int = 2000, seed: int = 0,
                   corrupt: Optional[Tuple[str, int]] = None) -> float:
    """Max relative error |a - n| / max(|a|, |n|, 1e-8); see :func:`gradient_check_report`."""
    return gradient_check_report(model, params, batch, h, max_params, seed, corrupt).max_error
