"""Adversarial training with the alpha-mixed loss, optional TRADES term.

The step objective is

    J~ = alpha * J(clean batch) + (1 - alpha) * J(generated batch)

with both terms plain cross-entropy against ground-truth labels. Clean and
generated batches are drawn independently per step. With the TRADES
regularizer enabled, a KL(p_source || p_generated) term over the generated
batch's source pairs is added, scaled by lambda.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops, rng
from .data import Dataset
from .errors import ContractError, NumericError
from .genadv import AdvDataset
from .models import Classifier, epoch_batches
from .optim import SgdConfig, new_velocity, sgd_step
from .tensor import Tape, Tensor, backward

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class AdvTrainConfig:
    sgd: SgdConfig
    alpha_mix: float = 0.5
    regularizer: str = "none"
    trades_lambda: float = 1.0
    fine_tune: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ContractError(f"alpha_mix must be in [0,1], got {self.alpha_mix}")
        if self.regularizer not in ("none", "trades"):
            raise ContractError(f"regularizer must be 'none' or 'trades', got {self.regularizer!r}")
        if self.regularizer == "trades" and not self.trades_lambda > 0:
            raise ContractError(f"trades lambda must be positive, got {self.trades_lambda}")


def _as_scalar_tensor(v):
    t = v if isinstance(v, Tensor) else Tensor(np.float32(v))
    if t.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {t.shape}")
    if not np.isfinite(t.data).all():
        raise NumericError("non-finite loss term")
    return t


def mixed_loss(clean_batch_loss, adv_batch_loss, alpha_mix):
    """alpha * J_clean + (1 - alpha) * J_adv, differentiable through both."""
    clean = _as_scalar_tensor(clean_batch_loss)
    adv = _as_scalar_tensor(adv_batch_loss)
    return ops.add(ops.scale(clean, alpha_mix), ops.scale(adv, 1.0 - alpha_mix))


def _floored_log(p: Tensor) -> Tensor:
    floor = Tensor(np.full(p.shape, PROB_FLOOR, dtype=np.float32))
    return ops.log(ops.add(ops.relu(ops.sub(p, floor)), floor))


def kl_divergence(p_logits: Tensor, q_logits: Tensor) -> Tensor:
    """Mean KL(softmax(p) || softmax(q)) with floored probabilities."""
    n = p_logits.shape[0]
    p = ops.softmax(p_logits, axis=1)
    q = ops.softmax(q_logits, axis=1)
    per_elem = ops.mul(p, ops.sub(_floored_log(p), _floored_log(q)))
    return ops.scale(ops.sumall(per_elem), 1.0 / n)


def trades_loss(model: Classifier, x, x_adv, y, lam):
    """CE(f(x), y) + lam * KL(softmax(f(x)) || softmax(f(x_adv)))."""
    x = np.asarray(x, dtype=np.float32)
    x_adv = np.asarray(x_adv, dtype=np.float32)
    if x.shape != x_adv.shape:
        raise ContractError(f"x {x.shape} vs x_adv {x_adv.shape}")
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    logits, _ = model.forward(Tensor(x))
    ce = ops.cross_entropy_logits(logits, y)
    if lam == 0:
        return ce
    logits_adv, _ = model.forward(Tensor(x_adv))
    return ops.add(ce, ops.scale(kl_divergence(logits, logits_adv), lam))


class _AdvBatcher:
    """Independent per-step draws from the generated dataset."""

    def __init__(self, adv_ds, batch_size, seed):
        self.adv_ds = adv_ds
        self.batch_size = min(batch_size, len(adv_ds))
        self.stream = rng.named_stream(seed, "train.adv")

    def next(self):
        return self.stream.choice(len(self.adv_ds), size=self.batch_size, replace=False)


def adversarial_train(model: Classifier, clean_ds: Dataset, adv_ds, cfg: AdvTrainConfig, seed):
    """Mixed-loss SGD over clean and generated batches.

    Returns per-epoch rows (clean_loss, adv_loss, mixed_loss). With an empty
    adv_ds and alpha_mix=1 the trajectory matches train_classifier exactly
    (same seed, same batch stream).
    """
    have_adv = adv_ds is not None and len(adv_ds) > 0
    if not have_adv and cfg.alpha_mix < 1.0:
        raise ContractError("adv weight is nonzero but no generated dataset was given")
    use_trades = cfg.regularizer == "trades"
    if use_trades and have_adv and not (isinstance(adv_ds, AdvDataset) and adv_ds.source_x is not None):
        raise ContractError("trades regularizer needs a generated dataset with source pairing")

    stream = rng.named_stream(seed, "train.classifier")
    adv_batcher = _AdvBatcher(adv_ds, cfg.sgd.batch_size, seed) if have_adv else None
    params = model.params()
    velocity = new_velocity(params)
    history = []
    for epoch in range(cfg.sgd.epochs):
        sums = np.zeros(3)
        batches = 0
        for batch in epoch_batches(stream, len(clean_ds), cfg.sgd.batch_size):
            try:
                with Tape() as tape:
                    tape.watch(*params)
                    logits, _ = model.forward(Tensor(clean_ds.x[batch]))
                    clean_loss = ops.cross_entropy_logits(logits, clean_ds.y[batch])
                    if have_adv:
                        adv_idx = adv_batcher.next()
                        adv_logits, _ = model.forward(Tensor(adv_ds.x[adv_idx]))
                        adv_loss = ops.cross_entropy_logits(adv_logits, adv_ds.y[adv_idx])
                        loss = mixed_loss(clean_loss, adv_loss, cfg.alpha_mix)
                        if use_trades:
                            src_logits, _ = model.forward(Tensor(adv_ds.source_x[adv_idx]))
                            kl = kl_divergence(src_logits, adv_logits)
                            loss = ops.add(loss, ops.scale(kl, cfg.trades_lambda))
                    else:
                        adv_loss = None
                        loss = ops.scale(clean_loss, cfg.alpha_mix)
                backward(tape, loss)
            except NumericError as exc:
                raise NumericError(f"adversarial training diverged at epoch {epoch}: {exc}")
            sgd_step(params, [p.grad for p in params], cfg.sgd, velocity)
            sums += [
                clean_loss.item(),
                adv_loss.item() if adv_loss is not None else 0.0,
                loss.item(),
            ]
            batches += 1
        history.append(tuple(sums / batches))
    return history
