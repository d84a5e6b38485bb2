"""Minibatch training of the weight network with early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..catalog import ReformulationPair
from ..eekb import Eekb
from ..expansion import ExpandedQuery, expand_query
from ..optim import AdamW
from ..validation import check_positive_float, check_positive_int
from .labels import assign_labels
from .network import (EncoderConfig, IGNORE, backward, forward, init_params, loss_and_grad,
                      predict_levels, prepare, zero_grads)

logger = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 20
    patience: int = 3
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        check_positive_float(self.learning_rate, "learning_rate")
        check_positive_float(self.adam_eps, "adam_eps")
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.patience, "patience")
        check_positive_int(self.batch_size, "batch_size")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class WeightModel:
    config: EncoderConfig
    params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    def logits(self, xq) -> np.ndarray:
        return forward(xq, self.params, self.config)


def predict_weights(model: WeightModel, xq: ExpandedQuery) -> np.ndarray:
    """Predicted level per slot; PAD slots come back as ``IGNORE``."""
    levels = predict_levels(model.logits(xq))
    mask = np.array(xq.pad_mask())
    return np.where(mask, levels, IGNORE)


def _mean_loss(prepped, labels, params, cfg):
    return float(np.mean([loss_and_grad(forward(p, params, cfg), y)[0]
                          for p, y in zip(prepped, labels)]))


def fit_network(X: Sequence[ExpandedQuery], y, X_val: Sequence[ExpandedQuery], y_val,
                enc_cfg: EncoderConfig, train_cfg: TrainConfig) -> WeightModel:
    if not X or not X_val:
        raise ValueError("training and validation sets must be non-empty")
    buckets = enc_cfg.vocab_buckets
    prep = [prepare(x, buckets) for x in X]
    prep_val = [prepare(x, buckets) for x in X_val]
    y = [np.asarray(l, dtype=np.int64) for l in y]
    y_val = [np.asarray(l, dtype=np.int64) for l in y_val]

    params = init_params(enc_cfg)
    opt = AdamW(params, lr=train_cfg.learning_rate, eps=train_cfg.adam_eps,
                weight_decay=train_cfg.weight_decay)
    rng = np.random.default_rng(train_cfg.seed)
    best_params = {k: v.copy() for k, v in params.items()}
    best_val, best_epoch, stale = np.inf, 0, 0
    history = []
    n = len(prep)
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n)
        train_total = 0.0
        for start in range(0, n, train_cfg.batch_size):
            batch = order[start:start + train_cfg.batch_size]
            grads = zero_grads(params)
            batch_loss = 0.0
            for i in batch:
                logits, cache = forward(prep[i], params, enc_cfg, train_mode=True, rng=rng,
                                        return_cache=True)
                value, dlogits = loss_and_grad(logits, y[i])
                backward(dlogits / len(batch), cache, params, enc_cfg, grads)
                batch_loss += value
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, batch starting {start}")
            opt.step(params, grads)
            train_total += batch_loss
        val = _mean_loss(prep_val, y_val, params, enc_cfg)
        if not np.isfinite(val):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": train_total / n, "val_loss": val})
        logger.info("epoch %d train %.4f val %.4f", epoch, train_total / n, val)
        if val < best_val:
            best_val, best_epoch, stale = val, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= train_cfg.patience:
                logger.info("early stop after epoch %d (best %d)", epoch, best_epoch)
                break
    return WeightModel(enc_cfg, best_params, history, best_epoch)


def label_pairs(pairs: Sequence[ReformulationPair], eekb: Eekb, k: int):
    xs = [expand_query(p.query, p.query_entities, eekb, k) for p in pairs]
    return xs, [assign_labels(p, x) for p, x in zip(pairs, xs)]


def train(train_pairs, val_pairs, eekb: Eekb, k: int, enc_cfg: EncoderConfig | None = None,
          train_cfg: TrainConfig | None = None) -> WeightModel:
    """Expand and label both pair sets, then fit the network."""
    X, y = label_pairs(train_pairs, eekb, k)
    X_val, y_val = label_pairs(val_pairs, eekb, k)
    return fit_network(X, y, X_val, y_val, enc_cfg or EncoderConfig(), train_cfg or TrainConfig())
