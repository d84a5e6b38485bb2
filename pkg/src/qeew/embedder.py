"""Small contrastive text encoder for embedding-based candidate retrieval.

A text is encoded as the mean of its hashed token embeddings times a square
projection matrix.  Training pulls each query toward its reformulation and
pushes it at least ``margin`` away (Euclidean) from the other
reformulations in the batch:

    loss = mean_i [ d(q_i, r_i)^2 + mean_{j != i} max(0, margin - d(q_i, r_j))^2 ]
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .catalog import tokenize
from .hashing import bucket_ids
from .optim import AdamW
from .serialization import dump_params, load_params
from .validation import check_positive_float, check_positive_int

logger = logging.getLogger(__name__)


class EmbedderDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ContrastiveConfig:
    margin: float = 1.0
    learning_rate: float = 1e-3
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        check_positive_float(self.margin, "margin")
        check_positive_float(self.learning_rate, "learning_rate")
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.batch_size, "batch_size")


@dataclass
class TextEncoder:
    params: dict  # "embed" (vocab_buckets, dim), "proj" (dim, dim)

    @property
    def dim(self) -> int:
        return self.params["proj"].shape[1]

    @property
    def vocab_buckets(self) -> int:
        return self.params["embed"].shape[0]

    @classmethod
    def initialize(cls, dim=64, vocab_buckets=4096, seed=0) -> "TextEncoder":
        check_positive_int(dim, "dim")
        check_positive_int(vocab_buckets, "vocab_buckets")
        rng = np.random.default_rng(seed)
        return cls({
            "embed": rng.normal(0.0, 1.0, size=(vocab_buckets, dim)),
            "proj": np.eye(dim) + rng.normal(0.0, 0.1 / np.sqrt(dim), size=(dim, dim)),
        })


def _ids(text, buckets):
    return bucket_ids(tokenize(text), buckets)


def encode_text(encoder: TextEncoder, text: str) -> np.ndarray:
    ids = _ids(text, encoder.vocab_buckets)
    if not len(ids):
        return np.zeros(encoder.dim)
    return encoder.params["embed"][ids].mean(axis=0) @ encoder.params["proj"]


def encode_many(encoder: TextEncoder, texts) -> np.ndarray:
    out = np.zeros((len(texts), encoder.dim))
    for i, t in enumerate(texts):
        out[i] = encode_text(encoder, t)
    return out


def _pool(params, id_lists):
    """Mean-pooled raw embeddings, one row per id list."""
    pooled = np.zeros((len(id_lists), params["embed"].shape[1]))
    for i, ids in enumerate(id_lists):
        if len(ids):
            pooled[i] = params["embed"][ids].mean(axis=0)
    return pooled


def contrastive_loss(Q: np.ndarray, R: np.ndarray, margin: float):
    """Loss and gradients w.r.t. query rows ``Q`` and reformulation rows ``R``.

    Negatives for query ``i`` are all ``R[j]`` with ``j != i``.
    """
    B = Q.shape[0]
    diff = Q[:, None, :] - R[None, :, :]  # (B, B, dim)
    sq = (diff * diff).sum(axis=-1)
    pos = np.diag(sq).copy()
    loss_terms = pos.copy()
    dQ = 2.0 * (Q - R)
    dR = -dQ.copy()
    if B > 1:
        d = np.sqrt(sq)
        off = ~np.eye(B, dtype=bool)
        slack = np.where(off, np.maximum(0.0, margin - d), 0.0)
        loss_terms += (slack ** 2).sum(axis=1) / (B - 1)
        # d/dQ_i of slack^2 = -2 slack * (Q_i - R_j) / d; zero-distance pairs have no direction
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where((slack > 0) & (d > 0), -2.0 * slack / d, 0.0) / (B - 1)
        dQ += (coef[:, :, None] * diff).sum(axis=1)
        dR -= (coef[:, :, None] * diff).sum(axis=0)
    return float(loss_terms.mean()), dQ / B, dR / B


def batch_loss_and_grads(params, q_ids, r_ids, margin):
    Pq, Pr = _pool(params, q_ids), _pool(params, r_ids)
    W = params["proj"]
    value, dQ, dR = contrastive_loss(Pq @ W, Pr @ W, margin)
    grads = {"proj": Pq.T @ dQ + Pr.T @ dR, "embed": np.zeros_like(params["embed"])}
    for pooled_grad, id_lists in ((dQ @ W.T, q_ids), (dR @ W.T, r_ids)):
        for i, ids in enumerate(id_lists):
            if len(ids):
                np.add.at(grads["embed"], ids, pooled_grad[i] / len(ids))
    return value, grads


def train_contrastive(pairs, cfg: ContrastiveConfig | None = None, dim=64, vocab_buckets=4096,
                      encoder: TextEncoder | None = None) -> TextEncoder:
    """Fit a :class:`TextEncoder` on ``(query, reformulation)`` pairs.

    ``pairs`` may hold :class:`~qeew.catalog.ReformulationPair` objects or
    plain string tuples.
    """
    cfg = cfg or ContrastiveConfig()
    texts = [(p.query, p.reformulation) if hasattr(p, "reformulation") else tuple(p) for p in pairs]
    if len(texts) < 2:
        raise ValueError("contrastive training needs at least two pairs")
    enc = encoder or TextEncoder.initialize(dim, vocab_buckets, cfg.seed)
    params = {k: v.copy() for k, v in enc.params.items()}
    q_ids = [_ids(q, enc.vocab_buckets) for q, _ in texts]
    r_ids = [_ids(r, enc.vocab_buckets) for _, r in texts]
    opt = AdamW(params, lr=cfg.learning_rate, eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    n = len(texts)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                # a lone pair has no in-batch negative; fold it into the previous batch
                batch = order[max(0, start - 1):start + 1]
            value, grads = batch_loss_and_grads(
                params, [q_ids[i] for i in batch], [r_ids[i] for i in batch], cfg.margin)
            if not np.isfinite(value):
                raise EmbedderDivergedError(f"non-finite contrastive loss at epoch {epoch}")
            opt.step(params, grads)
            total += value * len(batch)
        logger.info("embedder epoch %d loss %.4f", epoch, total / n)
    return TextEncoder(params)


class ContrastiveEncoder(TransformerMixin, BaseEstimator):
    """sklearn wrapper: ``fit`` on reformulation pairs, ``transform`` texts to vectors."""

    def __init__(self, dim=64, vocab_buckets=4096, margin=1.0, learning_rate=1e-3, adam_eps=1e-8,
                 weight_decay=0.01, epochs=20, batch_size=32, seed=0):
        self.dim = dim
        self.vocab_buckets = vocab_buckets
        self.margin = margin
        self.learning_rate = learning_rate
        self.adam_eps = adam_eps
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _config(self):
        return ContrastiveConfig(margin=self.margin, learning_rate=self.learning_rate,
                                 adam_eps=self.adam_eps, weight_decay=self.weight_decay,
                                 epochs=self.epochs, batch_size=self.batch_size, seed=self.seed)

    def fit(self, X, y=None):
        self.encoder_ = train_contrastive(X, self._config(), self.dim, self.vocab_buckets)
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        return encode_many(self.encoder_, list(X))

    def save(self, fh):
        check_is_fitted(self, "encoder_")
        dump_params(fh, "text_encoder", self.get_params(), self.encoder_.params)

    @classmethod
    def load(cls, fh):
        config, params, _ = load_params(fh, "text_encoder")
        est = cls(**config)
        est.encoder_ = TextEncoder(params)
        return est


__all__ = ["ContrastiveConfig", "ContrastiveEncoder", "TextEncoder", "contrastive_loss",
           "encode_text", "encode_many", "train_contrastive"]
