from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..serialization import dump_params, load_params
from ..validation import check_same_length
from .network import IGNORE, EncoderConfig, check_params, forward
from .training import TrainConfig, WeightModel, fit_network, predict_weights

_ENC_FIELDS = ("embed_dim", "vocab_buckets", "attention_heads", "attn_dropout", "clf_dropout")
_TRAIN_FIELDS = ("learning_rate", "adam_eps", "weight_decay", "epochs", "patience", "batch_size")


class EntityWeighter(ClassifierMixin, BaseEstimator):
    """Predict a weight level (0, 1, 2) for every slot of an expanded query.

    ``X`` is a sequence of :class:`~qeew.expansion.ExpandedQuery`; ``y`` a
    matching sequence of per-slot label arrays (``-1`` for PAD), as built by
    :func:`~qeew.weights.labels.assign_labels`.

    Parameters
    ----------
    embed_dim, vocab_buckets, attention_heads, attn_dropout, clf_dropout
        Network shape and regularization.
    learning_rate, adam_eps, weight_decay, epochs, patience, batch_size
        Optimizer and early-stopping schedule.
    validation_fraction : float, default=0.1
        Share of ``X`` held out for early stopping when no explicit
        validation set is passed to :meth:`fit`.
    seed : int, default=0
        Drives initialization, batch order and dropout.
    """

    classes_ = np.array([0, 1, 2])

    def __init__(self, embed_dim=64, vocab_buckets=4096, attention_heads=4, attn_dropout=0.3,
                 clf_dropout=0.5, learning_rate=1e-3, adam_eps=1e-8, weight_decay=0.01,
                 epochs=20, patience=3, batch_size=16, validation_fraction=0.1, seed=0):
        self.embed_dim = embed_dim
        self.vocab_buckets = vocab_buckets
        self.attention_heads = attention_heads
        self.attn_dropout = attn_dropout
        self.clf_dropout = clf_dropout
        self.learning_rate = learning_rate
        self.adam_eps = adam_eps
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.patience = patience
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _configs(self):
        enc = EncoderConfig(**{f: getattr(self, f) for f in _ENC_FIELDS}, seed=self.seed)
        tr = TrainConfig(**{f: getattr(self, f) for f in _TRAIN_FIELDS}, seed=self.seed)
        return enc, tr

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = list(X), list(y)
        check_same_length(X, y, "X", "y")
        if X_val is None:
            if len(X) < 2:
                raise ValueError("need at least two examples to carve out a validation split")
            rng = np.random.default_rng(self.seed)
            order = rng.permutation(len(X))
            n_val = min(len(X) - 1, max(1, int(round(self.validation_fraction * len(X)))))
            val_idx, tr_idx = order[:n_val], order[n_val:]
            X_val, y_val = [X[i] for i in val_idx], [y[i] for i in val_idx]
            X, y = [X[i] for i in tr_idx], [y[i] for i in tr_idx]
        else:
            X_val, y_val = list(X_val), list(y_val)
            check_same_length(X_val, y_val, "X_val", "y_val")
        enc, tr = self._configs()
        self.model_ = fit_network(X, y, X_val, y_val, enc, tr)
        self.history_ = self.model_.history
        self.best_epoch_ = self.model_.best_epoch
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return [forward(x, self.model_.params, self.model_.config) for x in X]

    def predict(self, X):
        check_is_fitted(self, "model_")
        return [predict_weights(self.model_, x) for x in X]

    def score(self, X, y, sample_weight=None):
        """Accuracy over all non-PAD slots."""
        hits = total = 0
        for pred, gold in zip(self.predict(X), y):
            gold = np.asarray(gold)
            keep = gold != IGNORE
            hits += int((pred[keep] == gold[keep]).sum())
            total += int(keep.sum())
        return hits / total if total else 0.0

    def save(self, fh):
        check_is_fitted(self, "model_")
        dump_params(fh, "weight_model", self.get_params(), self.model_.params,
                    extra={"history": self.model_.history, "best_epoch": self.model_.best_epoch})

    @classmethod
    def load(cls, fh):
        config, params, extra = load_params(fh, "weight_model")
        est = cls(**config)
        enc, _ = est._configs()
        check_params(params, enc)
        est.model_ = WeightModel(enc, params, extra.get("history", []), extra.get("best_epoch", 0))
        est.history_ = est.model_.history
        est.best_epoch_ = est.model_.best_epoch
        return est
