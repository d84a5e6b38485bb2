import io

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qeew.catalog import Entity
from qeew.expansion import ExpandedQuery, ExpansionSlot, Origin, pad_slot
from qeew.serialization import ModelFormatError
from qeew.weights import EncoderConfig, EntityWeighter, TrainConfig, TrainingDivergedError
from qeew.weights import training as training_mod
from qeew.weights.network import IGNORE
from qeew.weights.training import fit_network, predict_weights

POOLS = {0: ["zor", "vex", "kul"], 1: ["mip", "tad", "lon"], 2: ["sha", "bel", "ru"]}


def separable(n, seed):
    """Queries whose slot labels are fixed by the slot's own words."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for _ in range(n):
        m, k = int(rng.integers(1, 3)), 2
        groups, labels = [], []
        for gi in range(m):
            n_real = 1 + int(rng.integers(0, k + 1))
            group = []
            for j in range(n_real):
                level = int(rng.integers(0, 3))
                word = f"{rng.choice(POOLS[level])} {rng.integers(100)}"
                group.append(ExpansionSlot(Entity(word, "T"),
                                           Origin.ORIGINAL if j == 0 else Origin.EXPANDED, gi))
                labels.append(level)
            group += [pad_slot(gi)] * (k + 1 - n_real)
            labels += [IGNORE] * (k + 1 - n_real)
            groups.append(group)
        X.append(ExpandedQuery("play it", groups, k))
        y.append(np.array(labels))
    return X, y


ENC = EncoderConfig(embed_dim=16, vocab_buckets=512, attention_heads=2, seed=0)


def _accuracy(model, X, y):
    hits = total = 0
    for x, lab in zip(X, y):
        keep = lab != IGNORE
        hits += int((predict_weights(model, x)[keep] == lab[keep]).sum())
        total += int(keep.sum())
    return hits / total


@pytest.fixture(scope="module")
def trained():
    X, y = separable(240, 0)
    Xv, yv = separable(60, 1)
    model = fit_network(X, y, Xv, yv, ENC, TrainConfig(learning_rate=3e-3, epochs=20, seed=0))
    return model, X, y


def test_separable_training_accuracy(trained):
    model, X, y = trained
    assert _accuracy(model, X, y) >= 0.95


def test_separable_held_out_accuracy(trained):
    model, _, _ = trained
    Xt, yt = separable(100, 2)
    assert _accuracy(model, Xt, yt) >= 0.9


def test_history_and_best_epoch(trained):
    model, _, _ = trained
    vals = [h["val_loss"] for h in model.history]
    assert model.best_epoch == 1 + int(np.argmin(vals))


def test_same_seed_bitwise_identical():
    X, y = separable(40, 3)
    cfg = TrainConfig(epochs=2, seed=4)
    a = fit_network(X, y, X[:10], y[:10], ENC, cfg)
    b = fit_network(X, y, X[:10], y[:10], ENC, cfg)
    assert all(np.array_equal(a.params[n], b.params[n]) for n in a.params)
    c = fit_network(X, y, X[:10], y[:10], ENC, TrainConfig(epochs=2, seed=5))
    assert not all(np.array_equal(a.params[n], c.params[n]) for n in a.params)


def test_patience_one_runs_past_first_epoch():
    X, y = separable(40, 3)
    model = fit_network(X, y, X, y, ENC, TrainConfig(epochs=3, patience=1, learning_rate=3e-3))
    assert len(model.history) >= 2


def test_divergence_is_reported(monkeypatch):
    X, y = separable(8, 3)
    monkeypatch.setattr(training_mod, "loss_and_grad",
                        lambda logits, labels: (float("nan"), np.zeros_like(logits)))
    with pytest.raises(TrainingDivergedError, match="epoch 1"):
        fit_network(X, y, X, y, ENC, TrainConfig(epochs=1))


def test_empty_sets_rejected():
    with pytest.raises(ValueError):
        fit_network([], [], [], [], ENC, TrainConfig())


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def _weighter():
    return EntityWeighter(embed_dim=16, vocab_buckets=512, attention_heads=2, epochs=3,
                          learning_rate=3e-3, seed=1)


def test_estimator_params_and_clone():
    est = _weighter()
    assert est.get_params()["embed_dim"] == 16
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict(separable(1, 0)[0])


def test_estimator_fit_predict_save_load():
    X, y = separable(60, 5)
    est = _weighter().fit(X, y)
    assert 1 <= est.best_epoch_ <= 3
    preds = est.predict(X[:5])
    assert all(p.shape == (len(x.slots),) for p, x in zip(preds, X[:5]))
    assert 0.0 <= est.score(X, y) <= 1.0
    buf = io.StringIO()
    est.save(buf)
    buf.seek(0)
    again = EntityWeighter.load(buf)
    assert again.get_params() == est.get_params()
    for a, b in zip(again.decision_function(X[:5]), est.decision_function(X[:5])):
        assert np.array_equal(a, b)


def test_load_rejects_other_versions():
    X, y = separable(10, 5)
    buf = io.StringIO()
    _weighter().set_params(epochs=1).fit(X, y).save(buf)
    text = buf.getvalue().replace('"version": 1', '"version": 99')
    with pytest.raises(ModelFormatError, match="version"):
        EntityWeighter.load(io.StringIO(text))
