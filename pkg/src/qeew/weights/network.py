"""Hierarchical cross-attention network that scores entity slots.

Layout for one expanded query with ``m`` groups of ``T = k + 1`` slots:

1. each real slot is encoded as the mean of hashed token embeddings of
   ``"<query> [SEP] <entity> [SEP] <type>"`` plus a learned role vector
   (original vs. expansion); PAD slots are the zero vector;
2. first-level multi-head attention runs inside every group (parameters
   shared across groups), followed by residual + layer norm;
3. second-level multi-head attention runs over all ``m * T`` slots jointly,
   again with residual + layer norm;
4. a linear layer maps each slot to 3 logits (weight levels 0, 1, 2).

PAD keys are masked out of every softmax and PAD rows are zeroed after each
layer, so PAD content cannot leak into real slots.  All arithmetic is
float64 and every gradient is written out by hand in :func:`backward`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ..catalog import normalize
from ..expansion import ExpandedQuery, ExpansionSlot, Origin
from ..hashing import bucket_ids
from ..validation import check_positive_int, check_probability

N_LEVELS = 3
IGNORE = -1
SEP = "[SEP]"
LN_EPS = 1e-5


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 64
    vocab_buckets: int = 4096
    attention_heads: int = 4
    attn_dropout: float = 0.3
    clf_dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.embed_dim, "embed_dim")
        check_positive_int(self.vocab_buckets, "vocab_buckets")
        check_positive_int(self.attention_heads, "attention_heads")
        check_probability(self.attn_dropout, "attn_dropout")
        check_probability(self.clf_dropout, "clf_dropout")
        if self.embed_dim % self.attention_heads:
            raise ValueError("embed_dim must be divisible by attention_heads")

    def to_dict(self):
        return asdict(self)


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d = cfg.embed_dim
    shapes = {"embed": (cfg.vocab_buckets, d), "role": (2, d)}
    for layer in ("attn1", "attn2"):
        shapes.update({
            f"{layer}.wq": (d, d), f"{layer}.bq": (d,),
            # no key bias: it shifts every score in a row equally and cancels in softmax
            f"{layer}.wk": (d, d),
            f"{layer}.wv": (d, d), f"{layer}.bv": (d,),
            f"{layer}.wo": (d, d), f"{layer}.bo": (d,),
        })
    for ln in ("ln1", "ln2"):
        shapes[f"{ln}.gamma"] = (d,)
        shapes[f"{ln}.beta"] = (d,)
    shapes["clf.w"] = (d, N_LEVELS)
    shapes["clf.b"] = (N_LEVELS,)
    return shapes


def init_params(cfg: EncoderConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    d = cfg.embed_dim
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".gamma"):
            params[name] = np.ones(shape)
        elif name.endswith((".beta", ".bq", ".bv", ".bo", ".b")):
            params[name] = np.zeros(shape)
        elif name in ("embed", "role"):
            params[name] = rng.normal(0.0, 0.5, size=shape)
        else:
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(d), size=shape)
    return params


def check_params(params, cfg: EncoderConfig) -> None:
    expected = param_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ShapeError(f"parameter names mismatch: missing={missing} extra={extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: shape {params[name].shape} != expected {shape}")


# --------------------------------------------------------------------------
# inputs
# --------------------------------------------------------------------------


class Prepared(NamedTuple):
    """Token-level view of an :class:`ExpandedQuery` for one vocabulary size."""

    m: int
    T: int
    mask: np.ndarray  # (P,) bool, True for real slots
    roles: np.ndarray  # (P,) 0 original, 1 expansion
    flat_ids: np.ndarray  # bucket ids of all real-slot tokens
    seg: np.ndarray  # slot index of each flat id
    w: np.ndarray  # 1 / token count of the owning slot


def slot_text(query: str, slot: ExpansionSlot) -> str:
    return f"{normalize(query)} {SEP} {slot.entity.norm} {SEP} {slot.entity.etype}"


def slot_token_ids(query: str, slot: ExpansionSlot, buckets: int) -> np.ndarray:
    if slot.is_pad:
        return np.zeros(0, dtype=np.int64)
    return bucket_ids(slot_text(query, slot).split(), buckets)


def prepare(xq: ExpandedQuery, buckets: int) -> Prepared:
    slots = xq.slots
    ids, seg, w = [], [], []
    for p, slot in enumerate(slots):
        tok = slot_token_ids(xq.query, slot, buckets)
        if len(tok):
            ids.append(tok)
            seg.append(np.full(len(tok), p))
            w.append(np.full(len(tok), 1.0 / len(tok)))
    cat = (lambda xs, dt: np.concatenate(xs).astype(dt)) if ids else (lambda xs, dt: np.zeros(0, dt))
    return Prepared(
        m=xq.m,
        T=xq.k + 1,
        mask=np.array([not s.is_pad for s in slots]),
        roles=np.array([0 if s.origin is Origin.ORIGINAL else 1 for s in slots]),
        flat_ids=cat(ids, np.int64),
        seg=cat(seg, np.int64),
        w=cat(w, np.float64),
    )


def encode_slot(query: str, slot: ExpansionSlot, params, cfg: EncoderConfig) -> np.ndarray:
    """Mean hashed-token embedding of one slot; PAD gives zeros."""
    if slot.is_pad:
        return np.zeros(cfg.embed_dim)
    return params["embed"][slot_token_ids(query, slot, cfg.vocab_buckets)].mean(axis=0)


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def _split_heads(x, h):
    B, T, D = x.shape
    return x.reshape(B, T, h, D // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, h, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, h * dh)


def mha_forward(params, prefix, X, kmask, heads):
    """Masked multi-head self-attention over ``X`` of shape (B, T, D)."""
    D = X.shape[-1]
    dh = D // heads
    Q = X @ params[f"{prefix}.wq"] + params[f"{prefix}.bq"]
    K = X @ params[f"{prefix}.wk"]
    V = X @ params[f"{prefix}.wv"] + params[f"{prefix}.bv"]
    Qh, Kh, Vh = (_split_heads(t, heads) for t in (Q, K, V))
    S = Qh @ Kh.transpose(0, 1, 3, 2) / np.sqrt(dh)
    valid = kmask[:, None, None, :]
    S = np.where(valid, S, -np.inf)
    S = S - S.max(axis=-1, keepdims=True)
    E = np.where(valid, np.exp(S), 0.0)
    A = E / E.sum(axis=-1, keepdims=True)
    O = _merge_heads(A @ Vh)
    out = O @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]
    return out, (X, Qh, Kh, Vh, A, O)


def mha_backward(params, prefix, dout, cache, heads, grads):
    X, Qh, Kh, Vh, A, O = cache
    D = X.shape[-1]
    dh = D // heads
    flat = lambda t: t.reshape(-1, t.shape[-1])  # noqa: E731
    grads[f"{prefix}.wo"] += flat(O).T @ flat(dout)
    grads[f"{prefix}.bo"] += dout.sum(axis=(0, 1))
    dOh = _split_heads(dout @ params[f"{prefix}.wo"].T, heads)
    dA = dOh @ Vh.transpose(0, 1, 3, 2)
    dVh = A.transpose(0, 1, 3, 2) @ dOh
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True))
    dQh = dS @ Kh / np.sqrt(dh)
    dKh = dS.transpose(0, 1, 3, 2) @ Qh / np.sqrt(dh)
    dQ, dK, dV = _merge_heads(dQh), _merge_heads(dKh), _merge_heads(dVh)
    Xf = flat(X)
    grads[f"{prefix}.wq"] += Xf.T @ flat(dQ)
    grads[f"{prefix}.bq"] += dQ.sum(axis=(0, 1))
    grads[f"{prefix}.wk"] += Xf.T @ flat(dK)
    grads[f"{prefix}.wv"] += Xf.T @ flat(dV)
    grads[f"{prefix}.bv"] += dV.sum(axis=(0, 1))
    return (dQ @ params[f"{prefix}.wq"].T + dK @ params[f"{prefix}.wk"].T
            + dV @ params[f"{prefix}.wv"].T)


def ln_forward(params, prefix, x):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * params[f"{prefix}.gamma"] + params[f"{prefix}.beta"], (xhat, inv)


def ln_backward(params, prefix, dy, cache, grads):
    xhat, inv = cache
    grads[f"{prefix}.gamma"] += (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    grads[f"{prefix}.beta"] += dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * params[f"{prefix}.gamma"]
    n = xhat.shape[-1]
    return inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))


def _dropout_mask(rng, p, shape):
    if rng is None or p == 0.0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


# --------------------------------------------------------------------------
# forward / loss / backward
# --------------------------------------------------------------------------


def _as_prepared(xq, cfg):
    if isinstance(xq, Prepared):
        return xq
    if isinstance(xq, ExpandedQuery):
        return prepare(xq, cfg.vocab_buckets)
    raise ShapeError(f"expected ExpandedQuery or Prepared, got {type(xq).__name__}")


def forward(xq, params, cfg: EncoderConfig, train_mode: bool = False, rng=None,
            return_cache: bool = False):
    """Logits of shape ``(m * (k + 1), 3)``.

    Dropout is active only when ``train_mode`` is true; ``rng`` then drives
    the masks (defaults to a generator seeded from ``cfg.seed``).
    """
    prep = _as_prepared(xq, cfg)
    if prep.flat_ids.size and prep.flat_ids.max() >= params["embed"].shape[0]:
        raise ShapeError("token bucket outside the embedding table; vocab_buckets mismatch")
    D, heads = cfg.embed_dim, cfg.attention_heads
    if params["embed"].shape[1] != D:
        raise ShapeError(f"embedding width {params['embed'].shape[1]} != embed_dim {D}")
    m, T = prep.m, prep.T
    P = m * T
    if prep.mask.shape != (P,):
        raise ShapeError(f"mask has {prep.mask.size} slots, expected {P}")
    if train_mode and rng is None:
        rng = np.random.default_rng(cfg.seed)
    if not train_mode:
        rng = None
    maskf = prep.mask[:, None].astype(np.float64)

    X0 = np.zeros((P, D))
    if prep.flat_ids.size:
        np.add.at(X0, prep.seg, params["embed"][prep.flat_ids] * prep.w[:, None])
    X = X0 + params["role"][prep.roles] * maskf

    a1, c_a1 = mha_forward(params, "attn1", X.reshape(m, T, D), prep.mask.reshape(m, T), heads)
    a1 = a1.reshape(P, D)
    d1 = _dropout_mask(rng, cfg.attn_dropout, a1.shape)
    r1 = X + (a1 if d1 is None else a1 * d1)
    n1, c_ln1 = ln_forward(params, "ln1", r1)
    H1 = n1 * maskf

    a2, c_a2 = mha_forward(params, "attn2", H1[None], prep.mask[None], heads)
    a2 = a2[0]
    d2 = _dropout_mask(rng, cfg.attn_dropout, a2.shape)
    r2 = H1 + (a2 if d2 is None else a2 * d2)
    n2, c_ln2 = ln_forward(params, "ln2", r2)
    H2 = n2 * maskf

    dc = _dropout_mask(rng, cfg.clf_dropout, H2.shape)
    Hc = H2 if dc is None else H2 * dc
    logits = Hc @ params["clf.w"] + params["clf.b"]
    if not return_cache:
        return logits
    cache = dict(prep=prep, maskf=maskf, c_a1=c_a1, d1=d1, c_ln1=c_ln1, c_a2=c_a2, d2=d2,
                 c_ln2=c_ln2, dc=dc, Hc=Hc)
    return logits, cache


def loss(logits: np.ndarray, labels) -> float:
    """Mean cross-entropy over slots whose label is not ``IGNORE``."""
    return loss_and_grad(logits, labels)[0]


def loss_and_grad(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[1] != N_LEVELS or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not align")
    keep = labels != IGNORE
    n = int(keep.sum())
    if n == 0:
        raise ValueError("every slot is ignored; loss is undefined")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.flatnonzero(keep)
    value = -logp[rows, labels[rows]].sum() / n
    grad = np.zeros_like(logits)
    grad[rows] = np.exp(logp[rows])
    grad[rows, labels[rows]] -= 1.0
    return float(value), grad / n


def zero_grads(params):
    return {name: np.zeros_like(arr) for name, arr in params.items()}


def backward(dlogits, cache, params, cfg: EncoderConfig, grads=None, return_input_grad=False):
    """Accumulate exact parameter gradients given ``d loss / d logits``."""
    if grads is None:
        grads = zero_grads(params)
    prep, maskf = cache["prep"], cache["maskf"]
    m, T, D, heads = prep.m, prep.T, cfg.embed_dim, cfg.attention_heads
    P = m * T

    grads["clf.w"] += cache["Hc"].T @ dlogits
    grads["clf.b"] += dlogits.sum(axis=0)
    dH2 = dlogits @ params["clf.w"].T
    if cache["dc"] is not None:
        dH2 = dH2 * cache["dc"]

    dr2 = ln_backward(params, "ln2", dH2 * maskf, cache["c_ln2"], grads)
    da2 = dr2 if cache["d2"] is None else dr2 * cache["d2"]
    dH1 = dr2 + mha_backward(params, "attn2", da2[None], cache["c_a2"], heads, grads)[0]

    dr1 = ln_backward(params, "ln1", dH1 * maskf, cache["c_ln1"], grads)
    da1 = dr1 if cache["d1"] is None else dr1 * cache["d1"]
    dX = dr1 + mha_backward(params, "attn1", da1.reshape(m, T, D), cache["c_a1"], heads,
                            grads).reshape(P, D)

    np.add.at(grads["role"], prep.roles, dX * maskf)
    if prep.flat_ids.size:
        np.add.at(grads["embed"], prep.flat_ids, dX[prep.seg] * prep.w[:, None])
    if return_input_grad:
        return grads, dX
    return grads


def predict_levels(logits: np.ndarray) -> np.ndarray:
    """Argmax per row; ``np.argmax`` keeps the first maximum, i.e. the lower level."""
    return np.argmax(logits, axis=1)
