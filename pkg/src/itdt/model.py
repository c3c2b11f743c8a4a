"""Desk-scale self-attention text classifier in NumPy.

The model is a standard post-LN transformer encoder: per layer, multi-head
self-attention with residual + LayerNorm, then a GELU feed-forward block with
residual + LayerNorm. Classification reads the CLS slot (position 0) through a
linear head and softmax. Everything runs in float64 on single sequences, which
keeps the analytic backward pass exactly checkable against central finite
differences.

Attention probabilities are first-class citizens here: `forward` caches them
per layer/head, `backward` returns the gradient of a scalar output with
respect to them (the quantity the relevance stage consumes), and
`attn_override` lets callers re-run the forward from externally fixed
attention matrices, which is how the finite-difference oracles perturb them.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateLabels, InvalidModel, InvalidPosition, SequenceTooLong
from .vocab import MASK_TOKEN, TokenSequence, Vocabulary, tokenize

CHECKPOINT_FORMAT_VERSION = 1

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass
class ModelConfig:
    layers: int = 2
    heads: int = 2
    dim: int = 32
    ff_dim: int = 64
    max_len: int = 64
    classes: int = 2
    learning_rate: float = 3e-3
    epochs: int = 10
    mask_prob: float = 0.1
    batch_size: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.layers < 1 or self.heads < 1:
            raise ValueError("layers and heads must be >= 1")
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")


@dataclass
class Prediction:
    """Class probabilities plus the attention weights cached by the forward."""

    pcs: np.ndarray  # (C,)
    label: int
    attention: np.ndarray  # (L, H, n, n), softmax rows

    def copy(self) -> "Prediction":
        return Prediction(self.pcs.copy(), self.label, self.attention.copy())


class Classifier:
    """Parameter container; all tensors are float64 ndarrays keyed by name."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, params: dict[str, np.ndarray]):
        self.config = config
        self.vocab = vocab
        self.params = params
        self.epoch_losses: list[float] = []
        self.corpus_hash: str = ""
        self._pos = sinusoidal_positions(config.max_len, config.dim)

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()

    def check_finite(self) -> None:
        for name, arr in self.params.items():
            if not np.all(np.isfinite(arr)):
                raise InvalidModel(f"parameter {name} contains non-finite values")


def sinusoidal_positions(max_len: int, dim: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (i // 2) / dim)
    enc = np.zeros((max_len, dim))
    enc[:, 0::2] = np.sin(angle[:, 0::2])
    enc[:, 1::2] = np.cos(angle[:, 1::2])
    return enc


def init_classifier(config: ModelConfig, vocab: Vocabulary) -> Classifier:
    """Deterministic initialization from config.seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    d, dff, c = config.dim, config.ff_dim, config.classes

    def w(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    params: dict[str, np.ndarray] = {
        "emb": w(len(vocab), d),
        "wout": w(d, c),
        "bout": np.zeros(c),
    }
    for l in range(config.layers):
        p = f"l{l}_"
        params[p + "wq"] = w(d, d)
        params[p + "wk"] = w(d, d)
        params[p + "wv"] = w(d, d)
        params[p + "wo"] = w(d, d)
        params[p + "bo"] = np.zeros(d)
        params[p + "ln1_g"] = np.ones(d)
        params[p + "ln1_b"] = np.zeros(d)
        params[p + "w1"] = w(d, dff)
        params[p + "b1"] = np.zeros(dff)
        params[p + "w2"] = w(dff, d)
        params[p + "b2"] = np.zeros(d)
        params[p + "ln2_g"] = np.ones(d)
        params[p + "ln2_b"] = np.zeros(d)
    return Classifier(config, vocab, params)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)


_LN_EPS = 1e-5


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)

def layer_norm_backward(dy: np.ndarray, g: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def forward(
    model: Classifier,
    seq: TokenSequence,
    attn_override: dict[int, np.ndarray] | None = None,
    return_cache: bool = False,
):
    """Run the classifier on one sequence and cache per-layer attention.

    attn_override maps a layer index to an (H, n, n) array that replaces that
    layer's softmax attention before the value aggregation; downstream layers
    recompute their own attention from the perturbed activations.
    """
    cfg = model.config
    n = len(seq)
    if n > cfg.max_len:
        raise SequenceTooLong(f"sequence length {n} exceeds max length {cfg.max_len}")
    p = model.params
    d, h = cfg.dim, cfg.heads
    dk = d // h
    scale = 1.0 / math.sqrt(dk)

    x = p["emb"][np.asarray(seq.ids)] + model._pos[:n]
    attn_all = np.empty((cfg.layers, h, n, n))
    layer_caches = []
    for l in range(cfg.layers):
        pre = f"l{l}_"
        q = (x @ p[pre + "wq"]).reshape(n, h, dk).transpose(1, 0, 2)
        k = (x @ p[pre + "wk"]).reshape(n, h, dk).transpose(1, 0, 2)
        v = (x @ p[pre + "wv"]).reshape(n, h, dk).transpose(1, 0, 2)
        scores = q @ k.transpose(0, 2, 1) * scale
        attn = softmax(scores, axis=-1)
        if attn_override is not None and l in attn_override:
            attn = np.asarray(attn_override[l], dtype=np.float64)
        attn_all[l] = attn
        heads_out = attn @ v  # (h, n, dk)
        concat = heads_out.transpose(1, 0, 2).reshape(n, d)
        attn_out = concat @ p[pre + "wo"] + p[pre + "bo"]
        res1 = x + attn_out
        z, ln1_cache = layer_norm(res1, p[pre + "ln1_g"], p[pre + "ln1_b"])
        ff_pre = z @ p[pre + "w1"] + p[pre + "b1"]
        ff_act = gelu(ff_pre)
        ff_out = ff_act @ p[pre + "w2"] + p[pre + "b2"]
        res2 = z + ff_out
        out, ln2_cache = layer_norm(res2, p[pre + "ln2_g"], p[pre + "ln2_b"])
        layer_caches.append(
            {"x": x, "q": q, "k": k, "v": v, "attn": attn, "concat": concat,
             "ln1": ln1_cache, "z": z, "ff_pre": ff_pre, "ff_act": ff_act, "ln2": ln2_cache}
        )
        x = out
    logits = x[0] @ p["wout"] + p["bout"]
    pcs = softmax(logits)
    pred = Prediction(pcs=pcs, label=int(np.argmax(pcs)), attention=attn_all)
    if return_cache:
        cache = {"layers": layer_caches, "x_final": x, "ids": list(seq.ids), "logits": logits}
        return pred, cache
    return pred


def backward(model: Classifier, cache: dict, dlogits: np.ndarray):
    """Backpropagate d(scalar)/d(logits) through the cached forward.

    Returns (param_grads, attn_grads) where attn_grads has shape
    (L, H, n, n): the gradient of the scalar with respect to each layer's
    softmax attention probabilities, including all paths through downstream
    layers.
    """
    cfg = model.config
    p = model.params
    d, h = cfg.dim, cfg.heads
    dk = d // h
    scale = 1.0 / math.sqrt(dk)
    n = len(cache["ids"])

    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    attn_grads = np.empty((cfg.layers, h, n, n))

    x_final = cache["x_final"]
    grads["wout"] += np.outer(x_final[0], dlogits)
    grads["bout"] += dlogits
    dx = np.zeros((n, d))
    dx[0] = p["wout"] @ dlogits

    for l in reversed(range(cfg.layers)):
        pre = f"l{l}_"
        c = cache["layers"][l]
        dres2, dg2, db2 = layer_norm_backward(dx, p[pre + "ln2_g"], c["ln2"])
        grads[pre + "ln2_g"] += dg2
        grads[pre + "ln2_b"] += db2
        # feed-forward block
        dff_out = dres2
        grads[pre + "w2"] += c["ff_act"].T @ dff_out
        grads[pre + "b2"] += dff_out.sum(axis=0)
        dff_act = dff_out @ p[pre + "w2"].T
        dff_pre = dff_act * gelu_grad(c["ff_pre"])
        grads[pre + "w1"] += c["z"].T @ dff_pre
        grads[pre + "b1"] += dff_pre.sum(axis=0)
        dz = dres2 + dff_pre @ p[pre + "w1"].T
        dres1, dg1, db1 = layer_norm_backward(dz, p[pre + "ln1_g"], c["ln1"])
        grads[pre + "ln1_g"] += dg1
        grads[pre + "ln1_b"] += db1
        # attention output projection
        dattn_out = dres1
        grads[pre + "wo"] += c["concat"].T @ dattn_out
        grads[pre + "bo"] += dattn_out.sum(axis=0)
        dconcat = dattn_out @ p[pre + "wo"].T
        dheads = dconcat.reshape(n, h, dk).transpose(1, 0, 2)
        dattn = dheads @ c["v"].transpose(0, 2, 1)  # (h, n, n)
        attn_grads[l] = dattn
        dv = c["attn"].transpose(0, 2, 1) @ dheads
        # softmax backward
        a = c["attn"]
        dscores = a * (dattn - (dattn * a).sum(axis=-1, keepdims=True))
        dq = dscores @ c["k"] * scale
        dkk = dscores.transpose(0, 2, 1) @ c["q"] * scale
        dq_flat = dq.transpose(1, 0, 2).reshape(n, d)
        dk_flat = dkk.transpose(1, 0, 2).reshape(n, d)
        dv_flat = dv.transpose(1, 0, 2).reshape(n, d)
        x_in = c["x"]
        grads[pre + "wq"] += x_in.T @ dq_flat
        grads[pre + "wk"] += x_in.T @ dk_flat
        grads[pre + "wv"] += x_in.T @ dv_flat
        dx = dres1 + dq_flat @ p[pre + "wq"].T + dk_flat @ p[pre + "wk"].T + dv_flat @ p[pre + "wv"].T

    for pos, tok_id in enumerate(cache["ids"]):
        grads["emb"][tok_id] += dx[pos]
    return grads, attn_grads


def cross_entropy_grads(model: Classifier, seq: TokenSequence, label: int):
    """Loss value and parameter gradients for one labeled sequence."""
    pred, cache = forward(model, seq, return_cache=True)
    loss = -math.log(max(pred.pcs[label], 1e-300))
    dlogits = pred.pcs.copy()
    dlogits[label] -= 1.0
    grads, _ = backward(model, cache, dlogits)
    return loss, grads


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1**self.t)
            vhat = self.v[k] / (1 - b2**self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + eps)


def train_classifier(dataset: list[tuple[str, str, int]], config: ModelConfig) -> Classifier:
    """Train on (id, text, label) records; builds the vocabulary from the corpus.

    With mask probability p each non-CLS training token is independently
    replaced by MASK, so mask queries at identification time stay
    in-distribution.
    """
    labels = {label for _, _, label in dataset}
    if len(labels) < 2:
        raise DegenerateLabels(f"training set has classes {sorted(labels)}; need >= 2")
    if any(not (0 <= lab < config.classes) for lab in labels):
        raise ValueError("labels must lie in [0, classes)")

    texts = [text for _, text, _ in dataset]
    vocab = Vocabulary.build(texts)
    model = init_classifier(config, vocab)
    model.corpus_hash = hashlib.sha256("\n".join(texts).encode()).hexdigest()

    sequences = []
    for ex_id, text, label in dataset:
        seq = tokenize(text, vocab, example_id=ex_id)
        if len(seq) > config.max_len:
            seq = TokenSequence(seq.example_id, seq.raw_text,
                                seq.tokens[: config.max_len], seq.ids[: config.max_len])
        sequences.append((seq, label))

    rng = np.random.default_rng(config.seed + 1)
    opt = _Adam(model.params, config.learning_rate)
    for _ in range(config.epochs):
        order = rng.permutation(len(sequences))
        epoch_loss = 0.0
        batch_grads = None
        batch_count = 0
        for step, idx in enumerate(order):
            seq, label = sequences[idx]
            if config.mask_prob > 0:
                ids = list(seq.ids)
                masked = False
                for pos in range(1, len(ids)):
                    if rng.random() < config.mask_prob:
                        ids[pos] = vocab.mask_id
                        masked = True
                if masked:
                    seq = TokenSequence(seq.example_id, seq.raw_text, seq.tokens, ids)
            loss, grads = cross_entropy_grads(model, seq, label)
            epoch_loss += loss
            if batch_grads is None:
                batch_grads = grads
            else:
                for k in batch_grads:
                    batch_grads[k] += grads[k]
            batch_count += 1
            if batch_count == config.batch_size or step == len(order) - 1:
                for k in batch_grads:
                    batch_grads[k] /= batch_count
                opt.step(model.params, batch_grads)
                batch_grads, batch_count = None, 0
        model.epoch_losses.append(epoch_loss / len(sequences))
    return model


def mask_at(seq: TokenSequence, position: int) -> TokenSequence:
    """Copy with the word at `position` replaced by MASK; CLS is not maskable."""
    if position < 1 or position >= len(seq):
        raise InvalidPosition(f"position {position} not in [1, {len(seq)})")
    tokens = list(seq.tokens)
    ids = list(seq.ids)
    tokens[position] = MASK_TOKEN
    # the MASK id is fixed across vocabularies (reserved slot 3)
    ids[position] = 3
    return TokenSequence(seq.example_id, seq.raw_text, tokens, ids)


def surrogate(model: Classifier) -> Classifier:
    """Deep copy acting as a shadow of the protected model."""
    clone = Classifier(
        config=copy.deepcopy(model.config),
        vocab=copy.deepcopy(model.vocab),
        params={k: v.copy() for k, v in model.params.items()},
    )
    clone.epoch_losses = list(model.epoch_losses)
    clone.corpus_hash = model.corpus_hash
    return clone


def save_checkpoint(model: Classifier, path: str) -> None:
    """Single-file checkpoint: JSON metadata plus row-major parameter arrays."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "vocab": model.vocab.to_dict(),
        "epoch_losses": model.epoch_losses,
        "corpus_hash": model.corpus_hash,
        "param_names": sorted(model.params),
    }
    arrays = {f"param_{k}": np.ascontiguousarray(model.params[k]) for k in model.params}
    np.savez(path, meta_json=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str) -> Classifier:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta_json"][()]))
        if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta['format_version']}")
        params = {name: data[f"param_{name}"] for name in meta["param_names"]}
    model = Classifier(ModelConfig(**meta["config"]), Vocabulary.from_dict(meta["vocab"]), params)
    model.epoch_losses = list(meta["epoch_losses"])
    model.corpus_hash = meta["corpus_hash"]
    return model
