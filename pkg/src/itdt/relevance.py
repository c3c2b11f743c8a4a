"""Per-token relevance from attention weights and their gradients.

Two accumulated maps are produced for an example of n tokens. Both start at
the identity (every token relevant to itself) and, layer by layer, add the
head-averaged, negativity-clamped contribution:

    attention map  += mean_heads( clamp(attention * d(logit)/d(attention), 0) )
    gradient map   += mean_heads( clamp(d(logit)/d(attention), 0) )

The gradient is taken of the pre-softmax logit of the predicted class, which
is argmax-equivalent to the probability but better conditioned. Per-token
scores are the CLS row of each accumulated matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import Classifier, backward, forward
from .vocab import TokenSequence


@dataclass
class RelevanceMaps:
    a_map_matrix: np.ndarray  # (n, n)
    i_grad_matrix: np.ndarray  # (n, n)
    y_pred: int

    @property
    def a_map(self) -> np.ndarray:
        """Per-token attention-relevance scores (CLS row)."""
        return self.a_map_matrix[0]

    @property
    def i_grad(self) -> np.ndarray:
        """Per-token gradient-relevance scores (CLS row)."""
        return self.i_grad_matrix[0]


def attention_gradients(
    model: Classifier,
    seq: TokenSequence,
    attn_override: dict[int, np.ndarray] | None = None,
) -> tuple[np.ndarray, "np.ndarray", int]:
    """Gradient of the predicted-class logit w.r.t. every attention matrix.

    Returns (attention, gradients, y_pred), both arrays shaped
    (L, H, n, n). The gradient is analytic backpropagation through the
    post-attention computation; paths through downstream layers are included.
    """
    model.check_finite()
    pred, cache = forward(model, seq, attn_override=attn_override, return_cache=True)
    dlogits = np.zeros(model.config.classes)
    dlogits[pred.label] = 1.0
    _, attn_grads = backward(model, cache, dlogits)
    return pred.attention, attn_grads, pred.label


def accumulate(attention: np.ndarray, gradients: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fold per-layer attention/gradient stacks into the two relevance matrices.

    Pure accumulation rule, exposed separately so hand-set inputs can be
    checked without a model in the loop.
    """
    layers, _, n, _ = attention.shape
    a_map = np.eye(n)
    i_grad = np.eye(n)
    for l in range(layers):
        prod = np.clip(attention[l] * gradients[l], 0.0, None)
        a_map += prod.mean(axis=0)
        i_grad += np.clip(gradients[l], 0.0, None).mean(axis=0)
    return a_map, i_grad


def relevance_maps(
    model: Classifier,
    seq: TokenSequence,
    up_to_layer: int | None = None,
    attn_override: dict[int, np.ndarray] | None = None,
) -> RelevanceMaps:
    """Accumulated relevance maps for one example.

    up_to_layer truncates the accumulation to the first k layers (gradients
    are still taken through the full model), which is how the layer-monotonicity
    property is exercised.
    """
    attention, gradients, y_pred = attention_gradients(model, seq, attn_override=attn_override)
    if up_to_layer is not None:
        attention = attention[:up_to_layer]
        gradients = gradients[:up_to_layer]
    a_map, i_grad = accumulate(attention, gradients)
    return RelevanceMaps(a_map_matrix=a_map, i_grad_matrix=i_grad, y_pred=y_pred)


def dump_relevance(fh, example_id: str, tokens: list[str], maps: RelevanceMaps) -> None:
    """Append one JSON line {example_id, tokens, a_map, i_grad} to a stream."""
    fh.write(json.dumps({
        "example_id": example_id,
        "tokens": tokens,
        "a_map": [float(x) for x in maps.a_map],
        "i_grad": [float(x) for x in maps.i_grad],
    }) + "\n")
