"""Weighted-adjacency graph encoders, readout, and the label classifier.

Two encoders operate on the symmetrically-normalized released weights: a GCN
stack (relu between layers, linear final layer) and a TAG-style polynomial
filter summing powers of the propagation matrix. Readout is mean pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore
from .privacy import PerturbedView

ENCODER_KINDS = ("gcn", "tag")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "gcn"
    layers: int = 2
    hidden: int = 64
    tag_hops: int = 3

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"encoder kind must be one of {ENCODER_KINDS}, got {self.kind!r}")
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if self.kind == "tag" and self.tag_hops < 1:
            raise ValueError(f"tag_hops must be >= 1, got {self.tag_hops}")


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(cfg: EncoderConfig, feature_dim: int, task_count: int, rng) -> ParamStore:
    """Glorot-uniform weights (zero biases) for encoder plus classifier.

    Layer dimensions chain feature_dim -> hidden -> ... -> hidden -> task_count.
    """
    store = ParamStore()
    dims = [feature_dim] + [cfg.hidden] * cfg.layers
    for layer in range(cfg.layers):
        d_in, d_out = dims[layer], dims[layer + 1]
        if cfg.kind == "gcn":
            store.add(f"enc.l{layer}.W", Tensor(_glorot(rng, d_in, d_out)))
        else:
            for hop in range(cfg.tag_hops + 1):
                store.add(f"enc.l{layer}.hop{hop}.W", Tensor(_glorot(rng, d_in, d_out)))
        store.add(f"enc.l{layer}.b", Tensor(np.zeros((1, d_out))))
    store.add("clf.W", Tensor(_glorot(rng, cfg.hidden, task_count)))
    store.add("clf.b", Tensor(np.zeros((1, task_count))))
    return store


def normalize(view: PerturbedView | np.ndarray) -> np.ndarray:
    """Symmetric normalization of released weights with added self-loops.

    Negative weights are clamped to 0 first (post-processing of the private
    release), then W' = D^{-1/2} (clamp(W) + I) D^{-1/2} with D the row sums.
    """
    w = view.weights if isinstance(view, PerturbedView) else np.asarray(view, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weights must be square, got {w.shape}")
    clamped = np.maximum(w, 0.0) + np.eye(w.shape[0])
    d = clamped.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)  # d >= 1 thanks to the self-loops
    return clamped * inv_sqrt[:, None] * inv_sqrt[None, :]


def encode(cfg: EncoderConfig, params: ParamStore, norm_weights: np.ndarray, features) -> Tensor:
    """Node embeddings (p, hidden) from normalized weights and node features."""
    s = Tensor(norm_weights)
    h = features if isinstance(features, Tensor) else Tensor(features)
    if h.shape[0] != s.shape[0]:
        raise ValueError(f"features rows {h.shape[0]} != weight size {s.shape[0]}")
    if cfg.kind == "tag":
        powers = _propagation_powers(norm_weights, cfg.tag_hops)
    for layer in range(cfg.layers):
        if cfg.kind == "gcn":
            h = ad.matmul(ad.matmul(s, h), params[f"enc.l{layer}.W"])
        else:
            acc = None
            for hop, s_pow in enumerate(powers):
                term = ad.matmul(ad.matmul(s_pow, h), params[f"enc.l{layer}.hop{hop}.W"])
                acc = term if acc is None else ad.add(acc, term)
            h = acc
        h = ad.add(h, params[f"enc.l{layer}.b"])
        if layer < cfg.layers - 1:
            h = ad.relu(h)
    return h


def _propagation_powers(norm_weights: np.ndarray, hops: int) -> list[Tensor]:
    powers = [np.eye(norm_weights.shape[0])]
    for _ in range(hops):
        powers.append(powers[-1] @ norm_weights)
    return [Tensor(p) for p in powers]


def readout(node_embeddings: Tensor) -> Tensor:
    """Permutation-invariant graph embedding: column-wise mean over nodes."""
    return ad.mean_rows(node_embeddings)


def predict(params: ParamStore, graph_embedding: Tensor) -> Tensor:
    """Task logits (1, T); probabilities come from a downstream sigmoid."""
    return ad.add(ad.matmul(graph_embedding, params["clf.W"]), params["clf.b"])
