"""Adaptive adjacency over the prior graph, density refinement, message passing.

Edge weights combine latent distance, a learned transform of the
multi-length data-space distances, and periodic temporal distance. A
per-node density factor then rescales each row. All functions take the
graph as flat edge arrays (dst, src) so augmented node sets (e.g.
injected training copies) pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .gradcore import Tensor

__all__ = [
    "DagnnConfig",
    "init_dagnn_params",
    "edge_mlp_term",
    "adaptive_adjacency",
    "density_refine",
    "message_pass",
    "decode",
]

_MLP_HIDDEN = 8


@dataclass(frozen=True)
class DagnnConfig:
    """Scale factors for the exponent terms plus the layer count.

    delta1 defaults to the hidden dimension, delta3 to the period length;
    callers fill those in because the defaults depend on other configs.
    """

    delta1: float
    delta2: float = 1.0
    delta3: float | None = None
    delta4: float = 1.0
    layers: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.delta1 <= 0 or self.delta2 <= 0 or self.delta4 <= 0:
            raise ValueError("scale factors must be positive")
        if self.delta3 is not None and self.delta3 <= 0:
            raise ValueError("temporal scale factor must be positive")
        if self.layers < 1:
            raise ValueError("need at least one message passing layer")


def init_dagnn_params(d: int, d_e: int, window_length: int,
                      rng: np.random.Generator, layers: int = 1) -> dict:
    """Edge and density MLPs, per-layer GNN weights, and the decoder."""
    params: dict[str, Tensor] = {}

    def mlp(prefix, in_dim):
        params[f"{prefix}_w1"] = gc.param(
            gc.uniform_init(rng, (in_dim, _MLP_HIDDEN), in_dim), f"{prefix}_w1")
        params[f"{prefix}_b1"] = gc.param(np.zeros(_MLP_HIDDEN), f"{prefix}_b1")
        params[f"{prefix}_w2"] = gc.param(
            gc.uniform_init(rng, (_MLP_HIDDEN, 1), _MLP_HIDDEN), f"{prefix}_w2")
        params[f"{prefix}_b2"] = gc.param(np.zeros(1), f"{prefix}_b2")

    mlp("edge", d_e)
    mlp("density", 4)
    for layer in range(layers):
        params[f"gnn{layer}_w1"] = gc.param(
            gc.uniform_init(rng, (d, d), d), f"gnn{layer}_w1")
        params[f"gnn{layer}_w2"] = gc.param(
            gc.uniform_init(rng, (d, d), d), f"gnn{layer}_w2")
        params[f"gnn{layer}_b"] = gc.param(np.zeros(d), f"gnn{layer}_b")
    params["dec_w1"] = gc.param(gc.uniform_init(rng, (d, 2 * d), d), "dec_w1")
    params["dec_b1"] = gc.param(np.zeros(2 * d), "dec_b1")
    params["dec_w2"] = gc.param(
        gc.uniform_init(rng, (2 * d, window_length), 2 * d), "dec_w2")
    params["dec_b2"] = gc.param(np.zeros(window_length), "dec_b2")
    return params


def _two_layer(x: Tensor, params: dict, prefix: str) -> Tensor:
    hidden = gc.relu(x @ params[f"{prefix}_w1"] + params[f"{prefix}_b1"])
    return hidden @ params[f"{prefix}_w2"] + params[f"{prefix}_b2"]


def edge_mlp_term(attrs: np.ndarray, params: dict) -> Tensor:
    """Softplus-wrapped edge MLP: a non-negative scalar per edge."""
    raw = _two_layer(gc.constant(attrs), params, "edge")
    return gc.reshape(gc.softplus(raw), (attrs.shape[0],))


def adaptive_adjacency(h: Tensor, dst: np.ndarray, src: np.ndarray,
                       attrs: np.ndarray, positions: np.ndarray,
                       period: int | None, params: dict,
                       config: DagnnConfig) -> Tensor:
    """Per-edge weights in (0, 1] on the prior support.

    exp(-|H_i - H_j|^2/d1 - softplus(MLP(E_ij))/d2 - (|pos_i - pos_j| mod T)/d3);
    the temporal term is omitted for aperiodic series.
    """
    h_dst = gc.take_rows(h, dst)
    h_src = gc.take_rows(h, src)
    diff = h_dst - h_src
    exponent = gc.tsum(diff * diff, axis=1) * (-1.0 / config.delta1)
    exponent = exponent - edge_mlp_term(attrs, params) * (1.0 / config.delta2)
    if period is not None:
        delta3 = config.delta3 if config.delta3 is not None else float(period)
        temporal = np.abs(positions[dst] - positions[src]) % period
        exponent = exponent - gc.constant(temporal / delta3)
    return gc.exp(exponent)


def _incoming_index_matrix(dst: np.ndarray, num_nodes: int,
                           num_edges: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad per-node incoming edge ids into a rectangle.

    Returns (idx_for_stats, idx_for_min, degree): pad slots point at two
    sentinel entries appended after the real edges (0.0 for sums and max,
    2.0 for min, both outside the (0, 1] weight range).
    """
    degree = np.bincount(dst, minlength=num_nodes)
    max_deg = int(degree.max())
    idx_stats = np.full((num_nodes, max_deg), num_edges, dtype=np.int64)
    order = np.argsort(dst, kind="stable")
    flat_cols = np.concatenate([np.arange(c) for c in degree]) if num_edges else np.empty(0, int)
    idx_stats[dst[order], flat_cols] = order
    idx_min = idx_stats.copy()
    idx_min[idx_min == num_edges] = num_edges + 1
    return idx_stats, idx_min, degree


def density_refine(a: Tensor, dst: np.ndarray, num_nodes: int,
                   params: dict, config: DagnnConfig) -> Tensor:
    """Rescale each node's incoming weights by its density factor.

    The factor is exp(-softplus(MLP(s_i))/d4) where s_i is the fixed-width
    summary [mean, max, min, std] of node i's nonzero row entries, so
    0 < refined <= original everywhere on the support.
    """
    num_edges = a.shape[0]
    idx_stats, idx_min, degree = _incoming_index_matrix(dst, num_nodes, num_edges)
    if degree.min() == 0:
        raise RuntimeError("density_refine: node without incoming edges")
    padded = gc.concat([a, gc.constant([0.0, 2.0])], axis=0)
    rows = gc.take_rows(padded, idx_stats)
    rows_for_min = gc.take_rows(padded, idx_min)
    inv_deg = gc.constant((1.0 / degree)[:, None])
    m1 = gc.tsum(rows, axis=1, keepdims=True) * inv_deg
    m2 = gc.tsum(rows * rows, axis=1, keepdims=True) * inv_deg
    var = gc.relu(m2 - m1 * m1)
    std = gc.sqrt(var + 1e-12)  # ~1e-6 floor on constant rows, harmless as an MLP input
    mx = gc.tmax(rows, axis=1, keepdims=True)
    mn = gc.tmin(rows_for_min, axis=1, keepdims=True)
    summary = gc.concat([m1, mx, mn, std], axis=1)
    term = gc.softplus(_two_layer(summary, params, "density"))
    factor = gc.exp(term * (-1.0 / config.delta4))
    return a * gc.reshape(gc.take_rows(factor, dst), (num_edges,))


def _aggregate(h: Tensor, a: Tensor, dst: np.ndarray, src: np.ndarray,
               num_nodes: int) -> Tensor:
    weights = gc.reshape(a, (a.shape[0], 1))
    weighted = weights * gc.take_rows(h, src)
    numer = gc.segment_sum(weighted, dst, num_nodes)
    denom = gc.segment_sum(weights, dst, num_nodes)
    if np.any(denom.data <= 0.0):
        raise RuntimeError("message_pass: zero row sum on the prior support")
    return numer / denom


def message_pass(h: Tensor, a: Tensor, dst: np.ndarray, src: np.ndarray,
                 num_nodes: int, params: dict, config: DagnnConfig) -> Tensor:
    """Row-normalized neighbor aggregation plus a self term, per layer."""
    out = h
    for layer in range(config.layers):
        agg = _aggregate(out, a, dst, src, num_nodes)
        pre = (agg @ params[f"gnn{layer}_w1"]
               + out @ params[f"gnn{layer}_w2"]
               + params[f"gnn{layer}_b"])
        out = gc.relu(pre) if config.activation == "relu" else pre
    return out


def decode(h_prime: Tensor, params: dict) -> Tensor:
    """Reconstruct raw windows from node representations (used by the loss only)."""
    hidden = gc.relu(h_prime @ params["dec_w1"] + params["dec_b1"])
    return hidden @ params["dec_w2"] + params["dec_b2"]
