"""TCN feature extraction, statistics pooling, and learnable length selection.

A stack of dilated causal convolutions embeds each window; prefixes of the
embedding are pooled into [mean; var; max; min] statistics at every length
scale; a per-window softmax over a trainable embedding mixes the scales
into one representation per subsequence.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import gradcore as gc
from .gradcore import Tensor

__all__ = [
    "TcnConfig",
    "init_encoder_params",
    "init_length_embedding",
    "tcn_forward",
    "stats_pool",
    "multi_scale_stats",
    "select_length",
    "scale_weights",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]


@dataclass(frozen=True)
class TcnConfig:
    layers: int = 3
    kernel_size: int = 3
    dilations: tuple = (1, 2, 4)
    hidden_dim: int = 64
    layer_norm: bool = True

    def __post_init__(self):
        if len(self.dilations) != self.layers:
            raise ValueError(
                f"{self.layers} layers need {self.layers} dilations, "
                f"got {len(self.dilations)}")
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")

    @property
    def receptive_field(self) -> int:
        return 1 + sum((self.kernel_size - 1) * d for d in self.dilations)


def init_encoder_params(config: TcnConfig, num_scales: int,
                        rng: np.random.Generator) -> dict:
    """Seeded parameter set: conv stack, layer norms, and the node MLP."""
    d = config.hidden_dim
    k = config.kernel_size
    params: dict[str, Tensor] = {}
    c_in = 1
    for layer in range(config.layers):
        fan = k * c_in
        params[f"conv{layer}_w"] = gc.param(
            gc.uniform_init(rng, (k, c_in, d), fan), f"conv{layer}_w")
        params[f"conv{layer}_b"] = gc.param(np.zeros(d), f"conv{layer}_b")
        if config.layer_norm:
            params[f"ln{layer}_gain"] = gc.param(np.ones(d), f"ln{layer}_gain")
            params[f"ln{layer}_bias"] = gc.param(np.zeros(d), f"ln{layer}_bias")
        c_in = d
    params["mlp_w1"] = gc.param(
        gc.uniform_init(rng, (4 * d, 2 * d), 4 * d), "mlp_w1")
    params["mlp_b1"] = gc.param(np.zeros(2 * d), "mlp_b1")
    params["mlp_w2"] = gc.param(
        gc.uniform_init(rng, (2 * d, d), 2 * d), "mlp_w2")
    params["mlp_b2"] = gc.param(np.zeros(d), "mlp_b2")
    return params


def init_length_embedding(num_windows: int, num_scales: int,
                          prior_scale: int | None = None) -> Tensor:
    """All-zero embedding (uniform scale weights); optional one-hot prior."""
    data = np.zeros((num_windows, num_scales))
    if prior_scale is not None:
        if not 0 <= prior_scale < num_scales:
            raise ValueError(
                f"prior scale {prior_scale} outside [0, {num_scales})")
        data[:, prior_scale] = 1.0
    return gc.param(data, "length_embedding")


def tcn_forward(windows, params: dict, config: TcnConfig) -> Tensor:
    """Embed windows (N, L) into causal per-step features (N, L, d)."""
    x = windows if isinstance(windows, Tensor) else gc.constant(windows)
    h = gc.reshape(x, (x.shape[0], x.shape[1], 1))
    for layer in range(config.layers):
        h = gc.causal_conv1d(h, params[f"conv{layer}_w"],
                             params[f"conv{layer}_b"],
                             dilation=config.dilations[layer])
        if config.layer_norm:
            h = gc.layer_norm(h, params[f"ln{layer}_gain"],
                              params[f"ln{layer}_bias"])
        h = gc.relu(h)
    return h


def stats_pool(r_prefix: Tensor) -> Tensor:
    """Concatenate [mean; var; max; min] over the time axis: (N, l, d) -> (N, 4d)."""
    mean = gc.tmean(r_prefix, axis=1)
    centered = r_prefix - gc.reshape(mean, (mean.shape[0], 1, mean.shape[1]))
    var = gc.tmean(centered * centered, axis=1)
    mx = gc.tmax(r_prefix, axis=1)
    mn = gc.tmin(r_prefix, axis=1)
    return gc.concat([mean, var, mx, mn], axis=1)


def multi_scale_stats(r: Tensor, lengths) -> list:
    """Pool every prefix scale of the embedding: one (N, 4d) tensor per scale."""
    return [stats_pool(r[:, :l, :]) for l in lengths]


def scale_weights(w: Tensor) -> Tensor:
    """Softmax over the per-window scale logits."""
    return gc.softmax(w, axis=1)


def select_length(z_scales: list, w: Tensor, params: dict) -> tuple:
    """Mix the per-scale stats by softmax(w) and project to node space.

    Returns (z, h): z is the (N, 4d) mixture, h = MLP(z) is the (N, d)
    subsequence representation.
    """
    weights = scale_weights(w)
    n = weights.shape[0]
    z = None
    for p, zp in enumerate(z_scales):
        contrib = weights[:, p:p + 1] * zp
        z = contrib if z is None else z + contrib
    h = project_nodes(z, params)
    return z, h


def project_nodes(z: Tensor, params: dict) -> Tensor:
    hidden = gc.relu(z @ params["mlp_w1"] + params["mlp_b1"])
    return hidden @ params["mlp_w2"] + params["mlp_b2"]


# -- checkpoint format --------------------------------------------------------
#
# binary, little-endian:
#   magic "SDCK" | u32 version | u32 entry count
#   per entry: u32 name length | name utf-8 | u32 ndim | u64 dims | f64 data

_MAGIC = b"SDCK"
_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str, named_arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(named_arrays)))
        for name in sorted(named_arrays):
            # note: ascontiguousarray would promote 0-d arrays to 1-d
            arr = np.asarray(named_arrays[name], dtype="<f8", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
        offset += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        out[name] = arr.reshape(shape).astype(np.float64)
    return out
