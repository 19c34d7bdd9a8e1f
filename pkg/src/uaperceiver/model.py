"""The Perceiver classifier.

A learned N x D latent array repeatedly cross-attends to an M x C byte
array built from the input image (pixel channels plus positional
features), with a GPT-2-style self-attention tower run on the latents
between cross-attends. Blocks use the pre-norm residual arrangement and
no causal mask: the latents form a set, not a sequence.

Weight sharing ties the cross-attend and/or tower parameters across
depth repetitions, giving the network an RNN-like functional form and a
parameter count independent of depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, RangeError, UsageError
from .params import ParamStore
from .rng import generator
from .tensor import Tensor

LN_EPS = 1e-5

# std of a unit normal truncated at +/-2; draws are rescaled by this so
# the post-truncation sample std matches the requested value
_TRUNC_STD = 0.8796256610342398


class ScoreCounter:
    """Counts attention score-matrix entries, split by attention kind."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.cross = 0
        self.latent = 0

    @property
    def total(self):
        return self.cross + self.latent


score_counter = ScoreCounter()


@dataclass(frozen=True)
class PerceiverConfig:
    height: int = 16
    width: int = 16
    channels: int = 3
    num_classes: int = 3
    latent_count: int = 32
    latent_dim: int = 64
    byte_dim: int = 64
    num_bands: int = 8
    max_frequency: float = 0.0  # 0 means: use max(height, width)
    depth_repeats: int = 2
    tower_layers: int = 2
    heads: int = 4
    pos_encoding: str = "fourier"
    share_tower_weights: bool = True
    share_cross_weights: bool = True

    def __post_init__(self):
        if self.latent_count < 1 or self.depth_repeats < 1 or self.tower_layers < 1:
            raise ConfigError("latent_count, depth_repeats, tower_layers must be >= 1")
        if self.latent_dim % self.heads != 0:
            raise ConfigError(
                f"latent_dim {self.latent_dim} not divisible by heads {self.heads}"
            )
        if self.pos_encoding not in ("fourier", "learnable"):
            raise ConfigError(f"unknown pos_encoding {self.pos_encoding!r}")

    @property
    def num_bytes(self) -> int:
        """M = H*W; complexity accounting is in terms of this."""
        return self.height * self.width

    @property
    def frequency_cap(self) -> float:
        return self.max_frequency if self.max_frequency > 0 else float(
            max(self.height, self.width)
        )

    @property
    def byte_feature_width(self) -> int:
        if self.pos_encoding == "fourier":
            return self.channels + 2 * (2 * self.num_bands + 1)
        return self.channels


# ---- positional encoding --------------------------------------------


def fourier_encode(positions, num_bands: int, max_frequency: float) -> np.ndarray:
    """Fourier positional features for coordinates in [-1, 1].

    Per axis the features are sin(pi*f_k*p) and cos(pi*f_k*p) for
    frequencies f_1..f_K linearly spaced from 1 to max_frequency/2 (the
    Nyquist rate of the target resolution), followed by the raw
    coordinate; axes are concatenated. Output width is d*(2*K+1).
    """
    if max_frequency <= 0:
        raise UsageError(f"max_frequency must be > 0, got {max_frequency}")
    if num_bands < 1:
        raise UsageError(f"num_bands must be >= 1, got {num_bands}")
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if np.abs(p).max(initial=0.0) > 1.0 + 1e-12:
        raise RangeError("coordinates must lie in [-1, 1]")
    freqs = np.linspace(1.0, max_frequency / 2.0, num_bands)
    ang = math.pi * p[..., None] * freqs  # (..., d, K)
    per_axis = np.concatenate([np.sin(ang), np.cos(ang), p[..., None]], axis=-1)
    out = per_axis.reshape(*p.shape[:-1], p.shape[-1] * (2 * num_bands + 1))
    return out


@lru_cache(maxsize=32)
def _image_position_features(
    height: int, width: int, num_bands: int, max_frequency: float
) -> np.ndarray:
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    grid = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    return fourier_encode(grid, num_bands, max_frequency)


# ---- parameter construction -----------------------------------------


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    out = rng.standard_normal(size=shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(size=int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * (std / _TRUNC_STD)


def _cross_group(config: PerceiverConfig, r: int) -> str:
    return "cross_shared" if config.share_cross_weights else f"cross_rep{r}"


def _tower_group(config: PerceiverConfig, r: int) -> str:
    return "tower_shared" if config.share_tower_weights else f"tower_rep{r}"


def init_params(config: PerceiverConfig, seed: int) -> ParamStore:
    """Seeded parameter store: truncated-normal weights (std 0.02),
    zero biases/betas, unit layer-norm gammas, learned latent array."""
    rng = generator(seed, 0)
    store = ParamStore()

    def weight(name, shape):
        store.add(name, Tensor(_trunc_normal(rng, shape), requires_grad=True))

    def zeros(name, shape):
        store.add(name, Tensor(np.zeros(shape), requires_grad=True))

    def ones(name, shape):
        store.add(name, Tensor(np.ones(shape), requires_grad=True))

    d, c = config.latent_dim, config.byte_dim
    f = config.byte_feature_width

    if config.pos_encoding == "learnable":
        weight("input.pos_table", (config.num_bytes, config.channels))
    weight("input.byte_proj.w", (f, c))
    zeros("input.byte_proj.b", (c,))
    weight("latent.init", (config.latent_count, d))

    def linear(prefix, din, dout):
        weight(prefix + ".w", (din, dout))
        zeros(prefix + ".b", (dout,))

    def norm(prefix, dim):
        ones(prefix + ".gamma", (dim,))
        zeros(prefix + ".beta", (dim,))

    cross_groups, tower_groups = [], []
    for r in range(config.depth_repeats):
        g = _cross_group(config, r)
        if g not in cross_groups:
            cross_groups.append(g)
        g = _tower_group(config, r)
        if g not in tower_groups:
            tower_groups.append(g)

    for g in cross_groups:
        norm(f"{g}.ln_q", d)
        norm(f"{g}.ln_kv", c)
        linear(f"{g}.q", d, d)
        linear(f"{g}.k", c, d)
        linear(f"{g}.v", c, d)
        linear(f"{g}.out", d, d)
    for g in tower_groups:
        for l in range(config.tower_layers):
            norm(f"{g}.layer{l}.attn.ln", d)
            linear(f"{g}.layer{l}.attn.q", d, d)
            linear(f"{g}.layer{l}.attn.k", d, d)
            linear(f"{g}.layer{l}.attn.v", d, d)
            linear(f"{g}.layer{l}.attn.out", d, d)
            norm(f"{g}.layer{l}.mlp.ln", d)
            linear(f"{g}.layer{l}.mlp.fc1", d, 4 * d)
            linear(f"{g}.layer{l}.mlp.fc2", 4 * d, d)

    linear("head", d, config.num_classes)
    return store


def param_count(config: PerceiverConfig) -> tuple[int, dict[str, int]]:
    """Exact scalar parameter count and a per-group breakdown.

    Shared blocks are counted once; groups are the first dotted name
    component (input, latent, cross_*, tower_*, head).
    """
    store = init_params(config, 0)
    breakdown: dict[str, int] = {}
    for name, t in store.items():
        group = name.split(".", 1)[0]
        breakdown[group] = breakdown.get(group, 0) + t.size
    return store.num_scalars(), breakdown


# ---- forward passes --------------------------------------------------


def build_byte_array(image: np.ndarray, config: PerceiverConfig, params: ParamStore):
    """Flatten an H x W x channels image into the M x byte_dim byte array.

    Fourier mode concatenates each pixel's channel values with its
    positional features; learnable mode adds a trained per-position
    embedding to the channel values. Either way a learned linear
    projection maps the features to byte_dim.
    """
    image = np.asarray(image, dtype=np.float64)
    expected = (config.height, config.width, config.channels)
    if image.shape != expected:
        raise DimensionError(f"image shape {image.shape}, config expects {expected}")
    pixels = image.reshape(config.num_bytes, config.channels)
    if config.pos_encoding == "fourier":
        pos = _image_position_features(
            config.height, config.width, config.num_bands, config.frequency_cap
        )
        feats = T.Tensor(np.concatenate([pixels, pos], axis=1))
    else:
        feats = T.add(T.Tensor(pixels), params["input.pos_table"])
    return T.add(
        T.matmul(feats, params["input.byte_proj.w"]), params["input.byte_proj.b"]
    )


def _multihead_attention(q, k, v, heads: int, kind: str):
    """Scaled dot-product attention per head; concatenated head outputs."""
    d = q.shape[1]
    dh = d // heads
    outs = []
    for h in range(heads):
        qh = T.cols(q, h * dh, (h + 1) * dh)
        kh = T.cols(k, h * dh, (h + 1) * dh)
        vh = T.cols(v, h * dh, (h + 1) * dh)
        scores = T.scale(T.matmul(qh, T.transpose(kh)), 1.0 / math.sqrt(dh))
        if kind == "cross":
            score_counter.cross += scores.size
        else:
            score_counter.latent += scores.size
        outs.append(T.matmul(T.softmax(scores), vh))
    return T.concat_cols(outs)


def cross_attention(latent, bytes_mat, params: ParamStore, config: PerceiverConfig,
                    group: str):
    """Latents query the byte array: Q from latents, K/V from bytes.

    Pre-norm; residual back onto the latents. The score matrix has
    heads * N * M entries.
    """
    q_in = T.layer_norm(
        latent, params[f"{group}.ln_q.gamma"], params[f"{group}.ln_q.beta"], LN_EPS
    )
    kv_in = T.layer_norm(
        bytes_mat, params[f"{group}.ln_kv.gamma"], params[f"{group}.ln_kv.beta"], LN_EPS
    )

    def proj(x, prefix):
        return T.add(T.matmul(x, params[prefix + ".w"]), params[prefix + ".b"])

    q = proj(q_in, f"{group}.q")
    k = proj(kv_in, f"{group}.k")
    v = proj(kv_in, f"{group}.v")
    attended = _multihead_attention(q, k, v, config.heads, "cross")
    return T.add(latent, proj(attended, f"{group}.out"))


def latent_block(latent, params: ParamStore, config: PerceiverConfig, group: str,
                 layer: int):
    """One tower layer: pre-norm self-attention, then pre-norm 4x GELU MLP."""
    p = f"{group}.layer{layer}"

    def proj(x, prefix):
        return T.add(T.matmul(x, params[prefix + ".w"]), params[prefix + ".b"])

    normed = T.layer_norm(
        latent, params[f"{p}.attn.ln.gamma"], params[f"{p}.attn.ln.beta"], LN_EPS
    )
    q = proj(normed, f"{p}.attn.q")
    k = proj(normed, f"{p}.attn.k")
    v = proj(normed, f"{p}.attn.v")
    attended = _multihead_attention(q, k, v, config.heads, "latent")
    latent = T.add(latent, proj(attended, f"{p}.attn.out"))

    normed = T.layer_norm(
        latent, params[f"{p}.mlp.ln.gamma"], params[f"{p}.mlp.ln.beta"], LN_EPS
    )
    hidden = T.gelu(proj(normed, f"{p}.mlp.fc1"))
    return T.add(latent, proj(hidden, f"{p}.mlp.fc2"))


def perceiver_forward(config: PerceiverConfig, params: ParamStore, image):
    """Image -> K logits (as a 1 x K tensor participating in the graph)."""
    try:
        bytes_mat = build_byte_array(image, config, params)
        latent = params["latent.init"]
        for r in range(config.depth_repeats):
            latent = cross_attention(
                latent, bytes_mat, params, config, _cross_group(config, r)
            )
            tg = _tower_group(config, r)
            for l in range(config.tower_layers):
                latent = latent_block(latent, params, config, tg, l)
        pooled = T.mean_rows(latent)
        return T.add(T.matmul(pooled, params["head.w"]), params["head.b"])
    except KeyError as exc:
        raise ConfigError(f"parameter store does not match config: missing {exc}")


def forward_logits(config: PerceiverConfig, params: ParamStore, images) -> np.ndarray:
    """Batched inference: n x K logits as a plain array (no grad)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    out = np.empty((images.shape[0], config.num_classes))
    for i, img in enumerate(images):
        out[i] = perceiver_forward(config, params, img).data[0]
    return out


def batch_loss(config: PerceiverConfig, params: ParamStore, images, labels):
    """Mean cross-entropy over a batch, as a scalar graph node."""
    labels = np.asarray(labels, dtype=np.int64)
    losses = None
    for img, label in zip(images, labels):
        logits = perceiver_forward(config, params, img)
        term = T.cross_entropy(logits, [label])
        losses = term if losses is None else T.add(losses, term)
    if losses is None:
        raise UsageError("batch_loss called with an empty batch")
    return T.scale(losses, 1.0 / len(labels))


def config_to_dict(config: PerceiverConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(config)}
