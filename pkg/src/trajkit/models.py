"""Toy-scale networks on the gradcore tape: trajectory VAE with temporal
compression, a velocity network with token-aligned history fusion, and the
per-token visibility head.

Attention is replaced by token-mixing residual MLP blocks; the encoding,
losses, and flow machinery around these backbones are the point, not the
backbone itself.  Parameters live in flat name->ndarray dicts; forwards
accept the same dicts wrapped into Tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .gradcore import Rng, Tensor, as_tensor


@dataclass
class VaeConfig:
    height: int = 32
    width: int = 32
    frames: int = 8          # segment length the VAE trains on
    patch: int = 8
    hidden: int = 64
    blocks: int = 2
    latent_channels: int = 8
    temporal_ratio: int = 4

    def __post_init__(self):
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(f"patch {self.patch} must divide {self.height}x{self.width}")

    @property
    def tokens_h(self) -> int:
        return self.height // self.patch

    @property
    def tokens_w(self) -> int:
        return self.width // self.patch

    @property
    def n_tokens(self) -> int:
        return self.tokens_h * self.tokens_w

    @property
    def latent_frames(self) -> int:
        return -(-self.frames // self.temporal_ratio)  # ceil

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * 2

    def token_grid(self, frames: int | None = None) -> tuple:
        t = self.frames if frames is None else frames
        return (-(-t // self.temporal_ratio), self.tokens_h, self.tokens_w)

    @classmethod
    def paper_scale(cls) -> "VaeConfig":
        return cls(height=480, width=832, frames=81, patch=32, hidden=512,
                   blocks=16, latent_channels=16, temporal_ratio=4)


@dataclass
class FlowConfig:
    hidden: int = 64
    blocks: int = 2
    cond_hidden: int = 32
    time_features: int = 8
    history_steps: int = 2   # latent steps of history context (>= 2 for fusion)
    future_steps: int = 2    # latent steps generated
    latent_channels: int = 8
    n_tokens: int = 16


@dataclass
class FusionParams:
    """History-injection schedule: a learnable gain, sigmoid gates per future
    step, and a linear ramp from 0 at the first step to 1 at the last."""

    alpha_init: float = 0.1
    gate_raw_init: float = 0.0  # sigmoid(0) = 0.5


# -- parameter initialization ---------------------------------------------


def _init_linear(params: dict, rng: Rng, name: str, fan_in: int, fan_out: int):
    params[f"{name}.w"] = rng.draw_normal((fan_in, fan_out)) / math.sqrt(fan_in)
    params[f"{name}.b"] = np.zeros(fan_out)


def _init_block(params: dict, rng: Rng, name: str, n_tokens: int, hidden: int):
    _init_linear(params, rng, f"{name}.tok1", n_tokens, n_tokens)
    _init_linear(params, rng, f"{name}.tok2", n_tokens, n_tokens)
    _init_linear(params, rng, f"{name}.ch1", hidden, 2 * hidden)
    _init_linear(params, rng, f"{name}.ch2", 2 * hidden, hidden)


def init_vae_params(cfg: VaeConfig, rng: Rng) -> dict:
    p: dict = {}
    d, c, r = cfg.hidden, cfg.latent_channels, cfg.temporal_ratio
    _init_linear(p, rng, "enc.embed", cfg.patch_dim, d)
    for i in range(cfg.blocks):
        _init_block(p, rng, f"enc.block{i}", cfg.n_tokens, d)
    _init_linear(p, rng, "enc.compress", r * d, d)
    _init_block(p, rng, "enc.post", cfg.n_tokens, d)
    _init_linear(p, rng, "enc.mu", d, c)
    _init_linear(p, rng, "enc.logvar", d, c)
    _init_linear(p, rng, "dec.embed", c, d)
    _init_block(p, rng, "dec.pre", cfg.n_tokens, d)
    _init_linear(p, rng, "dec.expand", d, r * d)
    for i in range(cfg.blocks):
        _init_block(p, rng, f"dec.block{i}", cfg.n_tokens, d)
    _init_linear(p, rng, "dec.head", d, cfg.patch_dim)
    return p


def init_velocity_params(cfg: FlowConfig, rng: Rng,
                         fusion: FusionParams | None = None) -> dict:
    fusion = fusion or FusionParams()
    p: dict = {}
    d, c = cfg.hidden, cfg.latent_channels
    _init_linear(p, rng, "vel.tok", c, d)
    _init_linear(p, rng, "vel.cond", cfg.history_steps * (c + 1), cfg.cond_hidden)
    _init_linear(p, rng, "vel.merge", d + cfg.time_features + cfg.cond_hidden, d)
    for i in range(cfg.blocks):
        _init_block(p, rng, f"vel.block{i}", cfg.n_tokens, d)
    _init_linear(p, rng, "vel.head", d, c)
    p["vel.fusion.alpha"] = np.array(fusion.alpha_init)
    p["vel.fusion.gate_raw"] = np.full(cfg.future_steps, fusion.gate_raw_init)
    return p


def init_visibility_params(cfg: FlowConfig, rng: Rng, hidden: int = 16) -> dict:
    p: dict = {}
    _init_linear(p, rng, "vis.embed", cfg.latent_channels, hidden)
    _init_linear(p, rng, "vis.conv0", 3 * hidden, hidden)
    _init_linear(p, rng, "vis.conv1", 3 * hidden, hidden)
    _init_linear(p, rng, "vis.head", hidden, 1)
    return p


def wrap_params(params: dict, requires_grad: bool = True) -> dict:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


# -- shared forward pieces --------------------------------------------------


def _linear(params: dict, name: str, x: Tensor) -> Tensor:
    return gc.affine(x, params[f"{name}.w"], params[f"{name}.b"])


def _linear_4d(params: dict, name: str, x: Tensor) -> Tensor:
    """Apply a linear layer over the last axis of a (..., fan_in) tensor."""
    shape = x.shape
    fan_in = shape[-1]
    flat = gc.reshape(x, (-1, fan_in))
    out = _linear(params, name, flat)
    return gc.reshape(out, (*shape[:-1], out.shape[-1]))


def _block(params: dict, name: str, h: Tensor) -> Tensor:
    """Residual token-mixing + channel MLP on (B, T, N, D) tokens."""
    b, t, n, d = h.shape
    # mix across spatial tokens
    ht = gc.reshape(gc.transpose(h, (0, 1, 3, 2)), (-1, n))
    mixed = _linear(params, f"{name}.tok2", gc.gelu(_linear(params, f"{name}.tok1", ht)))
    h = gc.add(h, gc.transpose(gc.reshape(mixed, (b, t, d, n)), (0, 1, 3, 2)))
    # per-token channel MLP
    hc = gc.reshape(h, (-1, d))
    out = _linear(params, f"{name}.ch2", gc.gelu(_linear(params, f"{name}.ch1", hc)))
    return gc.add(h, gc.reshape(out, (b, t, n, d)))


def _expand(x: Tensor, shape: tuple) -> Tensor:
    """Broadcast x up to `shape` (via an add with zeros, so the adjoint
    sums back down)."""
    return gc.add(gc.zeros(shape), x)


def _ensure_batched(x, ndim_single: int):
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim == ndim_single:
        t = as_tensor(x)
        return gc.reshape(t, (1, *data.shape)), True
    return as_tensor(x), False


def _pad_frames(x: Tensor, ratio: int) -> Tensor:
    """Repeat the last frame so the time axis divides the compression ratio."""
    b, t = x.shape[0], x.shape[1]
    rem = t % ratio
    if rem == 0:
        return x
    pad = [x[:, t - 1:t] for _ in range(ratio - rem)]
    return gc.concat([x] + pad, axis=1)


# -- trajectory VAE ----------------------------------------------------------


def _patchify(x: Tensor, cfg: VaeConfig) -> Tensor:
    b, t = x.shape[0], x.shape[1]
    ph, pw, p = cfg.tokens_h, cfg.tokens_w, cfg.patch
    x = gc.reshape(x, (b, t, ph, p, pw, p, 2))
    x = gc.transpose(x, (0, 1, 2, 4, 3, 5, 6))
    return gc.reshape(x, (b, t, ph * pw, p * p * 2))


def _unpatchify(x: Tensor, cfg: VaeConfig) -> Tensor:
    b, t = x.shape[0], x.shape[1]
    ph, pw, p = cfg.tokens_h, cfg.tokens_w, cfg.patch
    x = gc.reshape(x, (b, t, ph, pw, p, p, 2))
    x = gc.transpose(x, (0, 1, 2, 4, 3, 5, 6))
    return gc.reshape(x, (b, t, ph * p, pw * p, 2))


def vae_encode(x, params: dict, cfg: VaeConfig):
    """Offset segment (T, H, W, 2) or batch -> posterior (mu, logvar), each
    (T_lat, N, C) (batched when the input is)."""
    x, single = _ensure_batched(x, 4)
    b, t, h, w, _ = x.shape
    if (h, w) != (cfg.height, cfg.width):
        raise gc.ShapeError("vae_encode", x.shape, (cfg.height, cfg.width))
    x = _pad_frames(x, cfg.temporal_ratio)
    t_pad = x.shape[1]
    t_lat = t_pad // cfg.temporal_ratio
    tok = _linear_4d(params, "enc.embed", _patchify(x, cfg))
    for i in range(cfg.blocks):
        tok = _block(params, f"enc.block{i}", tok)
    d = cfg.hidden
    tok = gc.reshape(tok, (b, t_lat, cfg.temporal_ratio, cfg.n_tokens, d))
    tok = gc.transpose(tok, (0, 1, 3, 2, 4))
    tok = gc.reshape(tok, (b, t_lat, cfg.n_tokens, cfg.temporal_ratio * d))
    tok = gc.gelu(_linear_4d(params, "enc.compress", tok))
    tok = _block(params, "enc.post", tok)
    mu = _linear_4d(params, "enc.mu", tok)
    logvar = _linear_4d(params, "enc.logvar", tok)
    if single:
        mu = gc.reshape(mu, mu.shape[1:])
        logvar = gc.reshape(logvar, logvar.shape[1:])
    return mu, logvar


def reparameterize(mu, logvar, rng: Rng) -> Tensor:
    mu = as_tensor(mu)
    logvar = as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise gc.ShapeError("reparameterize", mu.shape, logvar.shape)
    eps = rng.draw_normal(mu.shape)
    return gc.add(mu, gc.mul(gc.exp(gc.mul(logvar, 0.5)), eps))


def vae_decode(z, params: dict, cfg: VaeConfig, frames: int | None = None) -> Tensor:
    """Latent (T_lat, N, C) or batch -> offset segment (frames, H, W, 2)."""
    z, single = _ensure_batched(z, 3)
    b, t_lat, n, c = z.shape
    if n != cfg.n_tokens or c != cfg.latent_channels:
        raise gc.ShapeError("vae_decode", z.shape, (cfg.n_tokens, cfg.latent_channels))
    frames = cfg.frames if frames is None else frames
    tok = _linear_4d(params, "dec.embed", z)
    tok = _block(params, "dec.pre", tok)
    d, r = cfg.hidden, cfg.temporal_ratio
    tok = _linear_4d(params, "dec.expand", tok)
    tok = gc.reshape(tok, (b, t_lat, n, r, d))
    tok = gc.transpose(tok, (0, 1, 3, 2, 4))
    tok = gc.reshape(tok, (b, t_lat * r, n, d))
    for i in range(cfg.blocks):
        tok = _block(params, f"dec.block{i}", tok)
    out = _unpatchify(_linear_4d(params, "dec.head", tok), cfg)
    out = out[:, :frames]
    if single:
        out = gc.reshape(out, out.shape[1:])
    return out


# -- velocity network --------------------------------------------------------


def fusion_ramp(future_steps: int) -> np.ndarray:
    """Linear ramp over future latent steps; 0 at the first, 1 at the last."""
    if future_steps == 1:
        return np.zeros(1)
    return np.linspace(0.0, 1.0, future_steps)


def fuse_history(tokens: Tensor, z_hist, params: dict) -> Tensor:
    """Add the gated, ramped history cue to the query tokens.

    tokens: (B, K_f, N, D); z_hist: (B, K_p >= 2, N, C).  The boundary
    feature is the tokenized last history slice; the velocity hint is its
    difference with the second-last slice.  Tokenization shares weights with
    the main input tokenizer.
    """
    z_hist, _ = _ensure_batched(z_hist, 3)
    if z_hist.shape[1] < 2:
        raise ValueError("fuse_history: need at least 2 history latent steps")
    b, k_f, n, d = tokens.shape
    last = _linear_4d(params, "vel.tok", z_hist[:, -1])       # (B, N, D)
    prev = _linear_4d(params, "vel.tok", z_hist[:, -2])
    boundary = gc.reshape(last, (b, 1, n, d))
    hint = gc.reshape(gc.add(last, gc.mul(prev, -1.0)), (b, 1, n, d))
    omega = fusion_ramp(k_f).reshape(1, k_f, 1, 1)
    gates = gc.reshape(gc.sigmoid(params["vel.fusion.gate_raw"]), (1, k_f, 1, 1))
    cue = gc.add(_expand(boundary, (b, k_f, n, d)), gc.mul(_expand(hint, (b, k_f, n, d)), omega))
    return gc.add(tokens, gc.mul(gc.mul(cue, gates), params["vel.fusion.alpha"]))


def time_features(t, n_features: int) -> np.ndarray:
    """Sinusoidal embedding of flow time, (B, n_features)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = n_features // 2
    freqs = 2.0 ** np.arange(half)
    ang = 2.0 * np.pi * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def velocity_forward(z_t, t, condition: dict, params: dict, cfg: FlowConfig) -> Tensor:
    """Conditional velocity for latent state z_t at flow time t.

    condition carries 'z_hist' (B, K_p, N, C) and 'visibility' history
    tokens (B, K_p, N).  Output matches z_t's shape.
    """
    z_t, single = _ensure_batched(z_t, 3)
    b, k_f, n, c = z_t.shape
    if n != cfg.n_tokens or c != cfg.latent_channels:
        raise gc.ShapeError("velocity_forward", z_t.shape, (cfg.n_tokens, cfg.latent_channels))
    z_hist, _ = _ensure_batched(condition["z_hist"], 3)
    vis = np.asarray(condition["visibility"], dtype=np.float64)
    if vis.ndim == 2:
        vis = vis[None]
    k_p = z_hist.shape[1]

    tok = _linear_4d(params, "vel.tok", z_t)
    tok = fuse_history(tok, z_hist, params)

    emb = time_features(t, cfg.time_features)
    if emb.shape[0] == 1 and b > 1:
        emb = np.repeat(emb, b, axis=0)
    emb_t = _expand(Tensor(emb.reshape(b, 1, 1, cfg.time_features)),
                    (b, k_f, n, cfg.time_features))

    hist_flat = gc.reshape(gc.transpose(z_hist, (0, 2, 1, 3)), (b * n, k_p * c))
    vis_flat = Tensor(vis.transpose(0, 2, 1).reshape(b * n, k_p))
    cond = _linear(params, "vel.cond", gc.concat([hist_flat, vis_flat], axis=1))
    cond = gc.reshape(cond, (b, 1, n, cfg.cond_hidden))
    cond = _expand(cond, (b, k_f, n, cfg.cond_hidden))

    h = gc.concat([tok, emb_t, cond], axis=3)
    h = gc.gelu(_linear_4d(params, "vel.merge", h))
    for i in range(cfg.blocks):
        h = _block(params, f"vel.block{i}", h)
    v = _linear_4d(params, "vel.head", h)
    if single:
        v = gc.reshape(v, v.shape[1:])
    return v


# -- visibility head ---------------------------------------------------------


def pool_visibility(mask: np.ndarray, token_grid: tuple) -> np.ndarray:
    """Max-pool (logical OR) a dense mask onto the latent token grid."""
    mask = np.asarray(mask)
    single = mask.ndim == 3
    if single:
        mask = mask[None]
    t_lat, h_tok, w_tok = token_grid
    b, t, h, w = mask.shape
    if t_lat <= 0 or h % h_tok or w % w_tok:
        raise ValueError(f"token grid {token_grid} incompatible with mask {mask.shape}")
    r = -(-t // t_lat)
    if t_lat * r != t:
        mask = np.concatenate([mask, np.repeat(mask[:, -1:], t_lat * r - t, axis=1)], axis=1)
    ph, pw = h // h_tok, w // w_tok
    pooled = mask.reshape(b, t_lat, r, h_tok, ph, w_tok, pw).max(axis=(2, 4, 6))
    out = pooled.reshape(b, t_lat, h_tok * w_tok).astype(np.uint8)
    return out[0] if single else out


def _temporal_conv(params: dict, name: str, h: Tensor) -> Tensor:
    """Kernel-3 zero-padded 1-D convolution along latent time, as a strided
    affine map over shifted copies."""
    b, k, n, d = h.shape
    zero = gc.zeros((b, 1, n, d))
    prev = gc.concat([zero, h[:, :-1]], axis=1) if k > 1 else zero
    nxt = gc.concat([h[:, 1:], zero], axis=1) if k > 1 else zero
    stacked = gc.concat([prev, h, nxt], axis=3)
    return _linear_4d(params, name, stacked)


def visibility_logits(z_f, params: dict) -> Tensor:
    z_f, single = _ensure_batched(z_f, 3)
    h = _linear_4d(params, "vis.embed", z_f)
    h = gc.gelu(_temporal_conv(params, "vis.conv0", h))
    h = gc.gelu(_temporal_conv(params, "vis.conv1", h))
    logits = _linear_4d(params, "vis.head", h)
    logits = gc.reshape(logits, logits.shape[:-1])
    if single:
        logits = gc.reshape(logits, logits.shape[1:])
    return logits


def visibility_predict(z_f, params: dict, threshold: float = 0.5):
    """Per-token visibility (logits, binary mask) for future latents."""
    logits = visibility_logits(z_f, params)
    prob = 1.0 / (1.0 + np.exp(-logits.data))
    return logits, (prob >= threshold).astype(np.uint8)
