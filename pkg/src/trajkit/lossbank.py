"""Differentiable training objectives for trajectory fields and latents.

All losses accept a single instance or a leading batch dimension; masked
normalizations happen per instance, then instances average.  Reconstruction
targets and masks are plain arrays; the quantity being optimized may be a
gradcore Tensor, so every loss returns a Tensor (use float() to read it).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gradcore as gc
from .gradcore import Tensor, as_tensor


@dataclass
class SegmentPair:
    """Target/reconstruction offset segments plus visibility mask.

    target, recon: (T, H, W, 2) or (B, T, H, W, 2); mask matches minus the
    channel axis.
    """

    target: np.ndarray
    recon: "Tensor | np.ndarray"
    mask: np.ndarray


@dataclass
class NeighborSpec:
    """Multi-hop neighborhood for the spatial consistency term."""

    hops: tuple = (1, 2, 4)
    weights: tuple = (1.0, 0.5, 0.25)

    def __post_init__(self):
        if len(self.hops) != len(self.weights):
            raise ValueError("hops and weights must pair up")
        if any(h <= 0 for h in self.hops) or any(w <= 0 for w in self.weights):
            raise ValueError("hops and weights must be positive")


@dataclass
class TokenWeights:
    """Normalized per-token loss weights over the latent grid (k, n)."""

    w: np.ndarray  # (T_lat, N) or (B, T_lat, N), sums to 1 per instance
    channels: int = 0


def _batched(arr, ndim_single):
    """Add a batch axis when given a single instance; report if we did."""
    data = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
    if data.ndim == ndim_single:
        if isinstance(arr, Tensor):
            return gc.reshape(arr, (1, *data.shape)), True
        return data[None], True
    return (arr if isinstance(arr, Tensor) else data), False


def huber(residual: Tensor, delta: float) -> Tensor:
    """Quadratic inside |r| <= delta, linear outside; applied elementwise."""
    residual = as_tensor(residual)
    mag = gc.absolute(residual)
    quad = gc.mul(gc.square(residual), 0.5)
    lin = gc.add(gc.mul(mag, delta), -0.5 * delta * delta)
    return gc.where(mag.data <= delta, quad, lin)


def recon_loss(pair: SegmentPair, huber_delta: float = 1.0) -> Tensor:
    """Visibility-normalized Huber reconstruction error, per-coordinate and
    summed over the two channels."""
    recon, _ = _batched(pair.recon, 4)
    target, _ = _batched(np.asarray(pair.target, dtype=np.float64), 4)
    mask, _ = _batched(np.asarray(pair.mask, dtype=np.float64), 3)
    denom = mask.sum(axis=(1, 2, 3))
    if np.any(denom == 0):
        raise ValueError("recon_loss: a segment has no visible elements")
    w = mask / denom[:, None, None, None]
    rho = gc.tsum(huber(gc.add(recon, -target), huber_delta), axis=4)
    per_instance = gc.tsum(gc.reshape(gc.mul(rho, w), (w.shape[0], -1)), axis=1)
    return gc.tmean(per_instance)


def temporal_loss(pair: SegmentPair) -> Tensor:
    """Pair-masked mean L1 mismatch of frame-to-frame displacements."""
    recon, _ = _batched(pair.recon, 4)
    target, _ = _batched(np.asarray(pair.target, dtype=np.float64), 4)
    mask, _ = _batched(np.asarray(pair.mask, dtype=np.float64), 3)
    if target.shape[1] < 2:
        raise ValueError("temporal_loss: need at least 2 frames")
    pair_mask = mask[:, 1:] * mask[:, :-1]
    denom = pair_mask.sum(axis=(1, 2, 3))
    if np.any(denom == 0):
        raise ValueError("temporal_loss: no valid temporal pair in a segment")
    d_recon = gc.add(recon[:, 1:], gc.mul(recon[:, :-1], -1.0))
    d_target = target[:, 1:] - target[:, :-1]
    l1 = gc.tsum(gc.absolute(gc.add(d_recon, -d_target)), axis=4)
    masked = gc.tsum(gc.reshape(gc.mul(l1, pair_mask), (pair_mask.shape[0], -1)), axis=1)
    return gc.tmean(gc.div(masked, denom))


def spatial_loss(pair: SegmentPair, spec: NeighborSpec | None = None) -> Tensor:
    """Multi-hop neighbor-difference mismatch, both grid directions pooled
    per hop; hops with no valid pair drop out of the weight normalizer."""
    spec = spec or NeighborSpec()
    recon, _ = _batched(pair.recon, 4)
    target, _ = _batched(np.asarray(pair.target, dtype=np.float64), 4)
    mask, _ = _batched(np.asarray(pair.mask, dtype=np.float64), 3)
    b = mask.shape[0]
    terms = []   # per hop: Tensor (b,) masked-sum mismatch
    denoms = []  # per hop: ndarray (b,) valid-pair counts
    for hop in spec.hops:
        num_parts = []
        den = np.zeros(b)
        for axis in (3, 2):  # horizontal (W) then vertical (H) on (b, t, h, w)
            if mask.shape[axis] <= hop:
                continue
            sl_hi = [slice(None)] * 4
            sl_lo = [slice(None)] * 4
            sl_hi[axis] = slice(hop, None)
            sl_lo[axis] = slice(None, -hop)
            sl_hi, sl_lo = tuple(sl_hi), tuple(sl_lo)
            m_pair = mask[sl_hi] * mask[sl_lo]
            d_recon = gc.add(recon[sl_hi], gc.mul(recon[sl_lo], -1.0))
            d_target = target[sl_hi] - target[sl_lo]
            l1 = gc.tsum(gc.absolute(gc.add(d_recon, -d_target)), axis=4)
            num_parts.append(gc.tsum(gc.reshape(gc.mul(l1, m_pair), (b, -1)), axis=1))
            den += m_pair.sum(axis=tuple(range(1, 4)))
        if not num_parts:
            terms.append(None)
            denoms.append(den)
            continue
        total = num_parts[0]
        for part in num_parts[1:]:
            total = gc.add(total, part)
        terms.append(gc.div(total, np.maximum(den, 1.0)))
        denoms.append(den)

    alpha = np.array(spec.weights, dtype=np.float64)
    valid = np.stack([d > 0 for d in denoms])  # (hops, b)
    norms = (alpha[:, None] * valid).sum(axis=0)
    if np.any(norms == 0):
        raise ValueError("spatial_loss: no valid neighbor pair at any hop")
    acc = None
    for i, term in enumerate(terms):
        if term is None:
            continue
        scaled = gc.mul(term, alpha[i] * valid[i] / norms)
        acc = scaled if acc is None else gc.add(acc, scaled)
    return gc.tmean(acc)


def st_regularizer(pair: SegmentPair, spec: NeighborSpec | None = None,
                   lambda_temporal: float = 0.1, lambda_spatial: float = 0.2) -> Tensor:
    if lambda_temporal == 0.0 and lambda_spatial == 0.0:
        return Tensor(0.0)
    total = None
    if lambda_temporal != 0.0:
        total = gc.mul(temporal_loss(pair), lambda_temporal)
    if lambda_spatial != 0.0:
        sp = gc.mul(spatial_loss(pair, spec), lambda_spatial)
        total = sp if total is None else gc.add(total, sp)
    return total


def kl_loss(mu, logvar) -> Tensor:
    """Mean per-element KL of N(mu, exp(logvar)) against the unit normal."""
    mu = as_tensor(mu)
    logvar = as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise gc.ShapeError("kl_loss", mu.shape, logvar.shape)
    term = gc.add(gc.add(gc.square(mu), gc.exp(logvar)), gc.add(gc.mul(logvar, -1.0), -1.0))
    return gc.mul(gc.tmean(term), 0.5)


def token_weights(future_mask: np.ndarray, token_grid: tuple, floor: float = 0.01) -> TokenWeights:
    """Mean-pool future visibility onto the latent token grid, floor it so
    invisible tokens keep a small weight, then normalize to sum 1.

    token_grid is (t_lat, h_tok, w_tok); the mask's trailing (T, H, W) axes
    must tile onto it (time pads by repeating the last frame).
    """
    mask = np.asarray(future_mask, dtype=np.float64)
    single = mask.ndim == 3
    if single:
        mask = mask[None]
    t_lat, h_tok, w_tok = token_grid
    b, t, h, w = mask.shape
    if t_lat <= 0 or h_tok <= 0 or w_tok <= 0 or h % h_tok or w % w_tok:
        raise ValueError(f"token grid {token_grid} incompatible with mask {mask.shape}")
    r = -(-t // t_lat)  # ceil
    if t_lat * r != t:
        pad = np.repeat(mask[:, -1:], t_lat * r - t, axis=1)
        mask = np.concatenate([mask, pad], axis=1)
    ph, pw = h // h_tok, w // w_tok
    pooled = mask.reshape(b, t_lat, r, h_tok, ph, w_tok, pw).mean(axis=(2, 4, 6))
    pooled = pooled.reshape(b, t_lat, h_tok * w_tok)
    w_tok_arr = np.maximum(pooled, floor)
    total = w_tok_arr.sum(axis=(1, 2), keepdims=True)
    if np.any(total == 0):
        raise ValueError("token_weights: all token weights zero (floor=0 and fully invisible)")
    w_tok_arr = w_tok_arr / total
    return TokenWeights(w_tok_arr[0] if single else w_tok_arr)


def _weighted_sq(diff: Tensor, weights: np.ndarray) -> Tensor:
    """(1/C) sum_{k,n} w(k,n) ||diff(k,n)||^2, batched; returns (b,) Tensor."""
    b, _, _, c = diff.shape
    sq = gc.tsum(gc.square(diff), axis=3)  # (b, k, n)
    if weights.shape != sq.shape:
        raise gc.ShapeError("token-weighted norm", weights.shape, sq.shape)
    return gc.mul(gc.tsum(gc.reshape(gc.mul(sq, weights), (b, -1)), axis=1), 1.0 / c)


def _weights_array(weights, batch: int, kn_shape) -> np.ndarray:
    w = weights.w if isinstance(weights, TokenWeights) else np.asarray(weights, dtype=np.float64)
    if w.ndim == 2:
        w = np.broadcast_to(w[None], (batch, *w.shape))
    return w


def fm_loss(v_pred, u_target, weights) -> Tensor:
    """Token-weighted squared flow-matching error, averaged over channels."""
    v, single = _batched(v_pred, 3)
    u, _ = _batched(np.asarray(u_target.data if isinstance(u_target, Tensor) else u_target,
                               dtype=np.float64), 3)
    if v.shape != u.shape:
        raise gc.ShapeError("fm_loss", v.shape, u.shape)
    w = _weights_array(weights, v.shape[0], v.shape[1:3])
    return gc.tmean(_weighted_sq(gc.add(v, -u), w))


def kstep_targets(z_i: np.ndarray, z0: np.ndarray, z1: np.ndarray, t_i: float,
                  denom_clamp: float = 1e-3):
    """Endpoint-consistent velocity targets from a visited state; denominators
    clamp away from zero near t = 0 and t = 1."""
    z_i = np.asarray(z_i, dtype=np.float64)
    v1 = (np.asarray(z1, dtype=np.float64) - z_i) / max(1.0 - t_i, denom_clamp)
    v0 = (z_i - np.asarray(z0, dtype=np.float64)) / max(t_i, denom_clamp)
    return v1, v0


def kstep_loss(velocities, targets_per_step, weights, w1: float = 1.0, w0: float = 0.5) -> Tensor:
    """Mean over rollout steps of the weighted pull toward both endpoints."""
    if len(velocities) != len(targets_per_step) or not velocities:
        raise ValueError(f"kstep_loss: {len(velocities)} velocities vs "
                         f"{len(targets_per_step)} target pairs")
    total = None
    for v, (v1, v0) in zip(velocities, targets_per_step):
        vb, _ = _batched(v, 3)
        v1b, _ = _batched(np.asarray(v1, dtype=np.float64), 3)
        v0b, _ = _batched(np.asarray(v0, dtype=np.float64), 3)
        w = _weights_array(weights, vb.shape[0], vb.shape[1:3])
        step = gc.add(gc.mul(_weighted_sq(gc.add(vb, -v1b), w), w1),
                      gc.mul(_weighted_sq(gc.add(vb, -v0b), w), w0))
        total = step if total is None else gc.add(total, step)
    return gc.tmean(gc.mul(total, 1.0 / len(velocities)))


def endpoint_consistency(states, velocities, times, weights=None, masked: bool = False) -> Tensor:
    """Squared drift of consecutive implied endpoints along a rollout, with
    the previous step's endpoints detached.  Unmasked by default: every token
    weighs 1/|Lambda|."""
    k = len(velocities)
    if k < 2:
        raise ValueError("endpoint_consistency: need at least 2 rollout steps")
    if len(states) < k or len(times) < k:
        raise ValueError("endpoint_consistency: states/times shorter than velocities")

    def implied(i):
        z = as_tensor(states[i])
        zb, _ = _batched(z, 3)
        vb, _ = _batched(velocities[i], 3)
        t = float(times[i])
        z1_hat = gc.add(zb, gc.mul(vb, 1.0 - t))
        z0_hat = gc.add(zb, gc.mul(vb, -t))
        return z1_hat, z0_hat

    total = None
    prev = implied(0)
    for i in range(1, k):
        cur = implied(i)
        b, kk, n, _ = cur[0].shape
        if masked and weights is not None:
            w = _weights_array(weights, b, (kk, n))
        else:
            w = np.full((b, kk, n), 1.0 / (kk * n))
        term = gc.add(_weighted_sq(gc.add(cur[0], gc.mul(gc.stop_gradient(prev[0]), -1.0)), w),
                      _weighted_sq(gc.add(cur[1], gc.mul(gc.stop_gradient(prev[1]), -1.0)), w))
        total = term if total is None else gc.add(total, term)
        prev = cur
    return gc.tmean(gc.mul(total, 1.0 / (k - 1)))


def bce_logits(logits, targets) -> Tensor:
    """Numerically stable mean binary cross-entropy on logits."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise gc.ShapeError("bce_logits", logits.shape, targets.shape)
    if np.any((targets < 0) | (targets > 1)):
        raise ValueError("bce_logits: targets must lie in [0, 1]")
    return gc.tmean(gc.add(gc.softplus(logits), gc.mul(logits, -targets)))
