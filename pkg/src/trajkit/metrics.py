"""Reference-free motion diagnostics on the coarse track grid.

All functions take per-cell positions in pixels, (T, H_c, W_c, 2), with a
binary visibility array of matching leading shape.  Operating on the coarse
grid (one sample per stride cell) avoids counting the duplicated values of
the dense pixel field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GridFlow:
    """Frame-to-frame displacements per cell: flow[t] covers frames t -> t+1
    of the source positions; valid where both endpoints are visible."""

    flow: np.ndarray   # (T-1, H_c, W_c, 2) px/frame
    valid: np.ndarray  # (T-1, H_c, W_c) bool


def flow_from_positions(positions: np.ndarray, visibility: np.ndarray) -> GridFlow:
    positions = np.asarray(positions, dtype=np.float64)
    visibility = np.asarray(visibility).astype(bool)
    if positions.shape[0] < 2:
        raise ValueError("flow needs at least 2 frames")
    flow = positions[1:] - positions[:-1]
    valid = visibility[1:] & visibility[:-1]
    return GridFlow(flow, valid)


def flow_tv(positions: np.ndarray, visibility: np.ndarray, stride: float) -> float:
    """Time-averaged total variation of the flow field.

    Per frame, horizontal and vertical forward differences (divided by the
    grid spacing in pixels) of both flow components average over their valid
    neighbor pairs and add; frames without a valid pair contribute zero to
    the time average.
    """
    gf = flow_from_positions(positions, visibility)
    u, v = gf.flow[..., 0], gf.flow[..., 1]
    t_minus_1 = gf.flow.shape[0]
    if gf.flow.shape[1] < 2 and gf.flow.shape[2] < 2:
        raise ValueError("flow_tv needs a grid of at least 2 cells in one direction")
    total = 0.0
    any_pair = False
    for t in range(t_minus_1):
        val = gf.valid[t]
        frame = 0.0
        if u.shape[2] >= 2:
            pair = val[:, 1:] & val[:, :-1]
            if pair.any():
                any_pair = True
                dx_u = (u[t, :, 1:] - u[t, :, :-1]) / stride
                dx_v = (v[t, :, 1:] - v[t, :, :-1]) / stride
                frame += (np.abs(dx_u[pair]).sum() + np.abs(dx_v[pair]).sum()) / pair.sum()
        if u.shape[1] >= 2:
            pair = val[1:, :] & val[:-1, :]
            if pair.any():
                any_pair = True
                dy_u = (u[t, 1:, :] - u[t, :-1, :]) / stride
                dy_v = (v[t, 1:, :] - v[t, :-1, :]) / stride
                frame += (np.abs(dy_u[pair]).sum() + np.abs(dy_v[pair]).sum()) / pair.sum()
        total += frame
    if not any_pair:
        raise ValueError("flow_tv: no valid neighbor pair at any frame")
    return total / t_minus_1


def div_curl_energy(positions: np.ndarray, visibility: np.ndarray, stride: float,
                    single_spacing: bool = False) -> float:
    """Time-averaged mean squared divergence plus curl of the flow.

    Forward differences already carry a 1/stride; the divergence and curl
    then divide by stride again (set single_spacing=True for the variant
    without the second division).  A cell is valid when it and both forward
    neighbors are visible.
    """
    gf = flow_from_positions(positions, visibility)
    if gf.flow.shape[1] < 2 or gf.flow.shape[2] < 2:
        raise ValueError("div_curl_energy needs a grid of at least 2x2 cells")
    u, v = gf.flow[..., 0], gf.flow[..., 1]
    t_minus_1 = gf.flow.shape[0]
    extra = 1.0 if single_spacing else 1.0 / stride
    total = 0.0
    any_cell = False
    for t in range(t_minus_1):
        val = gf.valid[t]
        cell = val[:-1, :-1] & val[:-1, 1:] & val[1:, :-1]
        if not cell.any():
            continue
        any_cell = True
        dx_u = (u[t, :-1, 1:] - u[t, :-1, :-1]) / stride
        dx_v = (v[t, :-1, 1:] - v[t, :-1, :-1]) / stride
        dy_u = (u[t, 1:, :-1] - u[t, :-1, :-1]) / stride
        dy_v = (v[t, 1:, :-1] - v[t, :-1, :-1]) / stride
        div = (dx_u + dy_v) * extra
        curl = (dx_v - dy_u) * extra
        total += (div[cell] ** 2 + curl[cell] ** 2).mean()
    if not any_cell:
        raise ValueError("div_curl_energy: no valid cell at any frame")
    return total / t_minus_1


def vepe(pred: np.ndarray, target: np.ndarray, visibility: np.ndarray) -> float:
    """Visibility-weighted mean Euclidean endpoint error, in pixels."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    vis = np.asarray(visibility).astype(bool)
    if pred.shape != target.shape or pred.shape[:-1] != vis.shape:
        raise ValueError(f"vepe: shape mismatch {pred.shape} vs {target.shape} vs {vis.shape}")
    if not vis.any():
        raise ValueError("vepe: no visible points")
    err = np.linalg.norm(pred - target, axis=-1)
    return float(err[vis].mean())


def explained_variance(values: np.ndarray, visibility: np.ndarray) -> np.ndarray:
    """Percentage of variance attributable to grid location, per value axis.

    values: (T, N) or (T, N, A); visibility: (T, N).  Per cell, a
    visibility-weighted time mean and variance; the between-cell variance of
    the means over (between + mean within) gives the explained share.
    """
    values = np.asarray(values, dtype=np.float64)
    vis = np.asarray(visibility, dtype=np.float64)
    squeeze = values.ndim == 2
    if squeeze:
        values = values[..., None]
    t, n, axes = values.shape
    if vis.shape != (t, n):
        raise ValueError(f"explained_variance: visibility {vis.shape} != {(t, n)}")
    counts = vis.sum(axis=0)
    keep = counts > 0
    if keep.sum() < 2:
        raise ValueError("explained_variance: need >= 2 cells with visible samples")
    out = np.empty(axes)
    for a in range(axes):
        d = values[..., a]
        mu = (vis * d).sum(axis=0)[keep] / counts[keep]
        mu_full = np.zeros(n)
        mu_full[keep] = mu
        sigma2 = (vis * (d - mu_full[None, :]) ** 2).sum(axis=0)[keep] / counts[keep]
        between = mu.var()
        within = sigma2.mean()
        denom = between + within
        if denom == 0:
            raise ValueError("explained_variance: zero total variance")
        out[a] = 100.0 * between / denom
    return out[0] if squeeze else out
