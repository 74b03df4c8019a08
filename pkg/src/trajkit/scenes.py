"""Deterministic synthetic scene suites for training, evaluation, and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import motionlab, trajfield
from .flowgen import PairDataset, SegmentDataset, pairs_from_fields, segments_from_fields
from .motionlab import MotionSpec

KIND_MIXES = ("smooth", "translation", "jitter", "mixed-regions")


@dataclass
class SceneGeometry:
    height: int = 32
    width: int = 32
    stride: int = 8
    frames: int = 16
    past: int = 8


def scene_specs(kind_mix: str, n: int, seed: int, geom: SceneGeometry,
                frames: int | None = None) -> list:
    """A reproducible list of motion specs.

    smooth: round-robin translation/zoom/rotation/static with random rates.
    translation: evenly spread directions, random speeds.
    jitter: alternating-sign overlay on slow translations.
    """
    rng = np.random.default_rng(seed)
    base = dict(frames=frames if frames is not None else geom.frames,
                height=geom.height, width=geom.width, stride=geom.stride)
    specs = []
    for i in range(n):
        if kind_mix == "translation":
            angle = 2 * np.pi * i / n
            speed = 0.3 + 0.5 * rng.random()
            specs.append(MotionSpec("translation",
                                    velocity=(speed * np.cos(angle), speed * np.sin(angle)),
                                    **base))
        elif kind_mix == "smooth":
            kind = ("translation", "zoom", "rotation", "static")[i % 4]
            if kind == "translation":
                angle = 2 * np.pi * rng.random()
                speed = 0.2 + 0.6 * rng.random()
                specs.append(MotionSpec("translation",
                                        velocity=(speed * np.cos(angle), speed * np.sin(angle)),
                                        **base))
            elif kind == "zoom":
                specs.append(MotionSpec("zoom", zoom_rate=float(rng.uniform(-0.012, 0.012)),
                                        **base))
            elif kind == "rotation":
                specs.append(MotionSpec("rotation",
                                        angular_rate=float(rng.uniform(-0.03, 0.03)), **base))
            else:
                specs.append(MotionSpec("static", **base))
        elif kind_mix == "jitter":
            angle = 2 * np.pi * rng.random()
            speed = 0.2 + 0.4 * rng.random()
            inner = MotionSpec("translation",
                               velocity=(speed * np.cos(angle), speed * np.sin(angle)), **base)
            specs.append(MotionSpec("jitter-overlay", base=inner,
                                    jitter_amplitude=float(rng.uniform(0.2, 0.45)),
                                    jitter_axis=("x", "y", "both")[i % 3], **base))
        else:
            raise ValueError(f"unknown kind mix {kind_mix!r}; choose from {KIND_MIXES}")
    return specs


def fields_from_specs(specs) -> list:
    return [trajfield.to_offsets(trajfield.rasterize(motionlab.generate(s))) for s in specs]


def segment_dataset(kind_mix: str, n: int, seed: int, geom: SceneGeometry,
                    frames: int | None = None) -> SegmentDataset:
    specs = scene_specs(kind_mix, n, seed, geom,
                        frames=frames if frames is not None else geom.past)
    return segments_from_fields(fields_from_specs(specs))


def pair_dataset(kind_mix: str, n: int, seed: int, geom: SceneGeometry) -> PairDataset:
    specs = scene_specs(kind_mix, n, seed, geom, frames=geom.frames)
    return pairs_from_fields(fields_from_specs(specs), geom.past)


def mixed_region_tracks(seed: int, geom: SceneGeometry, moving_fraction: float = 0.5,
                        oscillate: bool = True) -> trajfield.SparseTracks:
    """A scene with a static background and a moving block of cells, used by
    the variance-decomposition analysis.

    Oscillating blocks displace back and forth so their time-mean offset
    stays near zero; translating blocks drift slowly.
    """
    rng = np.random.default_rng(seed)
    static = motionlab.generate(MotionSpec("static", frames=geom.frames, height=geom.height,
                                           width=geom.width, stride=geom.stride))
    coords = static.coords.copy()
    hc, wc = static.coarse_shape
    n = hc * wc
    n_moving = max(1, int(round(moving_fraction * n)))
    moving = rng.permutation(n)[:n_moving]
    amp = 1.0 + 2.0 * rng.random()
    angle = 2 * np.pi * rng.random()
    direction = np.array([np.cos(angle), np.sin(angle)])
    t = np.arange(geom.frames, dtype=np.float64)
    if oscillate:
        wave = amp * np.sin(2 * np.pi * t / max(4, geom.frames // 2))
    else:
        wave = 0.4 * amp * t
    coords[:, moving, :] += wave[:, None, None] * direction[None, None, :]
    vis = np.ones(coords.shape[:2], dtype=np.uint8)
    return trajfield.SparseTracks(coords, vis, geom.stride, geom.height, geom.width)
