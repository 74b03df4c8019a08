"""Camera-motion phrases from raw tracks.

Estimates global translation, zoom, roll, and a shake score from track
displacements, then maps them to a small caption vocabulary.
"""

import numpy as np

from trajkit.motionlab import MotionSpec, caption, estimate_camera, generate

H = W = 64
base = dict(frames=10, height=H, width=W, stride=8)

scenes = {
    "fast pan": MotionSpec("translation", velocity=(4.0, 0.0), **base),
    "slow tilt": MotionSpec("translation", velocity=(0.0, 0.15), **base),
    "zoom in": MotionSpec("zoom", zoom_rate=0.01, **base),
    "roll": MotionSpec("rotation", angular_rate=0.01, **base),
    "static": MotionSpec("static", **base),
}

for name, spec in scenes.items():
    stats = estimate_camera(generate(spec))
    phrase = caption(stats, H, W)
    print(f"{name:10s} -> t=({stats.translation[0]:+.2f},{stats.translation[1]:+.2f}) "
          f"zoom={stats.zoom:+.4f} roll={stats.roll:+.4f} shake={stats.shake:.3f}"
          f"  =>  \"{phrase}\"")

# handheld: systematic motion buried under per-frame shake
tracks = generate(MotionSpec("translation", velocity=(0.2, 0.0), **base))
shaken = tracks.coords + np.random.default_rng(0).normal(size=tracks.coords.shape) * 2.0
from trajkit.trajfield import SparseTracks
stats = estimate_camera(SparseTracks(shaken, tracks.visibility, 8, H, W))
print(f"{'shaky':10s} -> shake={stats.shake:.3f}  =>  \"{caption(stats, H, W)}\"")
