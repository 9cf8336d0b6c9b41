"""Synthetic detection logs: animals drifting across a few camera traps."""

from __future__ import annotations

import json

import numpy as np


def synthetic_log(n_frames: int = 50, n_cameras: int = 2, seed: int = 0) -> dict:
    """Bursts of frames 10-200 s apart; each burst holds 1-3 slowly moving animals.

    A few low-confidence false detections are sprinkled in, and cameras are
    interleaved in file order.
    """
    rng = np.random.default_rng(seed)
    images = []
    t = {c: 1_600_000_000 + 1000 * c for c in range(n_cameras)}
    animals = {c: [] for c in range(n_cameras)}
    for i in range(n_frames):
        cam = int(rng.integers(n_cameras))
        gap = int(rng.choice([10, 30, 60, 90, 150, 200]))
        t[cam] += gap
        if gap > 120 or not animals[cam]:
            animals[cam] = [list(rng.uniform(0.05, 0.55, 2)) + list(rng.uniform(0.1, 0.3, 2))
                            for _ in range(int(rng.integers(1, 4)))]
        dets = []
        for a in animals[cam]:
            a[0] = float(np.clip(a[0] + rng.normal(0, 0.03), 0, 1 - a[2]))
            a[1] = float(np.clip(a[1] + rng.normal(0, 0.03), 0, 1 - a[3]))
            dets.append({"conf": round(float(rng.uniform(0.3, 0.99)), 3),
                         "bbox": [round(v, 4) for v in a]})
        if rng.random() < 0.2:
            dets.append({"conf": round(float(rng.uniform(0.05, 0.5)), 3),
                         "bbox": [0.7, 0.7, 0.2, 0.2]})
        images.append({"file": f"cam{cam}/img{i:04d}.jpg", "camera_id": f"cam{cam}",
                       "timestamp": t[cam], "detections": dets})
    return {"images": images}


def write_log(path, **kw) -> str:
    text = json.dumps(synthetic_log(**kw), indent=1)
    path.write_text(text)
    return text
