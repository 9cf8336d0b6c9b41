"""
Mining temporal pairs from a detection log
==========================================

A camera trap fires in bursts. Boxes that overlap across consecutive frames
of one burst are very likely the same animal, which gives positive pairs for
free. This script mines them from the bundled 50-frame log and shows how the
IoU threshold trades pair count for pair quality.
"""

from pathlib import Path

from trapforge import trapstream as ts

log = Path(__file__).resolve().parent.parent / "tests" / "data" / "detections_50.json"
raw = log.read_bytes()
sequences = ts.parse_detections(raw)

for seq in sequences:
    print(f"{seq.camera_id}: {len(seq.frames)} frames, {seq.num_detections} detections")

# %%
# Default rules: confidence above 0.5, IoU above 0.2, partner at most two
# minutes later. Every qualifying partner is kept, so one anchor may pair
# with two animals when they stand close together.

cfg = ts.MiningConfig()
manifest = ts.mine_all(sequences, cfg, ts.digest_bytes(raw))
print(f"\n{len(manifest)} pairs with {cfg}")
for pair in manifest.pairs[:5]:
    print(f"  {pair.anchor} -> {pair.partner}  iou={pair.iou:.3f}  gap={pair.gap_seconds}s")

anchors = {}
for pair in manifest.pairs:
    anchors.setdefault(pair.anchor, []).append(pair.partner)
multi = {a: p for a, p in anchors.items() if len(p) > 1}
print(f"anchors with more than one partner: {len(multi)}")

# %%
# Lower thresholds admit more pairs. The counts can only fall as the
# threshold rises because each stricter pair set is a subset of the looser one.

for alpha, count in ts.sweep_thresholds(sequences, cfg, [0.1 * i for i in range(1, 10)]):
    print(f"alpha={alpha:.1f}  {'#' * count} {count}")

# %%
# The manifest is plain JSON Lines with a header, ready for ``trapforge train --manifest``.

print("\n" + "\n".join(manifest.to_jsonl().splitlines()[:3]))
