"""Temporal positive-pair mining from camera-trap detection logs.

The detection log follows the MegaDetector batch-output layout::

    {"images": [{"file": ..., "camera_id": ..., "timestamp": 1600000000,
                 "detections": [{"conf": 0.93, "bbox": [x, y, w, h]}]}]}

with boxes given as fractions of the frame (top-left origin). Mining pairs
every confident detection with each box in a later frame of the same camera
that overlaps it above an IoU threshold within a time window.
"""

from __future__ import annotations

import bisect
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

BBOX_EPS = 1e-6


class DetectionParseError(ValueError):
    """The detection log is not a well-formed document."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        self.line = line
        self.offset = offset
        where = f" (line {line}, column {offset})" if line is not None else ""
        super().__init__(message + where)


class DetectionValidationError(ValueError):
    """A record is well-formed JSON but violates a domain invariant."""

    def __init__(self, message: str, frame_id: str | None = None):
        self.frame_id = frame_id
        prefix = f"frame {frame_id!r}: " if frame_id is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.x >= 0 and self.y >= 0):
            raise ValueError(f"bbox origin must be non-negative, got ({self.x}, {self.y})")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"bbox size must be positive, got ({self.w}, {self.h})")
        if self.x + self.w > 1 + BBOX_EPS or self.y + self.h > 1 + BBOX_EPS:
            raise ValueError(f"bbox extends past the frame: {self.as_list()}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Detection:
    frame_id: str
    timestamp: int
    camera_id: str
    bbox: BBox
    confidence: float
    det_index: int

    @property
    def key(self) -> tuple[str, int]:
        return (self.frame_id, self.det_index)


@dataclass(frozen=True)
class Frame:
    frame_id: str
    timestamp: int
    detections: tuple[Detection, ...]


@dataclass(frozen=True)
class FrameSequence:
    camera_id: str
    frames: tuple[Frame, ...]

    def __post_init__(self):
        ts = [f.timestamp for f in self.frames]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"frames of camera {self.camera_id!r} are not time-ordered")
        seen = set()
        for frame in self.frames:
            for det in frame.detections:
                if det.camera_id != self.camera_id:
                    raise DetectionValidationError(
                        f"detection belongs to camera {det.camera_id!r}", frame.frame_id)
                if det.key in seen:
                    raise DetectionValidationError(
                        f"duplicate detection index {det.det_index}", frame.frame_id)
                seen.add(det.key)

    @property
    def num_detections(self) -> int:
        return sum(len(f.detections) for f in self.frames)


@dataclass(frozen=True)
class MiningConfig:
    iou_threshold: float = 0.2
    max_gap_seconds: int = 120
    min_confidence: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold < 1.0:
            raise ValueError(f"iou_threshold must lie in [0, 1), got {self.iou_threshold}")
        if int(self.max_gap_seconds) != self.max_gap_seconds or self.max_gap_seconds <= 0:
            raise ValueError(f"max_gap_seconds must be a positive integer, got {self.max_gap_seconds}")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError(f"min_confidence must lie in [0, 1], got {self.min_confidence}")

    def to_dict(self) -> dict:
        return {"iou_threshold": self.iou_threshold,
                "max_gap_seconds": int(self.max_gap_seconds),
                "min_confidence": self.min_confidence}


@dataclass(frozen=True)
class TemporalPair:
    anchor: tuple[str, int]
    partner: tuple[str, int]
    iou: float
    gap_seconds: int

    def to_dict(self) -> dict:
        return {"anchor": {"file": self.anchor[0], "det": self.anchor[1]},
                "partner": {"file": self.partner[0], "det": self.partner[1]},
                "iou": round(float(self.iou), 6),
                "gap_s": int(self.gap_seconds)}

    @classmethod
    def from_dict(cls, d: dict) -> "TemporalPair":
        return cls(anchor=(str(d["anchor"]["file"]), int(d["anchor"]["det"])),
                   partner=(str(d["partner"]["file"]), int(d["partner"]["det"])),
                   iou=float(d["iou"]), gap_seconds=int(d["gap_s"]))


@dataclass
class PairManifest:
    config: MiningConfig
    pairs: list[TemporalPair] = field(default_factory=list)
    source_digest: str = ""

    def __post_init__(self):
        keys = [(p.anchor, p.partner) for p in self.pairs]
        if len(set(keys)) != len(keys):
            raise ValueError("pair manifest contains duplicate (anchor, partner) entries")

    def __len__(self) -> int:
        return len(self.pairs)

    def keys(self) -> set[tuple[tuple[str, int], tuple[str, int]]]:
        return {(p.anchor, p.partner) for p in self.pairs}

    def to_jsonl(self) -> str:
        header = {"config": self.config.to_dict(), "source_digest": self.source_digest,
                  "num_pairs": len(self.pairs)}
        lines = [json.dumps(header, sort_keys=True)]
        lines.extend(json.dumps(p.to_dict(), sort_keys=True) for p in self.pairs)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "PairManifest":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DetectionParseError("empty pair manifest")
        try:
            header = json.loads(lines[0])
            pairs = [TemporalPair.from_dict(json.loads(ln)) for ln in lines[1:]]
        except json.JSONDecodeError as exc:
            raise DetectionParseError(f"malformed manifest: {exc.msg}", exc.lineno, exc.colno) from exc
        except (KeyError, TypeError) as exc:
            raise DetectionParseError(f"malformed manifest record: {exc}") from exc
        return cls(config=MiningConfig(**header["config"]), pairs=pairs,
                   source_digest=header.get("source_digest", ""))


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


# -- parsing -----------------------------------------------------------------

def _require(cond: bool, message: str, frame_id: str | None = None):
    if not cond:
        raise DetectionValidationError(message, frame_id)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_detections(data: bytes | str) -> list[FrameSequence]:
    """Parse a detection log into one time-sorted sequence per camera.

    No confidence filtering happens here. Sequences are returned in
    ``camera_id`` order; frames sharing a timestamp keep file order.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DetectionParseError(f"input is not UTF-8: {exc.reason}", None, exc.start) from exc
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DetectionParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc

    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise DetectionParseError('top level must be an object with an "images" list')

    by_camera: dict[str, list[Frame]] = {}
    seen_frames: set[str] = set()
    for n, im in enumerate(doc["images"]):
        if not isinstance(im, dict):
            raise DetectionParseError(f"images[{n}] is not an object")
        frame_id = im.get("file")
        _require(isinstance(frame_id, str), f"images[{n}] has no string 'file'")
        camera_id = im.get("camera_id")
        _require(isinstance(camera_id, str), "missing string 'camera_id'", frame_id)
        ts = im.get("timestamp")
        _require(isinstance(ts, int) and not isinstance(ts, bool),
                 "timestamp must be integer seconds", frame_id)
        dets_raw = im.get("detections")
        _require(isinstance(dets_raw, list), "'detections' must be a list", frame_id)
        _require(frame_id not in seen_frames, "duplicate frame (repeated detection indices)", frame_id)
        seen_frames.add(frame_id)

        dets = []
        for i, d in enumerate(dets_raw):
            _require(isinstance(d, dict), f"detection {i} is not an object", frame_id)
            conf = d.get("conf")
            _require(_is_number(conf) and 0.0 <= conf <= 1.0,
                     f"detection {i}: confidence must lie in [0, 1]", frame_id)
            box = d.get("bbox")
            _require(isinstance(box, list) and len(box) == 4 and all(_is_number(v) for v in box),
                     f"detection {i}: bbox must be four numbers", frame_id)
            try:
                bbox = BBox(*(float(v) for v in box))
            except ValueError as exc:
                raise DetectionValidationError(f"detection {i}: {exc}", frame_id) from None
            dets.append(Detection(frame_id, ts, camera_id, bbox, float(conf), i))
        by_camera.setdefault(camera_id, []).append(Frame(frame_id, ts, tuple(dets)))

    return [FrameSequence(cam, tuple(sorted(frames, key=lambda f: f.timestamp)))
            for cam, frames in sorted(by_camera.items())]


def serialize_detections(seqs: Iterable[FrameSequence]) -> bytes:
    images = []
    for seq in seqs:
        for frame in seq.frames:
            images.append({
                "file": frame.frame_id,
                "camera_id": seq.camera_id,
                "timestamp": frame.timestamp,
                "detections": [{"conf": d.confidence, "bbox": d.bbox.as_list()}
                               for d in frame.detections],
            })
    return json.dumps({"images": images}, indent=1).encode("utf-8")


# -- geometry and mining -----------------------------------------------------

def filter_confident(seq: FrameSequence, min_confidence: float) -> FrameSequence:
    """Keep detections with confidence strictly above ``min_confidence``.

    Frames left without detections stay in the sequence.
    """
    frames = tuple(replace(f, detections=tuple(d for d in f.detections
                                               if d.confidence > min_confidence))
                   for f in seq.frames)
    return FrameSequence(seq.camera_id, frames)


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(1.0, inter / (a.area + b.area - inter))


def _candidates(seq: FrameSequence, cfg: MiningConfig):
    """Yield (anchor, partner, iou, gap) for every in-window detection pair."""
    seq = filter_confident(seq, cfg.min_confidence)
    frames = seq.frames
    times = [f.timestamp for f in frames]
    for i, fa in enumerate(frames):
        lo = bisect.bisect_right(times, fa.timestamp)
        hi = bisect.bisect_right(times, fa.timestamp + cfg.max_gap_seconds)
        for da in fa.detections:
            for fb in frames[lo:hi]:
                gap = fb.timestamp - fa.timestamp
                for db in fb.detections:
                    yield da, db, iou(da.bbox, db.bbox), gap


def _order_key(pair_and_ts):
    pair, ta, tb = pair_and_ts
    return (ta, pair.anchor[0], pair.anchor[1], tb, pair.partner[0], pair.partner[1])


def mine_pairs(seq: FrameSequence, cfg: MiningConfig = MiningConfig(),
               source_digest: str = "") -> PairManifest:
    """Emit every later-frame detection whose IoU with an anchor exceeds the threshold.

    All qualifying partners are kept: an anchor overlapping two animals in
    the next frame yields two pairs. Chains are not merged.
    """
    rows = []
    for da, db, v, gap in _candidates(seq, cfg):
        if v > cfg.iou_threshold:
            rows.append((TemporalPair(da.key, db.key, v, gap), da.timestamp, db.timestamp))
    rows.sort(key=_order_key)
    return PairManifest(cfg, [r[0] for r in rows], source_digest)


def mine_all(seqs: Sequence[FrameSequence], cfg: MiningConfig = MiningConfig(),
             source_digest: str = "") -> PairManifest:
    """Mine each camera independently and merge in camera_id order."""
    pairs = []
    for seq in sorted(seqs, key=lambda s: s.camera_id):
        pairs.extend(mine_pairs(seq, cfg).pairs)
    return PairManifest(cfg, pairs, source_digest)


def sweep_thresholds(seq: FrameSequence | Sequence[FrameSequence], cfg: MiningConfig,
                     thresholds: Sequence[float]) -> list[tuple[float, int]]:
    """Pair count at each IoU threshold (counts are non-increasing)."""
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    for t in thresholds:
        replace(cfg, iou_threshold=t)  # validates range
    seqs = [seq] if isinstance(seq, FrameSequence) else list(seq)
    ious = [v for s in seqs for _, _, v, _ in _candidates(s, cfg)]
    return [(t, sum(1 for v in ious if v > t)) for t in thresholds]
