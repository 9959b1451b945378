"""Per-object depth ranking and depth-description sentences.

Each qualifying instance gets a depth statistic over its mask, a 1-based
rank from nearest to farthest, and a templated sentence:

    "This object seems to be 7.0 meters and ranks as the 1-st farthest in distance."

Depths render with one fractional digit; ordinals are hyphenated (1-st,
2-nd, 3-rd, 4-th, ..., 11-th, 12-th, 13-th, 21-st, ...).  Captions are
supplied externally and concatenated ahead of the depth sentences.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap
from .errors import DimensionMismatchError, SceneDepthError
from .segmentation import ClassTable, InstanceMap, SegmentationMap

DEFAULT_MIN_PIXELS = 50

_TEMPLATE = "This object seems to be {depth} meters and ranks as the {rank} farthest in distance."
_SENTENCE_RE = re.compile(
    r"^This object seems to be (\d+\.\d) meters and ranks as the "
    r"(\d+)-(?:st|nd|rd|th) farthest in distance\.$"
)


@dataclass(frozen=True)
class ObjectDepth:
    instance_id: int
    class_name: str
    depth_m: float
    rank: int
    pixel_count: int

    def __post_init__(self):
        if not (self.depth_m > 0):
            raise SceneDepthError(f"object depth must be positive, got {self.depth_m}")
        if self.rank < 1:
            raise SceneDepthError(f"rank must be 1-based, got {self.rank}")


def ordinal(n: int) -> str:
    """Hyphenated English ordinal: 1-st, 2-nd, 3-rd, 4-th, 11-th, 21-st, ..."""
    if 10 < n % 100 < 14:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}-{suffix}"


def object_depths(
    scene: DepthMap,
    instances: InstanceMap,
    seg: SegmentationMap,
    table: ClassTable | None = None,
    min_pixels: int = DEFAULT_MIN_PIXELS,
    aggregate: str = "median",
) -> list[ObjectDepth]:
    """One entry per instance with at least min_pixels valid non-sky pixels.

    The depth statistic is the median (or mean) of the scene depth over the
    instance mask.  Ranks run 1..N from nearest to farthest; exact depth ties
    break by instance id ascending.
    """
    if min_pixels < 1:
        raise ValueError(f"min_pixels must be >= 1, got {min_pixels}")
    if aggregate not in ("median", "mean"):
        raise ValueError(f"aggregate must be 'median' or 'mean', got {aggregate!r}")
    table = table or seg.table
    if instances.ids.shape != scene.values.shape:
        raise DimensionMismatchError(
            f"instance map {instances.ids.shape} does not match depth {scene.values.shape}"
        )
    instances.validate_against(seg)

    usable = scene.valid & ~scene.sky
    measured: list[tuple[float, int, str, int]] = []
    for inst_id in np.unique(instances.ids):
        if inst_id == 0:
            continue
        mask = instances.ids == inst_id
        sel = mask & usable
        count = int(sel.sum())
        if count < min_pixels:
            continue
        depths = scene.values[sel]
        d = float(np.median(depths)) if aggregate == "median" else float(depths.mean())
        class_name = table.name_of(int(seg.labels[mask][0]))
        measured.append((d, int(inst_id), class_name, count))

    measured.sort(key=lambda t: (t[0], t[1]))
    return [
        ObjectDepth(instance_id=inst_id, class_name=name, depth_m=d, rank=r, pixel_count=count)
        for r, (d, inst_id, name, count) in enumerate(measured, start=1)
    ]


def render_description(obj: ObjectDepth) -> str:
    return _TEMPLATE.format(depth=f"{obj.depth_m:.1f}", rank=ordinal(obj.rank))


@dataclass(frozen=True)
class CombinedText:
    """Caption sentences followed by depth sentences ordered by rank."""

    captions: tuple[str, ...]
    objects: tuple[ObjectDepth, ...]

    def __post_init__(self):
        ranks = [o.rank for o in self.objects]
        if ranks != sorted(ranks):
            raise SceneDepthError("objects must be ordered by rank ascending")

    @property
    def depth_sentences(self) -> tuple[str, ...]:
        return tuple(render_description(o) for o in self.objects)

    def to_text(self) -> str:
        return " ".join(list(self.captions) + list(self.depth_sentences))

    def to_json(self) -> str:
        payload = {
            "captions": list(self.captions),
            "objects": [
                {
                    "id": o.instance_id,
                    "class": o.class_name,
                    "d": round(o.depth_m, 6),
                    "r": o.rank,
                    "sentence": render_description(o),
                }
                for o in self.objects
            ],
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CombinedText":
        payload = json.loads(text)
        objs = tuple(
            ObjectDepth(
                instance_id=o["id"],
                class_name=o["class"],
                depth_m=o["d"],
                rank=o["r"],
                pixel_count=o.get("pixel_count", 0),
            )
            for o in payload["objects"]
        )
        return cls(captions=tuple(payload["captions"]), objects=objs)


def combine_text(captions: list[str], objects: list[ObjectDepth]) -> CombinedText:
    """Captions in the given order, then depth sentences by rank ascending."""
    ordered = tuple(sorted(objects, key=lambda o: o.rank))
    return CombinedText(captions=tuple(captions), objects=ordered)


def parse_combined_text(text: str) -> tuple[list[str], list[tuple[float, int]]]:
    """Invert to_text(): returns (captions, [(depth, rank), ...]).

    Depth sentences are recognized by the exact template; the remaining
    prefix splits into captions at sentence boundaries.  Captions containing
    internal '. ' sequences are not round-trippable through the text form
    (the JSON form is lossless).
    """
    if not text:
        return [], []
    parts = text.split(". ")
    sentences = [p + "." for p in parts[:-1]] + [parts[-1]]
    captions: list[str] = []
    parsed: list[tuple[float, int]] = []
    for s in sentences:
        m = _SENTENCE_RE.match(s)
        if m:
            parsed.append((float(m.group(1)), int(m.group(2))))
        else:
            captions.append(s)
    return captions, parsed
