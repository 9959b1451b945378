"""Semantic label maps, the class-category taxonomy, and boolean masks.

Label maps are single-channel 8- or 16-bit PNGs of label ids; instance maps
are single-channel 16-bit PNGs of instance ids with 0 meaning "no instance".
A ClassTable maps each label id to a (name, category) pair; the five
categories drive the pipeline:

    ROAD         drivable road surface
    FLAT_GROUND  other flat surfaces at road level (sidewalk, parking, ...)
    VERTICAL     upright objects and structures (people, cars, buildings, ...)
    SKY          sky
    VOID         unlabeled / ignore

Mask queries treat ROAD as a subset of FLAT_GROUND: asking for FLAT_GROUND
pixels includes road pixels.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DimensionMismatchError, LabelError


class Category(enum.Enum):
    ROAD = "ROAD"
    FLAT_GROUND = "FLAT_GROUND"
    VERTICAL = "VERTICAL"
    SKY = "SKY"
    VOID = "VOID"


@dataclass(frozen=True)
class ClassTable:
    """Label id -> (class name, category)."""

    entries: dict[int, tuple[str, Category]]

    def __post_init__(self):
        if not self.entries:
            raise LabelError("class table has no entries")
        for label_id, (name, cat) in self.entries.items():
            if label_id < 0:
                raise LabelError(f"label ids must be non-negative, got {label_id}")
            if not isinstance(cat, Category):
                raise LabelError(f"label {label_id} ({name}): bad category {cat!r}")
        object.__setattr__(self, "entries", dict(self.entries))

    def category_of(self, label_id: int) -> Category:
        try:
            return self.entries[label_id][1]
        except KeyError:
            raise LabelError(f"unknown label id {label_id}") from None

    def name_of(self, label_id: int) -> str:
        try:
            return self.entries[label_id][0]
        except KeyError:
            raise LabelError(f"unknown label id {label_id}") from None

    def ids_for(self, categories: set[Category]) -> np.ndarray:
        """Label ids whose category is in the set; ROAD counts as FLAT_GROUND."""
        cats = set(categories)
        if Category.FLAT_GROUND in cats:
            cats.add(Category.ROAD)
        return np.array(
            sorted(i for i, (_, c) in self.entries.items() if c in cats), dtype=np.int64
        )

    def first_id_of(self, category: Category) -> int:
        ids = sorted(i for i, (_, c) in self.entries.items() if c is category)
        if not ids:
            raise LabelError(f"class table has no {category.value} entry")
        return ids[0]

    def lookup(self) -> np.ndarray:
        """Dense id -> category-ordinal lookup array; -1 marks unknown ids."""
        size = max(self.entries) + 1
        lut = np.full(size, -1, dtype=np.int8)
        order = list(Category)
        for label_id, (_, cat) in self.entries.items():
            lut[label_id] = order.index(cat)
        return lut


# Cityscapes-style default taxonomy (full label ids, not train ids).
DEFAULT_CLASS_TABLE = ClassTable(
    {
        0: ("unlabeled", Category.VOID),
        1: ("ego vehicle", Category.VOID),
        2: ("rectification border", Category.VOID),
        3: ("out of roi", Category.VOID),
        4: ("static", Category.VOID),
        5: ("dynamic", Category.VOID),
        6: ("ground", Category.FLAT_GROUND),
        7: ("road", Category.ROAD),
        8: ("sidewalk", Category.FLAT_GROUND),
        9: ("parking", Category.FLAT_GROUND),
        10: ("rail track", Category.FLAT_GROUND),
        11: ("building", Category.VERTICAL),
        12: ("wall", Category.VERTICAL),
        13: ("fence", Category.VERTICAL),
        14: ("guard rail", Category.VERTICAL),
        15: ("bridge", Category.VERTICAL),
        16: ("tunnel", Category.VERTICAL),
        17: ("pole", Category.VERTICAL),
        18: ("polegroup", Category.VERTICAL),
        19: ("traffic light", Category.VERTICAL),
        20: ("traffic sign", Category.VERTICAL),
        21: ("vegetation", Category.VERTICAL),
        22: ("terrain", Category.FLAT_GROUND),
        23: ("sky", Category.SKY),
        24: ("person", Category.VERTICAL),
        25: ("rider", Category.VERTICAL),
        26: ("car", Category.VERTICAL),
        27: ("truck", Category.VERTICAL),
        28: ("bus", Category.VERTICAL),
        29: ("caravan", Category.VERTICAL),
        30: ("trailer", Category.VERTICAL),
        31: ("train", Category.VERTICAL),
        32: ("motorcycle", Category.VERTICAL),
        33: ("bicycle", Category.VERTICAL),
    }
)


def parse_class_table(text: str) -> ClassTable:
    """Parse the class-table document: one ``id = name, CATEGORY`` per line."""
    entries: dict[int, tuple[str, Category]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LabelError(f"class table line {lineno}: expected 'id = name, CATEGORY'")
        left, _, right = line.partition("=")
        try:
            label_id = int(left.strip())
        except ValueError:
            raise LabelError(f"class table line {lineno}: bad label id {left.strip()!r}") from None
        if "," not in right:
            raise LabelError(f"class table line {lineno}: expected 'name, CATEGORY'")
        name, _, cat_str = right.rpartition(",")
        name = name.strip()
        cat_str = cat_str.strip().upper()
        try:
            cat = Category(cat_str)
        except ValueError:
            raise LabelError(
                f"class table line {lineno}: unknown category {cat_str!r} "
                f"(expected one of {[c.value for c in Category]})"
            ) from None
        if label_id in entries:
            raise LabelError(f"class table line {lineno}: duplicate label id {label_id}")
        entries[label_id] = (name, cat)
    return ClassTable(entries)


def format_class_table(table: ClassTable) -> str:
    lines = [f"{i} = {name}, {cat.value}" for i, (name, cat) in sorted(table.entries.items())]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Mask:
    data: np.ndarray  # (H, W) bool

    def __post_init__(self):
        d = np.asarray(self.data, dtype=bool)
        if d.ndim != 2:
            raise DimensionMismatchError(f"mask must be 2D, got {d.shape}")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class SegmentationMap:
    labels: np.ndarray  # (H, W) integer label ids
    table: ClassTable

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise DimensionMismatchError(f"label grid must be non-empty 2D, got {labels.shape}")
        present = np.unique(labels)
        unknown = [int(i) for i in present if int(i) not in self.table.entries]
        if unknown:
            raise LabelError(f"label map contains ids not in the class table: {unknown}")
        labels = labels.astype(np.uint16)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def with_labels(self, labels: np.ndarray) -> "SegmentationMap":
        return SegmentationMap(labels, self.table)


@dataclass(frozen=True)
class InstanceMap:
    ids: np.ndarray  # (H, W) integer instance ids, 0 = no instance

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2 or ids.size == 0:
            raise DimensionMismatchError(f"instance grid must be non-empty 2D, got {ids.shape}")
        ids = ids.astype(np.uint16)
        ids.flags.writeable = False
        object.__setattr__(self, "ids", ids)

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    def validate_against(self, seg: SegmentationMap) -> None:
        """Dimensions must match and each instance must lie under one class label."""
        if self.ids.shape != seg.labels.shape:
            raise DimensionMismatchError(
                f"instance map {self.ids.shape} does not match segmentation {seg.labels.shape}"
            )
        for inst_id in np.unique(self.ids):
            if inst_id == 0:
                continue
            labels_under = np.unique(seg.labels[self.ids == inst_id])
            if labels_under.size > 1:
                raise LabelError(
                    f"instance {int(inst_id)} spans multiple class labels: "
                    f"{[int(x) for x in labels_under]}"
                )


def load_labels(data: bytes, table: ClassTable) -> SegmentationMap:
    """Decode a single-channel 8/16-bit label PNG and validate it against the table."""
    arr = np.array(Image.open(io.BytesIO(data)))
    if arr.ndim != 2:
        raise LabelError(f"label image must be single-channel, got shape {arr.shape}")
    if arr.size == 0:
        raise LabelError("label image has zero pixels")
    if arr.dtype not in (np.uint8, np.uint16, np.int32):
        raise LabelError(f"label image must be 8- or 16-bit integer, got {arr.dtype}")
    return SegmentationMap(arr.astype(np.uint16), table)


def load_instances(data: bytes) -> InstanceMap:
    arr = np.array(Image.open(io.BytesIO(data)))
    if arr.ndim != 2:
        raise LabelError(f"instance image must be single-channel, got shape {arr.shape}")
    return InstanceMap(arr.astype(np.uint16))


def encode_labels(seg: SegmentationMap) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(seg.labels.astype(np.uint16)).save(buf, format="PNG")
    return buf.getvalue()


def encode_instances(instances: InstanceMap) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(instances.ids.astype(np.uint16)).save(buf, format="PNG")
    return buf.getvalue()


def mask_for(seg: SegmentationMap, categories: set[Category]) -> Mask:
    """Pixels whose label's category is in the set (ROAD counts as FLAT_GROUND)."""
    if not categories:
        return Mask(np.zeros(seg.labels.shape, dtype=bool))
    ids = seg.table.ids_for(categories)
    return Mask(np.isin(seg.labels, ids))


@dataclass(frozen=True)
class Component:
    """One 4-connected region of a mask."""

    pixels: np.ndarray  # (N, 2) row, col pairs in raster order
    top: int
    bottom: int  # inclusive
    left: int
    right: int   # inclusive

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def connected_components(mask: Mask) -> list[Component]:
    """4-connected components of the true pixels, ordered by (top row, left col)."""
    labeled, n = ndimage.label(mask.data, structure=_FOUR_CONN)
    comps = []
    for idx in range(1, n + 1):
        rows, cols = np.nonzero(labeled == idx)
        comps.append(
            Component(
                pixels=np.column_stack([rows, cols]),
                top=int(rows.min()),
                bottom=int(rows.max()),
                left=int(cols.min()),
                right=int(cols.max()),
            )
        )
    comps.sort(key=lambda c: (c.top, c.left))
    return comps
