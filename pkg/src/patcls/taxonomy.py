"""Label spaces for both classification tasks.

The image-type task is a flat 10-class set. The perspective task is a small
rooted hierarchy: a drawing is either a perspective view or one of six
orthographic views grouped in left/right, bottom/top, and front/rear pairs.
The hierarchy is cut at three granularities (C2, C4, C7), and fine labels
roll up to coarser ones by walking the ancestor chain.

Perspective labels originate from figure captions; a small priority-ordered
keyword table turns caption text into leaf labels (weak labeling).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError

IMAGE_TYPE_NAMES = (
    "block_circuit",
    "chemical",
    "drawing",
    "flowchart",
    "genesequence",
    "graph",
    "maths",
    "program",
    "symbol",
    "table",
)

# C7 leaves, ordinal order 0..6.
PERSPECTIVE_LEAF_NAMES = (
    "left",
    "right",
    "bottom",
    "top",
    "front",
    "rear",
    "perspective_view",
)

ROOT = "root"

_PARENTS = {
    "perspective_view": ROOT,
    "non_perspective": ROOT,
    "left_right": "non_perspective",
    "bottom_top": "non_perspective",
    "front_rear": "non_perspective",
    "left": "left_right",
    "right": "left_right",
    "bottom": "bottom_top",
    "top": "bottom_top",
    "front": "front_rear",
    "rear": "front_rear",
}

_DISPLAY_NAMES = {
    "block_circuit": "Block Circuit",
    "perspective_view": "Perspective View",
    "non_perspective": "Non-Perspective",
    "left_right": "Left-Right",
    "bottom_top": "Bottom-Top",
    "front_rear": "Front-Rear",
}

TASKS = ("image_type", "perspective")


@dataclass(frozen=True)
class ImageTypeLabel:
    name: str
    ordinal: int


@dataclass(frozen=True)
class PerspectiveLabel:
    name: str
    ordinal: int


@dataclass(frozen=True)
class GranularityLevel:
    """One cut of the perspective hierarchy (C2, C4, or C7)."""

    tag: str
    class_names: tuple[str, ...]

    @property
    def class_count(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class LabelTaxonomy:
    """Rooted perspective hierarchy with parent/child lookups."""

    parents: dict[str, str] = field(default_factory=lambda: dict(_PARENTS))

    def parent(self, name: str) -> str:
        if name not in self.parents:
            raise ValidationError(f"unknown taxonomy node: {name!r}")
        return self.parents[name]

    def children(self, name: str) -> tuple[str, ...]:
        if name != ROOT and name not in self.parents:
            raise ValidationError(f"unknown taxonomy node: {name!r}")
        return tuple(c for c, p in self.parents.items() if p == name)

    def ancestors(self, name: str) -> tuple[str, ...]:
        """Chain from the node itself up to (excluding) the root."""
        chain = [name]
        while (up := self.parent(chain[-1])) != ROOT:
            chain.append(up)
        return tuple(chain)

    @property
    def leaves(self) -> tuple[str, ...]:
        return PERSPECTIVE_LEAF_NAMES


LEVELS = {
    "C2": GranularityLevel("C2", ("perspective_view", "non_perspective")),
    "C4": GranularityLevel(
        "C4", ("perspective_view", "left_right", "bottom_top", "front_rear")
    ),
    "C7": GranularityLevel("C7", PERSPECTIVE_LEAF_NAMES),
}


@dataclass(frozen=True)
class CaptionRule:
    """Substring pattern mapping caption text to a C7 leaf; lower priority wins."""

    pattern: str
    target: str
    priority: int


# Priorities: 0 perspective, 10 long specific phrases, 20 "X side view",
# 30 generic "X view". Specific phrasings must outrank generic ones.
_DEFAULT_RULES = (
    (0, "perspective view", "perspective_view"),
    (10, "left side elevational view", "left"),
    (10, "right side elevational view", "right"),
    (10, "front elevational view", "front"),
    (10, "rear elevational view", "rear"),
    (10, "bottom plan view", "bottom"),
    (10, "top plan view", "top"),
    (20, "left side view", "left"),
    (20, "right side view", "right"),
    (30, "left view", "left"),
    (30, "right view", "right"),
    (30, "bottom view", "bottom"),
    (30, "top view", "top"),
    (30, "front view", "front"),
    (30, "rear view", "rear"),
)


def image_type_labels() -> tuple[ImageTypeLabel, ...]:
    """The 10 image-type labels in fixed ordinal order."""
    return tuple(ImageTypeLabel(n, i) for i, n in enumerate(IMAGE_TYPE_NAMES))


def perspective_labels() -> tuple[PerspectiveLabel, ...]:
    """The 7 perspective leaf labels in fixed ordinal order."""
    return tuple(PerspectiveLabel(n, i) for i, n in enumerate(PERSPECTIVE_LEAF_NAMES))


def perspective_taxonomy() -> LabelTaxonomy:
    return LabelTaxonomy()


def granularity_level(tag: str) -> GranularityLevel:
    key = tag.upper()
    if key not in LEVELS:
        raise ValidationError(f"unknown granularity level: {tag!r} (expected C2, C4, or C7)")
    return LEVELS[key]


def task_class_names(task: str) -> tuple[str, ...]:
    """Ordered class names a manifest of the given task is validated against."""
    if task == "image_type":
        return IMAGE_TYPE_NAMES
    if task == "perspective":
        return PERSPECTIVE_LEAF_NAMES
    raise ValidationError(f"unknown task: {task!r} (expected one of {TASKS})")


def coarsen(label: str, level: str | GranularityLevel) -> str:
    """Map a C7 leaf to its class at the requested granularity level.

    Returns the unique ancestor-or-self that is a member of the level;
    perspective_view belongs to every level and maps to itself.
    """
    if isinstance(level, str):
        level = granularity_level(level)
    if label not in PERSPECTIVE_LEAF_NAMES:
        raise ValidationError(f"not a C7 leaf: {label!r}")
    members = set(level.class_names)
    for node in perspective_taxonomy().ancestors(label):
        if node in members:
            return node
    raise ValidationError(f"no ancestor of {label!r} at level {level.tag}")


def display_name(name: str) -> str:
    """Human-readable form of an internal snake_case class name."""
    return _DISPLAY_NAMES.get(name, name.capitalize())


def default_caption_rules() -> tuple[CaptionRule, ...]:
    """The shipped caption-keyword table."""
    return tuple(CaptionRule(p, t, prio) for prio, p, t in _DEFAULT_RULES)


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def parse_perspective_caption(
    caption: str, rules: tuple[CaptionRule, ...] | None = None
) -> str | None:
    """Extract a C7 leaf label from free caption text, or None if no rule matches.

    Matching is case-insensitive substring search on whitespace-normalized
    text. Among matching rules the lowest priority wins; ties break by
    longest pattern, then lexicographically smallest pattern, so storage
    order never matters.
    """
    if rules is None:
        rules = default_caption_rules()
    text = _normalize(caption)
    hits = [r for r in rules if r.pattern in text]
    if not hits:
        return None
    best = min(hits, key=lambda r: (r.priority, -len(r.pattern), r.pattern))
    return best.target


def load_caption_rules(path: str) -> tuple[CaptionRule, ...]:
    """Load a caption-rules file: ``priority<TAB>pattern<TAB>target`` per line.

    Lines starting with '#' and blank lines are skipped. Malformed lines
    (wrong field count, non-integer priority, unknown target, duplicate
    pattern) raise ValidationError naming the line number.
    """
    rules: list[CaptionRule] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValidationError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            prio_s, pattern_raw, target = (p.strip() for p in parts)
            try:
                priority = int(prio_s)
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: priority is not an integer: {prio_s!r}"
                ) from None
            pattern = _normalize(pattern_raw)
            if not pattern:
                raise ValidationError(f"{path}:{lineno}: empty pattern")
            if target not in PERSPECTIVE_LEAF_NAMES:
                raise ValidationError(
                    f"{path}:{lineno}: target {target!r} is not a C7 leaf"
                )
            if pattern in seen:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate pattern {pattern!r} "
                    f"(first defined on line {seen[pattern]})"
                )
            seen[pattern] = lineno
            rules.append(CaptionRule(pattern, target, priority))
    return tuple(rules)
