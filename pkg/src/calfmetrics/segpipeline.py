"""Threshold segmentation with shape/area/extent selection criteria.

The second entry point consumes externally produced polygon labels (the
output format of learned segmentation models) so downstream metric code is
agnostic to where a mask came from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import imgcore
from .errors import DuplicateLabel, InvalidParams
from .ingest import DepthFrame, MaskLabel

SHAPE_MISMATCH = "ShapeMismatch"
AREA_OUT_OF_RANGE = "AreaOutOfRange"
EXTENT_OUT_OF_RANGE = "ExtentOutOfRange"


@dataclass
class ThresholdParams:
    """Tunable constants of the rule-based pipeline.

    Defaults are the production values for 1280x720 frames: hue cut at 60,
    shape distance at most 0.8, region area within [80k, 200k] px^2 and both
    bounding-box extents within [300, 900] px. Synthetic scenes at other
    scales supply their own windows.
    """

    template: np.ndarray
    hue_threshold: int = 60
    shape_match_max: float = 0.8
    area_min: float = 80_000.0
    area_max: float = 200_000.0
    extent_min: float = 300.0
    extent_max: float = 900.0
    kernel_radius: int = 1

    def __post_init__(self):
        if not 0 <= self.hue_threshold <= 255:
            raise InvalidParams("hue_threshold must be in [0, 255]")
        if self.shape_match_max <= 0:
            raise InvalidParams("shape_match_max must be > 0")
        if not self.area_min < self.area_max:
            raise InvalidParams("area window is empty")
        if not self.extent_min < self.extent_max:
            raise InvalidParams("extent window is empty")
        if self.kernel_radius < 1:
            raise InvalidParams("kernel_radius must be >= 1")


@dataclass
class SegOutcome:
    """Result of segmenting one frame; failures are first-class results."""

    frame_id: str
    mask: np.ndarray | None = None
    contour: np.ndarray | None = None
    rejection_log: list[tuple[int, str]] = field(default_factory=list)
    area: float | None = None
    bbox: tuple[int, int, int, int] | None = None
    match_distance: float | None = None

    @property
    def success(self) -> bool:
        return self.mask is not None


def segment_threshold(frame: DepthFrame, params: ThresholdParams) -> SegOutcome:
    """Run the full rule-based pipeline on one frame.

    hue extraction -> binary threshold -> hole filling -> opening ->
    contour detection, then candidates are filtered by template shape
    match, area window, and bounding-box extents, in that order; only the
    first failed criterion is logged per candidate. Among survivors the
    largest area wins, ties broken by better shape match, then lower index.
    """
    template = np.asarray(params.template, dtype=bool)
    if not template.any():
        raise InvalidParams("shape template is empty")
    template_hu = imgcore.hu_moments(template)

    h, w = frame.color.shape[:2]
    hue = imgcore.rgb_to_hue(frame.color)
    mask = imgcore.binary_threshold(hue, params.hue_threshold)
    mask = imgcore.fill_holes(mask)
    mask = imgcore.morphology(mask, "open", params.kernel_radius)
    contours = imgcore.trace_contours(mask)

    outcome = SegOutcome(frame_id=frame.frame_id)
    survivors = []
    for index, contour in enumerate(contours):
        candidate = imgcore.rasterize_polygon(contour, w, h)
        distance = imgcore.i1_distance(imgcore.hu_moments(candidate), template_hu)
        if distance > params.shape_match_max:
            outcome.rejection_log.append((index, SHAPE_MISMATCH))
            continue
        area = imgcore.contour_area(contour)
        if not params.area_min <= area <= params.area_max:
            outcome.rejection_log.append((index, AREA_OUT_OF_RANGE))
            continue
        x, y, bw, bh = imgcore.bounding_rect(contour)
        if not (
            params.extent_min <= bw <= params.extent_max
            and params.extent_min <= bh <= params.extent_max
        ):
            outcome.rejection_log.append((index, EXTENT_OUT_OF_RANGE))
            continue
        survivors.append((index, contour, candidate, area, distance, (x, y, bw, bh)))

    if not survivors:
        return outcome
    survivors.sort(key=lambda s: (-s[3], s[4], s[0]))
    index, contour, candidate, area, distance, bbox = survivors[0]
    _assert_criteria(params, candidate, template_hu, area, bbox)
    outcome.mask = candidate
    outcome.contour = contour
    outcome.area = area
    outcome.bbox = bbox
    outcome.match_distance = distance
    return outcome


def _assert_criteria(params, candidate, template_hu, area, bbox) -> None:
    # post-hoc re-check: a selected contour must satisfy all three criteria
    distance = imgcore.i1_distance(imgcore.hu_moments(candidate), template_hu)
    assert distance <= params.shape_match_max
    assert params.area_min <= area <= params.area_max
    assert params.extent_min <= bbox[2] <= params.extent_max
    assert params.extent_min <= bbox[3] <= params.extent_max


def segment_from_labels(
    frame_id: str, labels: list[MaskLabel], w: int, h: int
) -> SegOutcome:
    """Build a SegOutcome from a polygon label file entry.

    A missing label is a clean "no mask" outcome; more than one label for
    the same frame is a data error.
    """
    matching = [label for label in labels if label.frame_id == frame_id]
    if len(matching) > 1:
        raise DuplicateLabel(f"{len(matching)} labels for frame {frame_id!r}")
    outcome = SegOutcome(frame_id=frame_id)
    if not matching:
        return outcome
    raw = imgcore.rasterize_polygon(matching[0].polygon, w, h)
    contours = imgcore.trace_contours(raw)
    if not contours:
        return outcome
    areas = [imgcore.contour_area(c) for c in contours]
    best = int(np.argmax(areas))
    contour = contours[best]
    outcome.mask = imgcore.rasterize_polygon(contour, w, h)
    outcome.contour = contour
    outcome.area = float(areas[best])
    outcome.bbox = imgcore.bounding_rect(contour)
    outcome.match_distance = None
    return outcome


def success_rate(outcomes: list[SegOutcome]) -> float:
    """Fraction of frames with a selected mask."""
    if not outcomes:
        return 0.0
    return sum(1 for o in outcomes if o.success) / len(outcomes)
