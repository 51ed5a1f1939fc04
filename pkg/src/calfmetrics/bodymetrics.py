"""Body-metric extraction from a segmentation mask plus depth map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, NoValidDepth, ShapeError

VOLUME_MODES = ("height", "raw_depth_sum")


@dataclass
class BodyMetrics:
    """The five per-region measurements used as weight predictors.

    ``avg_height_mm * contour_area_px2 == volume_mm_px2`` holds exactly by
    construction: missing depth pixels are imputed with the average height
    before the volume sum.
    """

    width_px: float
    length_px: float
    contour_area_px2: float
    avg_height_mm: float
    volume_mm_px2: float

    def as_tuple(self):
        return (
            self.width_px,
            self.length_px,
            self.contour_area_px2,
            self.avg_height_mm,
            self.volume_mm_px2,
        )


def extract_metrics(
    mask: np.ndarray,
    depth_mm: np.ndarray,
    camera_height_mm: float,
    mode: str = "height",
) -> BodyMetrics:
    """Measure one region.

    Per-pixel height is ``camera_height - depth`` clamped at 0 (mode
    "height"), or the raw depth value (mode "raw_depth_sum", provided for
    comparison with pipelines that summed depth directly). Zero-depth pixels
    are sensor dropouts; they contribute the average height of the valid
    in-mask pixels.
    """
    mask = np.asarray(mask, dtype=bool)
    depth_mm = np.asarray(depth_mm, dtype=np.float64)
    if mask.shape != depth_mm.shape:
        raise ShapeError(f"mask {mask.shape} vs depth {depth_mm.shape}")
    if mode not in VOLUME_MODES:
        raise ValueError(f"unknown volume mode {mode!r}")
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise EmptyMask("extract_metrics requires a non-empty mask")
    depth_in = depth_mm[ys, xs]
    valid = depth_in > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NoValidDepth("every in-mask depth pixel is missing")

    if mode == "height":
        sample = np.maximum(camera_height_mm - depth_in[valid], 0.0)
    else:
        sample = depth_in[valid]
    avg = float(sample.mean())
    area = float(len(xs))
    volume = avg * area  # imputation fills missing pixels with avg

    h = float(ys.max() - ys.min() + 1)
    w = float(xs.max() - xs.min() + 1)
    return BodyMetrics(
        width_px=min(w, h),
        length_px=max(w, h),
        contour_area_px2=area,
        avg_height_mm=avg,
        volume_mm_px2=volume,
    )


def aggregate_median(rows):
    """Component-wise median of metrics per (calf_id, obs_date).

    ``rows`` holds (calf_id, obs_date, BodyMetrics) triples; output is one
    triple per group, ordered by calf then date. Even group sizes take the
    mean of the two central order statistics.
    """
    groups: dict = {}
    for calf_id, obs_date, metrics in rows:
        groups.setdefault((calf_id, obs_date), []).append(metrics)
    out = []
    for (calf_id, obs_date), members in sorted(groups.items()):
        stacked = np.array([m.as_tuple() for m in members])
        med = np.median(stacked, axis=0)
        out.append((calf_id, obs_date, BodyMetrics(*med.tolist())))
    return out
