"""Dataset loading: manifests, depth-map CSVs, color frames, polygon labels.

File formats::

    manifest.csv   header calf_id,obs_date,age_days,body_weight_lb,frame_id;
                   one row per frame; empty body_weight_lb means "not weighed"
    depth CSV      H rows x W comma-separated values, no header; 0 = missing
    color frame    8-bit RGB PNG
    labels.jsonl   {"frame_id": "...", "polygon": [x1, y1, x2, y2, ...]}

Loaders never repair defects silently: every problem raises a typed error
naming the file and the offending line or record.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ConsistencyError,
    DegeneratePolygon,
    PairMismatch,
    ParseError,
    SchemaError,
    ShapeError,
)

MANIFEST_COLUMNS = ("calf_id", "obs_date", "age_days", "body_weight_lb", "frame_id")


@dataclass
class CalfObservation:
    """One calf on one observation date, with its associated frames."""

    calf_id: str
    obs_date: date
    age_days: int
    body_weight_lb: float | None
    frame_ids: list[str] = field(default_factory=list)


@dataclass
class MaskLabel:
    """Polygon annotation of the target contour for one frame."""

    frame_id: str
    polygon: np.ndarray  # (n, 2) float, n >= 3


@dataclass
class DepthFrame:
    """Paired color raster and depth map for one video frame."""

    frame_id: str
    color: np.ndarray  # (h, w, 3) uint8
    depth_mm: np.ndarray  # (h, w) float, 0 = missing
    camera_height_mm: float

    def __post_init__(self):
        if self.color.shape[:2] != self.depth_mm.shape:
            raise PairMismatch(
                f"frame {self.frame_id}: color {self.color.shape[:2]} vs "
                f"depth {self.depth_mm.shape}"
            )
        if self.camera_height_mm <= 0:
            raise ValueError("camera_height_mm must be positive")


def load_manifest(path) -> list[CalfObservation]:
    """Parse a manifest into observations grouped by (calf, date).

    Rows are grouped so each observation carries all of its frame ids; the
    result is ordered by calf id, then observation date. Duplicated frame
    rows and per-calf age inversions are rejected.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in MANIFEST_COLUMNS:
            if col not in header:
                raise SchemaError(col, path)
        groups: dict[tuple[str, date], CalfObservation] = {}
        seen_frames: set[tuple[str, date, str]] = set()
        for lineno, row in enumerate(reader, start=2):
            calf_id = (row["calf_id"] or "").strip()
            frame_id = (row["frame_id"] or "").strip()
            if not calf_id or not frame_id:
                raise ParseError("empty calf_id or frame_id", lineno, path)
            try:
                obs_date = date.fromisoformat(row["obs_date"].strip())
            except (ValueError, AttributeError):
                raise ParseError(f"bad obs_date {row['obs_date']!r}", lineno, path) from None
            try:
                age_days = int(row["age_days"])
            except (TypeError, ValueError):
                raise ParseError(f"bad age_days {row['age_days']!r}", lineno, path) from None
            if age_days < 0:
                raise ParseError(f"negative age_days {age_days}", lineno, path)
            weight_raw = (row["body_weight_lb"] or "").strip()
            if weight_raw == "":
                weight = None
            else:
                try:
                    weight = float(weight_raw)
                except ValueError:
                    raise ParseError(f"bad body_weight_lb {weight_raw!r}", lineno, path) from None
                if not math.isfinite(weight) or weight <= 0:
                    raise ParseError(f"body_weight_lb must be > 0, got {weight}", lineno, path)

            key = (calf_id, obs_date, frame_id)
            if key in seen_frames:
                raise ConsistencyError(
                    f"duplicate frame row {key} at line {lineno}", calf_id=calf_id
                )
            seen_frames.add(key)

            obs = groups.get((calf_id, obs_date))
            if obs is None:
                groups[(calf_id, obs_date)] = CalfObservation(
                    calf_id, obs_date, age_days, weight, [frame_id]
                )
            else:
                if obs.age_days != age_days or obs.body_weight_lb != weight:
                    raise ConsistencyError(
                        f"calf {calf_id} on {obs_date}: conflicting age/weight "
                        f"at line {lineno}",
                        calf_id=calf_id,
                    )
                obs.frame_ids.append(frame_id)

    observations = sorted(groups.values(), key=lambda o: (o.calf_id, o.obs_date))
    by_calf: dict[str, list[CalfObservation]] = {}
    for obs in observations:
        by_calf.setdefault(obs.calf_id, []).append(obs)
    for calf_id, series in by_calf.items():
        for earlier, later in zip(series, series[1:]):
            if later.age_days <= earlier.age_days:
                raise ConsistencyError(
                    f"calf {calf_id}: age {later.age_days} on {later.obs_date} "
                    f"does not increase from {earlier.age_days} on {earlier.obs_date}",
                    calf_id=calf_id,
                )
    return observations


def write_manifest(path, observations: list[CalfObservation]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for obs in observations:
            weight = "" if obs.body_weight_lb is None else repr(float(obs.body_weight_lb))
            for frame_id in obs.frame_ids:
                writer.writerow(
                    [obs.calf_id, obs.obs_date.isoformat(), obs.age_days, weight, frame_id]
                )


def load_depth_csv(path, expected_w: int, expected_h: int) -> np.ndarray:
    """Read a depth map, checking it is exactly expected_h x expected_w."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    while lines and lines[-1] == "":
        lines.pop()
    if len(lines) != expected_h:
        raise PairMismatch(f"{path}: {len(lines)} rows, expected {expected_h}")
    grid = np.empty((expected_h, expected_w), dtype=np.float64)
    for i, line in enumerate(lines):
        fields = line.split(",")
        if len(fields) != expected_w:
            raise ShapeError(
                f"{path}: row {i + 1} has {len(fields)} values, expected {expected_w}",
                row=i + 1,
            )
        try:
            values = np.array(fields, dtype=np.float64)
        except ValueError:
            raise ParseError("non-numeric depth value", i + 1, path) from None
        if not np.isfinite(values).all() or (values < 0).any():
            raise ParseError("depth values must be finite and >= 0", i + 1, path)
        grid[i] = values
    return grid


def write_depth_csv(path, grid: np.ndarray) -> None:
    """Write a depth map; integral grids are emitted without decimal points."""
    import pandas as pd

    arr = np.asarray(grid)
    if np.issubdtype(arr.dtype, np.integer) or np.all(arr == np.rint(arr)):
        frame = pd.DataFrame(arr.astype(np.int64))
        frame.to_csv(path, header=False, index=False, lineterminator="\n")
    else:
        frame = pd.DataFrame(arr)
        frame.to_csv(
            path, header=False, index=False, float_format="%.3f", lineterminator="\n"
        )


def load_color_png(path) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.uint8)


def save_color_png(path, img: np.ndarray) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def load_mask_labels(path) -> list[MaskLabel]:
    """Parse a JSON-lines polygon label file."""
    path = Path(path)
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                raise ParseError("invalid JSON record", lineno, path) from None
            frame_id = record.get("frame_id")
            flat = record.get("polygon")
            if not isinstance(frame_id, str) or not isinstance(flat, list):
                raise ParseError("record needs frame_id and polygon", lineno, path)
            if len(flat) % 2 != 0:
                raise ParseError("polygon has an odd coordinate count", lineno, path)
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in flat):
                raise ParseError("polygon coordinates must be finite numbers", lineno, path)
            if len(flat) < 6:
                raise DegeneratePolygon(
                    f"frame {frame_id}: polygon needs >= 3 vertices at line {lineno}"
                )
            polygon = np.array(flat, dtype=np.float64).reshape(-1, 2)
            labels.append(MaskLabel(frame_id=frame_id, polygon=polygon))
    return labels


def write_mask_labels(path, labels: list[MaskLabel]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label in labels:
            flat = [float(v) for v in np.asarray(label.polygon).reshape(-1)]
            flat = [int(v) if v == int(v) else v for v in flat]
            fh.write(json.dumps({"frame_id": label.frame_id, "polygon": flat}) + "\n")


def load_depth_frame(frames_dir, frame_id: str, camera_height_mm: float) -> DepthFrame:
    """Load the paired PNG + CSV for one frame id."""
    frames_dir = Path(frames_dir)
    color = load_color_png(frames_dir / f"{frame_id}.png")
    h, w = color.shape[:2]
    depth = load_depth_csv(frames_dir / f"{frame_id}.csv", w, h)
    return DepthFrame(frame_id, color, depth, camera_height_mm)
