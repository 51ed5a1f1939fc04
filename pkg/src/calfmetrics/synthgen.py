"""Deterministic synthetic depth scenes with known ground truth.

Each frame holds a calf-like capsule blob on a flat floor, plus a fence bar
along the top edge. Blob height maps linearly onto hue 80..150 while the
background sits at hue 10, so the production threshold of 60 separates them.
Depth is camera height minus blob height (floor elsewhere), stored in whole
millimeters.

Body weight follows a documented linear law,

    weight = c0 + c1 * volume + c2 * age + calf_intercept + noise,

with the volume term computed from the blob's exact pixel mask, so a
noiseless configuration is exactly linear in the extracted features. The
``nonlinear`` switch adds a step on volume that tree models can exploit but
a linear fit cannot.

A configurable fraction of frames swap the calf for a distractor that the
selection criteria reject for exactly one deterministic reason: a scaled
copy (area too small), an enlarged copy (extent too long), or nothing but
the fence bar (shape mismatch). Everything derives from the seed; the same
config generates a byte-identical bundle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import imgcore
from .errors import ConfigError
from .ingest import (
    CalfObservation,
    MaskLabel,
    save_color_png,
    write_depth_csv,
    write_manifest,
    write_mask_labels,
)
from .segpipeline import ThresholdParams

BG_HUE = 10
BLOB_HUE_LO = 80
BLOB_HUE_HI = 150
DISTRACTOR_KINDS = ("area", "extent", "bar")


@dataclass
class SynthConfig:
    n_calves: int = 12
    obs_per_calf: int = 8
    frames_per_obs: int = 1
    width: int = 320
    height: int = 240
    camera_height_mm: float = 1510.0
    blob_length_range: tuple[float, float] = (56.0, 72.0)
    blob_aspect_range: tuple[float, float] = (0.36, 0.44)  # width / length
    height_range_mm: tuple[float, float] = (380.0, 470.0)
    growth_per_day: float = 0.004
    age_start_range: tuple[int, int] = (21, 35)
    obs_interval_days: int = 7
    weight_c0: float = 60.0
    weight_c1: float = 2.0e-5
    weight_c2: float = 0.6
    sigma_u: float = 6.0
    sigma_e: float = 2.0
    nonlinear: bool = False
    nonlinear_step: float = 25.0
    distractor_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("blob_length_range", "blob_aspect_range", "height_range_mm", "age_start_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} is empty: {lo} > {hi}")
        if self.sigma_e < 0 or self.sigma_u < 0:
            raise ConfigError("noise scales must be >= 0")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ConfigError("distractor_rate must be in [0, 1]")
        if min(self.n_calves, self.obs_per_calf, self.frames_per_obs) < 1:
            raise ConfigError("counts must be >= 1")

    @property
    def max_age(self) -> int:
        return self.age_start_range[1] + self.obs_interval_days * (self.obs_per_calf - 1)

    def growth(self, age_days: float) -> float:
        return 1.0 + self.growth_per_day * age_days


@dataclass
class FrameTruth:
    frame_id: str
    calf_id: str
    obs_date: date
    age_days: int
    kind: str  # "calf" or a distractor kind
    mask: np.ndarray | None  # calf ground-truth mask; None on distractor frames
    height_mm: float
    volume_mm_px2: float


@dataclass
class GeneratedDataset:
    out_dir: Path | None
    config: SynthConfig
    observations: list[CalfObservation]
    frames: list[FrameTruth]
    labels: list[MaskLabel]
    params: ThresholdParams
    pixels: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def frame_ids(self):
        return [f.frame_id for f in self.frames]


def capsule_mask(h: int, w: int, cy: float, cx: float, length: float, width: float) -> np.ndarray:
    """Stadium shape: pixels within width/2 of a horizontal center segment."""
    radius = width / 2.0
    half = max(length / 2.0 - radius, 0.0)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    t = np.clip(xx - cx, -half, half)
    return (xx - cx - t) ** 2 + (yy - cy) ** 2 <= radius**2


def _capsule_area(length: float, width: float) -> float:
    radius = width / 2.0
    return math.pi * radius**2 + max(length - width, 0.0) * width


def derive_threshold_params(config: SynthConfig) -> ThresholdParams:
    """Selection windows sized so calves pass and distractors fail as built.

    The template is a mid-geometry capsule; windows leave margin around the
    extreme calf geometries, the small-copy distractor undershoots only the
    area window, and the enlarged copy overshoots only the extent window.
    """
    g_lo = config.growth(config.age_start_range[0])
    g_hi = config.growth(config.max_age)
    l_lo, l_hi = config.blob_length_range
    a_lo, a_hi = config.blob_aspect_range
    len_min, len_max = l_lo * g_lo, l_hi * g_hi
    wid_min = len_min * a_lo
    area_min = _capsule_area(len_min, len_min * a_lo)
    area_max = _capsule_area(len_max, len_max * a_hi)

    mid_len = 0.5 * (l_lo + l_hi) * config.growth(
        0.5 * (config.age_start_range[0] + config.max_age)
    )
    mid_wid = mid_len * 0.5 * (a_lo + a_hi)
    side = int(math.ceil(mid_len)) + 6
    template = capsule_mask(side, side, side / 2.0, side / 2.0, mid_len, mid_wid)

    return ThresholdParams(
        template=template,
        hue_threshold=60,
        shape_match_max=0.8,
        area_min=0.55 * area_min,
        area_max=1.55 * area_max,
        extent_min=0.55 * wid_min,
        extent_max=1.2 * len_max,
        kernel_radius=1,
    )


def _blob_footprint(config: SynthConfig) -> tuple[float, float]:
    # the enlarged distractor is the largest blob any frame can contain
    len_max = config.blob_length_range[1] * config.growth(config.max_age)
    return 1.22 * len_max, 1.22 * len_max * config.blob_aspect_range[1]


def _blob_hue(config: SynthConfig, height_mm: float) -> int:
    lo, hi = config.height_range_mm
    if hi <= lo:
        return (BLOB_HUE_LO + BLOB_HUE_HI) // 2
    frac = (height_mm - lo) / (hi - lo)
    return int(np.clip(round(BLOB_HUE_LO + frac * (BLOB_HUE_HI - BLOB_HUE_LO)), BLOB_HUE_LO, BLOB_HUE_HI))


def _fence_bar(config: SynthConfig) -> np.ndarray:
    bar = np.zeros((config.height, config.width), dtype=bool)
    x0 = config.width // 10
    bar[2:6, x0 : config.width - x0] = True
    return bar


def generate(config: SynthConfig, out_dir=None, keep_pixels: bool = False) -> GeneratedDataset:
    """Build the dataset; writes the ingest-format bundle when out_dir given.

    Bundle layout: frames/<frame_id>.png + .csv, manifest.csv, labels.jsonl,
    template.png. All per-calf and per-frame draws come from streams derived
    from the seed, so output is reproducible byte for byte. ``keep_pixels``
    retains rendered color/depth arrays in memory for in-process callers.
    """
    params = derive_threshold_params(config)
    max_len, max_wid = _blob_footprint(config)
    margin_x = max_len / 2.0 + 3.0
    margin_y = max_wid / 2.0 + 3.0
    y_top = 8.0 + margin_y  # keep clear of the fence bar
    if margin_x * 2 + 2 >= config.width or y_top + margin_y >= config.height:
        raise ConfigError(
            f"blobs up to {max_len:.0f}x{max_wid:.0f} px cannot fit a "
            f"{config.width}x{config.height} frame"
        )

    frames_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        frames_dir = out_dir / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)

    n_frames = config.n_calves * config.obs_per_calf * config.frames_per_obs
    rng_assign = np.random.default_rng([config.seed, 97])
    n_distract = int(round(config.distractor_rate * n_frames))
    distractor_slots = set(rng_assign.permutation(n_frames)[:n_distract].tolist())

    # per-calf draws
    calf_specs = []
    for c in range(config.n_calves):
        rng_calf = np.random.default_rng([config.seed, 11, c])
        calf_specs.append(
            {
                "calf_id": f"calf{c:03d}",
                "base_len": float(rng_calf.uniform(*config.blob_length_range)),
                "aspect": float(rng_calf.uniform(*config.blob_aspect_range)),
                "base_height": float(rng_calf.uniform(*config.height_range_mm)),
                "age0": int(rng_calf.integers(config.age_start_range[0], config.age_start_range[1] + 1)),
                "intercept": float(rng_calf.normal(0.0, config.sigma_u)) if config.sigma_u > 0 else 0.0,
            }
        )

    # pass 1: observation plan with analytic volumes (sets the step pivot)
    start_date = date(2023, 1, 9)
    plan = []
    frame_counter = 0
    distract_counter = 0
    analytic_volumes = []
    for spec in calf_specs:
        for d in range(config.obs_per_calf):
            age = spec["age0"] + d * config.obs_interval_days
            grow = config.growth(age)
            length = spec["base_len"] * grow
            width = length * spec["aspect"]
            # whole millimeters: the depth CSV is integral, and the weight
            # law must match what the emitted data implies exactly
            height_mm = float(min(round(spec["base_height"] * grow), config.camera_height_mm - 1.0))
            obs_date = start_date + timedelta(days=d * config.obs_interval_days)
            obs_frames = []
            for k in range(config.frames_per_obs):
                frame_id = f"{spec['calf_id']}_d{d:02d}_f{k}"
                rng_frame = np.random.default_rng([config.seed, 23, frame_counter])
                cx = float(rng_frame.uniform(margin_x, config.width - margin_x))
                cy = float(rng_frame.uniform(y_top, config.height - margin_y))
                kind = "calf"
                if frame_counter in distractor_slots:
                    kind = DISTRACTOR_KINDS[distract_counter % len(DISTRACTOR_KINDS)]
                    distract_counter += 1
                obs_frames.append((frame_id, kind, cx, cy))
                frame_counter += 1
            plan.append((spec, age, obs_date, length, width, height_mm, obs_frames))
            analytic_volumes.append(_capsule_area(length, width) * height_mm)
    volume_pivot = float(np.median(analytic_volumes))

    # pass 2: render, measure exact volumes, apply the weight law
    fence = _fence_bar(config)
    floor_mm = round(config.camera_height_mm)
    observations: list[CalfObservation] = []
    frames: list[FrameTruth] = []
    labels: list[MaskLabel] = []
    pixels: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    for obs_index, (spec, age, obs_date, length, width, height_mm, obs_frames) in enumerate(plan):
        true_volume = None
        for frame_id, kind, cx, cy in obs_frames:
            blob = None
            shown = None
            if kind == "calf":
                blob = capsule_mask(config.height, config.width, cy, cx, length, width)
                shown = blob
            elif kind == "area":
                shown = capsule_mask(config.height, config.width, cy, cx, 0.4 * length, 0.4 * width)
            elif kind == "extent":
                scale = 1.22 * (config.blob_length_range[1] * config.growth(config.max_age)) / length
                shown = capsule_mask(config.height, config.width, cy, cx, scale * length, scale * width)

            hue = np.full((config.height, config.width), BG_HUE, dtype=np.uint8)
            depth = np.full((config.height, config.width), floor_mm, dtype=np.int64)
            if shown is not None:
                hue[shown] = _blob_hue(config, height_mm)
                depth[shown] = round(config.camera_height_mm - height_mm)
            hue[fence] = BLOB_HUE_HI
            depth[fence] = round(config.camera_height_mm - height_mm)
            color = imgcore.hue_to_rgb(hue)

            volume = 0.0
            if blob is not None:
                volume = height_mm * float(blob.sum())  # exact sum over the mask
                true_volume = volume
                contour = imgcore.trace_contours(blob)[0]
                labels.append(MaskLabel(frame_id, contour.astype(np.float64)))
            frames.append(
                FrameTruth(frame_id, spec["calf_id"], obs_date, age, kind, blob, height_mm, volume)
            )
            if frames_dir is not None:
                save_color_png(frames_dir / f"{frame_id}.png", color)
                write_depth_csv(frames_dir / f"{frame_id}.csv", depth)
            if keep_pixels:
                pixels[frame_id] = (color, depth.astype(np.float64))

        if true_volume is None:
            # every frame of this observation is a distractor; the weight
            # still follows the law using the intended calf geometry
            true_volume = height_mm * _capsule_area(length, width)
        rng_noise = np.random.default_rng([config.seed, 31, obs_index])
        weight = (
            config.weight_c0
            + config.weight_c1 * true_volume
            + config.weight_c2 * age
            + spec["intercept"]
            + (float(rng_noise.normal(0.0, config.sigma_e)) if config.sigma_e > 0 else 0.0)
        )
        if config.nonlinear and true_volume > volume_pivot:
            weight += config.nonlinear_step
        observations.append(
            CalfObservation(
                calf_id=spec["calf_id"],
                obs_date=obs_date,
                age_days=age,
                body_weight_lb=round(weight, 3),
                frame_ids=[f for f, *_ in obs_frames],
            )
        )

    if out_dir is not None:
        write_manifest(out_dir / "manifest.csv", observations)
        write_mask_labels(out_dir / "labels.jsonl", labels)
        template_img = (derive_threshold_params(config).template.astype(np.uint8) * 255)
        save_color_png(out_dir / "template.png", np.stack([template_img] * 3, axis=-1))

    return GeneratedDataset(
        out_dir=out_dir,
        config=config,
        observations=observations,
        frames=frames,
        labels=labels,
        params=params,
        pixels=pixels,
    )


def load_template(path) -> np.ndarray:
    from .ingest import load_color_png

    return load_color_png(path)[:, :, 0] > 127
