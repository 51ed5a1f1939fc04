"""Run configuration: an INI file with [run], [synth], [threshold], [metrics].

The `synth` subcommand writes a ready-to-use config into its output bundle,
so a full pipeline run only ever needs one hand-written file (or none).
Paths inside the file resolve relative to the file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .segpipeline import ThresholdParams
from .synthgen import SynthConfig


@dataclass
class RunConfig:
    path: Path | None
    raw_bytes: bytes
    seed: int | None
    data_dir: Path | None
    threshold: ThresholdParams | None
    volume_mode: str
    synth: SynthConfig | None
    camera_height_mm: float


def _get_pair(section, key, cast=float):
    text = section.get(key)
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key} must be 'low, high', got {text!r}")
    return (cast(parts[0]), cast(parts[1]))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(raw.decode("utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    base = path.parent

    seed = None
    if parser.has_option("run", "seed"):
        seed = parser.getint("run", "seed")

    data_dir = None
    if parser.has_option("paths", "data_dir"):
        data_dir = (base / parser.get("paths", "data_dir")).resolve()
        if not data_dir.exists():
            raise ConfigError(f"data_dir does not exist: {data_dir}")

    camera_height_mm = 1510.0
    if parser.has_option("metrics", "camera_height_mm"):
        camera_height_mm = parser.getfloat("metrics", "camera_height_mm")

    threshold = None
    if parser.has_section("threshold"):
        sec = parser["threshold"]
        template_path = (base / sec.get("template")).resolve()
        if not template_path.exists():
            raise ConfigError(f"template does not exist: {template_path}")
        from .synthgen import load_template

        threshold = ThresholdParams(
            template=load_template(template_path),
            hue_threshold=sec.getint("hue_threshold", 60),
            shape_match_max=sec.getfloat("shape_match_max", 0.8),
            area_min=sec.getfloat("area_min", 80_000.0),
            area_max=sec.getfloat("area_max", 200_000.0),
            extent_min=sec.getfloat("extent_min", 300.0),
            extent_max=sec.getfloat("extent_max", 900.0),
            kernel_radius=sec.getint("kernel_radius", 1),
        )

    volume_mode = "height"
    if parser.has_option("metrics", "volume_mode"):
        volume_mode = parser.get("metrics", "volume_mode")
        if volume_mode not in ("height", "raw_depth_sum"):
            raise ConfigError(f"unknown volume_mode {volume_mode!r}")

    synth = None
    if parser.has_section("synth"):
        sec = parser["synth"]
        kwargs = {}
        int_keys = ("n_calves", "obs_per_calf", "frames_per_obs", "width", "height", "obs_interval_days")
        float_keys = (
            "camera_height_mm", "growth_per_day", "weight_c0", "weight_c1",
            "weight_c2", "sigma_u", "sigma_e", "nonlinear_step", "distractor_rate",
        )
        pair_keys = ("blob_length_range", "blob_aspect_range", "height_range_mm")
        for key in int_keys:
            if sec.get(key) is not None:
                kwargs[key] = sec.getint(key)
        for key in float_keys:
            if sec.get(key) is not None:
                kwargs[key] = sec.getfloat(key)
        for key in pair_keys:
            if sec.get(key) is not None:
                kwargs[key] = _get_pair(sec, key)
        if sec.get("age_start_range") is not None:
            kwargs["age_start_range"] = _get_pair(sec, "age_start_range", int)
        if sec.get("nonlinear") is not None:
            kwargs["nonlinear"] = sec.getboolean("nonlinear")
        if seed is not None:
            kwargs["seed"] = seed
        synth = SynthConfig(**kwargs)

    return RunConfig(
        path=path,
        raw_bytes=raw,
        seed=seed,
        data_dir=data_dir,
        threshold=threshold,
        volume_mode=volume_mode,
        synth=synth,
        camera_height_mm=camera_height_mm,
    )


def write_bundle_config(out_dir, config: SynthConfig, params: ThresholdParams) -> Path:
    """Write the config that makes a generated bundle self-describing."""
    out_dir = Path(out_dir)
    text = (
        "[run]\n"
        f"seed = {config.seed}\n"
        "\n[paths]\n"
        "data_dir = .\n"
        "\n[metrics]\n"
        "volume_mode = height\n"
        f"camera_height_mm = {config.camera_height_mm!r}\n"
        "\n[threshold]\n"
        "template = template.png\n"
        f"hue_threshold = {params.hue_threshold}\n"
        f"shape_match_max = {params.shape_match_max!r}\n"
        f"area_min = {params.area_min!r}\n"
        f"area_max = {params.area_max!r}\n"
        f"extent_min = {params.extent_min!r}\n"
        f"extent_max = {params.extent_max!r}\n"
        f"kernel_radius = {params.kernel_radius}\n"
    )
    path = out_dir / "config.ini"
    path.write_text(text, encoding="utf-8")
    return path
