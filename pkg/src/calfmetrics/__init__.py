"""calfmetrics: depth-image body metrics and weight prediction for dairy calves.

The package covers the full pipeline: hue-threshold segmentation of dorsal
depth frames, body-metric extraction, segmentation scoring, three weight
predictors (linear regression, second-order boosted trees, random-intercept
mixed model), grouped and longitudinal cross-validation, and the statistics
used to compare methods. A deterministic synthetic-scene generator provides
ground truth for end-to-end verification.
"""

__version__ = "0.1.0"

from . import (  # noqa: E402
    bodymetrics,
    evalharness,
    imgcore,
    ingest,
    models,
    segeval,
    segpipeline,
    stats,
    synthgen,
)

__all__ = [
    "bodymetrics",
    "evalharness",
    "imgcore",
    "ingest",
    "models",
    "segeval",
    "segpipeline",
    "stats",
    "synthgen",
]
