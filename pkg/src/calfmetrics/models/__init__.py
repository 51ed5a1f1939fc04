"""Weight predictors: linear regression, boosted trees, and a mixed model.

All fits are deterministic given their inputs (and seed, where one exists).
``predict`` dispatches on the fitted model type so harness code can treat
the three predictors uniformly.
"""

from .gbm import GbmHyperParams, GbmModel, GbmSearchSpace, gbm_fit, gbm_random_search
from .lmm import LmmModel, lmm_fit
from .ols import OlsModel, ols_fit
from .serialize import model_from_json, model_to_json

import numpy as np

from ..errors import ShapeError

FEATURE_NAMES = (
    "age_days",
    "length_px",
    "width_px",
    "avg_height_mm",
    "volume_mm_px2",
    "contour_area_px2",
)


def predict(model, X, calf_ids=None) -> np.ndarray:
    """Predict weights with any fitted model.

    ``calf_ids`` is only consulted by the mixed model, which adds the
    fitted random intercept for known calves and nothing for unseen ones.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {X.shape}")
    if isinstance(model, OlsModel):
        return model.predict(X)
    if isinstance(model, GbmModel):
        return model.predict(X)
    if isinstance(model, LmmModel):
        return model.predict(X, calf_ids)
    raise TypeError(f"unknown model type {type(model).__name__}")


__all__ = [
    "FEATURE_NAMES",
    "GbmHyperParams",
    "GbmModel",
    "GbmSearchSpace",
    "LmmModel",
    "OlsModel",
    "gbm_fit",
    "gbm_random_search",
    "lmm_fit",
    "model_from_json",
    "model_to_json",
    "ols_fit",
    "predict",
]
