"""Versioned JSON serialization for fitted models."""

from __future__ import annotations

import numpy as np

from .gbm import GbmHyperParams, GbmModel, _Tree
from .lmm import LmmModel
from .ols import OlsModel

FORMAT_VERSION = 1


def model_to_json(model) -> dict:
    if isinstance(model, OlsModel):
        return {
            "kind": "ols",
            "version": FORMAT_VERSION,
            "intercept": float(model.intercept),
            "coefficients": [float(c) for c in model.coefficients],
        }
    if isinstance(model, GbmModel):
        return {
            "kind": "gbm",
            "version": FORMAT_VERSION,
            "base_score": float(model.base_score),
            "hyper": {
                "learning_rate": model.hyper.learning_rate,
                "n_estimators": model.hyper.n_estimators,
                "l1_alpha": model.hyper.l1_alpha,
                "l2_lambda": model.hyper.l2_lambda,
                "max_depth": model.hyper.max_depth,
                "min_samples_leaf": model.hyper.min_samples_leaf,
            },
            "trees": [
                {
                    "feature": tree.feature.tolist(),
                    "threshold": tree.threshold.tolist(),
                    "left": tree.left.tolist(),
                    "right": tree.right.tolist(),
                    "value": tree.value.tolist(),
                }
                for tree in model.trees
            ],
        }
    if isinstance(model, LmmModel):
        return {
            "kind": "lmm",
            "version": FORMAT_VERSION,
            "beta": [float(b) for b in model.beta],
            "sigma_u2": float(model.sigma_u2),
            "sigma_e2": float(model.sigma_e2),
            "blup": {k: float(v) for k, v in sorted(model.blup.items())},
            "method": model.method,
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_json(doc: dict):
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    kind = doc.get("kind")
    if kind == "ols":
        return OlsModel(
            intercept=doc["intercept"],
            coefficients=np.array(doc["coefficients"], dtype=np.float64),
        )
    if kind == "gbm":
        model = GbmModel(
            base_score=doc["base_score"], hyper=GbmHyperParams(**doc["hyper"])
        )
        for t in doc["trees"]:
            model.trees.append(
                _Tree(
                    feature=np.array(t["feature"], dtype=np.int64),
                    threshold=np.array(t["threshold"], dtype=np.float64),
                    left=np.array(t["left"], dtype=np.int64),
                    right=np.array(t["right"], dtype=np.int64),
                    value=np.array(t["value"], dtype=np.float64),
                )
            )
        return model
    if kind == "lmm":
        return LmmModel(
            beta=np.array(doc["beta"], dtype=np.float64),
            sigma_u2=doc["sigma_u2"],
            sigma_e2=doc["sigma_e2"],
            blup=dict(doc["blup"]),
            method=doc.get("method", "reml"),
        )
    raise ValueError(f"unknown model kind {kind!r}")
