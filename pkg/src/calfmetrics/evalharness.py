"""Cross-validation drivers and regression metrics.

Two protocols:

* ``repeated_cv``: grouped k-fold over calves (no calf appears in both
  train and test of a plan), repeated with reshuffled folds; test
  predictions are pooled per repeat before scoring.
* ``longitudinal_eval``: per-calf chronological splits at several ratios,
  with one random (calf, date) record removed per iteration to simulate
  missing data.

Both report mean +/- SD per model and metric together with a one-way ANOVA
across models, a Bonferroni-adjusted p (family = number of models compared,
one adjusted value per table row), eta squared, and Tukey letters.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInput,
    DegenerateTarget,
    HarnessError,
    InsufficientSeries,
    InvalidK,
    InvalidTarget,
    ShapeError,
)
from .models import gbm_fit, lmm_fit, ols_fit, predict
from .stats import anova_oneway, bonferroni, tukey_hsd


@dataclass
class RegMetrics:
    r2: float
    mse: float
    rmse: float
    mae: float
    mape: float

    def as_dict(self):
        return {"r2": self.r2, "mse": self.mse, "rmse": self.rmse, "mae": self.mae, "mape": self.mape}


METRIC_NAMES = ("r2", "mse", "rmse", "mae", "mape")


def reg_metrics(y, yhat) -> RegMetrics:
    """R^2, MSE, RMSE, MAE and MAPE (in percent) of predictions."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or len(y) < 2:
        raise ShapeError(f"need two equal-length vectors of >= 2, got {y.shape}, {yhat.shape}")
    if (y <= 0).any():
        raise InvalidTarget("targets must be positive for MAPE")
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0:
        raise DegenerateTarget("target has zero variance")
    err = y - yhat
    mse = float(np.mean(err**2))
    return RegMetrics(
        r2=1.0 - float(np.sum(err**2)) / sst,
        mse=mse,
        rmse=float(np.sqrt(mse)),
        mae=float(np.mean(np.abs(err))),
        mape=100.0 * float(np.mean(np.abs(err) / y)),
    )


@dataclass
class SplitPlan:
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise InvalidK("train and test indices overlap")


@dataclass
class MetricsTable:
    """Observation table: one row per (calf, date) with features and weight.

    Feature columns are (age_days, length_px, width_px, avg_height_mm,
    volume_mm_px2, contour_area_px2); rows are kept sorted by calf then
    date so longitudinal splits can slice series directly.
    """

    calf_ids: np.ndarray  # object array of str
    obs_dates: np.ndarray  # object array of datetime.date
    X: np.ndarray  # (n, 6) float64
    y: np.ndarray  # (n,) float64 body weight

    def __post_init__(self):
        self.calf_ids = np.asarray(self.calf_ids, dtype=object)
        self.obs_dates = np.asarray(self.obs_dates, dtype=object)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        n = len(self.calf_ids)
        if not (len(self.obs_dates) == len(self.X) == len(self.y) == n):
            raise ShapeError("table columns disagree on length")
        if not np.isfinite(self.y).all():
            raise InvalidTarget("every row needs a body weight")
        order = sorted(range(n), key=lambda i: (str(self.calf_ids[i]), self.obs_dates[i]))
        order = np.array(order, dtype=np.int64)
        self.calf_ids = self.calf_ids[order]
        self.obs_dates = self.obs_dates[order]
        self.X = self.X[order]
        self.y = self.y[order]

    def __len__(self):
        return len(self.calf_ids)

    def subset(self, idx) -> "MetricsTable":
        idx = np.asarray(idx, dtype=np.int64)
        return MetricsTable(self.calf_ids[idx], self.obs_dates[idx], self.X[idx], self.y[idx])


def grouped_kfold(calf_ids, k: int, seed: int = 0) -> list[SplitPlan]:
    """Partition calves (not rows) into k folds, shuffled by seed.

    Calves are dealt round-robin after the shuffle so fold sizes differ by
    at most one; each plan tests one fold and trains on the rest.
    """
    if k < 2:
        raise InvalidK(f"k must be >= 2, got {k}")
    calf_ids = np.asarray(calf_ids, dtype=object)
    distinct = sorted(set(calf_ids.tolist()))
    if len(distinct) < k:
        raise InvalidK(f"need at least k={k} calves, have {len(distinct)}")
    rng = np.random.default_rng(seed)
    shuffled = [distinct[i] for i in rng.permutation(len(distinct))]
    folds = [set(shuffled[i::k]) for i in range(k)]
    plans = []
    all_idx = np.arange(len(calf_ids))
    for fold in folds:
        test = np.array([c in fold for c in calf_ids])
        plans.append(SplitPlan(all_idx[~test], all_idx[test]))
    return plans


def longitudinal_split(table: MetricsTable, ratio: int) -> SplitPlan:
    """Per-calf chronological split: earliest ratio% of points train.

    With n points per calf, floor(n * ratio / 100) clamped to [1, n-1]
    points train, so both sides stay non-empty; every train date strictly
    precedes every test date within each calf.
    """
    if not 0 < ratio < 100:
        raise InvalidK(f"ratio must be in (0, 100), got {ratio}")
    train, test = [], []
    for calf in sorted(set(table.calf_ids.tolist())):
        rows = np.nonzero(table.calf_ids == calf)[0]
        order = rows[np.argsort([table.obs_dates[i] for i in rows], kind="stable")]
        n = len(order)
        if n < 2:
            raise InsufficientSeries(calf)
        n_train = int(np.clip(int(np.floor(n * ratio / 100.0)), 1, n - 1))
        train.extend(order[:n_train].tolist())
        test.extend(order[n_train:].tolist())
    plan = SplitPlan(np.array(train), np.array(test))
    _assert_temporal(table, plan)
    return plan


def _assert_temporal(table: MetricsTable, plan: SplitPlan) -> None:
    # every train date strictly precedes every test date, per calf
    for calf in set(table.calf_ids.tolist()):
        tr = [table.obs_dates[i] for i in plan.train_idx if table.calf_ids[i] == calf]
        te = [table.obs_dates[i] for i in plan.test_idx if table.calf_ids[i] == calf]
        if tr and te:
            assert max(tr) < min(te), f"temporal leak for calf {calf}"


# --- model specs ------------------------------------------------------------

def ols_spec():
    return lambda X, y, calf_ids: ols_fit(X, y)


def gbm_spec(hyper=None):
    return lambda X, y, calf_ids: gbm_fit(X, y, hyper)


def lmm_spec(method: str = "reml"):
    return lambda X, y, calf_ids: lmm_fit(X, y, calf_ids, method=method)


# --- comparison tables -------------------------------------------------------

@dataclass
class ComparisonRow:
    metric: str
    split: str
    means: list[float]
    sds: list[float]
    p: float
    p_adjusted: float
    eta2: float
    letters: list[str]


@dataclass
class ComparisonTable:
    models: list[str]
    rows: list[ComparisonRow] = field(default_factory=list)


def _summary_row(metric, split, per_model_values, n_models, family) -> ComparisonRow:
    groups = [np.asarray(v, dtype=np.float64) for v in per_model_values]
    means = [float(g.mean()) for g in groups]
    sds = [float(g.std(ddof=1)) if len(g) > 1 else 0.0 for g in groups]
    if all(len(g) > 1 for g in groups):
        try:
            anova = anova_oneway(groups)
            p, eta2 = anova.p, anova.eta2
            letters = tukey_hsd(groups).letters
        except DegenerateInput:
            p, eta2, letters = 1.0, 0.0, ["a"] * n_models
    else:
        p, eta2, letters = float("nan"), float("nan"), [""] * n_models
    p_adj = bonferroni(p, family) if np.isfinite(p) else float("nan")
    return ComparisonRow(metric, split, means, sds, p, p_adj, eta2, letters)


def _run_jobs(fn, n_jobs_total, parallel):
    if parallel and parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(fn, range(n_jobs_total)))
    return [fn(i) for i in range(n_jobs_total)]


def repeated_cv(
    table: MetricsTable,
    model_fns: dict,
    k: int = 5,
    repeats: int = 100,
    seed: int = 0,
    per_fold: bool = False,
    jobs: int = 1,
) -> ComparisonTable:
    """Grouped k-fold CV repeated with reshuffled calf assignments.

    Per repeat, each model's held-out predictions are pooled over the k
    folds and scored once (``per_fold=True`` scores each fold and averages
    instead). Rows compare models per metric over the repeat distribution.
    """
    names = list(model_fns.keys())

    def one_repeat(r: int):
        plans = grouped_kfold(table.calf_ids, k, seed ^ r)
        out = {}
        for name in names:
            pooled = np.full(len(table), np.nan)
            fold_metrics = []
            for f, plan in enumerate(plans):
                try:
                    model = model_fns[name](
                        table.X[plan.train_idx],
                        table.y[plan.train_idx],
                        table.calf_ids[plan.train_idx],
                    )
                    yhat = predict(model, table.X[plan.test_idx], table.calf_ids[plan.test_idx])
                except Exception as exc:  # annotate with the job position
                    raise HarnessError(f"repeat {r}, fold {f}, model {name}", exc) from exc
                pooled[plan.test_idx] = yhat
                if per_fold:
                    fold_metrics.append(reg_metrics(table.y[plan.test_idx], yhat))
            assert not np.isnan(pooled).any(), "every row must be tested exactly once"
            if per_fold:
                out[name] = RegMetrics(
                    **{
                        m: float(np.mean([getattr(fm, m) for fm in fold_metrics]))
                        for m in METRIC_NAMES
                    }
                )
            else:
                out[name] = reg_metrics(table.y, pooled)
        return out

    results = _run_jobs(one_repeat, repeats, jobs)
    table_out = ComparisonTable(models=names)
    for metric in METRIC_NAMES:
        values = [[getattr(rep[name], metric) for rep in results] for name in names]
        table_out.rows.append(
            _summary_row(metric, f"{k}-fold", values, len(names), family=len(names))
        )
    return table_out


def drop_short_series(table: MetricsTable, min_points: int = 5) -> MetricsTable:
    """Remove calves with fewer than min_points observation dates."""
    counts: dict = {}
    for c in table.calf_ids:
        counts[c] = counts.get(c, 0) + 1
    keep = np.array([counts[c] >= min_points for c in table.calf_ids])
    return table.subset(np.nonzero(keep)[0])


def longitudinal_eval(
    table: MetricsTable,
    model_fns: dict,
    ratios=(90, 80, 70, 60, 50),
    iterations: int = 100,
    seed: int = 0,
    min_points: int = 5,
    jobs: int = 1,
) -> ComparisonTable:
    """Chronological-split evaluation with jackknife record exclusion.

    Calves with fewer than ``min_points`` dates are dropped up front. Each
    iteration removes one random (calf, date) record -- calf first, then
    one of its dates -- before splitting at every ratio and fitting all
    models on the training portion.
    """
    base = drop_short_series(table, min_points)
    if len(base) == 0:
        raise InsufficientSeries("<all>", "no calf has a long enough series")
    names = list(model_fns.keys())
    calves = sorted(set(base.calf_ids.tolist()))

    def one_iteration(it: int):
        rng = np.random.default_rng(seed ^ it)
        calf = calves[int(rng.integers(len(calves)))]
        rows = np.nonzero(base.calf_ids == calf)[0]
        drop = rows[int(rng.integers(len(rows)))]
        keep = np.setdiff1d(np.arange(len(base)), [drop])
        reduced = base.subset(keep)
        out = {}
        for ratio in ratios:
            plan = longitudinal_split(reduced, ratio)
            for name in names:
                try:
                    model = model_fns[name](
                        reduced.X[plan.train_idx],
                        reduced.y[plan.train_idx],
                        reduced.calf_ids[plan.train_idx],
                    )
                    yhat = predict(
                        model, reduced.X[plan.test_idx], reduced.calf_ids[plan.test_idx]
                    )
                except Exception as exc:
                    raise HarnessError(
                        f"iteration {it}, ratio {ratio}, model {name}", exc
                    ) from exc
                out[(ratio, name)] = reg_metrics(reduced.y[plan.test_idx], yhat)
        return out

    results = _run_jobs(one_iteration, iterations, jobs)
    table_out = ComparisonTable(models=names)
    for metric in METRIC_NAMES:
        for ratio in ratios:
            values = [
                [getattr(res[(ratio, name)], metric) for res in results] for name in names
            ]
            table_out.rows.append(
                _summary_row(
                    metric,
                    f"{ratio}:{100 - ratio}",
                    values,
                    len(names),
                    family=len(names),
                )
            )
    return table_out
