"""Statistical kernel: correlations, Mantel test, ANOVA, Tukey HSD.

Distribution functions (F and studentized range) are delegated to scipy;
everything layered on top of them lives here so group-comparison conventions
(letter displays, permutation counting, quartile breaks) are in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as _scipy_stats

from .errors import (
    DegenerateInput,
    InsufficientRows,
    LabelMismatch,
    NumericalError,
)


# --- distribution functions -------------------------------------------------

def f_cdf(x: float, d1: int, d2: int) -> float:
    """CDF of the F distribution via the regularized incomplete beta."""
    if d1 < 1 or d2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if x <= 0:
        return 0.0
    if not np.isfinite(x):
        return 1.0
    z = d1 * x / (d1 * x + d2)
    out = float(special.betainc(d1 / 2.0, d2 / 2.0, z))
    if not np.isfinite(out):
        raise NumericalError(f"f_cdf failed at x={x}, d1={d1}, d2={d2}")
    return min(max(out, 0.0), 1.0)


def srd_cdf(q: float, k: int, df: int) -> float:
    """CDF of the studentized range statistic for k groups and df error dof."""
    if k < 2 or df < 1:
        raise ValueError("srd_cdf needs k >= 2 and df >= 1")
    if q <= 0:
        return 0.0
    if not np.isfinite(q):
        return 1.0
    with np.errstate(all="ignore"):
        out = float(_scipy_stats.studentized_range.cdf(q, k, df))
    if not np.isfinite(out):
        raise NumericalError(f"srd_cdf failed at q={q}, k={k}, df={df}")
    return min(max(out, 0.0), 1.0)


def bonferroni(p: float, m: int) -> float:
    """Bonferroni-adjusted p-value, capped at 1."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if m < 1:
        raise ValueError("family size must be >= 1")
    return min(1.0, m * p)


# --- correlation ------------------------------------------------------------

def pearson(x, y) -> float:
    """Sample Pearson correlation of two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput("pearson needs two equal-length vectors")
    if len(x) < 3:
        raise DegenerateInput("pearson needs at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))
    if sx == 0 or sy == 0:
        raise DegenerateInput("pearson input has zero variance")
    return float(np.dot(dx, dy) / (sx * sy))


@dataclass
class CorrMatrix:
    """Symmetric Pearson correlation matrix with named variables."""

    labels: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise DegenerateInput("matrix shape does not match labels")


def corr_matrix(columns: dict[str, np.ndarray]) -> CorrMatrix:
    """Pairwise Pearson matrix over named columns.

    Raises DegenerateInput naming the first constant column, since a zero
    variance makes every correlation with that variable undefined.
    """
    labels = list(columns.keys())
    arrays = [np.asarray(columns[k], dtype=np.float64) for k in labels]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise DegenerateInput("columns must share a length")
    if n < 3:
        raise DegenerateInput("corr_matrix needs at least 3 rows")
    for k, a in zip(labels, arrays):
        if np.ptp(a) == 0:
            raise DegenerateInput(f"column {k!r} is constant")
    m = len(labels)
    values = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            values[i, j] = values[j, i] = pearson(arrays[i], arrays[j])
    return CorrMatrix(labels, values)


def age_quartiles(ages) -> np.ndarray:
    """Quartile index (0..3) per row, split at the 25/50/75th percentiles."""
    ages = np.asarray(ages, dtype=np.float64)
    breaks = np.percentile(ages, [25, 50, 75], method="linear")
    return np.searchsorted(breaks, ages, side="left")


def age_quartile_matrices(
    ages, columns: dict[str, np.ndarray]
) -> list[CorrMatrix]:
    """One correlation matrix per age quartile."""
    idx = age_quartiles(ages)
    out = []
    for q in range(4):
        sel = idx == q
        if sel.sum() < 3:
            raise InsufficientRows(
                f"quartile {q + 1} has only {int(sel.sum())} rows", quartile=q + 1
            )
        out.append(corr_matrix({k: np.asarray(v)[sel] for k, v in columns.items()}))
    return out


@dataclass
class MantelResult:
    r: float
    p: float
    n_perm: int


def mantel(a: CorrMatrix, b: CorrMatrix, n_perm: int = 999, seed: int = 0) -> MantelResult:
    """Permutation test for association between two correlation matrices.

    The statistic is the Pearson correlation of the strict upper triangles;
    the null distribution relabels b's rows and columns simultaneously.
    Only genuine relabelings are drawn (the identity is resampled), so two
    identical matrices yield p = 1/(n_perm + 1) by the add-one convention.
    """
    if a.labels != b.labels:
        raise LabelMismatch(f"labels differ: {a.labels} vs {b.labels}")
    if n_perm < 99:
        raise ValueError("n_perm must be >= 99")
    n = len(a.labels)
    iu = np.triu_indices(n, k=1)
    if iu[0].size < 3:
        raise DegenerateInput("matrices too small for a triangle correlation")
    va = a.values[iu]
    observed = pearson(va, b.values[iu])
    rng = np.random.default_rng(seed)
    identity = np.arange(n)
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(n)
        while np.array_equal(perm, identity):
            perm = rng.permutation(n)
        vb = b.values[np.ix_(perm, perm)][iu]
        if pearson(va, vb) >= observed:
            hits += 1
    return MantelResult(observed, (1 + hits) / (n_perm + 1), n_perm)


# --- group comparison --------------------------------------------------------

@dataclass
class AnovaResult:
    F: float
    df1: int
    df2: int
    p: float
    eta2: float


def _check_groups(groups) -> list[np.ndarray]:
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2:
        raise DegenerateInput("need at least 2 groups")
    if any(len(g) < 2 for g in arrays):
        raise DegenerateInput("every group needs at least 2 values")
    return arrays


def anova_oneway(groups) -> AnovaResult:
    """One-way fixed-effects ANOVA with eta-squared effect size."""
    arrays = _check_groups(groups)
    alldata = np.concatenate(arrays)
    if np.ptp(alldata) == 0:
        raise DegenerateInput("total variance is zero")
    grand = alldata.mean()
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in arrays)
    ssw = sum(float(np.sum((g - g.mean()) ** 2)) for g in arrays)
    sst = ssb + ssw
    df1 = len(arrays) - 1
    df2 = len(alldata) - len(arrays)
    if ssw == 0:
        return AnovaResult(float("inf"), df1, df2, 0.0, ssb / sst)
    F = (ssb / df1) / (ssw / df2)
    return AnovaResult(float(F), df1, df2, 1.0 - f_cdf(F, df1, df2), float(ssb / sst))


@dataclass
class TukeyPair:
    i: int
    j: int
    diff: float
    q: float
    p_adj: float
    significant: bool


@dataclass
class TukeyResult:
    pairs: list[TukeyPair]
    letters: list[str]  # one display string per group, e.g. "a" or "a,b"


def tukey_hsd(groups, alpha: float = 0.05) -> TukeyResult:
    """Tukey-Kramer all-pairs comparison with a compact letter display.

    Groups sharing a letter are not significantly different at alpha. The
    harmonic pairwise standard error handles unequal group sizes.
    """
    arrays = _check_groups(groups)
    alldata = np.concatenate(arrays)
    if np.ptp(alldata) == 0:
        raise DegenerateInput("total variance is zero")
    k = len(arrays)
    n_total = len(alldata)
    df = n_total - k
    ssw = sum(float(np.sum((g - g.mean()) ** 2)) for g in arrays)
    mse = ssw / df
    means = [g.mean() for g in arrays]
    sizes = [len(g) for g in arrays]

    pairs = []
    for i in range(k):
        for j in range(i + 1, k):
            diff = means[i] - means[j]
            if mse == 0:
                q = float("inf") if diff != 0 else 0.0
            else:
                se = np.sqrt(mse / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
                q = abs(diff) / se
            p_adj = 1.0 - srd_cdf(q, k, df) if np.isfinite(q) else 0.0
            if q == 0.0:
                p_adj = 1.0
            pairs.append(TukeyPair(i, j, float(diff), float(q), p_adj, p_adj < alpha))

    letters = _letter_display(k, means, [(p.i, p.j) for p in pairs if p.significant])
    return TukeyResult(pairs, letters)


def _letter_display(k: int, means, significant_pairs) -> list[str]:
    """Insert-and-absorb letter assignment, 'a' for the highest mean."""
    columns: list[set[int]] = [set(range(k))]
    for i, j in significant_pairs:
        next_columns: list[set[int]] = []
        for col in columns:
            if i in col and j in col:
                next_columns.append(col - {i})
                next_columns.append(col - {j})
            else:
                next_columns.append(col)
        # absorb: drop any column contained in another
        columns = []
        for col in sorted(next_columns, key=len, reverse=True):
            if not any(col <= kept for kept in columns):
                columns.append(col)
    rank = sorted(range(k), key=lambda g: -means[g])
    position = {g: r for r, g in enumerate(rank)}
    columns.sort(key=lambda col: min(position[g] for g in col))
    names = [_letter_name(i) for i in range(len(columns))]
    return [
        ",".join(names[c] for c, col in enumerate(columns) if g in col) for g in range(k)
    ]


def _letter_name(i: int) -> str:
    name = ""
    while True:
        name = chr(ord("a") + i % 26) + name
        i = i // 26 - 1
        if i < 0:
            return name
