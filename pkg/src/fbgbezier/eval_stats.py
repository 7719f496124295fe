"""Regression metrics, error histograms and two-model statistical comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import DimensionError, DomainError

OUTPUT_NAMES = [f"p{i}{ax}" for i in range(4) for ax in "XYZ"]
POINT_NAMES = ["p0", "p1", "p2", "p3"]


def _nan_to_none(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_nan_to_none(v) for v in x]
    x = float(x)
    return None if math.isnan(x) else x


@dataclass
class MetricsTable:
    """Per-output, per-control-point and overall accuracy.

    ``r2`` entries are NaN where the truth column has zero variance.
    ``overall_r2`` pools residual and total sums of squares over all outputs
    (variance weighted); ``overall_r2_mean`` is the plain average of the
    defined per-output values.
    """

    rmse: np.ndarray
    r2: np.ndarray
    max_abs_err: np.ndarray
    point_rmse: np.ndarray
    overall_rmse: float
    overall_r2: float
    overall_r2_mean: float
    overall_max: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "outputs": {name: {"rmse_mm": float(self.rmse[i]), "r2": _nan_to_none(self.r2[i]),
                               "max_abs_err_mm": float(self.max_abs_err[i])}
                        for i, name in enumerate(OUTPUT_NAMES)},
            "points": {name: {"rmse_mm": float(self.point_rmse[i])}
                       for i, name in enumerate(POINT_NAMES)},
            "overall": {"rmse_mm": self.overall_rmse, "r2": _nan_to_none(self.overall_r2),
                        "r2_mean": _nan_to_none(self.overall_r2_mean),
                        "max_abs_err_mm": self.overall_max},
        }


def compute_metrics(pred, truth) -> MetricsTable:
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction shape {pred.shape} differs from truth {truth.shape}")
    if len(truth) == 0:
        raise DomainError("no samples to evaluate")
    err = pred - truth
    mse = np.mean(err ** 2, axis=0)
    ss_res = np.sum(err ** 2, axis=0)
    ss_tot = np.sum((truth - truth.mean(axis=0)) ** 2, axis=0)
    defined = ss_tot > 0
    r2 = np.full(truth.shape[1], np.nan)
    r2[defined] = 1.0 - ss_res[defined] / ss_tot[defined]
    n_cols = truth.shape[1]
    point_rmse = np.sqrt(mse.reshape(-1, 3).mean(axis=1)) if n_cols % 3 == 0 else np.array([])
    total = ss_tot[defined].sum()
    overall_r2 = 1.0 - ss_res[defined].sum() / total if total > 0 else np.nan
    overall_r2_mean = float(np.mean(r2[defined])) if defined.any() else np.nan
    max_abs = np.max(np.abs(err), axis=0)
    return MetricsTable(rmse=np.sqrt(mse), r2=r2, max_abs_err=max_abs, point_rmse=point_rmse,
                        overall_rmse=float(np.sqrt(mse.mean())), overall_r2=float(overall_r2),
                        overall_r2_mean=overall_r2_mean, overall_max=float(max_abs.max()),
                        n_samples=len(truth))


def rmse_reduction(baseline: MetricsTable, candidate: MetricsTable) -> dict:
    """Percentage RMSE drop of ``candidate`` relative to ``baseline``.

    Control points with zero baseline RMSE get NaN; a zero overall baseline
    is an error.
    """
    if baseline.rmse.shape != candidate.rmse.shape:
        raise DimensionError("metrics tables have different shapes")
    if baseline.overall_rmse == 0:
        raise DomainError("baseline RMSE is zero; reduction undefined")
    a, b = baseline.point_rmse, candidate.point_rmse
    points = np.full(len(a), np.nan)
    ok = a > 0
    points[ok] = 100.0 * (a[ok] - b[ok]) / a[ok]
    overall = 100.0 * (baseline.overall_rmse - candidate.overall_rmse) / baseline.overall_rmse
    return {"points": dict(zip(POINT_NAMES, points.tolist())), "overall": overall}


def error_histogram(pred, truth, bins: int = 41, value_range=None):
    """Signed-error counts per output over common uniform bins.

    The default range is symmetric about zero and covers the largest error.
    Bins are half-open ``[lo, hi)`` except the last, which is closed.
    Returns ``(counts, edges)`` with ``counts`` shaped ``(n_outputs, bins)``.
    """
    if bins < 1:
        raise DomainError("need at least one bin")
    err = np.atleast_2d(np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float))
    if value_range is None:
        m = float(np.max(np.abs(err))) if err.size else 0.0
        m = m if m > 0 else 1.0
        lo, hi = -m, m
    else:
        lo, hi = map(float, value_range)
        if not hi > lo:
            raise DomainError("histogram range must be increasing")
    width = (hi - lo) / bins
    edges = lo + width * np.arange(bins + 1)
    edges[-1] = hi
    counts = np.zeros((err.shape[1], bins), dtype=np.int64)
    for j in range(err.shape[1]):
        e = err[:, j]
        e = e[(e >= lo) & (e <= hi)]
        k = np.floor((e - lo) / width).astype(np.int64)
        k = np.clip(k, 0, bins - 1)
        # floor can land one bin off near an edge; settle against the edges themselves
        k -= (e < edges[k]).astype(np.int64)
        k += ((e >= edges[np.minimum(k + 1, bins)]) & (k < bins - 1)).astype(np.int64)
        counts[j] = np.bincount(k, minlength=bins)
    return counts, edges


# ---------------------------------------------------------------- tests ----

def lilliefors_statistic(x) -> float:
    """Kolmogorov-Smirnov distance between the standardized sample and N(0, 1)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DomainError("sample has zero variance")
    cdf = special.ndtr((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def _lilliefors_null(n: int, n_mc: int, seed: int, block: int = 1000) -> np.ndarray:
    children = np.random.SeedSequence([int(seed), n, 0x111]).spawn(-(-n_mc // block))
    out = []
    remaining = n_mc
    for child in children:
        m = min(block, remaining)
        remaining -= m
        z = np.sort(np.random.default_rng(child).standard_normal((m, n)), axis=1)
        z = (z - z.mean(axis=1, keepdims=True)) / z.std(axis=1, ddof=1, keepdims=True)
        cdf = special.ndtr(z)
        i = np.arange(1, n + 1)
        out.append(np.maximum(np.max(i / n - cdf, axis=1), np.max(cdf - (i - 1) / n, axis=1)))
    return np.concatenate(out)


def lilliefors(x, n_mc: int = 10000, seed: int = 0) -> tuple[float, float]:
    """Lilliefors normality test with a Monte Carlo p-value ``(k + 1) / (n_mc + 1)``."""
    x = np.asarray(x, dtype=float)
    if len(x) < 4:
        raise DomainError("Lilliefors test needs at least 4 observations")
    d = lilliefors_statistic(x)
    null = _lilliefors_null(len(x), n_mc, seed)
    p = (np.count_nonzero(null >= d) + 1) / (n_mc + 1)
    return d, float(p)


def levene(a, b) -> tuple[float, float]:
    """Levene's test for equal variances (deviations from group means)."""
    groups = [np.asarray(a, dtype=float), np.asarray(b, dtype=float)]
    k = len(groups)
    z = [np.abs(g - g.mean()) for g in groups]
    n = np.array([len(g) for g in groups])
    N = n.sum()
    zbar_i = np.array([zi.mean() for zi in z])
    zbar = np.concatenate(z).mean()
    within = sum(np.sum((zi - m) ** 2) for zi, m in zip(z, zbar_i))
    if within == 0:
        raise DomainError("zero within-group spread; Levene statistic undefined")
    W = (N - k) / (k - 1) * np.sum(n * (zbar_i - zbar) ** 2) / within
    return float(W), float(stats.f.sf(W, k - 1, N - k))


def welch(a, b) -> tuple[float, float, float]:
    """Welch two-sample t-test: ``(t, df, two-sided p)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    va, vb = a.var(ddof=1) / na, b.var(ddof=1) / nb
    se2 = va + vb
    if se2 == 0:
        raise DomainError("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return float(t), float(df), float(min(p, 1.0))


def per_sample_total_error(pred, truth) -> np.ndarray:
    """Sum of squared errors over the outputs of each sample."""
    return np.sum((np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float)) ** 2, axis=1)


@dataclass
class ComparisonReport:
    mean_a: float
    sd_a: float
    mean_b: float
    sd_b: float
    lilliefors_a: tuple
    lilliefors_b: tuple
    levene: tuple
    welch_t: float
    welch_df: float
    welch_p: float
    n_mc: int
    rmse_reduction: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_error": {"a": {"mean": self.mean_a, "sd": self.sd_a},
                            "b": {"mean": self.mean_b, "sd": self.sd_b}},
            "lilliefors": {"a": {"D": self.lilliefors_a[0], "p": self.lilliefors_a[1]},
                           "b": {"D": self.lilliefors_b[0], "p": self.lilliefors_b[1]},
                           "n_mc": self.n_mc},
            "levene": {"W": self.levene[0], "p": self.levene[1]},
            "welch": {"t": self.welch_t, "df": self.welch_df, "p": self.welch_p},
            "rmse_reduction_pct": {k: (_nan_to_none(v) if not isinstance(v, dict)
                                       else {kk: _nan_to_none(vv) for kk, vv in v.items()})
                                   for k, v in self.rmse_reduction.items()},
        }


def compare_models(errs_a, errs_b, n_mc: int = 10000, seed: int = 0,
                   metrics_a: MetricsTable | None = None,
                   metrics_b: MetricsTable | None = None) -> ComparisonReport:
    """Normality, variance and mean comparison of two models' per-sample errors.

    ``errs_*`` are either per-sample totals (1-D) or residual matrices, which
    are reduced to per-sample sums of squares.
    """
    a = np.asarray(errs_a, dtype=float)
    b = np.asarray(errs_b, dtype=float)
    a = np.sum(a ** 2, axis=1) if a.ndim == 2 else a
    b = np.sum(b ** 2, axis=1) if b.ndim == 2 else b
    if len(a) < 8 or len(b) < 8:
        raise DomainError("each error list needs at least 8 samples")
    t, df, p = welch(a, b)
    red = rmse_reduction(metrics_a, metrics_b) if metrics_a and metrics_b else {}
    return ComparisonReport(
        mean_a=float(a.mean()), sd_a=float(a.std(ddof=1)),
        mean_b=float(b.mean()), sd_b=float(b.std(ddof=1)),
        lilliefors_a=lilliefors(a, n_mc, seed), lilliefors_b=lilliefors(b, n_mc, seed + 1),
        levene=levene(a, b), welch_t=t, welch_df=df, welch_p=p, n_mc=n_mc, rmse_reduction=red)


def pearson_r(pred, truth) -> float:
    """Correlation of all predicted vs. true values pooled together."""
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    return float(np.corrcoef(p, t)[0, 1])


def format_table(nn: MetricsTable, rf: MetricsTable, names=("Neural Network", "Random Forest")) -> str:
    """Side-by-side text table: RMSE / R2 / max error per output and overall."""
    def r2s(x):
        if math.isnan(x):
            return "   n/a"
        return f"{x:6.3f}" if x > -10 else "  <-10"

    head = f"{'Point':<8}| {names[0]:^26} | {names[1]:^26}"
    sub = f"{'':<8}| {'RMSE':>8} {'R2':>6} {'MaxErr':>9} | {'RMSE':>8} {'R2':>6} {'MaxErr':>9}"
    lines = [head, sub, "-" * len(sub)]
    for i, name in enumerate(OUTPUT_NAMES):
        lines.append(f"{name:<8}| {nn.rmse[i]:8.4f} {r2s(nn.r2[i])} {nn.max_abs_err[i]:9.4f} | "
                     f"{rf.rmse[i]:8.4f} {r2s(rf.r2[i])} {rf.max_abs_err[i]:9.4f}")
    lines.append("-" * len(sub))
    lines.append(f"{'Overall':<8}| {nn.overall_rmse:8.4f} {r2s(nn.overall_r2)} {nn.overall_max:9.4f} | "
                 f"{rf.overall_rmse:8.4f} {r2s(rf.overall_r2)} {rf.overall_max:9.4f}")
    return "\n".join(lines)
