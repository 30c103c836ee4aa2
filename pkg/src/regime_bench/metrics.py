"""Scoring on masked indices: pointwise, morphological (DTW), distributional."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MetricDomainError
from .masks import Mask, bits_to_runs

HIST_EDGES = np.arange(20, 505, 5, dtype=float)  # 5 mg/dL bins over [20, 500)

METRIC_FIELDS = ("rmse", "bias", "emp_se", "mard", "dtw")


@dataclass(frozen=True)
class MetricsReport:
    """Per-episode scores over masked indices only."""

    rmse: float
    bias: float
    emp_se: float
    mard: float
    dtw: float
    n_points: int
    n_gaps: int


@dataclass(frozen=True, eq=False)
class CalibrationSummary:
    """Conditional moments and 5 mg/dL histograms of truth vs imputed values."""

    truth_mean: float
    truth_std: float
    imputed_mean: float
    imputed_std: float
    delta: float
    truth_hist: np.ndarray
    imputed_hist: np.ndarray
    n_points: int


def _masked_pairs(truth, imputed, mask: Mask):
    truth = np.asarray(truth, dtype=float)
    imputed = np.asarray(imputed, dtype=float)
    if truth.shape != imputed.shape or truth.shape != (mask.T,):
        raise MetricDomainError("truth, imputed and mask lengths must agree")
    hidden = mask.bits == 0
    if not hidden.any():
        raise MetricDomainError("mask has no masked indices to score")
    return truth, imputed, hidden


def pointwise_metrics(truth, imputed, mask: Mask) -> tuple[float, float, float, float]:
    """(rmse, bias, emp_se, mard) over masked indices.

    emp_se is the population standard deviation of the residuals, recovered
    from the decomposition rmse^2 = bias^2 + emp_se^2.
    """
    truth, imputed, hidden = _masked_pairs(truth, imputed, mask)
    y = truth[hidden]
    y_hat = imputed[hidden]
    if np.any(y <= 0):
        raise MetricDomainError("MARD needs strictly positive truth at masked indices")
    residual = y_hat - y
    bias = float(residual.mean())
    rmse = float(np.sqrt(np.mean(residual**2)))
    emp_se = math.sqrt(max(rmse**2 - bias**2, 0.0))
    mard = float(np.mean(np.abs(residual) / y) * 100.0)
    return rmse, bias, emp_se, mard


def dtw_distance(a, b) -> float:
    """Classic unconstrained DTW with |a_i - b_j| local cost."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise MetricDomainError("DTW needs two non-empty sequences")
    n, m = a.size, b.size
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row = acc[i]
        prev = acc[i - 1]
        ai = a[i - 1]
        for j in range(1, m + 1):
            row[j] = abs(ai - b[j - 1]) + min(prev[j], row[j - 1], prev[j - 1])
    return float(acc[n, m])


def segment_dtw(truth, imputed, mask: Mask) -> float:
    """DTW restricted to each contiguous masked run, summed over runs."""
    truth, imputed, _ = _masked_pairs(truth, imputed, mask)
    runs = bits_to_runs(mask.bits)
    total = 0.0
    for start, length in runs:
        total += dtw_distance(truth[start : start + length], imputed[start : start + length])
    return total


def score_episode(truth, imputed, mask: Mask) -> MetricsReport:
    rmse, bias, emp_se, mard = pointwise_metrics(truth, imputed, mask)
    runs = bits_to_runs(mask.bits)
    return MetricsReport(
        rmse=rmse,
        bias=bias,
        emp_se=emp_se,
        mard=mard,
        dtw=segment_dtw(truth, imputed, mask),
        n_points=int((mask.bits == 0).sum()),
        n_gaps=len(runs),
    )


def _summarize(y: np.ndarray, y_hat: np.ndarray) -> CalibrationSummary:
    truth_hist = np.histogram(np.clip(y, 20.0, 500.0), bins=HIST_EDGES)[0]
    imputed_hist = np.histogram(np.clip(y_hat, 20.0, 500.0), bins=HIST_EDGES)[0]
    truth_mean = float(y.mean())
    imputed_mean = float(y_hat.mean())
    return CalibrationSummary(
        truth_mean=truth_mean,
        truth_std=float(y.std()),
        imputed_mean=imputed_mean,
        imputed_std=float(y_hat.std()),
        delta=imputed_mean - truth_mean,
        truth_hist=truth_hist,
        imputed_hist=imputed_hist,
        n_points=int(y.size),
    )


def _apply_filter(values: np.ndarray, regime_filter) -> np.ndarray:
    result = regime_filter(values)
    result = np.asarray(result)
    if result.shape != values.shape:  # scalar predicate
        result = np.array([bool(regime_filter(v)) for v in values])
    return result.astype(bool)


def calibration(truth, imputed, mask: Mask, regime_filter=None) -> CalibrationSummary:
    """Conditional calibration over masked indices whose truth is in-regime."""
    truth, imputed, hidden = _masked_pairs(truth, imputed, mask)
    select = hidden.copy()
    if regime_filter is not None:
        select &= _apply_filter(truth, regime_filter)
    if not select.any():
        raise MetricDomainError("no masked indices fall in the requested regime")
    return _summarize(truth[select], imputed[select])


def pooled_calibration(triples, regime_filter=None) -> CalibrationSummary:
    """Calibration over masked values pooled across (truth, imputed, mask) triples.

    Triples whose mask hides nothing contribute nothing.
    """
    ys, yhs = [], []
    for truth, imputed, mask in triples:
        if not (mask.bits == 0).any():
            continue
        truth, imputed, hidden = _masked_pairs(truth, imputed, mask)
        select = hidden.copy()
        if regime_filter is not None:
            select &= _apply_filter(truth, regime_filter)
        ys.append(truth[select])
        yhs.append(imputed[select])
    y = np.concatenate(ys) if ys else np.array([])
    y_hat = np.concatenate(yhs) if yhs else np.array([])
    if y.size == 0:
        raise MetricDomainError("no masked indices fall in the requested regime")
    return _summarize(y, y_hat)


def aggregate(entries) -> list[dict]:
    """Mean metrics per (model, protocol, condition) group with ranking flags.

    entries: iterable of ((model, protocol, condition), MetricsReport).
    Best/second-best flags are computed per (protocol, condition) across
    models; bias is ranked by absolute value.
    """
    groups: dict[tuple, list[MetricsReport]] = {}
    for key, report in entries:
        groups.setdefault(tuple(key), []).append(report)
    if not groups:
        warnings.warn("aggregate called with no reports; table is empty")
        return []
    rows = []
    for key in sorted(groups):
        reports = groups[key]
        model, protocol, condition = key
        row = {
            "model": model,
            "protocol": protocol,
            "condition": condition,
            "n_episodes": len(reports),
        }
        for field in METRIC_FIELDS:
            row[field] = float(np.mean([getattr(r, field) for r in reports]))
        row["best"] = []
        row["second"] = []
        rows.append(row)
    by_scenario: dict[tuple, list[dict]] = {}
    for row in rows:
        by_scenario.setdefault((row["protocol"], row["condition"]), []).append(row)
    for scenario_rows in by_scenario.values():
        for field in METRIC_FIELDS:
            ranking = sorted(
                scenario_rows,
                key=lambda r: abs(r[field]) if field == "bias" else r[field],
            )
            if len(ranking) >= 1:
                ranking[0]["best"].append(field)
            if len(ranking) >= 2:
                ranking[1]["second"].append(field)
    return rows


def render_table(rows: list[dict]) -> str:
    """Plain-text table mirroring the (model x metric) results layout.

    '*' marks the best value in a scenario, '+' the second best.
    """
    if not rows:
        return "(no results)\n"
    lines = []
    by_scenario: dict[tuple, list[dict]] = {}
    for row in rows:
        by_scenario.setdefault((row["protocol"], row["condition"]), []).append(row)
    header = f"{'model':<12}" + "".join(f"{name.upper():>12}" for name in METRIC_FIELDS) + f"{'episodes':>10}"
    for (protocol, condition), scenario_rows in sorted(by_scenario.items()):
        lines.append(f"protocol={protocol} condition={condition}")
        lines.append(header)
        for row in scenario_rows:
            cells = []
            for field in METRIC_FIELDS:
                flag = "*" if field in row["best"] else "+" if field in row["second"] else " "
                cells.append(f"{flag}{row[field]:>10.2f} ")
            lines.append(f"{row['model']:<12}" + "".join(cells) + f"{row['n_episodes']:>9}")
        lines.append("")
    lines.append("* best, + second best per scenario")
    return "\n".join(lines) + "\n"
