"""Shared test utilities: episode construction and independent oracles."""

import numpy as np

from regime_bench.core import Episode


def make_episode(
    glucose,
    start_minute=0,
    carbs=None,
    bolus=None,
    basal=0.0,
    patient_id="p1",
    episode_id=0,
):
    """Episode from a glucose list (NaN = missing) and sparse event dicts."""
    glucose = np.asarray(glucose, dtype=float)
    exog = np.zeros((glucose.size, 3))
    for idx, grams in (carbs or {}).items():
        exog[idx, 0] = grams
    for idx, units in (bolus or {}).items():
        exog[idx, 1] = units
    exog[:, 2] = basal
    observed = (~np.isnan(glucose)).astype(np.uint8)
    return Episode(patient_id, episode_id, start_minute, glucose, exog, observed)


def brute_force_dtw(a, b):
    """Minimal cumulative |a_i - b_j| over explicit enumeration of monotone paths.

    Exponential-time oracle, only usable for short sequences. Kept free of
    dynamic programming so it stays independent of the implementation it
    checks.
    """
    n, m = len(a), len(b)
    best = [float("inf")]

    def walk(i, j, acc):
        acc = acc + abs(a[i] - b[j])
        if i == n - 1 and j == m - 1:
            best[0] = min(best[0], acc)
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]
