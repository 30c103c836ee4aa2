"""Regime detection and protocol-specific evaluation masks.

Protocol A masks stable 30-minute homeostatic windows, Protocol B masks
3.5-4 h windows centered on post-prandial peaks, Protocol C masks 1-hour
windows around hypoglycemic onsets during TCR activation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Episode
from .errors import AllocationError, DimensionError, IntegrityError, ParseError, SelectionError
from .masks import Mask, round5

WINDOW_SAMPLES_A = 6  # 30 minutes
MIN_SAMPLES_B = 42  # 3.5 hours
MAX_SAMPLES_B = 48  # 4 hours
POST_MEAL_SCAN = 48  # 4-hour peak scan
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StabilityCriteria:
    """Thresholds for the five homeostatic-window criteria."""

    glucose_low: float = 70.0
    glucose_high: float = 140.0
    gradient_threshold: float = 0.6  # mg/dL per minute
    gradient_quorum: float = 0.85
    washout_minutes: int = 60
    max_range: float = 25.0


@dataclass(frozen=True)
class RegimeWindow:
    """A protocol-labeled evaluation interval, half-open [start, end)."""

    protocol: str
    start_index: int
    end_index: int
    anchor_index: int | None = None
    meal_index: int | None = None
    meal_carbs: float | None = None


@dataclass(frozen=True)
class MealEvent:
    index: int
    carbs: float


def gradient_of(values: np.ndarray) -> np.ndarray:
    """Glucose gradient in mg/dL/min: central differences, one-sided at the ends."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DimensionError("gradient needs a span of at least 2 samples")
    grad = np.empty_like(values)
    grad[1:-1] = (values[2:] - values[:-2]) / 10.0
    grad[0] = (values[1] - values[0]) / 5.0
    grad[-1] = (values[-1] - values[-2]) / 5.0
    return grad


def gradient(episode: Episode) -> np.ndarray:
    if not episode.fully_observed():
        raise IntegrityError("gradient requires complete glucose")
    return gradient_of(episode.glucose)


def _event_flags(episode: Episode) -> np.ndarray:
    # meal and bolus are discrete events; basal is background delivery
    return (episode.exog[:, 0] > 0) | (episode.exog[:, 1] > 0)


def find_stable_windows(
    episode: Episode, criteria: StabilityCriteria = StabilityCriteria()
) -> list[RegimeWindow]:
    """All 30-min windows meeting the five stability criteria.

    The 60-min washout span must lie fully inside the episode, so windows
    starting in the first hour are never candidates.
    """
    if not episode.fully_observed():
        raise IntegrityError("stable-window detection requires complete glucose")
    g = episode.glucose
    grad = np.abs(gradient(episode))
    events = _event_flags(episode)
    washout = criteria.washout_minutes // 5
    out = []
    for s in range(washout, episode.T - WINDOW_SAMPLES_A + 1):
        e = s + WINDOW_SAMPLES_A
        seg = g[s:e]
        lo, hi = seg.min(), seg.max()
        if lo < criteria.glucose_low or hi > criteria.glucose_high:
            continue
        if np.mean(grad[s:e] < criteria.gradient_threshold) < criteria.gradient_quorum:
            continue
        if events[s:e].any():
            continue
        if events[s - washout : s].any():
            continue
        if hi - lo >= criteria.max_range:
            continue
        out.append(RegimeWindow("A", s, e))
    return out


def _max_disjoint(windows: list[RegimeWindow]) -> int:
    # classic interval scheduling: earliest end first
    count, cursor = 0, -1
    for w in sorted(windows, key=lambda w: w.end_index):
        if w.start_index >= cursor:
            count += 1
            cursor = w.end_index
    return count


def _greedy_select(windows, order, needed: int, T: int) -> list[RegimeWindow]:
    chosen, occupied = [], np.zeros(T, dtype=bool)
    for idx in order:
        w = windows[idx]
        if not occupied[w.start_index : w.end_index].any():
            chosen.append(w)
            occupied[w.start_index : w.end_index] = True
            if len(chosen) == needed:
                break
    return chosen


def allocate_stationary_mask(
    episode: Episode, windows: list[RegimeWindow], ratio: float, seed: int
) -> tuple[Mask, list[RegimeWindow]]:
    """Mask round(ratio*T) samples as full 30-min stable windows plus one partial.

    Full windows are drawn at random (seeded) from the non-overlapping
    candidates; a residual of r samples masks the first r samples of one
    extra window.
    """
    if not 0.0 < ratio < 1.0:
        raise AllocationError(f"ratio must be in (0, 1), got {ratio}")
    T = episode.T
    target = int(np.floor(ratio * T + 0.5))
    n_full, residual = divmod(target, WINDOW_SAMPLES_A)
    needed = n_full + (1 if residual else 0)
    capacity = _max_disjoint(windows)
    if capacity < needed:
        achievable = capacity * WINDOW_SAMPLES_A / T
        raise AllocationError(
            f"only {capacity} disjoint stable windows; achievable ratio <= {achievable:.4f}"
        )
    rng = np.random.default_rng(seed)
    chosen = _greedy_select(windows, rng.permutation(len(windows)), needed, T)
    if len(chosen) < needed:
        # random maximal set fell short of the optimum; use earliest-end order
        order = np.argsort([w.end_index for w in windows], kind="stable")
        chosen = _greedy_select(windows, order, needed, T)
    bits = np.ones(T, dtype=np.uint8)
    for w in chosen[:n_full]:
        bits[w.start_index : w.end_index] = 0
    if residual:
        partial = chosen[n_full]
        bits[partial.start_index : partial.start_index + residual] = 0
    return Mask(bits, seed=seed, provenance="protocol_A"), chosen


def aggregate_meals(episode: Episode) -> list[MealEvent]:
    """Merge carb entries separated by less than one hour into single events."""
    carb_idx = np.flatnonzero(episode.exog[:, 0] > 0)
    events: list[MealEvent] = []
    last = None
    for i in carb_idx:
        i = int(i)
        carbs = float(episode.exog[i, 0])
        if last is not None and i - last < 12:
            events[-1] = MealEvent(events[-1].index, events[-1].carbs + carbs)
        else:
            events.append(MealEvent(i, carbs))
        last = i
    return events


def build_peak_masks(
    episode: Episode, n_peaks: int, seed: int
) -> tuple[Mask, list[RegimeWindow]]:
    """Mask 3.5-4 h windows centered on the first n_peaks post-prandial peaks.

    Windows never cover pre-meal indices (shifted later instead) and are
    clipped at the end of the peak's day; a window truncated below 3.5 h is
    skipped and the next eligible meal is tried.
    """
    if not episode.fully_observed():
        raise IntegrityError("peak masking requires complete glucose")
    if n_peaks < 1:
        raise SelectionError("n_peaks must be >= 1")
    rng = np.random.default_rng(seed)
    g = episode.glucose
    windows = []
    for ev in aggregate_meals(episode):
        if len(windows) == n_peaks:
            break
        if ev.index + POST_MEAL_SCAN > episode.T - 1:
            continue
        post = g[ev.index + 1 : ev.index + POST_MEAL_SCAN + 1]
        peak = ev.index + 1 + int(np.argmax(post))
        length = round5(rng.uniform(210.0, 240.0)) // 5
        start = peak - length // 2
        if start <= ev.index:
            start = ev.index + 1
        end = start + length
        day = episode.day_at(peak)
        next_day_index = ((day + 1) * 1440 - episode.start_minute) // 5
        end = min(end, episode.T, next_day_index)
        if end - start < MIN_SAMPLES_B:
            continue
        windows.append(
            RegimeWindow("B", start, end, anchor_index=peak, meal_index=ev.index, meal_carbs=ev.carbs)
        )
    if len(windows) < n_peaks:
        raise SelectionError(
            f"episode {episode.patient_id}/{episode.episode_id} yields "
            f"{len(windows)} peak windows, requested {n_peaks}"
        )
    bits = np.ones(episode.T, dtype=np.uint8)
    for w in windows:
        bits[w.start_index : w.end_index] = 0
    return Mask(bits, seed=seed, provenance="protocol_B"), windows


def build_hypo_masks(
    episode: Episode, tcr_intervals, window_minutes: int = 60
) -> tuple[Mask, list[RegimeWindow]]:
    """Mask a window centered on the first hypoglycemic sample of each TCR interval."""
    if not episode.fully_observed():
        raise IntegrityError("hypoglycemia masking requires complete glucose")
    length = max(1, round(window_minutes / 5))
    g = episode.glucose
    windows = []
    for ts, te in tcr_intervals:
        ts = max(0, int(ts))
        te = min(episode.T, int(te))
        below = np.flatnonzero(g[ts:te] < 70.0)
        if below.size == 0:
            continue
        anchor = ts + int(below[0])
        start = anchor - length // 2
        end = min(episode.T, start + length)
        start = max(0, start)
        windows.append(RegimeWindow("C", start, end, anchor_index=anchor))
    bits = np.ones(episode.T, dtype=np.uint8)
    for w in windows:
        bits[w.start_index : w.end_index] = 0
    return Mask(bits, provenance="protocol_C"), windows


def write_windows_json(entries, path, protocol: str, condition: str | None = None):
    """entries: iterable of (patient_id, episode_id, RegimeWindow)."""
    records = []
    for patient_id, episode_id, w in sorted(
        entries, key=lambda e: (e[0], e[1], e[2].start_index)
    ):
        records.append(
            {
                "patient_id": patient_id,
                "episode_id": episode_id,
                "protocol": w.protocol,
                "start_index": w.start_index,
                "end_index": w.end_index,
                "anchor_index": w.anchor_index,
                "meal_index": w.meal_index,
                "meal_carbs": w.meal_carbs,
            }
        )
    doc = {"schema_version": SCHEMA_VERSION, "protocol": protocol, "windows": records}
    if condition is not None:
        doc["condition"] = condition
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_windows_json(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"unsupported windows schema {doc.get('schema_version')!r}")
    out = []
    for rec in doc["windows"]:
        out.append(
            (
                rec["patient_id"],
                rec["episode_id"],
                RegimeWindow(
                    rec["protocol"],
                    rec["start_index"],
                    rec["end_index"],
                    rec.get("anchor_index"),
                    rec.get("meal_index"),
                    rec.get("meal_carbs"),
                ),
            )
        )
    meta = {k: v for k, v in doc.items() if k != "windows"}
    return meta, out


TCR_HEADER = ["patient_id", "episode_id", "tcr_start_index", "tcr_end_index"]


def write_tcr_csv(rows, path):
    """rows: iterable of (patient_id, episode_id, start_index, end_index)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TCR_HEADER)
        for row in sorted(rows):
            writer.writerow(list(row))


def read_tcr_csv(path) -> dict[tuple[str, int], list[tuple[int, int]]]:
    out: dict[tuple[str, int], list[tuple[int, int]]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TCR_HEADER:
            raise ParseError(f"line 1: expected header {','.join(TCR_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"line {line_no}: expected 4 fields")
            try:
                key = (row[0], int(row[1]))
                interval = (int(row[2]), int(row[3]))
            except ValueError as exc:
                raise ParseError(f"line {line_no}: bad TCR interval") from exc
            out.setdefault(key, []).append(interval)
    return out
