"""Deterministic synthetic CGM-like fixtures: baselines, meal peaks, hypo dips.

Geometric stand-in for simulator cohorts: a flat (optionally drifting)
baseline, asymmetric-triangle meal excursions, and an optional
hypoglycemic dip placed inside one TCR window per day. Per-sample regime
labels are emitted for router and calibration tests.

Days are spaced two calendar days apart so the exported CSV partitions
back into the same per-day episodes on ingestion (the inter-day gap
exceeds any episode-split threshold).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Episode, SAMPLES_PER_DAY, export_csv
from .errors import ConfigError
from .protocols import write_tcr_csv

REGIME_NAMES = ("stationary", "peak", "hypo")
LABEL_STATIONARY, LABEL_PEAK, LABEL_HYPO = 0, 1, 2

TCR_DELAY_MIN = 150  # activation 2.5 h post-meal
TCR_DURATION_MIN = 240  # active for 4 h
TCR_BASAL_FACTOR = 0.05


@dataclass(frozen=True)
class SynthConfig:
    days: int
    baseline: float = 100.0
    meal_times: tuple[int, ...] = (480, 780, 1140)  # minutes of day
    meal_carbs: float = 40.0
    bolus_units: float = 5.0
    basal_rate: float = 1.0
    peak_amplitude: float = 80.0
    peak_rise: int = 60  # minutes to peak
    peak_fall: int = 120  # minutes back to baseline
    hypo_depth: float = 0.0  # mg/dL below 70; 0 disables the dip
    hypo_fall: int = 30
    hypo_rise: int = 30
    tcr_meal: int = 0  # which meal gets the TCR intervention
    drift_amplitude: float = 0.0  # triangular baseline drift, piecewise affine
    drift_period: int = 480
    noise_std: float = 0.0
    patient_id: str = "synth-001"
    seed: int = 0


@dataclass(frozen=True)
class SynthResult:
    episodes: list[Episode]
    tcr: list[tuple[str, int, int, int]]  # (patient_id, episode_id, start, end)
    labels: dict[int, np.ndarray]  # episode_id -> per-sample regime codes


def _validate(config: SynthConfig):
    if config.days < 1:
        raise ConfigError("days must be >= 1")
    if not 70.0 <= config.baseline <= 140.0:
        raise ConfigError("baseline must lie in the euglycemic band [70, 140]")
    if config.peak_amplitude < 0 or config.noise_std < 0 or config.hypo_depth < 0:
        raise ConfigError("amplitudes and noise_std must be non-negative")
    if config.peak_rise <= 0 or config.peak_fall <= 0 or config.drift_period <= 0:
        raise ConfigError("rise/fall/period durations must be positive")
    for mt in config.meal_times:
        if mt % 5 or not 0 <= mt < 1440:
            raise ConfigError(f"meal time {mt} must be a 5-min multiple in [0, 1440)")
    if config.meal_times and not 0 <= config.tcr_meal < len(config.meal_times):
        raise ConfigError("tcr_meal must index into meal_times")
    if config.hypo_depth > 0 and not config.meal_times:
        raise ConfigError("hypoglycemic dip needs a meal to anchor the TCR window")


def _triangle(tt: np.ndarray, start: float, up: float, down: float) -> np.ndarray:
    """Unit triangle rising over `up` minutes from `start`, falling over `down`."""
    ramp = np.minimum((tt - start) / up, 1.0 - (tt - start - up) / down)
    return np.clip(ramp, 0.0, 1.0)


def _drift(tt: np.ndarray, amplitude: float, period: int) -> np.ndarray:
    if amplitude == 0.0:
        return np.zeros_like(tt, dtype=float)
    # triangular wave from -amplitude up to +amplitude and back, piecewise affine;
    # kept in ratio-of-integers form so friendly parameter choices stay float-exact
    m = tt % period
    tri = np.where(2.0 * m <= period, 4.0 * m - period, 3.0 * period - 4.0 * m)
    return amplitude * tri / period


def _excursion_intervals(config: SynthConfig) -> list[tuple[float, float, str]]:
    spans = [
        (float(mt), float(mt + config.peak_rise + config.peak_fall), "peak")
        for mt in config.meal_times
    ]
    if config.hypo_depth > 0:
        meal = config.meal_times[config.tcr_meal]
        center = meal + TCR_DELAY_MIN + TCR_DURATION_MIN // 2
        spans.append((float(center - config.hypo_fall), float(center + config.hypo_rise), "hypo"))
    spans.sort()
    for (s0, e0, k0), (s1, e1, k1) in zip(spans, spans[1:]):
        if e0 > s1:
            raise ConfigError(f"{k0} excursion [{s0}, {e0}] overlaps {k1} at {s1}")
    return spans


def generate(config: SynthConfig) -> SynthResult:
    """Build one Episode per day plus TCR metadata and per-sample regime labels."""
    _validate(config)
    spans = _excursion_intervals(config)
    rng = np.random.default_rng(config.seed)
    tt = np.arange(SAMPLES_PER_DAY, dtype=float) * 5.0

    drift = _drift(tt, config.drift_amplitude, config.drift_period)
    signal = config.baseline + drift
    labels = np.full(SAMPLES_PER_DAY, LABEL_STATIONARY, dtype=np.int8)
    # labels carry a one-sample guard band: central differences at a sample
    # touch its neighbors, so the excursion's influence extends one step out
    for mt in config.meal_times:
        signal = signal + config.peak_amplitude * _triangle(
            tt, mt, config.peak_rise, config.peak_fall
        )
        labels[(tt >= mt - 5) & (tt <= mt + config.peak_rise + config.peak_fall + 5)] = LABEL_PEAK

    tcr_span = None
    if config.meal_times:
        meal = config.meal_times[config.tcr_meal]
        tcr_start = meal + TCR_DELAY_MIN
        tcr_end = tcr_start + TCR_DURATION_MIN
        if tcr_end <= 1440:
            tcr_span = (tcr_start // 5, tcr_end // 5)
        elif config.hypo_depth > 0:
            raise ConfigError("TCR window for the selected meal does not fit in the day")
    if config.hypo_depth > 0:
        meal = config.meal_times[config.tcr_meal]
        center = meal + TCR_DELAY_MIN + TCR_DURATION_MIN // 2
        # depth chosen so the dip bottoms out at exactly 70 - hypo_depth
        center_level = config.baseline + float(
            _drift(np.array([float(center)]), config.drift_amplitude, config.drift_period)[0]
        )
        depth = center_level - (70.0 - config.hypo_depth)
        signal = signal - depth * _triangle(
            tt, center - config.hypo_fall, config.hypo_fall, config.hypo_rise
        )
        labels[
            (tt >= center - config.hypo_fall - 5) & (tt <= center + config.hypo_rise + 5)
        ] = LABEL_HYPO

    carbs = np.zeros(SAMPLES_PER_DAY)
    bolus = np.zeros(SAMPLES_PER_DAY)
    for mt in config.meal_times:
        carbs[mt // 5] = config.meal_carbs
        bolus[mt // 5] = config.bolus_units
    basal = np.full(SAMPLES_PER_DAY, config.basal_rate)
    if tcr_span is not None:
        basal[tcr_span[0] : tcr_span[1]] = config.basal_rate * TCR_BASAL_FACTOR
    exog = np.column_stack([carbs, bolus, basal])

    episodes = []
    tcr_rows = []
    label_map = {}
    for day in range(config.days):
        glucose = signal.copy()
        if config.noise_std > 0:
            glucose = glucose + rng.normal(0.0, config.noise_std, SAMPLES_PER_DAY)
        glucose = np.clip(glucose, 20.0, 500.0)
        episodes.append(
            Episode(
                config.patient_id,
                day,
                day * 2880,  # every other calendar day; see module docstring
                glucose,
                exog,
                np.ones(SAMPLES_PER_DAY, dtype=np.uint8),
            )
        )
        if tcr_span is not None:
            tcr_rows.append((config.patient_id, day, tcr_span[0], tcr_span[1]))
        label_map[day] = labels.copy()
    return SynthResult(episodes, tcr_rows, label_map)


def write_labels_csv(result: SynthResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode_id", "t", "regime"])
        for episode_id in sorted(result.labels):
            for t, code in enumerate(result.labels[episode_id]):
                writer.writerow([episode_id, t, REGIME_NAMES[code]])


def write_fixture(result: SynthResult, out_dir) -> dict[str, Path]:
    """Write cgm.csv, tcr.csv and labels.csv into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "cgm": out_dir / "cgm.csv",
        "tcr": out_dir / "tcr.csv",
        "labels": out_dir / "labels.csv",
    }
    export_csv(result.episodes, paths["cgm"])
    write_tcr_csv(result.tcr, paths["tcr"])
    write_labels_csv(result, paths["labels"])
    return paths
