"""Uniform 5-minute CGM episodes: CSV ingestion, resampling, partitioning, model inputs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import (
    DimensionError,
    EmptyEpisodeError,
    IntegrityError,
    OrderingError,
    ParseError,
)

GRID_MINUTES = 5
SAMPLES_PER_DAY = 288
GLUCOSE_MIN = 20.0
GLUCOSE_MAX = 500.0

CGM_HEADER = ["patient_id", "timestamp", "glucose", "carbs", "bolus", "basal"]
INPUT_HEADER = ["t", "masked_glucose", "carbs", "bolus", "basal", "sin_t", "cos_t"]

_EPOCH = datetime(1970, 1, 1)


@dataclass(frozen=True)
class Sample:
    """One parsed CSV row: a timestamped reading with exogenous event values.

    glucose is None for event-only rows. Range and sign guards are applied at
    parse time so errors can carry the offending line number.
    """

    timestamp: float  # minutes
    glucose: float | None
    carbs: float
    bolus: float
    basal: float


@dataclass(frozen=True)
class TimeEncoding:
    """Sinusoidal time-of-day features for one grid index."""

    sin_component: float
    cos_component: float


@dataclass(frozen=True)
class InputVector:
    """Model input for one time step: masked glucose, exogenous channels, clock."""

    masked_glucose: float
    exog: tuple[float, float, float]
    encoding: TimeEncoding


@dataclass(frozen=True, eq=False)
class Episode:
    """One contiguous, uniformly sampled multichannel trace.

    glucose is NaN exactly where observed == 0. exog columns are
    (carbs, bolus, basal). start_minute is absolute minutes on the 5-min
    grid; start_time_of_day derives from it.
    """

    patient_id: str
    episode_id: int
    start_minute: int
    glucose: np.ndarray
    exog: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        glucose = np.ascontiguousarray(self.glucose, dtype=np.float64)
        exog = np.ascontiguousarray(self.exog, dtype=np.float64)
        observed = np.ascontiguousarray(self.observed, dtype=np.uint8)
        if glucose.ndim != 1 or glucose.size < 1:
            raise DimensionError("episode needs a 1-D glucose vector with T >= 1")
        t = glucose.size
        if exog.shape != (t, 3):
            raise DimensionError(f"exog must be ({t}, 3), got {exog.shape}")
        if observed.shape != (t,):
            raise DimensionError(f"observed must be ({t},), got {observed.shape}")
        if self.start_minute % GRID_MINUTES != 0:
            raise DimensionError("start_minute must sit on the 5-minute grid")
        missing = np.isnan(glucose)
        if not np.array_equal(missing, observed == 0):
            raise IntegrityError("observed flags must match NaN positions in glucose")
        present = glucose[~missing]
        if present.size and (present.min() < GLUCOSE_MIN or present.max() > GLUCOSE_MAX):
            raise IntegrityError(
                f"glucose outside sensor range [{GLUCOSE_MIN:g}, {GLUCOSE_MAX:g}] mg/dL"
            )
        for arr in (glucose, exog, observed):
            arr.flags.writeable = False
        object.__setattr__(self, "glucose", glucose)
        object.__setattr__(self, "exog", exog)
        object.__setattr__(self, "observed", observed)

    @property
    def T(self) -> int:
        return self.glucose.size

    @property
    def start_time_of_day(self) -> int:
        return self.start_minute % 1440

    def minute_at(self, t: int) -> int:
        return self.start_minute + GRID_MINUTES * t

    def hour_at(self, t: int) -> int:
        """Hour of day (0-23) of grid index t."""
        return (self.minute_at(t) % 1440) // 60

    def day_at(self, t: int) -> int:
        """Absolute day index of grid index t."""
        return self.minute_at(t) // 1440

    def fully_observed(self) -> bool:
        return bool(self.observed.all())


def episodes_equal(a: Episode, b: Episode) -> bool:
    return (
        a.patient_id == b.patient_id
        and a.episode_id == b.episode_id
        and a.start_minute == b.start_minute
        and np.array_equal(a.glucose, b.glucose, equal_nan=True)
        and np.array_equal(a.exog, b.exog)
        and np.array_equal(a.observed, b.observed)
    )


def snap_to_grid(minute: float) -> int:
    # round-half-up keeps tie handling deterministic across platforms
    return int(math.floor(minute / GRID_MINUTES + 0.5)) * GRID_MINUTES


def _parse_timestamp(text: str, line_no: int) -> float:
    text = text.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    try:
        stamp = text.replace("Z", "+00:00") if text.endswith("Z") else text
        dt = datetime.fromisoformat(stamp)
    except ValueError as exc:
        raise ParseError(f"line {line_no}: bad timestamp {text!r}") from exc
    # timestamps are taken as local wall-clock; drop any offset rather than convert
    dt = dt.replace(tzinfo=None)
    return (dt - _EPOCH).total_seconds() / 60.0


def _parse_float(text: str, field: str, line_no: int, default: float = 0.0) -> float:
    text = text.strip()
    if not text:
        return default
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"line {line_no}: bad {field} value {text!r}") from exc


def _parse_row(row, line_no: int) -> tuple[str, Sample]:
    if len(row) != len(CGM_HEADER):
        raise ParseError(f"line {line_no}: expected {len(CGM_HEADER)} fields, got {len(row)}")
    patient = row[0].strip()
    if not patient:
        raise ParseError(f"line {line_no}: empty patient_id")
    minute = _parse_timestamp(row[1], line_no)
    glucose_text = row[2].strip()
    glucose = None
    if glucose_text:
        glucose = _parse_float(glucose_text, "glucose", line_no)
        if not (GLUCOSE_MIN <= glucose <= GLUCOSE_MAX):
            raise ParseError(
                f"line {line_no}: glucose {glucose} outside [{GLUCOSE_MIN:g}, {GLUCOSE_MAX:g}]"
            )
    carbs = _parse_float(row[3], "carbs", line_no)
    bolus = _parse_float(row[4], "bolus", line_no)
    basal = _parse_float(row[5], "basal", line_no)
    if min(carbs, bolus, basal) < 0:
        raise ParseError(f"line {line_no}: negative exogenous value")
    return patient, Sample(minute, glucose, carbs, bolus, basal)


def ingest_csv(path, partition_gap_minutes: int) -> list[Episode]:
    """Read a CGM CSV, resample to the 5-min grid and partition into episodes.

    A new episode starts whenever consecutive glucose observations are more
    than partition_gap_minutes apart. Exogenous channels are zero-filled on
    grid points without an event.
    """
    if partition_gap_minutes <= 0:
        raise ParseError("partition_gap_minutes must be positive")
    path = Path(path)
    # per patient: grid minute -> [glucose, carbs, bolus, basal]
    grids: dict[str, dict[int, list[float]]] = {}
    last_raw: dict[str, float] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CGM_HEADER:
            raise ParseError(f"line 1: expected header {','.join(CGM_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            patient, sample = _parse_row(row, line_no)
            if patient in last_raw and sample.timestamp < last_raw[patient]:
                raise OrderingError(
                    f"line {line_no}: timestamp decreases within patient {patient!r}"
                )
            last_raw[patient] = sample.timestamp
            grid = snap_to_grid(sample.timestamp)
            cell = grids.setdefault(patient, {}).setdefault(grid, [math.nan, 0.0, 0.0, 0.0])
            if sample.glucose is not None:
                cell[0] = sample.glucose  # later reading wins on grid collisions
            cell[1] += sample.carbs  # events accumulate rather than overwrite
            cell[2] += sample.bolus
            if sample.basal:
                cell[3] = sample.basal
    episodes = []
    for patient in sorted(grids):
        cells = grids[patient]
        obs_minutes = sorted(m for m, c in cells.items() if not math.isnan(c[0]))
        if not obs_minutes:
            continue
        # split where consecutive observations are further apart than the threshold
        segments = [[obs_minutes[0]]]
        for m in obs_minutes[1:]:
            if m - segments[-1][-1] > partition_gap_minutes:
                segments.append([])
            segments[-1].append(m)
        for episode_id, seg in enumerate(segments):
            start, end = seg[0], seg[-1]
            t_len = (end - start) // GRID_MINUTES + 1
            glucose = np.full(t_len, np.nan)
            exog = np.zeros((t_len, 3))
            for t in range(t_len):
                cell = cells.get(start + GRID_MINUTES * t)
                if cell is None:
                    continue
                glucose[t] = cell[0]
                exog[t] = cell[1:]
            observed = (~np.isnan(glucose)).astype(np.uint8)
            episodes.append(
                Episode(patient, episode_id, start, glucose, exog, observed)
            )
    return episodes


def export_csv(episodes: list[Episode], path) -> None:
    """Write episodes back to the standard CGM CSV (integer-minute timestamps)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CGM_HEADER)
        for ep in sorted(episodes, key=lambda e: (e.patient_id, e.episode_id)):
            for t in range(ep.T):
                g = ep.glucose[t]
                writer.writerow(
                    [
                        ep.patient_id,
                        ep.minute_at(t),
                        "" if math.isnan(g) else repr(float(g)),
                        repr(float(ep.exog[t, 0])),
                        repr(float(ep.exog[t, 1])),
                        repr(float(ep.exog[t, 2])),
                    ]
                )


def linear_fill(episode: Episode) -> Episode:
    """Interpolate interior gaps linearly and trim unobservable edges."""
    obs_idx = np.flatnonzero(episode.observed)
    if obs_idx.size == 0:
        raise EmptyEpisodeError(
            f"episode {episode.patient_id}/{episode.episode_id} has no observations"
        )
    lo, hi = int(obs_idx[0]), int(obs_idx[-1])
    glucose = episode.glucose[lo : hi + 1].copy()
    missing = np.isnan(glucose)
    if missing.any():
        known = np.flatnonzero(~missing)
        glucose[missing] = np.interp(np.flatnonzero(missing), known, glucose[known])
    return Episode(
        episode.patient_id,
        episode.episode_id,
        episode.start_minute + GRID_MINUTES * lo,
        glucose,
        episode.exog[lo : hi + 1],
        np.ones(hi - lo + 1, dtype=np.uint8),
    )


def time_encoding(t: int, start_time_of_day: int = 0) -> TimeEncoding:
    """Sinusoidal embedding of the absolute time of day at grid index t."""
    if t < 0:
        raise DimensionError("grid index must be >= 0")
    i = ((start_time_of_day // GRID_MINUTES + t) % SAMPLES_PER_DAY) / SAMPLES_PER_DAY
    angle = 2.0 * math.pi * i
    return TimeEncoding(math.sin(angle), math.cos(angle))


def build_inputs(episode: Episode, mask) -> list[InputVector]:
    """Per-step model inputs: masked glucose, exogenous channels, time encoding."""
    bits = np.asarray(mask.bits if hasattr(mask, "bits") else mask, dtype=np.uint8)
    if bits.shape != (episode.T,):
        raise DimensionError(f"mask length {bits.size} != episode length {episode.T}")
    if np.any((bits == 1) & (episode.observed == 0)):
        raise IntegrityError("mask retains an index with no ground-truth observation")
    out = []
    for t in range(episode.T):
        g = float(episode.glucose[t]) if bits[t] else 0.0
        out.append(
            InputVector(
                g,
                tuple(float(v) for v in episode.exog[t]),
                time_encoding(t, episode.start_time_of_day),
            )
        )
    return out


def export_inputs(episode: Episode, mask, path) -> None:
    """Serialize build_inputs for one episode to CSV."""
    rows = build_inputs(episode, mask)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INPUT_HEADER)
        for t, vec in enumerate(rows):
            writer.writerow(
                [
                    t,
                    repr(vec.masked_glucose),
                    repr(vec.exog[0]),
                    repr(vec.exog[1]),
                    repr(vec.exog[2]),
                    repr(vec.encoding.sin_component),
                    repr(vec.encoding.cos_component),
                ]
            )
