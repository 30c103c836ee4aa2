"""Classical baselines and the file interface for external model outputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Episode
from .errors import (
    CoverageError,
    DimensionError,
    EmptyEpisodeError,
    IntegrityError,
    ParseError,
)
from .masks import Mask

EXTERNAL_HEADER = ["patient_id", "episode_id", "t", "value", "method"]
RETAINED_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class Imputation:
    """A full-length imputed series for one episode."""

    values: np.ndarray
    method: str
    episode_ref: tuple[str, int]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def _retained_bits(episode: Episode, mask: Mask) -> np.ndarray:
    if mask.T != episode.T:
        raise DimensionError(f"mask length {mask.T} != episode length {episode.T}")
    bits = mask.bits.astype(bool)
    if np.any(bits & (episode.observed == 0)):
        raise IntegrityError("mask retains an index with no ground-truth observation")
    return bits


def _constant_fill(episode: Episode, mask: Mask, reducer, method: str) -> Imputation:
    bits = _retained_bits(episode, mask)
    if not bits.any():
        raise EmptyEpisodeError("imputer needs at least one retained observation")
    values = np.where(bits, episode.glucose, reducer(episode.glucose[bits]))
    return Imputation(values, method, (episode.patient_id, episode.episode_id))


def impute_mean(episode: Episode, mask: Mask) -> Imputation:
    return _constant_fill(episode, mask, np.mean, "mean")


def impute_median(episode: Episode, mask: Mask) -> Imputation:
    return _constant_fill(episode, mask, np.median, "median")


def impute_locf(episode: Episode, mask: Mask) -> Imputation:
    """Last retained observation carried forward; a leading gap takes the next one."""
    bits = _retained_bits(episode, mask)
    retained = np.flatnonzero(bits)
    if retained.size == 0:
        raise EmptyEpisodeError("imputer needs at least one retained observation")
    pos = np.searchsorted(retained, np.arange(episode.T), side="right") - 1
    source = retained[np.clip(pos, 0, retained.size - 1)]
    values = episode.glucose[source].copy()
    values[bits] = episode.glucose[bits]
    return Imputation(values, "locf", (episode.patient_id, episode.episode_id))


def impute_lerp(episode: Episode, mask: Mask) -> Imputation:
    """Linear interpolation between bracketing retained observations."""
    bits = _retained_bits(episode, mask)
    retained = np.flatnonzero(bits)
    if retained.size == 0:
        raise EmptyEpisodeError("imputer needs at least one retained observation")
    values = episode.glucose.copy()
    hidden = np.flatnonzero(~bits)
    if hidden.size:
        # np.interp clamps to the nearest retained value at the boundaries
        values[hidden] = np.interp(hidden, retained, episode.glucose[retained])
    values[bits] = episode.glucose[bits]
    return Imputation(values, "lerp", (episode.patient_id, episode.episode_id))


BUILTIN_IMPUTERS = {
    "mean": impute_mean,
    "median": impute_median,
    "locf": impute_locf,
    "lerp": impute_lerp,
}


def write_imputations_csv(imputations: list[Imputation], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXTERNAL_HEADER)
        for imp in sorted(imputations, key=lambda i: i.episode_ref):
            patient_id, episode_id = imp.episode_ref
            for t, value in enumerate(imp.values):
                writer.writerow([patient_id, episode_id, t, repr(float(value)), imp.method])


def _read_external_rows(path):
    series: dict[tuple[str, int], dict[int, float]] = {}
    methods: set[str] = set()
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EXTERNAL_HEADER:
            raise ParseError(f"line 1: expected header {','.join(EXTERNAL_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"line {line_no}: expected 5 fields")
            try:
                key = (row[0], int(row[1]))
                t = int(row[2])
                value = float(row[3])
            except ValueError as exc:
                raise ParseError(f"line {line_no}: bad imputation row") from exc
            methods.add(row[4].strip())
            series.setdefault(key, {})[t] = value
    if len(methods) != 1:
        raise ParseError(f"expected exactly one method per file, found {sorted(methods)}")
    return methods.pop(), series


def load_external(path, episodes: list[Episode], masks: dict) -> list[Imputation]:
    """Load an external imputation file and validate it against ground truth.

    Every episode must be fully covered, and values at retained indices must
    echo the observed glucose within 1e-6.
    """
    method, series = _read_external_rows(path)
    out = []
    for ep in episodes:
        key = (ep.patient_id, ep.episode_id)
        if key not in series:
            raise CoverageError(f"{path}: no rows for episode {key[0]}/{key[1]}")
        rows = series[key]
        missing = [t for t in range(ep.T) if t not in rows]
        if missing:
            raise CoverageError(
                f"{path}: episode {key[0]}/{key[1]} missing indices {missing[:5]}"
                + ("..." if len(missing) > 5 else "")
            )
        values = np.array([rows[t] for t in range(ep.T)])
        if not np.isfinite(values).all():
            raise IntegrityError(f"{path}: non-finite value in episode {key[0]}/{key[1]}")
        mask = masks.get(key)
        if mask is None:
            raise CoverageError(f"no mask supplied for episode {key[0]}/{key[1]}")
        bits = _retained_bits(ep, mask)
        drift = np.abs(values[bits] - ep.glucose[bits])
        if drift.size and drift.max() > RETAINED_TOLERANCE:
            t_bad = int(np.flatnonzero(bits)[int(np.argmax(drift))])
            raise IntegrityError(
                f"{path}: episode {key[0]}/{key[1]} alters retained value at t={t_bad} "
                f"by {drift.max():.3g}"
            )
        out.append(Imputation(values, method, key))
    return out
