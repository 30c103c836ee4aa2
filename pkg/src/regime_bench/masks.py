"""Generative masking: sample the fitted gap process over a fully observed series."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .core import Episode
from .errors import DimensionError, IntegrityError, ParseError
from .missingness import (
    DELTA_MAX,
    DELTA_MIN_SUSTAINED,
    DurationMixture,
    MissingnessModel,
    regime_of_hour,
)

PROVENANCES = ("empirical", "protocol_A", "protocol_B", "protocol_C")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GapDraw:
    """One onset event produced while walking the generative process."""

    t_start: int
    hour: int
    regime: str
    kind: str  # "short" | "sustained"
    minutes: int


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary retention vector (1 = retained, 0 = masked)."""

    bits: np.ndarray
    seed: int = 0
    provenance: str = "empirical"
    events: tuple[GapDraw, ...] = field(default=(), repr=False)

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size < 1:
            raise DimensionError("mask bits must be a 1-D vector with T >= 1")
        if self.provenance not in PROVENANCES:
            raise DimensionError(f"unknown provenance {self.provenance!r}")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def T(self) -> int:
        return self.bits.size

    def masked_fraction(self) -> float:
        return float(1.0 - self.bits.mean())


def round5(x: float) -> int:
    """Nearest multiple of 5, half-up."""
    return int(math.floor(x / 5.0 + 0.5)) * 5


def derive_seed(master_seed: int, patient_id: str, episode_id: int) -> int:
    """Stable per-episode stream seed, independent of execution order."""
    digest = hashlib.sha256(f"{master_seed}:{patient_id}:{episode_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _trunc_exp_ppf(u: float, k: float) -> float:
    span = DELTA_MAX - DELTA_MIN_SUSTAINED
    c = -math.expm1(-k * span)
    return DELTA_MIN_SUSTAINED - math.log1p(-u * c) / k


def _trunc_norm_ppf(u: float, mu: float, sigma: float) -> float:
    if sigma <= 1e-12:
        return min(max(mu, DELTA_MIN_SUSTAINED), DELTA_MAX)
    lo = ndtr((DELTA_MIN_SUSTAINED - mu) / sigma)
    hi = ndtr((DELTA_MAX - mu) / sigma)
    p = min(max(lo + u * (hi - lo), 1e-15), 1.0 - 1e-15)
    return mu + sigma * float(ndtri(p))


def sample_duration(model: MissingnessModel, regime: str, rng: np.random.Generator) -> int:
    """Draw one sustained-gap duration in minutes (grid-aligned, in [10, 240])."""
    mix = model.regime_model(regime).mixture
    u = rng.random()
    v = rng.random()
    if u < mix.w_exp:
        x = _trunc_exp_ppf(v, mix.k)
    elif u < mix.w_exp + mix.w_gauss:
        x = _trunc_norm_ppf(v, mix.mu, mix.sigma)
    else:
        x = DELTA_MIN_SUSTAINED + (DELTA_MAX - DELTA_MIN_SUSTAINED) * v
    return min(max(round5(x), DELTA_MIN_SUSTAINED), DELTA_MAX)


def sampled_duration_pmf(mixture: DurationMixture) -> tuple[np.ndarray, np.ndarray]:
    """Exact distribution of sample_duration's output on the 5-min grid.

    Accounts for the round-to-grid step, so it is the right reference for
    goodness-of-fit checks against generated durations.
    """
    grid = np.arange(DELTA_MIN_SUSTAINED, DELTA_MAX + 1, 5)
    upper = mixture.cdf(grid + 2.5)
    lower = mixture.cdf(grid - 2.5)
    probs = upper - lower
    probs[0] = upper[0]  # everything below 12.5 rounds to 10
    probs[-1] = 1.0 - lower[-1]
    return grid, probs


def generate_mask(
    T: int, start_time_of_day: int, model: MissingnessModel, seed
) -> Mask:
    """Walk the hourly Bernoulli onset process and carve gaps (Algorithm-1 style).

    Hours consumed by a gap are skipped; the walk resumes at the first index
    after the gap. The onset index is uniform over the tested hour's grid
    indices that fall inside [0, T).
    """
    if T < 1:
        raise DimensionError("mask length must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    seed_value = seed if isinstance(seed, (int, np.integer)) else 0
    bits = np.ones(T, dtype=np.uint8)
    onset = model.onset_prob
    events = []
    t = 0
    while t < T:
        minute = start_time_of_day + 5 * t
        hour = (minute % 1440) // 60
        boundary = (minute // 60 + 1) * 60
        t_next = t + (boundary - minute + 4) // 5
        if rng.random() < onset[hour]:
            regime = regime_of_hour(hour)
            rm = model.regime_model(regime)
            if rng.random() < rm.pi_short:
                kind, delta = "short", 5
            else:
                kind, delta = "sustained", sample_duration(model, regime, rng)
            length = -(-delta // 5)
            t_start = int(rng.integers(t, min(t_next, T)))
            bits[t_start : min(t_start + length, T)] = 0
            events.append(GapDraw(t_start, int(hour), regime, kind, delta))
            t = t_start + length
        else:
            t = t_next
    return Mask(bits, seed=int(seed_value), provenance="empirical", events=tuple(events))


def apply_mask(episode: Episode, mask: Mask) -> Episode:
    """Hide glucose where the mask is 0; the original episode keeps ground truth."""
    if mask.T != episode.T:
        raise DimensionError(f"mask length {mask.T} != episode length {episode.T}")
    hidden = mask.bits == 0
    if np.any(hidden & (episode.observed == 0)):
        raise IntegrityError("mask hides indices that were never observed")
    glucose = episode.glucose.copy()
    glucose[hidden] = np.nan
    return Episode(
        episode.patient_id,
        episode.episode_id,
        episode.start_minute,
        glucose,
        episode.exog,
        episode.observed & mask.bits,
    )


def bits_to_runs(bits: np.ndarray) -> list[tuple[int, int]]:
    """Run-length encode the masked (0) stretches as (start, length) pairs."""
    hidden = np.asarray(bits) == 0
    padded = np.concatenate(([False], hidden, [False]))
    edges = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def runs_to_bits(T: int, runs) -> np.ndarray:
    bits = np.ones(T, dtype=np.uint8)
    for start, length in runs:
        if start < 0 or start + length > T:
            raise DimensionError(f"run ({start}, {length}) exceeds mask length {T}")
        bits[start : start + length] = 0
    return bits


def write_masks_json(entries, path, provenance: str = "empirical", condition: str | None = None):
    """Serialize masks as run-length encoded JSON.

    entries: iterable of (patient_id, episode_id, Mask).
    """
    records = []
    for patient_id, episode_id, mask in sorted(entries, key=lambda e: (e[0], e[1])):
        records.append(
            {
                "patient_id": patient_id,
                "episode_id": episode_id,
                "T": mask.T,
                "seed": mask.seed,
                "provenance": mask.provenance,
                "gaps": [
                    {"start_index": s, "length_samples": n}
                    for s, n in bits_to_runs(mask.bits)
                ],
            }
        )
    doc = {"schema_version": SCHEMA_VERSION, "provenance": provenance, "masks": records}
    if condition is not None:
        doc["condition"] = condition
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_masks_json(path):
    """Load masks; returns (metadata, {(patient_id, episode_id): Mask})."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"unsupported mask schema {doc.get('schema_version')!r}")
    masks = {}
    for rec in doc["masks"]:
        runs = [(g["start_index"], g["length_samples"]) for g in rec["gaps"]]
        masks[(rec["patient_id"], rec["episode_id"])] = Mask(
            runs_to_bits(rec["T"], runs),
            seed=rec.get("seed", 0),
            provenance=rec.get("provenance", "empirical"),
        )
    meta = {k: v for k, v in doc.items() if k != "masks"}
    return meta, masks
