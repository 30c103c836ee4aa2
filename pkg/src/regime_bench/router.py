"""Regime-conditional routing: send each masked gap to Lerp or the external model."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Episode
from .errors import RoutingError
from .imputers import Imputation, impute_lerp
from .masks import Mask, apply_mask, bits_to_runs
from .protocols import StabilityCriteria, gradient_of


@dataclass(frozen=True)
class RoutingDecision:
    """Outcome of classifying one masked gap from its observed context."""

    start_index: int
    length: int
    label: str  # "stationary" | "transient"
    gradient_fraction: float
    left_boundary: float | None
    right_boundary: float | None


def classify_gap(
    episode: Episode,
    gap: tuple[int, int],
    criteria: StabilityCriteria = StabilityCriteria(),
    context_minutes: int = 30,
) -> RoutingDecision:
    """Label a gap stationary iff its observed context is flat and euglycemic.

    Only retained samples within context_minutes on each side are consulted;
    gradients never bridge the gap itself. With no usable context the gap is
    conservatively transient.
    """
    start, length = gap
    end = start + length
    n_ctx = max(1, context_minutes // 5)
    observed = episode.observed.astype(bool)
    g = episode.glucose

    left = []
    i = start - 1
    while i >= 0 and i >= start - n_ctx and observed[i]:
        left.append(float(g[i]))
        i -= 1
    left.reverse()
    right = []
    i = end
    while i < episode.T and i < end + n_ctx and observed[i]:
        right.append(float(g[i]))
        i += 1

    gradients = []
    for span in (left, right):
        if len(span) >= 2:
            gradients.extend(np.abs(gradient_of(np.array(span))))
    left_boundary = left[-1] if left else None
    right_boundary = right[0] if right else None

    fraction = float(np.mean(np.array(gradients) < criteria.gradient_threshold)) if gradients else 0.0
    boundaries = [b for b in (left_boundary, right_boundary) if b is not None]
    euglycemic = bool(boundaries) and all(
        criteria.glucose_low <= b <= criteria.glucose_high for b in boundaries
    )
    stationary = bool(gradients) and fraction >= criteria.gradient_quorum and euglycemic
    return RoutingDecision(
        start_index=start,
        length=length,
        label="stationary" if stationary else "transient",
        gradient_fraction=fraction,
        left_boundary=left_boundary,
        right_boundary=right_boundary,
    )


def adaptive_impute(
    episode: Episode,
    mask: Mask,
    external: Imputation | None = None,
    criteria: StabilityCriteria = StabilityCriteria(),
    context_minutes: int = 30,
) -> tuple[Imputation, list[RoutingDecision]]:
    """Splice per-gap fills: Lerp for stationary gaps, external for transient ones."""
    gapped = apply_mask(episode, mask)
    runs = bits_to_runs(mask.bits)
    values = episode.glucose.copy()
    lerp_fill = None
    decisions = []
    for start, length in runs:
        decision = classify_gap(gapped, (start, length), criteria, context_minutes)
        decisions.append(decision)
        if decision.label == "stationary":
            if lerp_fill is None:
                lerp_fill = impute_lerp(episode, mask)
            values[start : start + length] = lerp_fill.values[start : start + length]
        else:
            if external is None:
                raise RoutingError(
                    f"transient gap at index {start} (length {length}) has no external source"
                )
            values[start : start + length] = external.values[start : start + length]
    imputation = Imputation(values, "adaptive", (episode.patient_id, episode.episode_id))
    return imputation, decisions


def routing_summary(decisions: list[RoutingDecision]) -> dict:
    n = len(decisions)
    stationary = sum(1 for d in decisions if d.label == "stationary")
    return {
        "n_gaps": n,
        "stationary_fraction": stationary / n if n else 0.0,
        "transient_fraction": (n - stationary) / n if n else 0.0,
    }


def write_routing_json(entries, path) -> None:
    """entries: iterable of (patient_id, episode_id, RoutingDecision)."""
    entries = sorted(entries, key=lambda e: (e[0], e[1], e[2].start_index))
    decisions = [
        {
            "patient_id": patient_id,
            "episode_id": episode_id,
            "start_index": d.start_index,
            "length_samples": d.length,
            "label": d.label,
            "gradient_fraction": d.gradient_fraction,
            "left_boundary": d.left_boundary,
            "right_boundary": d.right_boundary,
        }
        for patient_id, episode_id, d in entries
    ]
    doc = {
        "schema_version": 1,
        "summary": routing_summary([d for _, _, d in entries]),
        "decisions": decisions,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
