"""Command-line surface: synth, fit, mask, stress, impute, evaluate, calibrate, route, report."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import imputers, masks, metrics, missingness, protocols, router, synth
from .core import export_csv, ingest_csv
from .errors import CoverageError, EstimationError, FitError, RegimeBenchError

PROTOCOL_LABELS = {
    "empirical": "empirical",
    "protocol_A": "A",
    "protocol_B": "B",
    "protocol_C": "C",
}


def _worker_cap() -> int:
    raw = os.environ.get("REGIME_BENCH_THREADS")
    if raw is None:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap < 1:
        raise RegimeBenchError(f"REGIME_BENCH_THREADS must be a positive integer, got {raw!r}")
    return cap


def _episodes_for_masks(episodes, mask_map):
    """Pair mask-file entries with ingested episodes; the mask file defines the set."""
    by_key = {(ep.patient_id, ep.episode_id): ep for ep in episodes}
    pairs = []
    for key in sorted(mask_map):
        ep = by_key.get(key)
        if ep is None:
            raise CoverageError(f"mask references unknown episode {key[0]}/{key[1]}")
        mask = mask_map[key]
        if mask.T != ep.T:
            raise CoverageError(
                f"mask length {mask.T} != episode length {ep.T} for {key[0]}/{key[1]}"
            )
        pairs.append((ep, mask))
    return pairs


def cmd_synth(args) -> int:
    config = synth.SynthConfig(
        days=args.days,
        baseline=args.baseline,
        meal_times=tuple(int(v) for v in args.meal_times.split(",") if v.strip()),
        meal_carbs=args.meal_carbs,
        peak_amplitude=args.peak_amplitude,
        hypo_depth=args.hypo_depth,
        tcr_meal=args.tcr_meal,
        drift_amplitude=args.drift_amplitude,
        noise_std=args.noise_std,
        patient_id=args.patient_id,
        seed=args.seed,
    )
    result = synth.generate(config)
    paths = synth.write_fixture(result, args.out)
    for name in ("cgm", "tcr", "labels"):
        print(paths[name])
    if args.gap_model is not None:
        # additionally emit a realistically gapped copy, for fitting exercises
        model = missingness.load_model(args.gap_model)
        gapped = []
        for ep in result.episodes:
            seed = masks.derive_seed(args.gap_seed, ep.patient_id, ep.episode_id)
            mask = masks.generate_mask(ep.T, ep.start_time_of_day, model, seed)
            gapped.append(masks.apply_mask(ep, mask))
        gapped_path = Path(args.out) / "cgm_gapped.csv"
        export_csv(gapped, gapped_path)
        print(gapped_path)
    return 0


def cmd_fit(args) -> int:
    episodes = ingest_csv(args.input, args.partition_gap)
    valid = missingness.valid_days(episodes)
    gaps = missingness.extract_gaps(episodes, valid)
    onset = missingness.onset_probabilities(gaps, valid)
    print("onset probabilities:", " ".join(f"{p:.4f}" for p in onset))
    try:
        regimes = {
            regime: missingness.RegimeModel(
                pi_short=missingness.short_gap_probability(gaps, regime),
                mixture=missingness.fit_mixture(gaps, regime, min_gaps=args.min_gaps),
            )
            for regime in ("day", "night")
        }
    except (EstimationError, FitError) as exc:
        print(f"error: mixture estimation failed: {exc}", file=sys.stderr)
        return 1
    model = missingness.MissingnessModel(
        tuple(float(p) for p in onset), regimes["day"], regimes["night"]
    )
    missingness.save_model(model, args.out)
    print(args.out)
    return 0


def cmd_mask(args) -> int:
    episodes = ingest_csv(args.input, args.partition_gap)
    model = missingness.load_model(args.model)
    entries = []
    for ep in episodes:
        seed = masks.derive_seed(args.seed, ep.patient_id, ep.episode_id)
        entries.append(
            (ep.patient_id, ep.episode_id, masks.generate_mask(ep.T, ep.start_time_of_day, model, seed))
        )
    masks.write_masks_json(entries, args.out, provenance="empirical", condition=f"seed={args.seed}")
    print(args.out)
    return 0


def cmd_stress(args) -> int:
    episodes = ingest_csv(args.input, args.partition_gap)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask_entries, window_entries = [], []
    if args.protocol == "A":
        condition = f"ratio={args.ratio:g}"
        for ep in episodes:
            candidates = protocols.find_stable_windows(ep)
            mask, selected = protocols.allocate_stationary_mask(
                ep, candidates, args.ratio, masks.derive_seed(args.seed, ep.patient_id, ep.episode_id)
            )
            mask_entries.append((ep.patient_id, ep.episode_id, mask))
            window_entries.extend((ep.patient_id, ep.episode_id, w) for w in selected)
    elif args.protocol == "B":
        condition = f"peaks={args.n_peaks}"
        for ep in episodes:
            mask, windows = protocols.build_peak_masks(
                ep, args.n_peaks, masks.derive_seed(args.seed, ep.patient_id, ep.episode_id)
            )
            mask_entries.append((ep.patient_id, ep.episode_id, mask))
            window_entries.extend((ep.patient_id, ep.episode_id, w) for w in windows)
    else:
        if args.tcr is None:
            raise RegimeBenchError("protocol C requires --tcr metadata")
        condition = f"hypo={args.hypo_window_min}min"
        tcr_map = protocols.read_tcr_csv(args.tcr)
        for ep in episodes:
            intervals = tcr_map.get((ep.patient_id, ep.episode_id), [])
            mask, windows = protocols.build_hypo_masks(ep, intervals, args.hypo_window_min)
            if not windows:
                continue
            mask_entries.append((ep.patient_id, ep.episode_id, mask))
            window_entries.extend((ep.patient_id, ep.episode_id, w) for w in windows)
    provenance = f"protocol_{args.protocol}"
    masks_path = out_dir / "masks.json"
    windows_path = out_dir / "windows.json"
    masks.write_masks_json(mask_entries, masks_path, provenance=provenance, condition=condition)
    protocols.write_windows_json(window_entries, windows_path, protocol=args.protocol, condition=condition)
    print(masks_path)
    print(windows_path)
    return 0


def cmd_impute(args) -> int:
    episodes = ingest_csv(args.input, args.partition_gap)
    _, mask_map = masks.read_masks_json(args.masks)
    pairs = _episodes_for_masks(episodes, mask_map)
    if args.external is not None:
        eval_eps = [ep for ep, _ in pairs]
        imputations = imputers.load_external(args.external, eval_eps, mask_map)
    else:
        impute = imputers.BUILTIN_IMPUTERS[args.method]
        imputations = [impute(ep, mask) for ep, mask in pairs]
    imputers.write_imputations_csv(imputations, args.out)
    print(args.out)
    return 0


def cmd_evaluate(args) -> int:
    episodes = ingest_csv(args.input, args.partition_gap)
    meta, mask_map = masks.read_masks_json(args.masks)
    pairs = _episodes_for_masks(episodes, mask_map)
    eval_eps = [ep for ep, _ in pairs]
    protocol = PROTOCOL_LABELS.get(meta.get("provenance", "empirical"), "empirical")
    condition = meta.get("condition", "-")
    if args.windows is not None:
        wmeta, _ = protocols.read_windows_json(args.windows)
        protocol = wmeta.get("protocol", protocol)
        condition = wmeta.get("condition", condition)
    entries = []
    for path in args.imputed:
        imputations = imputers.load_external(path, eval_eps, mask_map)
        for ep, imp in zip(eval_eps, imputations):
            mask = mask_map[(ep.patient_id, ep.episode_id)]
            if not (mask.bits == 0).any():
                continue  # nothing masked on this episode, nothing to score
            report = metrics.score_episode(ep.glucose, imp.values, mask)
            entries.append(((imp.method, protocol, condition), report))
    rows = metrics.aggregate(entries)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    table_path = out_dir / "table.txt"
    report_path.write_text(json.dumps({"schema_version": 1, "groups": rows}, indent=2) + "\n")
    table = metrics.render_table(rows)
    table_path.write_text(table)
    print(table, end="")
    print(report_path)
    print(table_path)
    return 0


_CAL_FILTERS = {
    "all": None,
    "below-70": lambda y: y < 70.0,
    "above-140": lambda y: y > 140.0,
}


def cmd_calibrate(args) -> int:
    episodes = ingest_csv(args.input, args.partition_gap)
    _, mask_map = masks.read_masks_json(args.masks)
    pairs = _episodes_for_masks(episodes, mask_map)
    eval_eps = [ep for ep, _ in pairs]
    regime_filter = _CAL_FILTERS[args.filter]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for path in args.imputed:
        imputations = imputers.load_external(path, eval_eps, mask_map)
        method = imputations[0].method
        triples = [
            (ep.glucose, imp.values, mask_map[(ep.patient_id, ep.episode_id)])
            for ep, imp in zip(eval_eps, imputations)
        ]
        summary = metrics.pooled_calibration(triples, regime_filter)
        records.append(
            {
                "model": method,
                "filter": args.filter,
                "n_points": summary.n_points,
                "truth_mean": summary.truth_mean,
                "truth_std": summary.truth_std,
                "imputed_mean": summary.imputed_mean,
                "imputed_std": summary.imputed_std,
                "delta": summary.delta,
            }
        )
        hist_path = out_dir / f"calibration_{method}.csv"
        with hist_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_left", "bin_right", "truth_count", "imputed_count"])
            edges = metrics.HIST_EDGES
            for i in range(len(edges) - 1):
                writer.writerow(
                    [
                        f"{edges[i]:g}",
                        f"{edges[i + 1]:g}",
                        int(summary.truth_hist[i]),
                        int(summary.imputed_hist[i]),
                    ]
                )
        print(hist_path)
    summary_path = out_dir / "calibration.json"
    summary_path.write_text(
        json.dumps({"schema_version": 1, "summaries": records}, indent=2) + "\n"
    )
    print(summary_path)
    return 0


def cmd_route(args) -> int:
    episodes = ingest_csv(args.input, args.partition_gap)
    _, mask_map = masks.read_masks_json(args.masks)
    pairs = _episodes_for_masks(episodes, mask_map)
    external = {}
    if args.external is not None:
        eval_eps = [ep for ep, _ in pairs]
        for imp in imputers.load_external(args.external, eval_eps, mask_map):
            external[imp.episode_ref] = imp
    criteria = protocols.StabilityCriteria(gradient_threshold=args.gradient_threshold)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    imputations, decision_entries = [], []
    for ep, mask in pairs:
        key = (ep.patient_id, ep.episode_id)
        imputation, decisions = router.adaptive_impute(
            ep, mask, external.get(key), criteria, args.context_min
        )
        imputations.append(imputation)
        decision_entries.extend((ep.patient_id, ep.episode_id, d) for d in decisions)
    routed_path = out_dir / "routed.csv"
    routing_path = out_dir / "routing.json"
    imputers.write_imputations_csv(imputations, routed_path)
    router.write_routing_json(decision_entries, routing_path)
    print(routed_path)
    print(routing_path)
    return 0


def cmd_report(args) -> int:
    doc = json.loads(Path(args.input).read_text())
    table = metrics.render_table(doc["groups"])
    Path(args.out).write_text(table)
    print(table, end="")
    return 0


def _add_partition_gap(parser):
    parser.add_argument(
        "--partition-gap",
        type=int,
        default=240,
        help="episode split threshold in minutes (default 240)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regime-bench",
        description="Regime-stratified stress-test harness for CGM imputation. "
        "REGIME_BENCH_THREADS caps worker parallelism.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic fixture")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--baseline", type=float, default=100.0)
    p.add_argument("--meal-times", default="480,780,1140", help="comma-separated minutes of day")
    p.add_argument("--meal-carbs", type=float, default=40.0)
    p.add_argument("--peak-amplitude", type=float, default=80.0)
    p.add_argument("--hypo-depth", type=float, default=0.0)
    p.add_argument("--tcr-meal", type=int, default=0)
    p.add_argument("--drift-amplitude", type=float, default=0.0)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--patient-id", default="synth-001")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap-model", help="missingness model JSON; also write cgm_gapped.csv")
    p.add_argument("--gap-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="estimate the missingness model from gapped data")
    p.add_argument("--input", required=True)
    p.add_argument("--min-gaps", type=int, default=30)
    _add_partition_gap(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mask", help="sample empirical masks for every episode")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_partition_gap(p)
    p.add_argument("--out", required=True, help="masks JSON path")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("stress", help="build protocol A/B/C evaluation masks")
    p.add_argument("--input", required=True)
    p.add_argument("--protocol", choices=("A", "B", "C"), required=True)
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--n-peaks", type=int, default=1)
    p.add_argument("--hypo-window-min", type=int, default=60)
    p.add_argument("--tcr", help="TCR metadata CSV (protocol C)")
    p.add_argument("--seed", type=int, required=True)
    _add_partition_gap(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stress)

    p = sub.add_parser("impute", help="run a baseline or attach external imputations")
    p.add_argument("--input", required=True)
    p.add_argument("--masks", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--method", choices=sorted(imputers.BUILTIN_IMPUTERS))
    group.add_argument("--external", help="external imputation CSV")
    _add_partition_gap(p)
    p.add_argument("--out", required=True, help="imputed CSV path")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("evaluate", help="score imputations and render the results table")
    p.add_argument("--input", required=True, help="ground-truth CGM CSV")
    p.add_argument("--imputed", action="append", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--windows", help="windows JSON for protocol labeling")
    _add_partition_gap(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="conditional distribution summaries")
    p.add_argument("--input", required=True)
    p.add_argument("--imputed", action="append", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--filter", choices=sorted(_CAL_FILTERS), default="all")
    _add_partition_gap(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("route", help="adaptive imputation: Lerp vs external per gap")
    p.add_argument("--input", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--external")
    p.add_argument("--gradient-threshold", type=float, default=0.6)
    p.add_argument("--context-min", type=int, default=30)
    _add_partition_gap(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("report", help="re-render a report JSON as a plain-text table")
    p.add_argument("--input", required=True, help="report.json path")
    p.add_argument("--out", required=True, help="table text path")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _worker_cap()
        return args.func(args)
    except (RegimeBenchError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
