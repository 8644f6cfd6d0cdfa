"""Command-line surface.

Subcommands: simulate, assess, detect, ephemeral, report. Exit codes are part
of the contract: 0 success, 1 bad usage or invalid input, 2 I/O trouble, and
3 for "the analysis ran and found a problem" (anomalous traces, an attack set
with no common defence, a rejected frame), so scripts can branch on findings
without parsing output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .attacks import attack_metrics, delivery_correctness
from .ephemeral import (
    EphemeralParams,
    build_filter,
    ephemeral_id,
    expected_fp_rate,
    read_filter_file,
    verify_and_resolve,
    write_filter_file,
)
from .errors import BeaconLabError, InvalidInput, SchemaError, TooShort
from .model import BeaconId, load_deployment, _parse_document
from .outlier import (
    DetectorParams,
    build_markov,
    calibrate_threshold,
    detect,
    static_state_resolver,
    INVERSE_DISTANCE,
    UNIFORM,
)
from .scenario import load_scenario
from .sim import run
from .storage import (
    DETECT_TAG,
    metric_rows,
    read_metrics_csv,
    read_traces_jsonl,
    write_detect_csv,
    write_events_jsonl,
    write_metrics_csv,
    write_traces_jsonl,
)
from .threatmatrix import assess, default_matrix, load_matrix

SEED_ENV = "BEACONLAB_SEED"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FINDING = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage problems to exit code 1
        raise _UsageError(f"{self.prog}: {message}")


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_keys_file(path: str) -> dict[str, bytes]:
    doc = _parse_document(_read_text(path))
    raw = doc.get("keys", doc)
    if not isinstance(raw, dict) or not raw:
        raise SchemaError(f"{path}: expected a mapping of ref to key_hex")
    keys = {}
    for ref, key_hex in raw.items():
        try:
            keys[str(ref)] = bytes.fromhex(str(key_hex))
        except ValueError as exc:
            raise SchemaError(f"{path}: bad key hex for {ref!r}") from exc
    return keys


# ---------------------------------------------------------------------------
# simulate


def _resolve_seed(doc: dict, override: Optional[int]) -> dict:
    radio = dict(doc.get("radio") or {})
    if override is not None:
        radio["seed"] = override
    elif "seed" not in radio and os.environ.get(SEED_ENV):
        radio["seed"] = int(os.environ[SEED_ENV])
    doc = dict(doc)
    doc["radio"] = radio
    return doc


def _simulate_one(manifest: str, out_dir: str, seed: Optional[int]) -> dict:
    doc = _resolve_seed(_parse_document(_read_text(manifest)), seed)
    scenario = load_scenario(doc)
    result = run(scenario)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_events_jsonl(str(out / "events.jsonl"), result.events)
    write_traces_jsonl(str(out / "traces.jsonl"), result.traces)
    metrics = [attack_metrics(result, i) for i in range(len(result.scenario.attacks))]
    rate, n_deliveries = delivery_correctness(result)
    write_metrics_csv(str(out / "metrics.csv"), metric_rows(metrics, rate, n_deliveries))

    summary = result.summary()
    summary["manifest"] = manifest
    summary["out_dir"] = str(out)
    summary["seed"] = result.scenario.radio.seed
    return summary


def cmd_simulate(args) -> int:
    manifests = args.manifest
    out_root = Path(args.out)
    if len(manifests) == 1:
        tasks = [(manifests[0], str(out_root))]
    else:
        tasks = [(m, str(out_root / Path(m).stem)) for m in manifests]

    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_simulate_one, m, d, args.seed) for m, d in tasks]
            summaries = [f.result() for f in futures]
    else:
        summaries = [_simulate_one(m, d, args.seed) for m, d in tasks]
    for summary in summaries:
        print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# assess


def _split_codes(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def cmd_assess(args) -> int:
    matrix = load_matrix(_read_text(args.matrix)) if args.matrix else default_matrix()
    report = assess(matrix, _split_codes(args.motives), _split_codes(args.capabilities))
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(report.render_text())
    if report.likely_attacks and not report.defences["common"]:
        return EXIT_FINDING
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect


def cmd_detect(args) -> int:
    deployment = load_deployment(_read_text(args.deployment))
    model = build_markov(deployment, p_stay=args.p_stay, weighting=args.weighting)
    resolver = static_state_resolver(deployment)

    if args.threshold is not None:
        threshold = args.threshold
    elif args.calibration:
        calibration = read_traces_jsonl(args.calibration)
        threshold = calibrate_threshold(
            model, calibration, resolver, alpha=args.alpha,
            debounce=not args.no_debounce, min_transitions=args.min_transitions,
        )
    else:
        raise _UsageError("detect: give --threshold or --calibration traces")

    params = DetectorParams(
        threshold=threshold, alpha=args.alpha,
        debounce=not args.no_debounce, min_transitions=args.min_transitions,
    )
    rows = []
    any_anomalous = False
    for trace in read_traces_jsonl(args.traces):
        try:
            verdict = detect(model, trace, params, resolver)
        except TooShort:
            rows.append({"device_ref": trace.device_ref, "avg_nll": "",
                         "n_hard_flags": "0", "verdict": "too_short"})
            continue
        any_anomalous = any_anomalous or verdict.anomalous
        rows.append(
            {
                "device_ref": trace.device_ref,
                "avg_nll": "" if verdict.avg_nll is None else repr(verdict.avg_nll),
                "n_hard_flags": str(len(verdict.hard_flags)),
                "verdict": "anomalous" if verdict.anomalous else "normal",
            }
        )
    if args.out:
        write_detect_csv(args.out, rows)
    else:
        print(f"# {DETECT_TAG}")
        print("device_ref,avg_nll,n_hard_flags,verdict")
        for row in rows:
            print(",".join(row[k] for k in ("device_ref", "avg_nll", "n_hard_flags", "verdict")))
    print(f"threshold={threshold!r} traces={len(rows)} "
          f"anomalous={sum(1 for r in rows if r['verdict'] == 'anomalous')}", file=sys.stderr)
    return EXIT_FINDING if any_anomalous else EXIT_OK


# ---------------------------------------------------------------------------
# ephemeral


def cmd_ephemeral_generate(args) -> int:
    key = bytes.fromhex(args.key_hex)
    print(ephemeral_id(key, args.slot, args.width).hex())
    return EXIT_OK


def cmd_ephemeral_build(args) -> int:
    keys = _load_keys_file(args.keys)
    params = EphemeralParams(
        slot_duration_s=args.slot_duration, window_slots=args.window, id_width=args.width,
    )
    filt = build_filter(keys, args.slot, params, args.m, args.k, args.fp)
    write_filter_file(args.out, filt, args.slot, params)
    print(json.dumps({
        "out": args.out, "m_bits": filt.m_bits, "k_hashes": filt.k_hashes,
        "n_inserted": filt.n_inserted,
        "expected_fp": expected_fp_rate(filt.m_bits, filt.k_hashes, filt.n_inserted),
    }, sort_keys=True))
    return EXIT_OK


def cmd_ephemeral_verify(args) -> int:
    filt, slot, params = read_filter_file(args.filter)
    if args.slot is not None:
        slot = args.slot
    beacon_id = BeaconId.from_hex(args.id_hex)
    params = replace(params, id_width=len(beacon_id))
    keys = _load_keys_file(args.keys)
    ref = verify_and_resolve(filt, keys, beacon_id, slot, params)
    if ref is None:
        print("rejected")
        return EXIT_FINDING
    print(f"accepted {ref}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    labels = []
    tables = []
    for path in args.metrics:
        p = Path(path)
        label = p.parent.name if p.stem == "metrics" and p.parent.name else p.stem
        if label in labels:
            label = f"{label}:{len(labels)}"
        labels.append(label)
        tables.append(read_metrics_csv(path))

    keys: list[str] = []
    cells: dict[str, dict[str, str]] = {}
    for label, rows in zip(labels, tables):
        for row in rows:
            key = f"{row['kind']}[{row['profile']}].{row['metric']}" if row["profile"] else \
                row["metric"]
            if key not in cells:
                keys.append(key)
                cells[key] = {}
            cells[key][label] = row["value"]

    lines = ["# beaconlab.report.v1", ",".join(["metric"] + labels)]
    for key in keys:
        lines.append(",".join([key] + [cells[key].get(label, "") for label in labels]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="beaconlab", description="beacon deployment security toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run scenario manifests and write logs + metrics")
    p.add_argument("manifest", nargs="+", help="scenario manifest file(s)")
    p.add_argument("--out", default=".", help="output directory (default: cwd)")
    p.add_argument("--seed", type=int, default=None, help="override the radio seed")
    p.add_argument("--jobs", type=int, default=1, help="run manifests in parallel")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assess", help="threat assessment from motives and capabilities")
    p.add_argument("--motives", required=True, help="comma-separated, e.g. M2,M3")
    p.add_argument("--capabilities", required=True, help="comma-separated, e.g. C1,C2,C3,C6")
    p.add_argument("--matrix", default=None, help="matrix override file")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("detect", help="score traces against a mobility model")
    p.add_argument("--deployment", required=True, help="deployment file")
    p.add_argument("--traces", required=True, help="traces.jsonl to score")
    p.add_argument("--calibration", default=None, help="known-clean traces.jsonl")
    p.add_argument("--threshold", type=float, default=None, help="precomputed threshold")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--p-stay", type=float, default=0.3, dest="p_stay")
    p.add_argument("--weighting", choices=(UNIFORM, INVERSE_DISTANCE), default=UNIFORM)
    p.add_argument("--min-transitions", type=int, default=3, dest="min_transitions")
    p.add_argument("--no-debounce", action="store_true")
    p.add_argument("--out", default=None, help="verdict CSV path (default: stdout)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("ephemeral", help="rotating-ID utilities")
    esub = p.add_subparsers(dest="action", required=True)

    g = esub.add_parser("generate", help="derive the ID for (key, slot)")
    g.add_argument("--key-hex", required=True)
    g.add_argument("--slot", type=int, required=True)
    g.add_argument("--width", type=int, default=20)
    g.set_defaults(func=cmd_ephemeral_generate)

    b = esub.add_parser("build", help="build a verifier filter file")
    b.add_argument("--keys", required=True, help="mapping file: ref -> key_hex")
    b.add_argument("--slot", type=int, required=True)
    b.add_argument("--window", type=int, default=2)
    b.add_argument("--slot-duration", type=float, default=60.0, dest="slot_duration")
    b.add_argument("--width", type=int, default=20)
    b.add_argument("--m", type=int, default=None, help="filter bits (default: sized from --fp)")
    b.add_argument("--k", type=int, default=None, help="hash count")
    b.add_argument("--fp", type=float, default=0.01, help="target false-positive rate")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_ephemeral_build)

    v = esub.add_parser("verify", help="check an ID against a filter file")
    v.add_argument("--filter", required=True)
    v.add_argument("--keys", required=True)
    v.add_argument("--id-hex", required=True)
    v.add_argument("--slot", type=int, default=None, help="override the filter's slot")
    v.set_defaults(func=cmd_ephemeral_verify)

    p = sub.add_parser("report", help="merge metrics.csv files into one comparison table")
    p.add_argument("metrics", nargs="+", help="metrics.csv files")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (BeaconLabError, InvalidInput, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
