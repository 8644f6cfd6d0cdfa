"""File formats: JSONL event/trace streams and CSV metric tables.

Every format carries a version tag on its first line so readers can refuse
files they do not understand instead of misparsing them. Writers are
deterministic: equal inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from typing import Iterable, Optional

from .errors import SchemaError
from .model import BeaconId, Observation, Trace
from .radio import Event, EventLog

FORMAT_VERSION = 1
EVENTS_FORMAT = "beaconlab.events"
TRACES_FORMAT = "beaconlab.traces"
METRICS_TAG = "beaconlab.metrics.v1"
DETECT_TAG = "beaconlab.detect.v1"

# headline effect metric reported per attack kind in metrics.csv
HEADLINE = {
    "A1": "live_coverage",
    "A2": "wrong_content_rate_near_fake",
    "A3": "suppression_rate",
    "A4": "unavailability",
    "A5": "unavailability",
    "A6": "localization_fraction",
    "A7": "detection_count",
    "A8": "mean_budget_utilization",
}


def _header_line(fmt: str) -> str:
    return json.dumps({"format": fmt, "version": FORMAT_VERSION}, sort_keys=True)


def _check_header(line: str, fmt: str, path: str) -> None:
    try:
        head = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: missing format header") from exc
    if not isinstance(head, dict) or head.get("format") != fmt:
        raise SchemaError(f"{path}: expected a {fmt} file")
    if head.get("version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported {fmt} version {head.get('version')!r}")


def write_events_jsonl(path: str, events: EventLog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header_line(EVENTS_FORMAT) + "\n")
        for event in events:
            fh.write(event.to_json() + "\n")


def read_events_jsonl(path: str) -> list[Event]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    _check_header(lines[0], EVENTS_FORMAT, path)
    return [Event.from_json(line) for line in lines[1:] if line]


def write_traces_jsonl(path: str, traces: Iterable[Trace]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header_line(TRACES_FORMAT) + "\n")
        for trace in traces:
            for obs in trace.observations:
                fh.write(
                    json.dumps(
                        {
                            "t": obs.time,
                            "device": obs.receiver_ref,
                            "id_hex": obs.id.hex(),
                            "rssi": obs.rssi,
                            "claimed_tx": obs.claimed_tx_power,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


def read_traces_jsonl(path: str) -> tuple[Trace, ...]:
    """Rebuild traces, grouped by device in order of first appearance."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    _check_header(lines[0], TRACES_FORMAT, path)
    grouped: dict[str, list[Observation]] = {}
    for n, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        try:
            raw = json.loads(line)
            obs = Observation(
                time=float(raw["t"]),
                receiver_ref=str(raw["device"]),
                id=BeaconId.from_hex(raw["id_hex"]),
                rssi=float(raw["rssi"]),
                claimed_tx_power=float(raw["claimed_tx"]),
            )
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"{path}:{n}: bad trace line: {exc}") from exc
        grouped.setdefault(obs.receiver_ref, []).append(obs)
    return tuple(Trace(ref, tuple(obs_list)) for ref, obs_list in grouped.items())


# ---------------------------------------------------------------------------
# metrics CSV


def metric_rows(
    attack_metrics_list: list[dict],
    delivery_rate: Optional[float],
    n_deliveries: int,
) -> list[dict]:
    """One row per attack profile plus the delivery-correctness summary row."""
    rows = []
    for i, metrics in enumerate(attack_metrics_list):
        kind = metrics["kind"]
        headline = HEADLINE[kind]
        detail = {
            k: v for k, v in metrics.items()
            if isinstance(v, (int, float, str)) and k not in ("kind", "sniff_mode")
        }
        rows.append(
            {
                "profile": str(i),
                "kind": kind,
                "sniff_mode": metrics.get("sniff_mode", ""),
                "metric": headline,
                "value": _fmt_value(metrics.get(headline)),
                "detail": json.dumps(detail, sort_keys=True),
            }
        )
    rows.append(
        {
            "profile": "",
            "kind": "summary",
            "sniff_mode": "",
            "metric": "delivery_correctness",
            "value": _fmt_value(delivery_rate),
            "detail": json.dumps({"n_deliveries": n_deliveries}, sort_keys=True),
        }
    )
    return rows


def _fmt_value(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


_METRIC_FIELDS = ("profile", "kind", "sniff_mode", "metric", "value", "detail")


def write_metrics_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {METRICS_TAG}\n")
        writer = csv.DictWriter(fh, fieldnames=_METRIC_FIELDS)
        writer.writeheader()
        writer.writerows(rows)


def read_metrics_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {METRICS_TAG}":
            raise SchemaError(f"{path}: expected a {METRICS_TAG} file")
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# detector verdict CSV

_DETECT_FIELDS = ("device_ref", "avg_nll", "n_hard_flags", "verdict")


def write_detect_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {DETECT_TAG}\n")
        writer = csv.DictWriter(fh, fieldnames=_DETECT_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
