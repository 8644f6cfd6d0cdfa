"""Discrete-event simulation of a beacon deployment under attack.

The loop drives three emitter families (infrastructure beacons, personal
tags, injected adversarial transmitters) and two receiver families (user
devices, adversarial sniffers). Physics uses the effective deployment, which
an attack may have rewired; content lookup and ground truth always use the
owner's reference deployment, because re-programming a beacon does not edit
the owner's database.

Every random draw is a keyed hash of (seed, actor, frame), so runs are
reproducible byte for byte and adding an actor never shifts anyone else's
noise. Heap ties break on insertion order, which is itself deterministic.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

from .actors import PersonalTag, UserDevice, proximity_decision
from .attacks import AttackerObservation, InjectedEmitter, LUNCH_TIME, drain_id, install_pending
from .ephemeral import AnySlotResolver, RotatingResolver, ephemeral_id
from .errors import ValidationError
from .guardian import jam_succeeds
from .model import BeaconConfig, BeaconId, DeploymentMap, Observation, StaticId, Trace
from .radio import (
    BROADCAST,
    CONTENT_DELIVERED,
    FLAGGED,
    JAMMED,
    NO_ACTION,
    RECEIVE,
    EventLog,
    mean_rssi,
    shadowing_db,
)
from .scenario import Scenario

_EPS = 1e-9

# window outcomes, in rough order of how badly the user's day went
OUTCOME_DELIVERED = "delivered"
OUTCOME_DEBOUNCED = "debounced"
OUTCOME_FAR = "far"
OUTCOME_FLAGGED = "flagged"
OUTCOME_BUDGET = "budget_exhausted"
OUTCOME_EMPTY = "empty"


@dataclass(frozen=True)
class WindowRecord:
    """One device scan window: what was heard and what the app did."""

    device_ref: str
    t_end: float
    n_frames: int
    n_rejected: int
    emitters: frozenset[str]  # true frame origins, for analysis only
    near: bool
    outcome: str
    resolved_ref: Optional[str] = None
    content: Optional[str] = None
    correct: bool = True


@dataclass(frozen=True)
class BudgetRecord:
    device_ref: str
    t_end: float
    used: int
    budget: int

    @property
    def utilization(self) -> float:
        return self.used / self.budget


@dataclass
class RunResult:
    scenario: Scenario
    duration: float
    events: EventLog
    window_records: tuple[WindowRecord, ...]
    budget_records: tuple[BudgetRecord, ...]
    traces: tuple[Trace, ...]
    attacker_obs: dict[int, list[AttackerObservation]] = field(default_factory=dict)
    upload_logs: dict[int, list[tuple[float, str]]] = field(default_factory=dict)
    detections: dict[int, list[tuple[float, str, float]]] = field(default_factory=dict)
    broadcast_ids: dict[str, set[bytes]] = field(default_factory=dict)

    def summary(self) -> dict:
        delivered = [w for w in self.window_records if w.outcome == OUTCOME_DELIVERED]
        correct = sum(1 for w in delivered if w.correct)
        outcomes: dict[str, int] = {}
        for w in self.window_records:
            outcomes[w.outcome] = outcomes.get(w.outcome, 0) + 1
        return {
            "duration_s": self.duration,
            "n_events": len(self.events),
            "n_windows": len(self.window_records),
            "outcomes": dict(sorted(outcomes.items())),
            "n_deliveries": len(delivered),
            "correct_delivery_rate": correct / len(delivered) if delivered else None,
        }


class _Resolver:
    """Owner-side lookup: static table first, then the rotating verifier."""

    def __init__(self, static_table, dynamic):
        self._static = static_table
        self._dynamic = dynamic

    def resolve(self, beacon_id: BeaconId, t: float) -> Optional[str]:
        ref = self._static.get(beacon_id)
        if ref is not None:
            return ref
        if self._dynamic is None:
            return None
        return self._dynamic.resolve(beacon_id, t)


def _build_resolver(scenario: Scenario, reference: DeploymentMap):
    keys = dict(reference.owner_keys)
    dynamic = None
    if keys:
        if "TV" in scenario.defences:
            dynamic = RotatingResolver(
                keys,
                scenario.ephemeral,
                m_bits=scenario.bloom_m,
                k_hashes=scenario.bloom_k,
                fp_target=scenario.bloom_fp_target,
            )
        else:
            max_slot = scenario.ephemeral.slot_of(scenario.duration_s) + 1
            dynamic = AnySlotResolver(keys, scenario.ephemeral, max_slot)
    return _Resolver(reference.static_ids(), dynamic)


@dataclass
class _Emitter:
    ref: str
    family: str  # beacon | tag | injected
    interval_s: float
    tx_power_1m: float
    obj: object
    frame: int = 0


@dataclass
class _Knowledge:
    """What one attack profile's sniffers know about one true emitter's IDs."""

    last_seen: float
    rssi_sum: float
    n: int
    claimed: float


def run(scenario: Scenario) -> RunResult:
    """Simulate the scenario for its configured duration."""
    scenario = install_pending(scenario)
    reference = scenario.reference
    effective = scenario.deployment
    radio = scenario.radio
    eph = scenario.ephemeral
    duration = scenario.duration_s
    resolver = _build_resolver(scenario, reference)

    devices = scenario.devices
    device_by_ref = {d.ref: d for d in devices}
    for tag in scenario.tags:
        if tag.carried_by not in device_by_ref:
            raise ValidationError(f"tag {tag.ref!r}: carrier {tag.carried_by!r} is not a device")
    carried = {d.ref: frozenset(t.ref for t in scenario.tags if t.carried_by == d.ref) for d in devices}

    guardian = scenario.guardian if "SJ" in scenario.defences else None

    profiles = scenario.attacks
    lunch_cutoff = {}
    for i, profile in enumerate(profiles):
        if profile.sniff_mode == LUNCH_TIME:
            lunch_cutoff[i] = (
                profile.harvest_window_s
                if profile.harvest_window_s is not None
                else eph.slot_duration_s
            )

    emitters: list[_Emitter] = []
    for b in effective.beacons:
        emitters.append(_Emitter(b.ref, "beacon", b.adv_interval_ms / 1000.0, b.tx_power_1m, b))
    for t in scenario.tags:
        emitters.append(_Emitter(t.ref, "tag", t.adv_interval_ms / 1000.0, t.tx_power_1m, t))
    for inj in scenario.injected:
        emitters.append(_Emitter(inj.ref, "injected", inj.interval_ms / 1000.0, inj.tx_power_1m, inj))

    log = EventLog()
    seq = itertools.count()
    buffers: dict[str, list[tuple[Observation, str]]] = {d.ref: [] for d in devices}
    traces: dict[str, list[Observation]] = {d.ref: [] for d in devices}
    window_records: list[WindowRecord] = []
    budget_records: list[BudgetRecord] = []
    attacker_obs: dict[int, list[AttackerObservation]] = {}
    upload_logs: dict[int, list[tuple[float, str]]] = {}
    detections: dict[int, list[tuple[float, str, float]]] = {}
    broadcast_ids: dict[str, set[bytes]] = {}
    knowledge: dict[int, dict[str, dict[bytes, _Knowledge]]] = {}
    delivered_at: dict[tuple[str, str], float] = {}
    upload_for: dict[str, list[int]] = {}
    for idx, ref in scenario.upload_targets:
        upload_for.setdefault(ref, []).append(idx)
        upload_logs.setdefault(idx, [])

    surveillance_targets: dict[int, Optional[BeaconId]] = {}
    for i, profile in enumerate(profiles):
        if profile.kind == "A7":
            tag = scenario.tag(str(profile.params["target_tag"]))
            surveillance_targets[i] = tag.static_id
            detections.setdefault(i, [])

    def tag_position(tag: PersonalTag, t: float) -> tuple[float, float]:
        return device_by_ref[tag.carried_by].position_at(t)

    def emitter_frame(em: _Emitter, t: float):
        """(position, id, claimed_tx) for this tick, or None when silent."""
        if em.family == "beacon":
            b: BeaconConfig = em.obj
            if isinstance(b.id_mode, StaticId):
                bid = b.id_mode.id
            else:
                bid = ephemeral_id(reference.owner_keys[b.ref], eph.slot_of(t), reference.id_width)
            return b.position, bid, b.tx_power_1m
        if em.family == "tag":
            tag: PersonalTag = em.obj
            bid = tag.static_id
            if bid is None:
                bid = ephemeral_id(tag.key, eph.slot_of(t), reference.id_width)
            return tag_position(tag, t), bid, tag.tx_power_1m
        inj: InjectedEmitter = em.obj
        if inj.mode == "drain":
            bid = drain_id(inj.profile_index, em.frame % inj.n_ids, reference.id_width)
            claimed = inj.claimed_tx_power if inj.claimed_tx_power is not None else inj.tx_power_1m
            return (inj.x, inj.y), bid, claimed
        known = knowledge.get(inj.profile_index, {}).get(inj.source_ref)
        if not known:
            return None  # nothing harvested yet: the replayer stays quiet
        raw = max(
            known,
            key=lambda k: (eph.slot_of(known[k].last_seen), known[k].rssi_sum / known[k].n, k.hex()),
        )
        entry = known[raw]
        claimed = inj.claimed_tx_power if inj.claimed_tx_power is not None else entry.claimed
        return (inj.x, inj.y), BeaconId(raw), claimed

    def receive_range(max_range: Optional[float]) -> float:
        return max_range if max_range is not None else radio.max_range

    def broadcast(t: float, em: _Emitter) -> None:
        frame = emitter_frame(em, t)
        if frame is None:
            return
        pos, bid, claimed = frame
        log.append(t, next(seq), BROADCAST, emitter=em.ref, id=bid.hex(), frame=em.frame,
                   claimed_tx=claimed)
        broadcast_ids.setdefault(em.ref, set()).add(bid.data)

        jammed = False
        if guardian is not None and em.family == "tag" and em.ref == guardian.protected_tag:
            jammed = jam_succeeds(radio.seed, guardian, em.frame)
        blocked: list[str] = []

        for device in devices:
            if em.family == "tag" and em.ref in carried[device.ref]:
                continue  # a phone ignores its own paired accessory
            rpos = device.position_at(t)
            d = math.dist(pos, rpos)
            if d > radio.max_range:
                continue
            if jammed and d <= guardian.jam_radius_m and device.ref not in guardian.authorized:
                blocked.append(device.ref)
                continue
            rssi = mean_rssi(em.tx_power_1m, max(d, 1.0), radio.path_loss_exponent)
            rssi += shadowing_db(radio.seed, em.ref, em.frame, device.ref, radio.noise_sigma)
            log.append(t, next(seq), RECEIVE, receiver=device.ref, emitter=em.ref,
                       id=bid.hex(), rssi=rssi, claimed_tx=claimed)
            obs = Observation(t, device.ref, bid, rssi, claimed)
            buffers[device.ref].append((obs, em.ref))
            traces[device.ref].append(obs)

        for rx in scenario.extra_receivers:
            d = math.dist(pos, (rx.x, rx.y))
            if d > receive_range(rx.max_range):
                continue
            if jammed and d <= guardian.jam_radius_m:
                blocked.append(rx.ref)
                continue
            rssi = mean_rssi(em.tx_power_1m, max(d, 1.0), radio.path_loss_exponent)
            rssi += shadowing_db(radio.seed, em.ref, em.frame, rx.ref, radio.noise_sigma)
            log.append(t, next(seq), RECEIVE, receiver=rx.ref, emitter=em.ref,
                       id=bid.hex(), rssi=rssi, claimed_tx=claimed)
            attacker_obs.setdefault(rx.profile_index, []).append(
                AttackerObservation(t, rx.ref, (rx.x, rx.y), bid, rssi, claimed)
            )
            if rx.role == "surveillance":
                target = surveillance_targets.get(rx.profile_index)
                if target is not None and bid == target:
                    detections[rx.profile_index].append((t, rx.ref, rssi))
            else:
                cutoff = lunch_cutoff.get(rx.profile_index)
                if cutoff is not None and t >= cutoff:
                    continue
                store = knowledge.setdefault(rx.profile_index, {}).setdefault(em.ref, {})
                entry = store.get(bid.data)
                if entry is None:
                    store[bid.data] = _Knowledge(t, rssi, 1, claimed)
                else:
                    entry.rssi_sum += rssi
                    entry.n += 1
                    if t >= entry.last_seen:
                        entry.last_seen = t
                        entry.claimed = claimed

        if jammed:
            log.append(t, next(seq), JAMMED, tag=em.ref, frame=em.frame, blocked=sorted(blocked))

    def expected_content(device: UserDevice, t_end: float) -> set[str]:
        pos = device.position_at(t_end)
        out = set()
        for b in reference.beacons:
            if math.dist(pos, b.position) <= device.proximity_threshold_m:
                content = reference.content_by_ref.get(b.ref)
                if content is not None:
                    out.add(content.locator)
        return out

    def process_window(t_end: float, device: UserDevice) -> None:
        buffer = buffers[device.ref]
        window = [(o, src) for o, src in buffer if o.time < t_end - _EPS]
        buffers[device.ref] = [(o, src) for o, src in buffer if o.time >= t_end - _EPS]
        if not window:
            window_records.append(WindowRecord(device.ref, t_end, 0, 0, frozenset(),
                                               False, OUTCOME_EMPTY))
            log.append(t_end, next(seq), NO_ACTION, device=device.ref, reason=OUTCOME_EMPTY)
            return

        true_emitters = frozenset(src for _, src in window)
        distinct: list[bytes] = []
        seen = set()
        for obs, _ in window:
            if obs.id.data not in seen:
                seen.add(obs.id.data)
                distinct.append(obs.id.data)
        allowed = distinct[: device.lookup_budget]
        used = len(allowed)
        budget_records.append(BudgetRecord(device.ref, t_end, used, device.lookup_budget))
        for idx in upload_for.get(device.ref, []):
            upload_logs[idx].extend((t_end, raw.hex()) for raw in distinct)

        groups: dict[str, list[Observation]] = {}
        n_rejected = 0
        for raw in allowed:
            ref = resolver.resolve(BeaconId(raw), t_end)
            frames = [o for o, _ in window if o.id.data == raw]
            if ref is None:
                n_rejected += len(frames)
            else:
                groups.setdefault(ref, []).extend(frames)
        n_frames = len(window)

        def record(outcome, near=False, ref=None, content=None, correct=True):
            window_records.append(WindowRecord(device.ref, t_end, n_frames, n_rejected,
                                               true_emitters, near, outcome, ref, content, correct))

        if not groups:
            outcome = OUTCOME_BUDGET if len(distinct) > device.lookup_budget else OUTCOME_FLAGGED
            record(outcome)
            log.append(t_end, next(seq), FLAGGED, device=device.ref,
                       n_frames=n_frames, n_rejected=n_rejected, reason=outcome)
            return

        def pooled_distance(frames: list[Observation]) -> float:
            total = 0.0
            for o in frames:
                total += 10.0 ** ((o.claimed_tx_power - o.rssi) / (10.0 * radio.path_loss_exponent))
            return total / len(frames)

        ref = min(groups, key=lambda r: (pooled_distance(groups[r]), r))
        frames = sorted(groups[ref], key=lambda o: o.time)
        near = proximity_decision(frames, device.proximity_threshold_m, radio.path_loss_exponent)
        if not near:
            record(OUTCOME_FAR, near=False, ref=ref)
            log.append(t_end, next(seq), NO_ACTION, device=device.ref, reason=OUTCOME_FAR,
                       beacon=ref)
            return

        content = reference.content_by_ref.get(ref)
        if content is None:
            record(OUTCOME_FLAGGED, near=True, ref=ref)
            log.append(t_end, next(seq), FLAGGED, device=device.ref,
                       n_frames=n_frames, n_rejected=n_rejected, reason="no_content")
            return

        last = delivered_at.get((device.ref, content.locator))
        if last is not None and device.content_retrigger_s > 0 and \
                t_end - last < device.content_retrigger_s - _EPS:
            record(OUTCOME_DEBOUNCED, near=True, ref=ref, content=content.locator)
            log.append(t_end, next(seq), NO_ACTION, device=device.ref,
                       reason=OUTCOME_DEBOUNCED, beacon=ref)
            return

        correct = content.locator in expected_content(device, t_end)
        delivered_at[(device.ref, content.locator)] = t_end
        record(OUTCOME_DELIVERED, near=True, ref=ref, content=content.locator, correct=correct)
        log.append(t_end, next(seq), CONTENT_DELIVERED, device=device.ref, beacon=ref,
                   content=content.locator, correct=correct)

    heap: list = []
    push_seq = itertools.count()

    def push(t: float, action) -> None:
        heapq.heappush(heap, (t, next(push_seq), action))

    for i, em in enumerate(emitters):
        push(0.0, ("emit", i))
    for i, device in enumerate(devices):
        if device.scan_window_s <= duration + _EPS:
            push(device.scan_window_s, ("window", i, 1))

    while heap:
        t, _, action = heapq.heappop(heap)
        if action[0] == "emit":
            em = emitters[action[1]]
            broadcast(t, em)
            em.frame += 1
            nxt = em.frame * em.interval_s
            if nxt < duration - _EPS:
                push(nxt, ("emit", action[1]))
        else:
            _, i, k = action
            device = devices[i]
            process_window(t, device)
            nxt = (k + 1) * device.scan_window_s
            if nxt <= duration + _EPS:
                push(nxt, ("window", i, k + 1))

    trace_objs = tuple(Trace(d.ref, tuple(traces[d.ref])) for d in devices)
    return RunResult(
        scenario=scenario,
        duration=duration,
        events=log,
        window_records=tuple(window_records),
        budget_records=tuple(budget_records),
        traces=trace_objs,
        attacker_obs=attacker_obs,
        upload_logs=upload_logs,
        detections=detections,
        broadcast_ids=broadcast_ids,
    )
