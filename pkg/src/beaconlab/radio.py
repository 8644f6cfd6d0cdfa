"""Radio propagation primitives and the simulation event record.

Signal strength follows a log-distance path loss model with optional Gaussian
shadowing; distances below one meter clamp to the one-meter reference so the
inverse stays defined. Shadowing draws are keyed counter-mode hashes of
(seed, emitter, frame, receiver), which makes every draw independent of event
interleaving: adding or removing an actor never perturbs anyone else's noise.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from random import Random
from typing import Iterator, Optional

from .errors import InvalidInput

_TWO_PI = 2.0 * math.pi
_U64 = float(2**64)


@dataclass(frozen=True)
class RadioParams:
    path_loss_exponent: float = 2.0
    noise_sigma: float = 2.0  # dB shadowing standard deviation
    max_range: float = 50.0  # meters; no reception beyond this
    seed: int = 0

    def __post_init__(self) -> None:
        if self.path_loss_exponent <= 0:
            raise InvalidInput("path_loss_exponent must be positive")
        if self.noise_sigma < 0:
            raise InvalidInput("noise_sigma must be non-negative")
        if self.max_range <= 0:
            raise InvalidInput("max_range must be positive")


def mean_rssi(tx_power_1m: float, distance: float, path_loss_exponent: float) -> float:
    """Expected RSSI at distance meters; the sub-meter region clamps to 1 m."""
    if distance <= 0:
        raise InvalidInput(f"distance must be positive, got {distance}")
    return tx_power_1m - 10.0 * path_loss_exponent * math.log10(max(distance, 1.0))


def rssi_at(
    tx_power_1m: float,
    distance: float,
    params: RadioParams,
    rng: Optional[Random] = None,
) -> float:
    """Sample a received signal strength; rng=None gives the noiseless mean."""
    value = mean_rssi(tx_power_1m, distance, params.path_loss_exponent)
    if rng is not None and params.noise_sigma > 0:
        value += rng.gauss(0.0, params.noise_sigma)
    return value


def estimate_distance(claimed_tx_power: float, rssi: float, path_loss_exponent: float) -> float:
    """Invert the path loss model using the transmit power the frame claims."""
    if path_loss_exponent <= 0:
        raise InvalidInput("path_loss_exponent must be positive")
    return 10.0 ** ((claimed_tx_power - rssi) / (10.0 * path_loss_exponent))


def shadowing_db(seed: int, emitter_ref: str, frame_seq: int, receiver_ref: str, sigma: float) -> float:
    """Deterministic per-link shadowing draw, N(0, sigma) via Box-Muller."""
    if sigma == 0:
        return 0.0
    digest = hashlib.sha256(
        struct.pack(">qq", seed, frame_seq)
        + emitter_ref.encode()
        + b"\x00"
        + receiver_ref.encode()
    ).digest()
    u1 = (int.from_bytes(digest[:8], "big") + 1) / (_U64 + 2)
    u2 = int.from_bytes(digest[8:16], "big") / _U64
    return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


def uniform_draw(seed: int, purpose: str, ref: str, counter: int) -> float:
    """Deterministic U[0,1) draw keyed by purpose, independent of event order."""
    digest = hashlib.sha256(
        struct.pack(">qq", seed, counter) + purpose.encode() + b"\x00" + ref.encode()
    ).digest()
    return int.from_bytes(digest[:8], "big") / _U64


# ---------------------------------------------------------------------------
# event record

BROADCAST = "Broadcast"
RECEIVE = "Receive"
CONTENT_DELIVERED = "ContentDelivered"
NO_ACTION = "NoAction"
JAMMED = "Jammed"
FLAGGED = "Flagged"

EVENT_KINDS = (BROADCAST, RECEIVE, CONTENT_DELIVERED, NO_ACTION, JAMMED, FLAGGED)


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: str
    data: dict

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.time, "seq": self.seq, "kind": self.kind, "data": self.data},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "Event":
        raw = json.loads(line)
        return cls(time=raw["t"], seq=raw["seq"], kind=raw["kind"], data=raw["data"])


@dataclass
class EventLog:
    events: list[Event] = field(default_factory=list)

    def append(self, time: float, seq: int, kind: str, **data) -> None:
        if kind not in EVENT_KINDS:
            raise InvalidInput(f"unknown event kind {kind!r}")
        self.events.append(Event(time=time, seq=seq, kind=kind, data=data))

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)
