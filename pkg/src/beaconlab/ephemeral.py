"""Rotating identifiers: keyed per-slot IDs with a Bloom filter verifier.

A beacon with a key derives its broadcast ID for slot s as a keyed PRF of the
slot index, truncated to the deployment id width. The resolver keeps a Bloom
filter holding every owned key's IDs for the slots inside the acceptance
window; a frame passes the cheap filter gate first, then an exact PRF
recomputation pins it to one beacon. The filter alone can lie (that is its
nature), the second stage cannot, so end-to-end false acceptance is zero and
the filter's false positives only cost wasted exact checks.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import struct
from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import InvalidInput
from .model import BeaconId, DEFAULT_ID_WIDTH

MIN_KEY_BYTES = 16
MAX_BUILD_FP = 0.10

_FILTER_MAGIC = b"BLF1"


@dataclass(frozen=True)
class EphemeralParams:
    slot_duration_s: float = 60.0
    window_slots: int = 2  # accept slots in [current - w, current + w]
    id_width: int = DEFAULT_ID_WIDTH

    def __post_init__(self) -> None:
        if self.slot_duration_s <= 0:
            raise InvalidInput("slot_duration_s must be positive")
        if self.window_slots < 0:
            raise InvalidInput("window_slots must be non-negative")
        if self.id_width <= 0 or self.id_width > 32:
            raise InvalidInput("id_width must be in 1..32 bytes")

    def slot_of(self, t: float) -> int:
        return math.floor(t / self.slot_duration_s)


def ephemeral_id(key: bytes, slot: int, id_width: int = DEFAULT_ID_WIDTH) -> BeaconId:
    """PRF(key, slot) truncated to id_width bytes; slot packs as signed 64-bit BE."""
    if len(key) < MIN_KEY_BYTES:
        raise InvalidInput(f"key must be at least {MIN_KEY_BYTES} bytes, got {len(key)}")
    if id_width <= 0 or id_width > 32:
        raise InvalidInput("id_width must be in 1..32 bytes")
    digest = hmac.new(key, struct.pack(">q", slot), hashlib.sha256).digest()
    return BeaconId(digest[:id_width])


# ---------------------------------------------------------------------------
# Bloom filter


@dataclass(frozen=True)
class BloomFilter:
    m_bits: int
    k_hashes: int
    bits: bytes
    n_inserted: int = 0

    def __post_init__(self) -> None:
        if self.m_bits <= 0 or self.k_hashes <= 0:
            raise InvalidInput("bloom filter needs positive m and k")
        if len(self.bits) != (self.m_bits + 7) // 8:
            raise InvalidInput("bloom bit array length does not match m_bits")


def bloom_empty(m_bits: int, k_hashes: int) -> BloomFilter:
    return BloomFilter(m_bits=m_bits, k_hashes=k_hashes, bits=bytes((m_bits + 7) // 8))


def _bit_indexes(item: bytes, m_bits: int, k_hashes: int):
    digest = hashlib.sha256(item).digest()
    h1 = int.from_bytes(digest[:8], "big")
    h2 = int.from_bytes(digest[8:16], "big") | 1
    for i in range(k_hashes):
        yield (h1 + i * h2) % m_bits


def bloom_insert(filt: BloomFilter, item: bytes) -> BloomFilter:
    """Pure insert: returns a new filter with the item's bits set."""
    bits = bytearray(filt.bits)
    for idx in _bit_indexes(item, filt.m_bits, filt.k_hashes):
        bits[idx >> 3] |= 1 << (idx & 7)
    return BloomFilter(
        m_bits=filt.m_bits,
        k_hashes=filt.k_hashes,
        bits=bytes(bits),
        n_inserted=filt.n_inserted + 1,
    )


def bloom_contains(filt: BloomFilter, item: bytes) -> bool:
    for idx in _bit_indexes(item, filt.m_bits, filt.k_hashes):
        if not filt.bits[idx >> 3] & (1 << (idx & 7)):
            return False
    return True


def expected_fp_rate(m_bits: int, k_hashes: int, n_items: int) -> float:
    """Classic approximation (1 - e^(-kn/m))^k."""
    if n_items == 0:
        return 0.0
    return (1.0 - math.exp(-k_hashes * n_items / m_bits)) ** k_hashes


def bloom_size_for(n_items: int, fp_target: float) -> tuple[int, int]:
    """Smallest (m, k) pair meeting the target false-positive rate."""
    if n_items <= 0:
        raise InvalidInput("n_items must be positive")
    if not (0.0 < fp_target < 1.0):
        raise InvalidInput("fp_target must be in (0, 1)")
    m = math.ceil(-n_items * math.log(fp_target) / (math.log(2.0) ** 2))
    k = max(1, round(m / n_items * math.log(2.0)))
    return m, k


def build_filter(
    keys: Mapping[str, bytes],
    current_slot: int,
    params: EphemeralParams,
    m_bits: int | None = None,
    k_hashes: int | None = None,
    fp_target: float = 0.01,
) -> BloomFilter:
    """Insert every owned key's IDs for the acceptance window around current_slot.

    Sizing defaults to the fp_target; passing an (m, k) whose expected false
    positive rate exceeds 10% at this population is a configuration error.
    """
    if not keys:
        raise InvalidInput("no keys to build a filter from")
    n_items = len(keys) * (2 * params.window_slots + 1)
    if m_bits is None or k_hashes is None:
        m_bits, k_hashes = bloom_size_for(n_items, fp_target)
    if expected_fp_rate(m_bits, k_hashes, n_items) > MAX_BUILD_FP:
        raise InvalidInput(
            f"bloom sizing m={m_bits} k={k_hashes} gives expected false-positive "
            f"rate above {MAX_BUILD_FP:.0%} for {n_items} ids"
        )
    bits = bytearray((m_bits + 7) // 8)
    count = 0
    for key in keys.values():
        for slot in range(current_slot - params.window_slots, current_slot + params.window_slots + 1):
            item = ephemeral_id(key, slot, params.id_width).data
            for idx in _bit_indexes(item, m_bits, k_hashes):
                bits[idx >> 3] |= 1 << (idx & 7)
            count += 1
    return BloomFilter(m_bits=m_bits, k_hashes=k_hashes, bits=bytes(bits), n_inserted=count)


def verify_and_resolve(
    filt: BloomFilter,
    keys: Mapping[str, bytes],
    beacon_id: BeaconId,
    current_slot: int,
    params: EphemeralParams,
) -> Optional[str]:
    """Two-stage check: Bloom gate, then exact recomputation over the window.

    Returns the owning beacon ref, or None for a rejected frame. A filter hit
    that no key reproduces is a Bloom false positive and is still rejected.
    """
    if not bloom_contains(filt, beacon_id.data):
        return None
    for ref, key in keys.items():
        for slot in range(current_slot - params.window_slots, current_slot + params.window_slots + 1):
            if ephemeral_id(key, slot, params.id_width) == beacon_id:
                return ref
    return None


# ---------------------------------------------------------------------------
# filter file format (binary, versioned)


def write_filter_file(
    path: str,
    filt: BloomFilter,
    current_slot: int,
    params: EphemeralParams,
) -> None:
    header = _FILTER_MAGIC + struct.pack(
        ">BQIqId", 1, filt.m_bits, filt.k_hashes, current_slot, params.window_slots,
        params.slot_duration_s,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(filt.bits)


def read_filter_file(path: str) -> tuple[BloomFilter, int, EphemeralParams]:
    with open(path, "rb") as fh:
        blob = fh.read()
    head_len = len(_FILTER_MAGIC) + struct.calcsize(">BQIqId")
    if len(blob) < head_len or not blob.startswith(_FILTER_MAGIC):
        raise InvalidInput(f"{path} is not a beaconlab filter file")
    version, m_bits, k_hashes, slot, window, slot_duration = struct.unpack(
        ">BQIqId", blob[len(_FILTER_MAGIC) : head_len]
    )
    if version != 1:
        raise InvalidInput(f"{path}: unsupported filter file version {version}")
    bits = blob[head_len:]
    filt = BloomFilter(m_bits=m_bits, k_hashes=k_hashes, bits=bits)
    params = EphemeralParams(slot_duration_s=slot_duration, window_slots=window)
    return filt, slot, params


# ---------------------------------------------------------------------------
# resolver helpers used by the simulator


class RotatingResolver:
    """Per-slot filter cache plus verdict memoization for the event loop."""

    def __init__(
        self,
        keys: Mapping[str, bytes],
        params: EphemeralParams,
        m_bits: int | None = None,
        k_hashes: int | None = None,
        fp_target: float = 0.01,
    ):
        self._keys = dict(keys)
        self._params = params
        self._m = m_bits
        self._k = k_hashes
        self._fp = fp_target
        self._filters: dict[int, BloomFilter] = {}
        self._verdicts: dict[tuple[bytes, int], Optional[str]] = {}
        self.filters_built = 0

    def filter_for(self, slot: int) -> BloomFilter:
        filt = self._filters.get(slot)
        if filt is None:
            filt = build_filter(self._keys, slot, self._params, self._m, self._k, self._fp)
            self._filters[slot] = filt
            self.filters_built += 1
        return filt

    def resolve(self, beacon_id: BeaconId, t: float) -> Optional[str]:
        slot = self._params.slot_of(t)
        cached = self._verdicts.get((beacon_id.data, slot))
        if cached is not None or (beacon_id.data, slot) in self._verdicts:
            return cached
        verdict = verify_and_resolve(self.filter_for(slot), self._keys, beacon_id, slot, self._params)
        self._verdicts[(beacon_id.data, slot)] = verdict
        return verdict


class AnySlotResolver:
    """Freshness-blind resolver used when the rotation defence is disabled.

    Accepts any slot the run can ever produce, so replayed IDs never expire.
    """

    def __init__(self, keys: Mapping[str, bytes], params: EphemeralParams, max_slot: int):
        self._table: dict[bytes, str] = {}
        for ref, key in keys.items():
            for slot in range(-params.window_slots, max_slot + params.window_slots + 1):
                self._table[ephemeral_id(key, slot, params.id_width).data] = ref

    def resolve(self, beacon_id: BeaconId, t: float) -> Optional[str]:
        return self._table.get(beacon_id.data)
