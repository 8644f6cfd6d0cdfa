"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage/validation problems exit 1,
I/O failures exit 2, and "analysis ran and found a problem" exits 3.
"""

from __future__ import annotations

from collections.abc import Iterable


class BeaconLabError(Exception):
    """Base class for all beaconlab errors."""


class SchemaError(BeaconLabError):
    """A document is structurally malformed (bad syntax, wrong types, missing keys)."""


class ValidationError(BeaconLabError):
    """A document parsed fine but is semantically inconsistent."""


class InvalidInput(BeaconLabError):
    """An argument violates a function's contract."""


class UnknownRef(BeaconLabError):
    """A reference names an entity that does not exist."""


class CapabilityError(BeaconLabError):
    """An attack requires capabilities the scenario's attacker does not have."""

    def __init__(self, missing: Iterable[str], message: str | None = None):
        self.missing = tuple(sorted(missing))
        if message is None:
            message = "missing attacker capabilities: " + ", ".join(self.missing)
        super().__init__(message)


class TooShort(BeaconLabError):
    """A trace has too few transitions to score and no hard evidence either."""


class InsufficientData(BeaconLabError):
    """Not enough calibration material to fix a detection threshold."""


class ContaminatedCalibration(BeaconLabError):
    """Calibration traces contain hard anomalies and cannot define 'normal'."""
