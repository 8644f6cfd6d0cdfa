"""Threat matrix: attacks, motives, capabilities, impacts and defences.

The matrix is plain data plus set logic. An attack is *likely* when some
assumed motive points at it and the assumed capability set covers everything
it needs. Defence recommendation intersects the per-attack defence sets;
an empty intersection with a non-empty attack list is the analyst's cue that
no single control covers the situation.

This table is the single source of truth: the attacks module reads required
capabilities from here when gating what a scenario's adversary may do.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import yaml

from .errors import InvalidInput, SchemaError, UnknownRef, ValidationError

GOALS = ("C", "I", "A", "P")  # confidentiality, integrity, availability, privacy
GOAL_NAMES = {
    "C": "Confidentiality",
    "I": "Integrity",
    "A": "Availability",
    "P": "Privacy",
}

TARGET_OWNER = "Owner"
TARGET_USER = "User"

LEVELS = ("H", "M", "L")
PARTIES = ("O", "U")  # infrastructure owner, end user

SKILL_ORDER = {"L": 0, "M": 1, "H": 2}


@dataclass(frozen=True)
class Capability:
    id: str
    description: str
    skill: str  # L / M / H

    def __post_init__(self) -> None:
        if self.skill not in SKILL_ORDER:
            raise InvalidInput(f"capability {self.id}: skill must be one of L, M, H")


@dataclass(frozen=True)
class Impact:
    description: str
    level: str  # H / M / L
    party: str  # O / U

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise InvalidInput(f"impact {self.description!r}: bad level {self.level!r}")
        if self.party not in PARTIES:
            raise InvalidInput(f"impact {self.description!r}: bad party {self.party!r}")


@dataclass(frozen=True)
class AttackEntry:
    id: str
    name: str
    motives: frozenset[str]
    goals: frozenset[str]
    target: str
    required_caps: frozenset[str]
    impacts: tuple[Impact, ...]
    defences: frozenset[str]


@dataclass(frozen=True)
class ThreatMatrix:
    attacks: Mapping[str, AttackEntry]
    capabilities: Mapping[str, Capability]
    motives: Mapping[str, str]
    defences: Mapping[str, str]

    def attack_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.attacks))


MOTIVES = {
    "M1": "Free riding on a third party's beacon infrastructure",
    "M2": "Corrupting the ID-to-content mapping of an existing deployment",
    "M3": "Disabling part of an existing deployment",
    "M4": "Tracking user locations and activities",
    "M5": "Exhausting or disabling user devices",
}

CAPABILITIES = {
    "C1": Capability("C1", "Eavesdrop and record broadcast beacon IDs", "L"),
    "C2": Capability("C2", "Rebuild an ID-to-location database", "L"),
    "C3": Capability("C3", "Clone beacons or produce fake advertisers", "M"),
    "C4": Capability("C4", "Read/write access to beacon firmware", "H"),
    "C5": Capability("C5", "Physical access to installed beacons", "H"),
    "C6": Capability("C6", "Install own hardware in the target area", "H"),
    "C7": Capability("C7", "Get a user to install an authorized malicious app", "M"),
}

DEFENCES = {
    "TV": "Time-varying IDs",
    "OD": "Outlier detection",
    "SJ": "Selective jamming",
}

_IMPACT_WRONG_CONTENT = Impact("Wrong content delivered to users", "H", "U")
_IMPACT_UNAVAILABLE = Impact("Service unavailable in affected areas", "H", "U")
_IMPACT_REPUTATION = Impact("Reputational risk to the infrastructure owner", "M", "O")
_IMPACT_CORRECTIVE = Impact("Corrective action required from the infrastructure owner", "H", "O")
_IMPACTS_PROFILING = (
    Impact("Privacy of users breached", "H", "O"),
    Impact("User locations and activities leaked to unauthorized parties", "H", "U"),
)

_ATTACKS = (
    AttackEntry(
        id="A1",
        name="Piggybacking",
        motives=frozenset({"M1"}),
        goals=frozenset({"C"}),
        target=TARGET_OWNER,
        required_caps=frozenset({"C1", "C2", "C7"}),
        impacts=(
            Impact("Limited impact to users", "L", "U"),
            Impact("Loss of revenue to the infrastructure owner", "H", "O"),
        ),
        defences=frozenset({"TV"}),
    ),
    AttackEntry(
        id="A2",
        name="Spoofing",
        motives=frozenset({"M2"}),
        goals=frozenset({"I"}),
        target=TARGET_OWNER,
        required_caps=frozenset({"C1", "C3", "C6"}),
        impacts=(_IMPACT_WRONG_CONTENT, _IMPACT_REPUTATION, _IMPACT_CORRECTIVE),
        defences=frozenset({"TV", "OD"}),
    ),
    AttackEntry(
        id="A3",
        name="Silencing",
        motives=frozenset({"M3"}),
        goals=frozenset({"A"}),
        target=TARGET_OWNER,
        required_caps=frozenset({"C1", "C3", "C6"}),
        impacts=(_IMPACT_UNAVAILABLE, _IMPACT_REPUTATION),
        defences=frozenset({"TV"}),
    ),
    AttackEntry(
        id="A4",
        name="Re-programming",
        motives=frozenset({"M2", "M3"}),
        goals=frozenset({"I", "A"}),
        target=TARGET_OWNER,
        required_caps=frozenset({"C4"}),
        impacts=(
            _IMPACT_WRONG_CONTENT,
            _IMPACT_UNAVAILABLE,
            _IMPACT_REPUTATION,
            _IMPACT_CORRECTIVE,
        ),
        defences=frozenset({"OD"}),
    ),
    AttackEntry(
        id="A5",
        name="Reshuffling",
        motives=frozenset({"M2", "M3"}),
        goals=frozenset({"I", "A"}),
        target=TARGET_OWNER,
        required_caps=frozenset({"C5"}),
        impacts=(
            _IMPACT_WRONG_CONTENT,
            _IMPACT_UNAVAILABLE,
            _IMPACT_REPUTATION,
            _IMPACT_CORRECTIVE,
        ),
        defences=frozenset({"OD"}),
    ),
    AttackEntry(
        id="A6",
        name="User profiling",
        motives=frozenset({"M4"}),
        goals=frozenset({"P"}),
        target=TARGET_USER,
        required_caps=frozenset({"C1", "C2", "C7"}),
        impacts=_IMPACTS_PROFILING,
        defences=frozenset({"TV"}),
    ),
    AttackEntry(
        id="A7",
        name="Presence inference",
        motives=frozenset({"M4"}),
        goals=frozenset({"P"}),
        target=TARGET_USER,
        required_caps=frozenset({"C1", "C2", "C6"}),
        impacts=_IMPACTS_PROFILING,
        defences=frozenset({"TV", "SJ"}),
    ),
    AttackEntry(
        id="A8",
        name="Resource draining",
        motives=frozenset({"M5"}),
        goals=frozenset({"A"}),
        target=TARGET_USER,
        required_caps=frozenset({"C3", "C6"}),
        impacts=(
            Impact("Processing capability of user devices reduced", "M", "U"),
            Impact("Services on user devices unavailable", "H", "U"),
        ),
        defences=frozenset(),
    ),
)


def default_matrix() -> ThreatMatrix:
    """The canonical eight-attack matrix."""
    return ThreatMatrix(
        attacks={a.id: a for a in _ATTACKS},
        capabilities=dict(CAPABILITIES),
        motives=dict(MOTIVES),
        defences=dict(DEFENCES),
    )


def _validate_matrix(matrix: ThreatMatrix) -> None:
    if not matrix.attacks:
        raise ValidationError("matrix has no attacks")
    for aid, attack in matrix.attacks.items():
        where = f"attack {aid}"
        if aid != attack.id:
            raise ValidationError(f"{where}: key and id disagree")
        if not attack.motives:
            raise ValidationError(f"{where}: needs at least one motive")
        for m in attack.motives:
            if m not in matrix.motives:
                raise ValidationError(f"{where}: unknown motive {m!r}")
        if not attack.goals:
            raise ValidationError(f"{where}: needs at least one goal")
        for g in attack.goals:
            if g not in GOALS:
                raise ValidationError(f"{where}: unknown goal {g!r}")
        if attack.target not in (TARGET_OWNER, TARGET_USER):
            raise ValidationError(f"{where}: target must be Owner or User")
        if not attack.required_caps:
            raise ValidationError(f"{where}: needs at least one required capability")
        for c in attack.required_caps:
            if c not in matrix.capabilities:
                raise ValidationError(f"{where}: unknown capability {c!r}")
        if not attack.impacts:
            raise ValidationError(f"{where}: needs at least one impact")
        for d in attack.defences:
            if d not in matrix.defences:
                raise ValidationError(f"{where}: unknown defence {d!r}")


def load_matrix(document) -> ThreatMatrix:
    """Parse a matrix override document (same config dialect as scenarios).

    Motives, capabilities and defences default to the canonical vocabulary and
    may be extended; the attacks list replaces the canonical one entirely.
    """
    if isinstance(document, (str, bytes)):
        try:
            parsed = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise SchemaError(f"unparseable matrix document: {exc}") from exc
    else:
        parsed = document
    if not isinstance(parsed, Mapping):
        raise SchemaError("matrix document root must be a mapping")

    motives = dict(MOTIVES)
    for mid, text in (parsed.get("motives") or {}).items():
        motives[str(mid)] = str(text)
    capabilities = dict(CAPABILITIES)
    for cid, entry in (parsed.get("capabilities") or {}).items():
        if not isinstance(entry, Mapping):
            raise SchemaError(f"capability {cid}: entry must be a mapping")
        capabilities[str(cid)] = Capability(
            id=str(cid),
            description=str(entry.get("description", "")),
            skill=str(entry.get("skill", "L")),
        )
    defences = dict(DEFENCES)
    for did, text in (parsed.get("defences") or {}).items():
        defences[str(did)] = str(text)

    raw_attacks = parsed.get("attacks")
    if not isinstance(raw_attacks, list) or not raw_attacks:
        raise SchemaError("matrix document needs a non-empty 'attacks' list")
    attacks: dict[str, AttackEntry] = {}
    for entry in raw_attacks:
        if not isinstance(entry, Mapping):
            raise SchemaError(f"attack entry must be a mapping, got {entry!r}")
        if "id" not in entry:
            raise SchemaError("attack entry missing 'id'")
        aid = str(entry["id"])
        if aid in attacks:
            raise ValidationError(f"duplicate attack id {aid!r}")
        impacts = []
        for imp in entry.get("impacts", []):
            if not isinstance(imp, Mapping):
                raise SchemaError(f"attack {aid}: impact entries must be mappings")
            impacts.append(
                Impact(
                    description=str(imp.get("description", "")),
                    level=str(imp.get("level", "")),
                    party=str(imp.get("party", "")),
                )
            )
        attacks[aid] = AttackEntry(
            id=aid,
            name=str(entry.get("name", aid)),
            motives=frozenset(str(m) for m in entry.get("motives", [])),
            goals=frozenset(str(g) for g in entry.get("goals", [])),
            target=str(entry.get("target", TARGET_OWNER)),
            required_caps=frozenset(str(c) for c in entry.get("required_caps", [])),
            impacts=tuple(impacts),
            defences=frozenset(str(d) for d in entry.get("defences", [])),
        )
    matrix = ThreatMatrix(
        attacks=attacks, capabilities=capabilities, motives=motives, defences=defences
    )
    _validate_matrix(matrix)
    return matrix


# ---------------------------------------------------------------------------
# set logic


def _check_motives(matrix: ThreatMatrix, motives: Iterable[str]) -> frozenset[str]:
    wanted = frozenset(motives)
    for m in wanted:
        if m not in matrix.motives:
            raise UnknownRef(f"unknown motive {m!r}")
    return wanted


def _check_caps(matrix: ThreatMatrix, capabilities: Iterable[str]) -> frozenset[str]:
    held = frozenset(capabilities)
    for c in held:
        if c not in matrix.capabilities:
            raise UnknownRef(f"unknown capability {c!r}")
    return held


def attacks_for_motives(matrix: ThreatMatrix, motives: Iterable[str]) -> frozenset[str]:
    """Attacks that serve at least one of the assumed motives."""
    wanted = _check_motives(matrix, motives)
    return frozenset(
        aid for aid, attack in matrix.attacks.items() if attack.motives & wanted
    )


def attacks_for_capabilities(matrix: ThreatMatrix, capabilities: Iterable[str]) -> frozenset[str]:
    """Attacks whose full capability requirement is covered by what is held."""
    held = _check_caps(matrix, capabilities)
    return frozenset(
        aid for aid, attack in matrix.attacks.items() if attack.required_caps <= held
    )


def likely_attacks(
    matrix: ThreatMatrix,
    motives: Iterable[str],
    capabilities: Iterable[str],
) -> frozenset[str]:
    """Motivated and feasible: the intersection of the two screens."""
    return attacks_for_motives(matrix, motives) & attacks_for_capabilities(matrix, capabilities)


def impact_report(matrix: ThreatMatrix, attacks: Iterable[str]) -> list[tuple[str, Impact]]:
    """Impacts for the given attacks, ordered for reading: by attack id, the
    owner's exposure before the users', and heavier levels first."""
    rows: list[tuple[str, Impact]] = []
    for aid in sorted(set(attacks)):
        entry = matrix.attacks.get(aid)
        if entry is None:
            raise UnknownRef(f"unknown attack {aid!r}")
        ordered = sorted(
            entry.impacts,
            key=lambda imp: (PARTIES.index(imp.party), LEVELS.index(imp.level)),
        )
        rows.extend((aid, imp) for imp in ordered)
    return rows


def recommend_defences(matrix: ThreatMatrix, attacks: Iterable[str]) -> dict:
    """Common defences across the attack set, per-attack sets, and the gaps."""
    wanted = sorted(set(attacks))
    if not wanted:
        raise InvalidInput("cannot recommend defences for an empty attack set")
    per_attack: dict[str, tuple[str, ...]] = {}
    common: frozenset[str] | None = None
    uncovered: list[str] = []
    for aid in wanted:
        entry = matrix.attacks.get(aid)
        if entry is None:
            raise UnknownRef(f"unknown attack {aid!r}")
        per_attack[aid] = tuple(sorted(entry.defences))
        common = entry.defences if common is None else common & entry.defences
        if not entry.defences:
            uncovered.append(aid)
    return {
        "common": tuple(sorted(common or frozenset())),
        "per_attack": per_attack,
        "uncovered": tuple(uncovered),
    }


def skill_profile(matrix: ThreatMatrix, capabilities: Iterable[str]) -> str | None:
    """Highest skill tier among the assumed capabilities; None when no caps."""
    held = _check_caps(matrix, capabilities)
    if not held:
        return None
    return max((matrix.capabilities[c].skill for c in held), key=SKILL_ORDER.__getitem__)


@dataclass(frozen=True)
class AssessmentReport:
    motives: tuple[str, ...]
    capabilities: tuple[str, ...]
    likely_attacks: tuple[str, ...]
    attack_names: Mapping[str, str]
    goals: Mapping[str, tuple[str, ...]]
    targets: Mapping[str, str]
    impacts: tuple[tuple[str, Impact], ...]
    defences: Mapping[str, object]
    skill_profile: str | None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "motives": list(self.motives),
            "capabilities": list(self.capabilities),
            "likely_attacks": [
                {
                    "id": aid,
                    "name": self.attack_names[aid],
                    "goals": list(self.goals[aid]),
                    "target": self.targets[aid],
                }
                for aid in self.likely_attacks
            ],
            "impacts": [
                {
                    "attack": aid,
                    "description": imp.description,
                    "level": imp.level,
                    "party": imp.party,
                }
                for aid, imp in self.impacts
            ],
            "defences": {
                "common": list(self.defences.get("common", ())),
                "per_attack": {
                    aid: list(ds) for aid, ds in self.defences.get("per_attack", {}).items()
                },
                "uncovered": list(self.defences.get("uncovered", ())),
            },
            "skill_profile": self.skill_profile,
            "notes": list(self.notes),
        }

    def render_text(self) -> str:
        lines = [
            "threat assessment",
            f"  motives:      {', '.join(self.motives) or '(none)'}",
            f"  capabilities: {', '.join(self.capabilities) or '(none)'}",
            f"  skill needed: {self.skill_profile or '-'}",
        ]
        if not self.likely_attacks:
            lines.append("  no feasible attack matches the assumed motives and capabilities")
            for note in self.notes:
                lines.append(f"  note: {note}")
            return "\n".join(lines)
        lines.append("  likely attacks:")
        for aid in self.likely_attacks:
            goals = "/".join(self.goals[aid])
            lines.append(
                f"    {aid} {self.attack_names[aid]} (goal {goals}, target {self.targets[aid]})"
            )
        lines.append("  impacts:")
        for aid, imp in self.impacts:
            lines.append(f"    {aid}: {imp.description} [{imp.level}, {imp.party}]")
        common = ", ".join(self.defences["common"]) or "(none)"
        lines.append(f"  common defences: {common}")
        for aid, ds in self.defences["per_attack"].items():
            lines.append(f"    {aid}: {', '.join(ds) or '(undefended)'}")
        if self.defences["uncovered"]:
            lines.append(f"  undefended attacks: {', '.join(self.defences['uncovered'])}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines)


def assess(
    matrix: ThreatMatrix,
    motives: Iterable[str],
    capabilities: Iterable[str],
) -> AssessmentReport:
    """Run the workflow: motive screen, capability screen, impacts, defences."""
    wanted = _check_motives(matrix, motives)
    held = _check_caps(matrix, capabilities)
    motivated = attacks_for_motives(matrix, wanted)
    capable = attacks_for_capabilities(matrix, held)
    likely = tuple(sorted(motivated & capable))

    notes: list[str] = []
    a6 = matrix.attacks.get("A6")
    if a6 is not None and "A6" in motivated and "A6" not in capable:
        missing = a6.required_caps - held
        if missing == {"C7"}:
            notes.append(
                "A6 excluded only because C7 (authorized malicious app on the "
                "target's device) is not assumed; with C7 it becomes feasible"
            )

    defences: dict = {"common": (), "per_attack": {}, "uncovered": ()}
    impacts: tuple = ()
    if likely:
        defences = recommend_defences(matrix, likely)
        impacts = tuple(impact_report(matrix, likely))
    return AssessmentReport(
        motives=tuple(sorted(wanted)),
        capabilities=tuple(sorted(held)),
        likely_attacks=likely,
        attack_names={aid: matrix.attacks[aid].name for aid in likely},
        goals={aid: tuple(sorted(matrix.attacks[aid].goals)) for aid in likely},
        targets={aid: matrix.attacks[aid].target for aid in likely},
        impacts=impacts,
        defences=defences,
        skill_profile=skill_profile(matrix, held),
        notes=tuple(notes),
    )
