"""Suite files: a YAML document with a list of claims.

    claims:
      - id: eq-3.16
        scenario: occupation-brownian
        params: {f: zero}
        budget: {M: 1000, dt: 0.01}
        decision: one-sided
        tolerance: 0.0
        seed: 1
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import yaml

from ..errors import ValidationError

DECISIONS = ("one-sided", "two-sided", "trend")
CLAIM_KEYS = {"id", "scenario", "params", "budget", "decision", "tolerance", "seed", "description"}


@dataclass(frozen=True)
class ClaimSpec:
    id: str
    scenario: str
    decision: str = "two-sided"
    params: dict = dc_field(default_factory=dict)
    budget: dict = dc_field(default_factory=dict)
    tolerance: float = 0.0
    seed: int = 0
    description: str = ""

    def __post_init__(self):
        if self.decision not in DECISIONS:
            raise ValidationError(f"claim {self.id}: decision must be one of {DECISIONS}")
        if self.tolerance < 0:
            raise ValidationError(f"claim {self.id}: tolerance must be >= 0")


def _claim(entry, index: int) -> ClaimSpec:
    if not isinstance(entry, dict):
        raise ValidationError(f"claim #{index} is not a mapping")
    unknown = set(entry) - CLAIM_KEYS
    if unknown:
        raise ValidationError(f"claim #{index}: unknown keys {sorted(unknown)}")
    for key in ("id", "scenario"):
        if not isinstance(entry.get(key), str) or not entry[key]:
            raise ValidationError(f"claim #{index}: '{key}' must be a non-empty string")
    for key in ("params", "budget"):
        if not isinstance(entry.get(key, {}), dict):
            raise ValidationError(f"claim {entry['id']}: '{key}' must be a mapping")
    try:
        tol = float(entry.get("tolerance", 0.0))
        seed = int(entry.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"claim {entry['id']}: {exc}") from exc
    return ClaimSpec(entry["id"], entry["scenario"], entry.get("decision", "two-sided"),
                     dict(entry.get("params", {})), dict(entry.get("budget", {})), tol, seed,
                     str(entry.get("description", "")))


def parse_suite(text: str) -> list:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"suite does not parse: {exc}") from exc
    if doc is None:
        return []
    if not isinstance(doc, dict) or set(doc) - {"claims"}:
        raise ValidationError("suite must be a mapping with a single 'claims' key")
    entries = doc.get("claims") or []
    if not isinstance(entries, list):
        raise ValidationError("'claims' must be a list")
    claims = [_claim(e, i) for i, e in enumerate(entries)]
    seen = set()
    for c in claims:
        if c.id in seen:
            raise ValidationError(f"duplicate claim id {c.id!r}")
        seen.add(c.id)
    return claims


def load_suite(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_suite(fh.read())


def builtin_suite_path(name: str) -> Optional[str]:
    """Path of a suite shipped with the package, or None."""
    from importlib import resources

    ref = resources.files("msde") / "suites" / name
    return str(ref) if ref.is_file() else None
