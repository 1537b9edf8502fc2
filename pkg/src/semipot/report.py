"""Verification report containers shared across modules.

A report entry carries one named measurement against one tolerance; the
report's verdict is the conjunction of its entries.  Entries whose mask
fraction exceeds MASK_FRACTION_LIMIT are voided ("inconclusive"): a
residual maximum over a thin sliver of the box is not meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass, field

#: Fraction of masked nodes above which an entry is reported inconclusive.
MASK_FRACTION_LIMIT = 0.2

STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_INCONCLUSIVE = "inconclusive"


@dataclass
class ReportEntry:
    name: str
    measured: float
    tolerance: float
    status: str
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == STATUS_PASS

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "status": self.status,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportEntry":
        return cls(d["name"], d["measured"], d["tolerance"], d["status"], d.get("metadata", {}))


def make_entry(
    name: str,
    measured: float,
    tolerance: float,
    *,
    mask_fraction: float = 0.0,
    **metadata,
) -> ReportEntry:
    """Build an entry, deciding pass/fail/inconclusive from the inputs."""
    measured = float(measured)
    tolerance = float(tolerance)
    meta = {"mask_fraction": float(mask_fraction)}
    meta.update(metadata)
    if mask_fraction > MASK_FRACTION_LIMIT:
        status = STATUS_INCONCLUSIVE
    elif measured <= tolerance:
        status = STATUS_PASS
    else:
        status = STATUS_FAIL
    return ReportEntry(name, measured, tolerance, status, meta)


@dataclass
class VerificationReport:
    entries: list[ReportEntry] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, entry: ReportEntry) -> ReportEntry:
        self.entries.append(entry)
        return entry

    def extend(self, entries) -> None:
        for e in entries:
            self.add(e)

    @property
    def verdict(self) -> bool:
        return bool(self.entries) and all(e.passed for e in self.entries)

    @property
    def outcome(self) -> str:
        """'fail' beats 'inconclusive' beats 'pass'."""
        if any(e.status == STATUS_FAIL for e in self.entries):
            return STATUS_FAIL
        if any(e.status == STATUS_INCONCLUSIVE for e in self.entries):
            return STATUS_INCONCLUSIVE
        return STATUS_PASS

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "verdict": self.verdict,
            "outcome": self.outcome,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        report = cls(provenance=d.get("provenance", {}))
        for e in d.get("entries", []):
            report.add(ReportEntry.from_dict(e))
        return report

    def table(self) -> str:
        """Human-readable fixed-width table."""
        lines = []
        name_w = max([len(e.name) for e in self.entries] + [5])
        header = f"{'check':<{name_w}}  {'measured':>12}  {'tolerance':>12}  {'mask%':>6}  status"
        lines.append(header)
        lines.append("-" * len(header))
        for e in self.entries:
            mask_pct = 100.0 * e.metadata.get("mask_fraction", 0.0)
            lines.append(
                f"{e.name:<{name_w}}  {e.measured:>12.4e}  {e.tolerance:>12.4e}  "
                f"{mask_pct:>5.1f}%  {e.status}"
            )
        lines.append("-" * len(header))
        lines.append(f"overall: {self.outcome}")
        return "\n".join(lines)
