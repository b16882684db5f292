"""GDS score banding into severity and binary presence labels.

Scores 0-9 carry no depressive symptoms, 10-19 mild, 20-30 severe; the
binary task collapses mild/severe into "present".
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "GdsLabel",
    "gds_to_label",
    "SEVERITY_CLASSES",
    "BINARY_CLASSES",
    "severity_class",
    "binary_class",
]

SEVERITY_CLASSES = ("absent", "mild", "severe")
BINARY_CLASSES = ("absent", "present")


@dataclass(frozen=True)
class GdsLabel:
    score: int
    severity: str  # absent | mild | severe
    binary: str    # absent | present


def gds_to_label(score: int) -> GdsLabel:
    if not isinstance(score, (int,)) or isinstance(score, bool):
        raise ValueError(f"gds score must be an int, got {score!r}")
    if not 0 <= score <= 30:
        raise ValueError(f"gds score out of range 0..30: {score}")
    if score <= 9:
        severity = "absent"
    elif score <= 19:
        severity = "mild"
    else:
        severity = "severe"
    binary = "absent" if severity == "absent" else "present"
    return GdsLabel(score, severity, binary)


def severity_class(score: int) -> int:
    """Multiclass index: absent 0, mild 1, severe 2."""
    return SEVERITY_CLASSES.index(gds_to_label(score).severity)


def binary_class(score: int) -> int:
    """Binary index: absent 0, present 1."""
    return BINARY_CLASSES.index(gds_to_label(score).binary)
