"""The fixed five-class label taxonomy shared by every pipeline stage."""

from __future__ import annotations

from enum import Enum


class Label(str, Enum):
    """Tweet class: non-hate or one of four hate categories."""

    NH = "NH"  # non-hate
    GH = "GH"  # general hate
    Re = "Re"  # religious hate
    Ra = "Ra"  # racial hate
    Se = "Se"  # sexism

    def __str__(self) -> str:
        return self.value


# Fixed column order for probability matrices, confusion matrices and reports.
LABEL_ORDER: tuple[Label, ...] = (Label.NH, Label.GH, Label.Re, Label.Ra, Label.Se)
HATE_LABELS: tuple[Label, ...] = (Label.GH, Label.Re, Label.Ra, Label.Se)
LABEL_INDEX: dict[Label, int] = {label: i for i, label in enumerate(LABEL_ORDER)}
N_CLASSES = len(LABEL_ORDER)


def parse_label(value: str) -> Label:
    """Parse a canonical label string, raising ValueError for anything else."""
    try:
        return Label(value)
    except ValueError:
        expected = ", ".join(label.value for label in LABEL_ORDER)
        raise ValueError(f"unknown label {value!r}; expected one of {expected}") from None
