"""Hard (majority) and soft (average) voting over per-model probability matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArahateError
from .labels import LABEL_ORDER, N_CLASSES, Label

ROW_SUM_TOL = 1e-6
PROBA_CSV_HEADER = ["id"] + [f"p_{label.value}" for label in LABEL_ORDER]


class VoteError(ArahateError):
    pass


@dataclass
class ProbabilityMatrix:
    """N x 5 class probabilities for an ordered id list, columns in LABEL_ORDER.

    Every row must be non-negative and sum to 1 within 1e-6.
    """

    ids: list[str]
    probs: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2 or self.probs.shape[1] != N_CLASSES:
            raise VoteError(f"expected an N x {N_CLASSES} matrix, got shape {self.probs.shape}")
        if len(self.ids) != self.probs.shape[0]:
            raise VoteError(f"{len(self.ids)} ids but {self.probs.shape[0]} probability rows")
        if self.probs.size:
            if (self.probs < 0).any():
                raise VoteError("probabilities must be non-negative")
            worst = np.abs(self.probs.sum(axis=1) - 1.0).max()
            if worst > ROW_SUM_TOL:
                raise VoteError(f"probability rows must sum to 1 (worst deviation {worst:.3g})")

    def __len__(self) -> int:
        return len(self.ids)

    def argmax_labels(self) -> list[Label]:
        # np.argmax returns the first maximum, i.e. ties break by column order.
        return [LABEL_ORDER[i] for i in self.probs.argmax(axis=1)]


@dataclass(frozen=True)
class VoteConfig:
    """Voting mode plus per-model weights (uniform by default)."""

    mode: str = "majority"  # majority | average
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("majority", "average"):
            raise VoteError(f"unknown voting mode {self.mode!r}")

    def resolved_weights(self, n_models: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n_models)
        return _check_weights(self.weights, n_models)


def _check_weights(weights: Sequence[float], n_models: int) -> np.ndarray:
    w = np.asarray(list(weights), dtype=float)
    if w.shape != (n_models,):
        raise VoteError(f"expected {n_models} weights, got {w.shape}")
    if (w < 0).any():
        raise VoteError("weights must be non-negative")
    if w.sum() <= 0:
        raise VoteError("weights must not all be zero")
    return w


def _check_aligned(matrices: Sequence[ProbabilityMatrix]) -> None:
    if len(matrices) < 2:
        raise VoteError("voting needs at least two probability matrices")
    ids = matrices[0].ids
    for m in matrices[1:]:
        if m.ids != ids:
            raise VoteError("probability matrices disagree on row ids or their order")


def majority_vote(matrices: Sequence[ProbabilityMatrix]) -> list[Label]:
    """Each model votes its argmax class per row; plurality wins.

    Ties on vote count break toward the tied class with the highest summed
    probability across models; an exact tie there falls back to the fixed
    column order (NH first).
    """
    _check_aligned(matrices)
    votes = np.stack([m.probs.argmax(axis=1) for m in matrices])  # (M, N)
    prob_sum = np.sum([m.probs for m in matrices], axis=0)  # (N, K)
    out = []
    for row in range(votes.shape[1]):
        counts = np.bincount(votes[:, row], minlength=N_CLASSES)
        tied = np.flatnonzero(counts == counts.max())
        if len(tied) > 1:
            sums = prob_sum[row, tied]
            tied = tied[np.flatnonzero(sums == sums.max())]
        out.append(LABEL_ORDER[int(tied[0])])
    return out


def average_vote(
    matrices: Sequence[ProbabilityMatrix], weights: Sequence[float] | None = None
) -> tuple[list[Label], ProbabilityMatrix]:
    """Weight-normalized mean of the model rows; argmax of the mean wins.

    Returns the winning labels together with the combined matrix. Argmax ties
    break by column order; scaling all weights by a positive constant does not
    change the labels.
    """
    _check_aligned(matrices)
    if weights is None:
        w = np.ones(len(matrices))
    else:
        w = _check_weights(weights, len(matrices))
    w = w / w.sum()
    combined = np.zeros_like(matrices[0].probs)
    for weight, matrix in zip(w, matrices):
        combined += weight * matrix.probs
    pm = ProbabilityMatrix(ids=list(matrices[0].ids), probs=combined)
    return pm.argmax_labels(), pm


def write_proba_csv(path: str | Path, matrix: ProbabilityMatrix) -> None:
    """Persist a probability cache: header id,p_NH,p_GH,p_Re,p_Ra,p_Se."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROBA_CSV_HEADER)
        for i, row_id in enumerate(matrix.ids):
            writer.writerow([row_id] + [repr(float(p)) for p in matrix.probs[i]])


def read_proba_csv(path: str | Path) -> ProbabilityMatrix:
    path = Path(path)
    if not path.exists():
        raise VoteError(f"probability cache not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PROBA_CSV_HEADER:
            raise VoteError(f"{path}: unexpected header {header!r}")
        ids = []
        rows = []
        for record in reader:
            if len(record) != len(PROBA_CSV_HEADER):
                raise VoteError(f"{path}: malformed row {record!r}")
            ids.append(record[0])
            rows.append([float(v) for v in record[1:]])
    probs = np.asarray(rows, dtype=float) if rows else np.zeros((0, N_CLASSES))
    return ProbabilityMatrix(ids=ids, probs=probs)
