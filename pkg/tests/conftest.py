"""Shared fixtures: separable synthetic corpora and small file helpers.

The synthetic corpus gives each class a disjoint Arabic letter pool, so the
classes have disjoint character n-grams and a linear model separates them
easily. Only letters untouched by normalization are used, hence
norm_text == raw_text for these fixtures.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from arahate.corpus import LabeledText, write_jsonl
from arahate.labels import LABEL_ORDER, Label

CLASS_LETTERS = {
    Label.NH: "بتثجح",
    Label.GH: "خدذرز",
    Label.Re: "سشصضط",
    Label.Ra: "ظعغفق",
    Label.Se: "كلمنه",
}


def class_word(label: Label, rng: np.random.Generator) -> str:
    pool = list(CLASS_LETTERS[label])
    return "".join(rng.choice(pool, size=rng.integers(4, 7)))


def class_text(label: Label, rng: np.random.Generator, n_words: tuple[int, int] = (3, 8)) -> str:
    return " ".join(class_word(label, rng) for _ in range(rng.integers(*n_words)))


def make_separable_corpus(
    n_per_class: int = 10,
    seed: int = 0,
    source: str = "synthetic",
    normalized: bool = True,
    id_prefix: str = "",
) -> list[LabeledText]:
    rng = np.random.default_rng(seed)
    rows = []
    index = 0
    for label in LABEL_ORDER:
        for _ in range(n_per_class):
            text = class_text(label, rng)
            rows.append(
                LabeledText(
                    id=f"{id_prefix}{index}",
                    raw_text=text,
                    label=label,
                    source=source,
                    norm_text=text if normalized else None,
                )
            )
            index += 1
    return rows


@pytest.fixture
def separable_corpus() -> list[LabeledText]:
    return make_separable_corpus(n_per_class=10, seed=11)


@pytest.fixture
def corpus_file(tmp_path: Path, separable_corpus) -> Path:
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, separable_corpus)
    return path


@pytest.fixture
def stopword_file(tmp_path: Path) -> Path:
    path = tmp_path / "stopwords.txt"
    path.write_text("من\nفي\nعن\nعلى\nإلى\nو\n", encoding="utf-8")
    return path
