"""Dataset ingestion, label mapping onto the five-class taxonomy, merging and statistics.

The canonical on-disk corpus format is JSON-lines (UTF-8, one object per line)
with fields ``id``, ``text``, ``label`` and ``source``; ``norm_text`` and
``origin`` are carried along once a corpus has been normalized or augmented.
CSV/TSV sources are adapted into the same row type at load time via a
DatasetDescriptor that declares how external label strings map onto the
taxonomy (or that they are discarded).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ArahateError
from .labels import LABEL_ORDER, Label, parse_label

log = logging.getLogger(__name__)

DISCARD = "discard"
ORIGINS = ("gold", "direct_merge", "pseudo")

# Canonical label strings map onto themselves when a descriptor omits label_map.
IDENTITY_LABEL_MAP: dict[str, str] = {label.value: label.value for label in LABEL_ORDER}


class CorpusError(ArahateError):
    """Malformed dataset file, descriptor or merge input."""


@dataclass
class LabeledText:
    """One short text with its label and provenance.

    ``norm_text`` is None until the corpus has been normalized; an empty
    string marks a row whose content was normalized away entirely (such rows
    are retained but excluded from training downstream).
    """

    id: str
    raw_text: str
    label: Label
    source: str
    norm_text: str | None = None
    origin: str = "gold"

    def __post_init__(self) -> None:
        if not self.raw_text:
            raise CorpusError(f"row {self.id!r}: raw_text must be non-empty")
        if self.origin not in ORIGINS:
            raise CorpusError(f"row {self.id!r}: unknown origin {self.origin!r}")
        if self.origin == "pseudo" and self.label == Label.NH:
            raise CorpusError(f"row {self.id!r}: pseudo-labelled rows may not carry NH")


@dataclass
class DatasetDescriptor:
    """Where a dataset lives and how its label scheme maps onto the taxonomy.

    Every label string occurring in the file must either map to a canonical
    label or to the literal ``discard``; anything unmapped is a load error.
    """

    key: str
    path: str
    format: str = "jsonl"  # jsonl | csv | tsv
    label_map: dict[str, str] = field(default_factory=lambda: dict(IDENTITY_LABEL_MAP))
    hate_only: bool = False

    def __post_init__(self) -> None:
        if self.format not in ("jsonl", "csv", "tsv"):
            raise CorpusError(f"dataset {self.key!r}: unsupported format {self.format!r}")
        for external, target in self.label_map.items():
            if target == DISCARD:
                continue
            try:
                parse_label(target)
            except ValueError as exc:
                raise CorpusError(f"dataset {self.key!r}: label_map[{external!r}]: {exc}") from None

    def map_label(self, external: str, line_no: int) -> Label | None:
        """Resolve an external label string; None means the row is discarded."""
        if external not in self.label_map:
            raise CorpusError(
                f"dataset {self.key!r} line {line_no}: unmapped label string {external!r}"
            )
        target = self.label_map[external]
        return None if target == DISCARD else parse_label(target)


@dataclass(frozen=True)
class CorpusStats:
    """Whitespace-token statistics over raw text, per the dataset overview table."""

    per_class_count: dict[Label, int]
    word_count: int
    unique_words: int
    avg_words_per_text: float

    @property
    def size(self) -> int:
        return sum(self.per_class_count.values())


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path} line {line_no}: invalid JSON ({exc})") from None
            if not isinstance(record, dict):
                raise CorpusError(f"{path} line {line_no}: expected a JSON object")
            yield line_no, record


def _iter_delimited(path: Path, delimiter: str):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if reader.fieldnames is None:
            return
        missing = {"id", "text", "label"} - set(reader.fieldnames)
        if missing:
            raise CorpusError(f"{path}: missing required columns {sorted(missing)}")
        for record in reader:
            # DictReader consumes the header as line 1.
            yield reader.line_num, record


def load_dataset(descriptor: DatasetDescriptor) -> list[LabeledText]:
    """Load one dataset file, mapping labels and dropping declared discards.

    Raises CorpusError (with a line number where possible) for unparseable
    rows, unmapped label strings, empty texts and duplicate ids.
    """
    path = Path(descriptor.path)
    if not path.exists():
        raise CorpusError(f"dataset {descriptor.key!r}: file not found: {path}")
    if descriptor.format == "jsonl":
        records = _iter_jsonl(path)
    else:
        records = _iter_delimited(path, "\t" if descriptor.format == "tsv" else ",")

    rows: list[LabeledText] = []
    seen_ids: set[str] = set()
    discarded = 0
    dropped_non_hate = 0
    for line_no, record in records:
        for key in ("id", "text", "label"):
            if record.get(key) in (None, ""):
                raise CorpusError(f"{path} line {line_no}: missing or empty field {key!r}")
        label = descriptor.map_label(str(record["label"]), line_no)
        if label is None:
            discarded += 1
            continue
        if descriptor.hate_only and label == Label.NH:
            dropped_non_hate += 1
            continue
        row_id = str(record["id"])
        if row_id in seen_ids:
            raise CorpusError(f"{path} line {line_no}: duplicate id {row_id!r}")
        seen_ids.add(row_id)
        try:
            rows.append(
                LabeledText(
                    id=row_id,
                    raw_text=str(record["text"]),
                    label=label,
                    source=str(record.get("source") or descriptor.key),
                    norm_text=record.get("norm_text"),
                    origin=str(record.get("origin") or "gold"),
                )
            )
        except CorpusError as exc:
            raise CorpusError(f"{path} line {line_no}: {exc}") from None
    if discarded or dropped_non_hate:
        log.info(
            "dataset %s: kept %d rows, discarded %d by label_map, dropped %d non-hate (hate_only)",
            descriptor.key, len(rows), discarded, dropped_non_hate,
        )
    return rows


def compute_stats(corpus: list[LabeledText]) -> CorpusStats:
    """Per-class counts plus whitespace-token word statistics over raw text.

    Word counting is whitespace tokenization of the raw (un-normalized) text;
    unique words are case- and diacritic-sensitive.
    """
    if not corpus:
        raise CorpusError("cannot compute statistics of an empty corpus")
    per_class = {label: 0 for label in LABEL_ORDER}
    word_count = 0
    vocabulary: set[str] = set()
    for row in corpus:
        tokens = row.raw_text.split()
        if not tokens:
            raise CorpusError(f"row {row.id!r}: text is empty after trimming")
        per_class[row.label] += 1
        word_count += len(tokens)
        vocabulary.update(tokens)
    return CorpusStats(
        per_class_count=per_class,
        word_count=word_count,
        unique_words=len(vocabulary),
        avg_words_per_text=word_count / len(corpus),
    )


def _qualify_id(row: LabeledText) -> str:
    # Re-qualification is idempotent so merged corpora can be merged again.
    prefix = f"{row.source}:"
    return row.id if row.id.startswith(prefix) else prefix + row.id


def merge(corpora: list[list[LabeledText]], dedup: bool) -> list[LabeledText]:
    """Concatenate corpora, optionally deduplicating on exact normalized text.

    With ``dedup`` the first occurrence (in source order) of each norm_text
    wins; every row must have been normalized first. Ids are re-qualified as
    ``source:id`` and a collision after qualification is an error.
    """
    rows = [row for corpus in corpora for row in corpus]
    if dedup:
        for row in rows:
            if row.norm_text is None:
                raise CorpusError(
                    f"row {row.id!r}: deduplication requires normalized text; run normalize first"
                )
        seen_texts: set[str] = set()
        unique = []
        for row in rows:
            if row.norm_text in seen_texts:
                continue
            seen_texts.add(row.norm_text)
            unique.append(row)
        rows = unique
    out: list[LabeledText] = []
    seen_ids: set[str] = set()
    for row in rows:
        qualified = _qualify_id(row)
        if qualified in seen_ids:
            raise CorpusError(f"id collision after qualification: {qualified!r}")
        seen_ids.add(qualified)
        out.append(replace(row, id=qualified))
    return out


def read_jsonl(path: str | Path, key: str | None = None) -> list[LabeledText]:
    """Read a canonical JSONL corpus (labels must already be canonical)."""
    path = Path(path)
    descriptor = DatasetDescriptor(key=key or path.stem, path=str(path), format="jsonl")
    return load_dataset(descriptor)


def write_jsonl(path: str | Path, rows: list[LabeledText]) -> None:
    """Write a corpus in the canonical JSONL format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            record: dict[str, str] = {
                "id": row.id,
                "text": row.raw_text,
                "label": row.label.value,
                "source": row.source,
            }
            if row.norm_text is not None:
                record["norm_text"] = row.norm_text
            if row.origin != "gold":
                record["origin"] = row.origin
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_registry(path: str | Path) -> list[DatasetDescriptor]:
    """Load a declarative dataset registry (YAML or JSON).

    The file holds a list of descriptor entries, either top-level or under a
    ``datasets`` key; relative dataset paths are resolved against the registry
    file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"registry file not found: {path}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    entries = data.get("datasets") if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise CorpusError(f"{path}: expected a list of dataset entries")
    descriptors = []
    seen_keys: set[str] = set()
    for entry in entries:
        if not isinstance(entry, dict) or "key" not in entry or "path" not in entry:
            raise CorpusError(f"{path}: every registry entry needs at least 'key' and 'path'")
        if entry["key"] in seen_keys:
            raise CorpusError(f"{path}: duplicate dataset key {entry['key']!r}")
        seen_keys.add(entry["key"])
        dataset_path = Path(entry["path"])
        if not dataset_path.is_absolute():
            dataset_path = path.parent / dataset_path
        descriptors.append(
            DatasetDescriptor(
                key=str(entry["key"]),
                path=str(dataset_path),
                format=str(entry.get("format", "jsonl")),
                label_map=dict(entry.get("label_map") or IDENTITY_LABEL_MAP),
                hate_only=bool(entry.get("hate_only", False)),
            )
        )
    return descriptors
