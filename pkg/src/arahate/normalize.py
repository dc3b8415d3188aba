"""Deterministic cleaning and letter normalization for Arabic social-media text.

The rules run in a fixed, documented order so equal inputs always give
byte-equal outputs:

1. tweet features: user mentions (@token), URLs, the standalone token RT,
   '#' markers (hashtag bodies survive), punctuation, emoji and other
   pictographic symbols, and digits;
2. diacritics (the harakat combining marks including shadda and sukun, plus
   every other combining mark) and the tatweel elongation character;
3. runs of one repeated character longer than ``repeat_collapse_len`` are
   collapsed down to ``repeat_collapse_len``;
4. letter unification: hamza/madda alef variants to bare alef, ta-marbuta to
   ha, alef-maqsura to ya (followed by a second collapse pass, since
   unification can fuse previously distinct characters into one run);
5. non-Arabic letters are dropped when ``strip_non_arabic`` is set;
6. stopwords are dropped by exact token match (the stopword file is passed
   through the same character pipeline at load time so surface variants of a
   stopword still match);
7. whitespace, including newlines, collapses to single spaces and is trimmed.

normalize_text is total: any UTF-8 input yields a (possibly empty) string,
and normalizing twice equals normalizing once.
"""

from __future__ import annotations

import hashlib
import logging
import re
import unicodedata
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

from .corpus import LabeledText
from .errors import ArahateError

log = logging.getLogger(__name__)

TATWEEL = "ـ"
# The eight Arabic harakat combining marks: fathatan, dammatan, kasratan,
# fatha, damma, kasra, shadda, sukun. Step 2 removes these along with every
# other Unicode combining mark (superscript alef, Quranic annotation marks...).
HARAKAT = frozenset(chr(cp) for cp in range(0x064B, 0x0653))

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\S+")
_RT_RE = re.compile(r"(?<!\S)RT(?!\S)")

_LETTER_MAP = str.maketrans(
    {
        "أ": "ا",  # alef with hamza above
        "إ": "ا",  # alef with hamza below
        "آ": "ا",  # alef with madda
        "ة": "ه",  # ta marbuta -> ha
        "ى": "ي",  # alef maqsura -> ya
    }
)


class NormalizeError(ArahateError):
    pass


@dataclass(frozen=True)
class NormalizationConfig:
    """Normalization knobs plus the pinned stopword list.

    The stopword list is always an external file, never hardcoded; its SHA-256
    is kept so run manifests can pin the exact list used.
    """

    stopwords: frozenset[str] = frozenset()
    repeat_collapse_len: int = 2
    strip_non_arabic: bool = True
    stopword_path: str | None = None
    stopword_sha256: str | None = None

    def __post_init__(self) -> None:
        if self.repeat_collapse_len < 1:
            raise NormalizeError("repeat_collapse_len must be >= 1")

    @classmethod
    def load(
        cls,
        stopword_path: str | Path | None = None,
        repeat_collapse_len: int = 2,
        strip_non_arabic: bool = True,
    ) -> "NormalizationConfig":
        """Build a config, loading and normalizing the stopword file if given."""
        base = cls(
            repeat_collapse_len=repeat_collapse_len,
            strip_non_arabic=strip_non_arabic,
        )
        if stopword_path is None:
            return base
        path = Path(stopword_path)
        if not path.exists():
            raise NormalizeError(f"stopword file not found: {path}")
        raw = path.read_bytes()
        words: set[str] = set()
        for line in raw.decode("utf-8").splitlines():
            # Same character pipeline as the texts so stopwords written with
            # alef variants or diacritics still match after unification.
            words.update(_normalize_chars(line, base).split())
        return cls(
            stopwords=frozenset(words),
            repeat_collapse_len=repeat_collapse_len,
            strip_non_arabic=strip_non_arabic,
            stopword_path=str(path),
            stopword_sha256=hashlib.sha256(raw).hexdigest(),
        )


def _strip_features(text: str) -> str:
    """Step 1: mentions, URLs, RT, '#', punctuation, symbols/emoji, digits."""
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = _RT_RE.sub(" ", text)
    out = []
    for ch in text:
        if ch.isspace():
            out.append(" ")
            continue
        major = unicodedata.category(ch)[0]
        if major in "PSN":  # punctuation (incl. '#'), symbols/emoji, digits
            out.append(" ")
        elif major == "C":  # controls and format chars (ZWJ, variation selectors)
            continue
        else:
            out.append(ch)
    return "".join(out)


def _strip_marks(text: str) -> str:
    """Step 2: combining marks (harakat, shadda, sukun, ...) and tatweel."""
    return "".join(
        ch
        for ch in text
        if ch != TATWEEL and unicodedata.category(ch) not in ("Mn", "Mc", "Me")
    )


@lru_cache(maxsize=8)
def _repeat_re(limit: int) -> re.Pattern[str]:
    return re.compile(r"(.)\1{%d,}" % limit)


def _collapse_repeats(text: str, limit: int) -> str:
    return _repeat_re(limit).sub(r"\1" * limit, text)


def _is_arabic_letter(ch: str) -> bool:
    return "؀" <= ch <= "ۿ" and unicodedata.category(ch).startswith("L")


def _normalize_chars(text: str, cfg: NormalizationConfig) -> str:
    """Steps 1-5 (character level); tokenization and stopwords happen on top."""
    text = unicodedata.normalize("NFC", text)
    text = _strip_features(text)
    text = _strip_marks(text)
    text = _collapse_repeats(text, cfg.repeat_collapse_len)
    text = text.translate(_LETTER_MAP)
    # Unification can merge formerly distinct characters into one run.
    text = _collapse_repeats(text, cfg.repeat_collapse_len)
    if cfg.strip_non_arabic:
        text = "".join(
            ch if ch == " " or _is_arabic_letter(ch) else " " for ch in text
        )
    return text


def normalize_text(raw: str, cfg: NormalizationConfig | None = None) -> str:
    """Apply the full ordered rule set to one text. Total; result may be empty."""
    if cfg is None:
        cfg = NormalizationConfig()
    tokens = _normalize_chars(raw, cfg).split()
    # Character stripping can expose new standalone RT tokens ("1RT" -> "RT");
    # filtering here keeps the rule-1 guarantee and preserves idempotence.
    tokens = [t for t in tokens if t != "RT" and t not in cfg.stopwords]
    return " ".join(tokens)


def normalize_corpus(
    corpus: list[LabeledText], cfg: NormalizationConfig | None = None
) -> list[LabeledText]:
    """Fill norm_text for every row; rows normalized to "" are kept but flagged.

    Downstream stages treat an empty norm_text as "exclude from training".
    """
    if cfg is None:
        cfg = NormalizationConfig()
    out = []
    empty = 0
    for row in corpus:
        norm = normalize_text(row.raw_text, cfg)
        if not norm:
            empty += 1
        out.append(replace(row, norm_text=norm))
    if empty:
        log.info(
            "%d/%d rows normalized to empty text; flagged for downstream exclusion",
            empty,
            len(out),
        )
    return out


def load_golden_cases(path: str | Path) -> list[tuple[str, str]]:
    """Read a golden-test corpus: TSV lines of raw text -> expected output."""
    cases = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise NormalizeError(f"{path} line {line_no}: expected exactly one tab")
        cases.append((parts[0], parts[1]))
    return cases
