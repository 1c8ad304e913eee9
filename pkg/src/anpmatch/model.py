"""Core domain types: concepts, sentiment values, annotations and lexicons."""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

from .errors import DataError

log = logging.getLogger(__name__)

# The twelve supported lexicon languages.
LANGUAGES = {
    "en": "English",
    "es": "Spanish",
    "it": "Italian",
    "fr": "French",
    "zh": "Chinese",
    "de": "German",
    "nl": "Dutch",
    "ru": "Russian",
    "tr": "Turkish",
    "pl": "Polish",
    "fa": "Persian",
    "ar": "Arabic",
}

_registered: set[str] = set()
_LANG_RE = re.compile(r"^[a-z]{2}$")


def normalize_language(code: str) -> str:
    """Lowercase an ISO-639-1 code, registering unknown ones with a warning."""
    lang = (code or "").strip().lower()
    if not _LANG_RE.match(lang):
        raise DataError("INVALID_LANGUAGE", f"not an ISO-639-1 code: {code!r}")
    if lang not in LANGUAGES and lang not in _registered:
        log.warning("registering unknown language code %r", lang)
        _registered.add(lang)
    return lang


def known_languages() -> set[str]:
    return set(LANGUAGES) | _registered


def normalize_surface(text: str) -> str:
    """NFC, lowercase, collapse whitespace. No stemming."""
    return " ".join(unicodedata.normalize("NFC", text).lower().split())


class SentimentSource(str, Enum):
    CROWDSOURCED = "crowdsourced"
    AUTOMATIC = "automatic"


@dataclass(frozen=True)
class SentimentValue:
    polarity: float
    source: SentimentSource = SentimentSource.CROWDSOURCED

    def __post_init__(self):
        object.__setattr__(self, "source", SentimentSource(self.source))
        if not abs(self.polarity) <= 1.0:
            raise DataError("POLARITY_RANGE", f"|polarity| > 1: {self.polarity}")


@dataclass(frozen=True)
class Concept:
    """One language-tagged adjective-noun pair.

    ``adjective`` and ``nouns`` hold the original-language tokens; the
    adjective slot may be empty. ``pos`` optionally carries tags
    (ADJ/NOUN/OTHER) aligned with the tokens of ``pivot_surface``.
    """

    language: str
    adjective: str
    nouns: tuple[str, ...]
    surface: str
    pivot_surface: Optional[str] = None
    pos: Optional[tuple[str, ...]] = None

    @property
    def key(self) -> str:
        return concept_key(self.language, self.surface)

    def with_pivot(self, pivot_surface: str) -> "Concept":
        return Concept(self.language, self.adjective, self.nouns, self.surface,
                       pivot_surface, self.pos)


def concept_key(language: str, surface: str) -> str:
    return f"{language}:{surface}"


@dataclass(frozen=True)
class AnnotationRecord:
    language: str
    surface: str
    worker_id: str
    rating: int

    def __post_init__(self):
        if self.rating not in (1, 2, 3, 4, 5):
            raise DataError("RATING_RANGE", f"rating {self.rating} not in 1..5")

    @property
    def concept_key(self) -> str:
        return concept_key(self.language, self.surface)


@dataclass(frozen=True)
class Lexicon:
    language: str
    concepts: tuple[Concept, ...]
    sentiments: Mapping[str, Mapping[SentimentSource, SentimentValue]] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for c in self.concepts:
            if c.surface in seen:
                raise DataError("DUPLICATE", f"duplicate surface {c.surface!r} in {self.language}")
            seen.add(c.surface)

    def __len__(self):
        return len(self.concepts)

    def __iter__(self):
        return iter(self.concepts)

    def polarity(self, concept: Concept, source=SentimentSource.CROWDSOURCED,
                 fallback: bool = False) -> Optional[SentimentValue]:
        """Return the sentiment for ``concept`` from ``source``.

        With ``fallback`` the other source is used when ``source`` is missing.
        """
        values = self.sentiments.get(concept.key, {})
        source = SentimentSource(source)
        if source in values:
            return values[source]
        if fallback:
            for other in SentimentSource:
                if other in values:
                    return values[other]
        return None

    def with_sentiments(self, extra: Mapping[str, Mapping[SentimentSource, SentimentValue]],
                        overwrite: bool = False) -> "Lexicon":
        merged = {k: dict(v) for k, v in self.sentiments.items()}
        for key, values in extra.items():
            slot = merged.setdefault(key, {})
            for src, val in values.items():
                if overwrite or src not in slot:
                    slot[src] = val
        return Lexicon(self.language, self.concepts, merged)

    def with_concepts(self, concepts: Iterable[Concept]) -> "Lexicon":
        return Lexicon(self.language, tuple(concepts), self.sentiments)


def map_rating_to_polarity(mean_rating: float) -> float:
    """Map a mean 1-5 rating onto [-1, 1] with 3 as neutral."""
    if not 1.0 <= mean_rating <= 5.0:
        raise DataError("RATING_RANGE", f"mean rating {mean_rating} outside [1, 5]")
    return (mean_rating - 3.0) / 2.0


def polarity_to_rating(polarity: float) -> float:
    return 3.0 + 2.0 * polarity


def validate_concept(record, seen: Optional[set] = None) -> Concept:
    """Validate a raw lexicon row (mapping) or an existing Concept.

    ``seen`` holds concept keys already admitted; a repeat raises DUPLICATE
    and a successful validation adds the key. An already-valid Concept not
    present in ``seen`` comes back unchanged.
    """
    if isinstance(record, Concept):
        concept = record
        if not concept.nouns or not all(concept.nouns):
            raise DataError("NO_NOUN", f"concept {concept.surface!r} has no noun tokens")
        if normalize_language(concept.language) != concept.language:
            raise DataError("INVALID_LANGUAGE", f"non-normalized code {concept.language!r}")
        if not concept.surface.strip():
            raise DataError("EMPTY_SURFACE", "empty surface form")
    else:
        language = normalize_language(record.get("language", ""))
        surface = (record.get("surface") or "").strip()
        if not surface:
            raise DataError("EMPTY_SURFACE", "empty surface form")
        nouns = record.get("nouns") or ()
        if isinstance(nouns, str):
            nouns = nouns.split()
        nouns = tuple(n for n in nouns if n)
        if not nouns:
            raise DataError("NO_NOUN", f"concept {surface!r} has no noun tokens")
        pivot = record.get("pivot_surface") or None
        pos = record.get("pos") or None
        if isinstance(pos, str):
            pos = tuple(pos.split())
        concept = Concept(language, (record.get("adjective") or "").strip(), nouns,
                          surface, pivot, tuple(pos) if pos else None)
    if concept.pos is not None:
        bad = set(concept.pos) - {"ADJ", "NOUN", "OTHER"}
        if bad:
            raise DataError("BAD_POS", f"unknown POS tags {sorted(bad)}")
    if seen is not None:
        if concept.key in seen:
            raise DataError("DUPLICATE", f"duplicate surface {concept.surface!r} in {concept.language}")
        seen.add(concept.key)
    return concept
