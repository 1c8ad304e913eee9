"""Exact concept matching through a pivot language.

Concepts are translated into the pivot language (English by default),
grouped by identical normalized translations, and compared against the
pivot lexicon for sentiment sign changes.
"""

from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .errors import DataError
from .model import Concept, Lexicon, SentimentSource, normalize_surface

log = logging.getLogger(__name__)

DEFAULT_PIVOT = "en"


class TranslationError(DataError):
    def __init__(self, code, message="", retryable=False, **details):
        super().__init__(code, message, **details)
        self.retryable = retryable


class DictionaryClient:
    """File-backed translation: (language, surface) -> pivot phrase. No network."""

    mode = "dictionary"

    def __init__(self, dictionary: Mapping[tuple[str, str], str]):
        self.dictionary = dict(dictionary)

    def translate(self, language: str, surface: str) -> str:
        try:
            return self.dictionary[(language, surface)]
        except KeyError:
            raise TranslationError("UNTRANSLATED", f"no entry for {language}:{surface}") from None


class RemoteClient:
    """HTTP translation client.

    Posts ``{"q", "source", "target"}`` as JSON and expects
    ``{"translation": ...}`` back. ``transport`` replaces the HTTP call,
    mainly for tests.
    """

    mode = "remote"

    def __init__(self, url: str, key: str = "", timeout: float = 10.0, target: str = DEFAULT_PIVOT,
                 transport: Optional[Callable[[dict], dict]] = None):
        self.url = url
        self.key = key
        self.timeout = timeout
        self.target = target
        self.transport = transport or self._post

    def _post(self, payload):
        req = urllib.request.Request(
            self.url, data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {self.key}"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def translate(self, language: str, surface: str) -> str:
        try:
            reply = self.transport({"q": surface, "source": language, "target": self.target})
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TranslationError("REMOTE_FAILURE", str(exc), retryable=True) from exc
        text = (reply or {}).get("translation")
        if not text:
            raise TranslationError("UNTRANSLATED", f"empty translation for {language}:{surface}")
        return text


def translate(concept: Concept, client) -> str:
    if not concept.surface.strip():
        raise DataError("EMPTY_SURFACE", "cannot translate an empty surface")
    return client.translate(concept.language, concept.surface)


@dataclass
class TranslationBatch:
    concepts: list  # translated Concepts, input order
    untranslated: list = field(default_factory=list)  # concept keys


def translate_lexicons(lexicons: Iterable[Lexicon], client, pivot_language: str = DEFAULT_PIVOT,
                       threads: int = 1) -> TranslationBatch:
    """Resolve pivot surfaces for every concept, preserving input order.

    Pivot-language concepts translate to themselves.
    """
    concepts = [c for lex in lexicons for c in lex]

    def one(c):
        if c.language == pivot_language:
            return c.with_pivot(c.surface)
        if c.pivot_surface:
            return c
        try:
            return c.with_pivot(translate(c, client))
        except TranslationError as exc:
            if exc.retryable:
                raise
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, concepts))
    else:
        results = [one(c) for c in concepts]
    batch = TranslationBatch([])
    for c, res in zip(concepts, results):
        if isinstance(res, TranslationError):
            batch.untranslated.append(c.key)
        else:
            batch.concepts.append(res)
    return batch


def exact_match_index(concepts: Iterable[Concept]) -> dict[str, list[Concept]]:
    """Group translated concepts by normalized pivot surface; singletons kept."""
    groups = defaultdict(list)
    for c in concepts:
        if c.pivot_surface is None:
            raise DataError("UNTRANSLATED", f"{c.key} has no pivot surface")
        groups[normalize_surface(c.pivot_surface)].append(c)
    return dict(groups)


# ---------------------------------------------------------------------------
# Sentiment shift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftReport:
    language: str
    threshold: float
    total_count: int
    matched_count: int
    shifted_count: int

    @property
    def shifted_pct_of_matched(self) -> Optional[float]:
        return 100.0 * self.shifted_count / self.matched_count if self.matched_count else None

    @property
    def shifted_pct_of_all(self) -> Optional[float]:
        return 100.0 * self.shifted_count / self.total_count if self.total_count else None


def _sign(x):
    return (x > 0) - (x < 0)


@dataclass(frozen=True)
class ShiftPair:
    """A matched concept with polarities on both sides."""

    key: str
    polarity: float
    pivot_polarity: float
    pivot_source: str


def matched_pairs(lexicon: Lexicon, concepts: Iterable[Concept], pivot_lexicon: Lexicon,
                  source=SentimentSource.CROWDSOURCED) -> list[ShiftPair]:
    """Concepts of ``lexicon`` whose translation is a pivot-lexicon concept
    and that have a polarity on both sides.

    The concept side uses ``source``; the pivot side prefers crowdsourced
    and falls back to automatic polarity.
    """
    pivot_by_surface = {}
    for pc in pivot_lexicon:
        pivot_by_surface.setdefault(normalize_surface(pc.surface), pc)
    out = []
    for c in concepts:
        if c.language != lexicon.language or c.pivot_surface is None:
            continue
        own = lexicon.polarity(c, source)
        pc = pivot_by_surface.get(normalize_surface(c.pivot_surface))
        if own is None or pc is None:
            continue
        other = pivot_lexicon.polarity(pc, SentimentSource.CROWDSOURCED, fallback=True)
        if other is None:
            continue
        out.append(ShiftPair(c.key, own.polarity, other.polarity, other.source.value))
    return out


def count_shifts(pairs: Sequence[ShiftPair], threshold: float) -> int:
    return sum(1 for p in pairs
               if abs(p.polarity) > threshold and abs(p.pivot_polarity) > threshold
               and _sign(p.polarity) != _sign(p.pivot_polarity))


def sentiment_shift_table(lexicons: Mapping[str, Lexicon], concepts: Iterable[Concept],
                          pivot_lexicon: Lexicon, thresholds: Sequence[float] = (0.0, 0.1, 0.2, 0.3),
                          source=SentimentSource.CROWDSOURCED) -> list[ShiftReport]:
    """Sign-shift counts per language and threshold.

    ``concepts`` are the translated concepts; the pivot language itself is
    skipped. Percentages are over matched concepts and over all concepts of
    the language.
    """
    concepts = list(concepts)
    reports = []
    for lang in sorted(lexicons):
        if lang == pivot_lexicon.language:
            continue
        lex = lexicons[lang]
        pairs = matched_pairs(lex, concepts, pivot_lexicon, source)
        for t in thresholds:
            if t < 0:
                raise DataError("BAD_THRESHOLD", f"threshold must be >= 0, got {t}")
            reports.append(ShiftReport(lang, float(t), len(lex), len(pairs), count_shifts(pairs, t)))
    return reports


# ---------------------------------------------------------------------------
# Representative words
# ---------------------------------------------------------------------------

CLOSED_CLASS = frozenset("""
a an the and or but nor of in on at to for from by with without into onto over under
about above below between through during before after as than like this that these those
is are was were be been being am do does did not no very so too it its his her their our
my your its some any all each every
""".split())

_ADJ_SUFFIXES = ("ful", "ous", "ive", "able", "ible", "less", "ish", "ical", "ic", "ant", "ent",
                 "est", "ary")
_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "cy", "ism", "ship", "hood", "ance", "ence",
                  "er", "or", "ist")
_COMMON_ADJECTIVES = frozenset("""
happy sad good bad old new young little big small great beautiful pretty ugly dark bright
cute funny lonely quiet wild sweet dry wet cold hot warm cool fresh tiny huge gorgeous lovely
angry scary crazy dirty clean empty rich poor strong weak soft hard calm free fat thin tall short
""".split())


def heuristic_pos_tags(phrase: str) -> tuple[str, ...]:
    """Crude ADJ/NOUN/OTHER tagging for pivot phrases without tags.

    Closed-class words are OTHER; the final content word is NOUN; a content
    word followed by a closed-class word is NOUN; remaining content words are
    NOUN when they carry a noun suffix and are not known adjectives, else ADJ.
    """
    tokens = phrase.split()
    tags = []
    for i, tok in enumerate(tokens):
        low = tok.lower()
        if low in CLOSED_CLASS:
            tags.append("OTHER")
        elif i == len(tokens) - 1:
            tags.append("NOUN")
        elif tokens[i + 1].lower() in CLOSED_CLASS:
            tags.append("NOUN")
        elif low in _COMMON_ADJECTIVES or low.endswith(_ADJ_SUFFIXES):
            tags.append("ADJ")
        elif low.endswith(_NOUN_SUFFIXES):
            tags.append("NOUN")
        else:
            tags.append("ADJ")
    return tuple(tags)


@dataclass(frozen=True)
class Representatives:
    adjective: Optional[str]
    noun: str
    heuristic: bool = False


def extract_representatives(pivot_phrase: str, pos_tags: Optional[Sequence[str]] = None) -> Representatives:
    """Last noun-tagged token and first adjective-tagged token of the phrase."""
    tokens = pivot_phrase.split()
    heuristic = pos_tags is None
    tags = heuristic_pos_tags(pivot_phrase) if heuristic else tuple(pos_tags)
    if len(tags) != len(tokens):
        raise DataError("POS_MISALIGNED", f"{len(tags)} tags for {len(tokens)} tokens in {pivot_phrase!r}")
    nouns = [t for t, g in zip(tokens, tags) if g == "NOUN"]
    if not nouns:
        raise DataError("NO_NOUN", f"no noun in {pivot_phrase!r}")
    adjs = [t for t, g in zip(tokens, tags) if g == "ADJ"]
    return Representatives(adjs[0] if adjs else None, nouns[-1], heuristic)


def concept_representatives(concept: Concept) -> Representatives:
    """Representatives of a translated concept; POS tags from the lexicon when present."""
    pos = concept.pos
    if pos is not None and len(pos) != len(concept.pivot_surface.split()):
        log.warning("ignoring misaligned POS tags for %s", concept.key)
        pos = None
    return extract_representatives(normalize_surface(concept.pivot_surface), pos)
