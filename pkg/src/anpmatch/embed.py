"""Concept vectors in the pivot embedding space and ANP-as-token corpus rewriting."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .errors import DataError
from .ingest import EmbeddingTable, Tokenization
from .model import Concept, normalize_surface

JOIN = "_"

# Closed-class pivot words dropped from sums.
STOPWORDS = frozenset("a an the and or of in on at to for with by from".split())


class ComposeMode(str, Enum):
    SUM = "sum"
    LEARNED_WITH_FALLBACK = "learned_with_fallback"


class Provenance(str, Enum):
    COMPOSED_SUM = "composed_sum"
    LEARNED_ANP = "learned_anp"
    FALLBACK_SUM = "fallback_sum"


@dataclass(frozen=True)
class ConceptVector:
    key: str
    vector: np.ndarray
    provenance: Provenance
    dropped_stopwords: tuple[str, ...] = ()
    oov_tokens: tuple[str, ...] = ()


def pivot_tokens(concept: Concept) -> list[str]:
    if not concept.pivot_surface:
        raise DataError("UNTRANSLATED", f"{concept.key} has no pivot surface")
    return normalize_surface(concept.pivot_surface).split()


def _sum(tokens, table):
    kept = [t for t in tokens if t not in STOPWORDS]
    dropped = tuple(t for t in tokens if t in STOPWORDS)
    # Sorting makes the float sum independent of token order.
    present = sorted(t for t in kept if t in table)
    oov = tuple(t for t in kept if t not in table)
    if not present:
        return None, dropped, oov
    vec = np.zeros(table.dimension)
    for t in present:
        vec = vec + table[t]
    return vec, dropped, oov


def compose(concept: Concept, table: EmbeddingTable, mode=ComposeMode.SUM) -> ConceptVector:
    """Concept vector from pivot word vectors.

    Sum mode adds the vectors of every in-vocabulary, non-stopword pivot
    token. Learned mode looks up the joined ANP token first (only on tables
    trained with ANP tokens) and otherwise falls back to the sum.
    """
    mode = ComposeMode(mode)
    tokens = pivot_tokens(concept)
    if mode is ComposeMode.LEARNED_WITH_FALLBACK:
        if table.tokenization is Tokenization.WORDS_PLUS_ANP:
            joined = JOIN.join(tokens)
            if len(tokens) > 1 and joined in table:
                return ConceptVector(concept.key, np.array(table[joined]), Provenance.LEARNED_ANP)
        provenance = Provenance.FALLBACK_SUM
    else:
        provenance = Provenance.COMPOSED_SUM
    vec, dropped, oov = _sum(tokens, table)
    if vec is None:
        raise DataError("OOV_CONCEPT", f"no pivot token of {concept.key} is in the vocabulary",
                        key=concept.key)
    return ConceptVector(concept.key, vec, provenance, dropped, oov)


def compose_all(concepts: Iterable[Concept], table: EmbeddingTable, mode=ComposeMode.SUM):
    """Compose every concept; returns (vectors by key, list of OOV keys)."""
    vectors, oov = {}, []
    for c in concepts:
        try:
            vectors[c.key] = compose(c, table, mode)
        except DataError as exc:
            if exc.code != "OOV_CONCEPT":
                raise
            oov.append(c.key)
    return vectors, oov


def coverage_report(concepts: Iterable[Concept], table: Optional[EmbeddingTable], mode=ComposeMode.SUM) -> dict:
    """Per-language counts of composed / learned / fallback / oov concepts."""
    counts = {}
    for c in concepts:
        row = counts.setdefault(c.language, {"composed": 0, "learned": 0, "fallback": 0, "oov": 0})
        if table is None:
            row["oov"] += 1
            continue
        try:
            cv = compose(c, table, mode)
        except DataError as exc:
            if exc.code != "OOV_CONCEPT":
                raise
            row["oov"] += 1
            continue
        row[{Provenance.COMPOSED_SUM: "composed", Provenance.LEARNED_ANP: "learned",
             Provenance.FALLBACK_SUM: "fallback"}[cv.provenance]] += 1
    out = {}
    for lang in sorted(counts):
        row = counts[lang]
        total = sum(row.values())
        out[lang] = dict(row, total=total,
                         pct={k: 100.0 * v / total for k, v in row.items()})
    return out


# ---------------------------------------------------------------------------
# Corpus preprocessing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\S+")


@dataclass
class TokenizeStats:
    matches: Counter = field(default_factory=Counter)
    collisions: Counter = field(default_factory=Counter)
    skipped_anps: list = field(default_factory=list)


class AnpMatcher:
    """Leftmost-longest, non-overlapping, case-folded phrase matcher over
    whitespace tokens."""

    def __init__(self, anp_surfaces: Iterable[str]):
        self.phrases = {}
        self.skipped = []
        for surface in anp_surfaces:
            toks = tuple(t.casefold() for t in surface.split())
            if len(toks) < 2:
                continue  # nothing to join
            if any(JOIN in t for t in toks):
                self.skipped.append(surface)
                continue
            self.phrases[toks] = JOIN.join(toks)
        self.max_len = max((len(p) for p in self.phrases), default=0)
        self.prefixes = {p[:n] for p in self.phrases for n in range(1, len(p) + 1)}

    def spans(self, line: str):
        """Yield (start, end, replacement) character spans, left to right."""
        if not self.phrases:
            return
        toks = [(m.start(), m.end(), m.group().casefold()) for m in _TOKEN.finditer(line)]
        i = 0
        while i < len(toks):
            best = None
            for n in range(1, min(self.max_len, len(toks) - i) + 1):
                key = tuple(t[2] for t in toks[i:i + n])
                if key not in self.prefixes:
                    break
                if key in self.phrases:
                    best = n
            if best is None:
                i += 1
                continue
            key = tuple(t[2] for t in toks[i:i + best])
            yield toks[i][0], toks[i + best - 1][1], self.phrases[key]
            i += best

    def rewrite(self, line: str, stats: Optional[TokenizeStats] = None) -> str:
        out, last = [], 0
        for start, end, repl in self.spans(line):
            out.append(line[last:start])
            out.append(repl)
            last = end
            if stats is not None:
                stats.matches[repl] += 1
        out.append(line[last:])
        return "".join(out)


def anp_tokenize_corpus(lines: Iterable[str], anp_surfaces: Iterable[str]):
    """Rewrite each line with ANP phrases joined into single tokens.

    Returns the rewritten lines and a :class:`TokenizeStats` with per-ANP
    match counts, corpus tokens that already look like joined ANPs, and ANPs
    skipped because they contain the join character.
    """
    matcher = AnpMatcher(anp_surfaces)
    stats = TokenizeStats(skipped_anps=list(matcher.skipped))
    joined = set(matcher.phrases.values())
    out = []
    for line in lines:
        for m in _TOKEN.finditer(line):
            if m.group().casefold() in joined:
                stats.collisions[m.group().casefold()] += 1
        out.append(matcher.rewrite(line, stats))
    return out, stats
