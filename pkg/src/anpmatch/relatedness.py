"""Visually grounded relatedness: ANP co-occurrence ground truth and the
mean squared error of embedding distances against it."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DataError
from .ingest import ImageTagRecord
from .model import normalize_surface

log = logging.getLogger(__name__)


class CoOccurrenceMatrix:
    """Symmetric ANP x ANP co-occurrence counts with zero diagonal.

    Stored sparsely as adjacency dicts; ``row(i)`` gives the dense h_i.
    """

    def __init__(self, index: Sequence[str], pairs: Optional[Mapping[tuple[int, int], int]] = None):
        self.index = list(index)
        self.position = {s: i for i, s in enumerate(self.index)}
        if len(self.position) != len(self.index):
            raise DataError("DUPLICATE", "duplicate concept in co-occurrence index")
        self.adj = [dict() for _ in self.index]
        for (i, j), n in (pairs or {}).items():
            self._set(i, j, n)
        self._norms = None

    def _set(self, i, j, n):
        if i == j:
            raise DataError("DIAGONAL", f"self co-occurrence for {self.index[i]!r}")
        if n < 0 or int(n) != n:
            raise DataError("BAD_COUNT", f"count {n} at ({i}, {j})")
        if n:
            self.adj[i][j] = int(n)
            self.adj[j][i] = int(n)
        else:
            self.adj[i].pop(j, None)
            self.adj[j].pop(i, None)

    def __len__(self):
        return len(self.index)

    def count(self, i, j) -> int:
        return self.adj[i].get(j, 0)

    def add(self, i, j, n=1):
        self._set(i, j, self.count(i, j) + n)
        self._norms = None

    def nonzero_pairs(self):
        """Upper-triangular (i, j, count) with count > 0, sorted."""
        for i in range(len(self.index)):
            for j in sorted(self.adj[i]):
                if j > i:
                    yield i, j, self.adj[i][j]

    def row(self, i) -> np.ndarray:
        h = np.zeros(len(self.index))
        for j, n in self.adj[i].items():
            h[j] = n
        return h

    def dense(self) -> np.ndarray:
        return np.array([self.row(i) for i in range(len(self.index))])

    def _norm2(self, i):
        if self._norms is None:
            self._norms = [sum(n * n for n in a.values()) for a in self.adj]
        return self._norms[i]

    def distance(self, i, j) -> float:
        """Cosine distance between rows i and j (exact integer dot products)."""
        ni, nj = self._norm2(i), self._norm2(j)
        if ni == 0 or nj == 0:
            raise DataError("ZERO_ROW", f"zero co-occurrence row for pair ({i}, {j})")
        a, b = (self.adj[i], self.adj[j]) if len(self.adj[i]) <= len(self.adj[j]) else (self.adj[j], self.adj[i])
        dot = sum(n * b.get(k, 0) for k, n in a.items())
        cos = dot / math.sqrt(ni * nj)
        return min(1.0, max(0.0, 1.0 - cos))

    def zero_offdiagonal_count(self) -> int:
        n = len(self.index)
        nonzero = sum(len(a) for a in self.adj)
        return n * n - n - nonzero

    def __eq__(self, other):
        if not isinstance(other, CoOccurrenceMatrix):
            return NotImplemented
        return self.index == other.index and self.adj == other.adj


@dataclass
class CoocBuildStats:
    images: int = 0
    unknown_tags: Counter = field(default_factory=Counter)
    capped_tags: int = 0


def build_cooccurrence(tags: Iterable[ImageTagRecord], index: Sequence[str], sample_cap: Optional[int] = 1000):
    """Count unordered ANP pairs tagged on the same image.

    At most ``sample_cap`` images (in input order) are used per concept; a
    tag beyond its cap is dropped from that image before pair counting.
    Returns the matrix and a :class:`CoocBuildStats`.
    """
    cooc = CoOccurrenceMatrix([normalize_surface(s) for s in index])
    stats = CoocBuildStats()
    seen = Counter()
    for rec in tags:
        stats.images += 1
        ids = []
        for tag in rec.anp_tags:
            pos = cooc.position.get(normalize_surface(tag))
            if pos is None:
                stats.unknown_tags[tag] += 1
                continue
            if pos in ids:
                continue
            if sample_cap is not None and seen[pos] >= sample_cap:
                stats.capped_tags += 1
                continue
            seen[pos] += 1
            ids.append(pos)
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                cooc.add(ids[a], ids[b])
    return cooc, stats


def visual_semantic_distance(h_i, h_j) -> float:
    """1 - cosine of two non-negative co-occurrence rows, in [0, 1]."""
    h_i = np.asarray(h_i, dtype=np.float64)
    h_j = np.asarray(h_j, dtype=np.float64)
    if np.any(h_i < 0) or np.any(h_j < 0):
        raise DataError("BAD_COUNT", "co-occurrence rows must be non-negative")
    ni, nj = float(np.dot(h_i, h_i)), float(np.dot(h_j, h_j))
    if ni == 0.0 or nj == 0.0:
        raise DataError("ZERO_ROW", "zero co-occurrence row")
    cos = float(np.dot(h_i, h_j)) / (math.sqrt(ni) * math.sqrt(nj))
    return min(1.0, max(0.0, 1.0 - cos))


def embedding_distance(c_i, c_j) -> float:
    """1 - cosine of two embedding vectors, in [0, 2]."""
    c_i = np.asarray(getattr(c_i, "vector", c_i), dtype=np.float64)
    c_j = np.asarray(getattr(c_j, "vector", c_j), dtype=np.float64)
    ni, nj = float(np.dot(c_i, c_i)), float(np.dot(c_j, c_j))
    if ni == 0.0 or nj == 0.0:
        raise DataError("ZERO_VECTOR", "zero embedding vector")
    cos = float(np.dot(c_i, c_j)) / (math.sqrt(ni) * math.sqrt(nj))
    return min(2.0, max(0.0, 1.0 - cos))


@dataclass
class RelatednessResult:
    mse: float
    pairs: int
    closed_form_pairs: float
    missing_vector_pairs: int
    per_language: dict = field(default_factory=dict)

    @property
    def mse_pct(self) -> float:
        return 100.0 * self.mse

    @property
    def pair_count_mismatch(self) -> bool:
        return self.closed_form_pairs != self.pairs

    def to_dict(self):
        return {
            "mse": self.mse,
            "mse_pct": self.mse_pct,
            "pairs": self.pairs,
            "closed_form_pairs": self.closed_form_pairs,
            "pair_count_mismatch": self.pair_count_mismatch,
            "missing_vector_pairs": self.missing_vector_pairs,
            "per_language": self.per_language,
        }


def relatedness_mse(vectors: Mapping[str, np.ndarray], cooc: CoOccurrenceMatrix,
                    members: Optional[set] = None, assignment: str = "both") -> RelatednessResult:
    """Mean squared difference between embedding and co-occurrence distances.

    ``vectors`` maps pivot surfaces (as in the co-occurrence index) to
    vectors. Pairs i < j with a non-zero count and both vectors present are
    compared. With ``members`` set, pairs are restricted to those whose two
    endpoints (``assignment="both"``) or at least one endpoint
    (``assignment="any"``) are in ``members``.
    """
    if assignment not in ("both", "any"):
        raise DataError("BAD_SCOPE", f"unknown pair assignment {assignment!r}")
    vec_at = {}
    for s, v in vectors.items():
        pos = cooc.position.get(normalize_surface(s))
        if pos is not None:
            vec_at[pos] = np.asarray(getattr(v, "vector", v), dtype=np.float64)
    inside = None
    if members is not None:
        inside = {cooc.position[normalize_surface(s)] for s in members
                  if normalize_surface(s) in cooc.position}
    terms = []
    missing = 0
    for i, j, _ in cooc.nonzero_pairs():
        if inside is not None:
            hit = (i in inside) + (j in inside)
            if hit == 0 or (assignment == "both" and hit < 2):
                continue
        if i not in vec_at or j not in vec_at:
            missing += 1
            continue
        diff = embedding_distance(vec_at[i], vec_at[j]) - cooc.distance(i, j)
        terms.append(diff * diff)
    if not terms:
        raise DataError("NO_PAIRS", "no co-occurring pair with embeddings on both ends")
    n = len(cooc)
    closed = (n * n - n - cooc.zero_offdiagonal_count()) / 2
    return RelatednessResult(math.fsum(terms) / len(terms), len(terms), closed, missing)


def relatedness_by_language(vectors: Mapping[str, np.ndarray], cooc: CoOccurrenceMatrix,
                            language_members: Mapping[str, set], assignment: str = "both") -> RelatednessResult:
    """Overall result with a per-language breakdown; languages without pairs get None."""
    result = relatedness_mse(vectors, cooc)
    for lang in sorted(language_members):
        try:
            r = relatedness_mse(vectors, cooc, language_members[lang], assignment)
            result.per_language[lang] = {"mse": r.mse, "mse_pct": r.mse_pct, "pairs": r.pairs}
        except DataError as exc:
            if exc.code != "NO_PAIRS":
                raise
            result.per_language[lang] = None
    return result


def save_cooccurrence(cooc: CoOccurrenceMatrix, triplet_path, index_path) -> None:
    with open(triplet_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "count"])
        for i, j, n in cooc.nonzero_pairs():
            w.writerow([i, j, n])
    Path(index_path).write_text("".join(s + "\n" for s in cooc.index), encoding="utf-8")


def load_cooccurrence(triplet_path, index_path) -> CoOccurrenceMatrix:
    try:
        index = Path(index_path).read_text(encoding="utf-8").splitlines()
        with open(triplet_path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
    except OSError as exc:
        raise DataError("NO_PAIRS", f"co-occurrence data unavailable: {exc}") from exc
    pairs = {}
    for row in rows[1:]:
        i, j, n = int(row[0]), int(row[1]), int(row[2])
        if not (0 <= i < len(index) and 0 <= j < len(index)):
            raise DataError("BAD_INDEX", f"pair ({i}, {j}) outside index of {len(index)}")
        pairs[(min(i, j), max(i, j))] = n
    return CoOccurrenceMatrix(index, pairs)
