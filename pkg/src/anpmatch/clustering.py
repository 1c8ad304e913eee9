"""Seeded k-means, one- and two-stage concept clustering, cluster
consistency metrics and cross-language connectivity."""

from __future__ import annotations

import csv
import hashlib
import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DataError, NumericError
from .relatedness import CoOccurrenceMatrix
from .model import normalize_surface

MAX_ITER = 300
_CHUNK = 256


class Scheme(str, Enum):
    ONE_STAGE = "one_stage"
    TWO_STAGE_NOUN = "two_stage_noun"
    TWO_STAGE_ADJ = "two_stage_adj"


def derive_seed(seed: int, label: str) -> int:
    """Deterministic 63-bit child seed for a named stage."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list
    n_iter: int
    converged: bool


def _normalize_rows(X):
    norms = np.sqrt((X * X).sum(axis=1))
    if np.any(norms == 0):
        raise DataError("ZERO_VECTOR", "cannot normalize a zero vector")
    return X / norms[:, None]


def _chunks(n):
    return [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]


def _assign(X, C, spherical, pool):
    """Nearest centroid per point (lowest index on ties) and its distance."""

    def work(span):
        s, e = span
        if spherical:
            sim = (X[s:e, None, :] * C[None, :, :]).sum(axis=2)
            lab = np.argmax(sim, axis=1)
            dist = 1.0 - sim[np.arange(e - s), lab]
            return lab, np.maximum(dist, 0.0)
        diff = X[s:e, None, :] - C[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        lab = np.argmin(d2, axis=1)
        return lab, d2[np.arange(e - s), lab]

    spans = _chunks(len(X))
    parts = list(pool.map(work, spans)) if pool else [work(s) for s in spans]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _point_dist(X, labels, C, spherical):
    if spherical:
        return np.maximum(1.0 - (X * C[labels]).sum(axis=1), 0.0)
    diff = X - C[labels]
    return (diff * diff).sum(axis=1)


def _update(X, labels, C, spherical, pool):
    k = len(C)
    members = [np.flatnonzero(labels == c) for c in range(k)]

    def work(c):
        idx = members[c]
        if len(idx) == 0:
            return C[c]
        mean = X[idx].sum(axis=0) / len(idx)
        if spherical:
            norm = math.sqrt(float((mean * mean).sum()))
            return C[c] if norm == 0.0 else mean / norm
        return mean

    rows = list(pool.map(work, range(k))) if pool else [work(c) for c in range(k)]
    return np.array(rows)


def _repair_empty(X, labels, dist, C, k):
    """Give each empty cluster the point farthest from its own centroid,
    taken from a cluster that keeps at least one member."""
    sizes = np.bincount(labels, minlength=k)
    for e in np.flatnonzero(sizes == 0):
        movable = sizes[labels] > 1
        cand = np.where(movable, dist, -np.inf)
        p = int(np.argmax(cand))
        sizes[labels[p]] -= 1
        labels[p] = e
        sizes[e] = 1
        C[e] = X[p]
        dist[p] = 0.0
    return labels, dist


def _seed_plus_plus(X, k, rng):
    n = len(X)
    chosen = [int(rng.integers(n))]
    diff = X - X[chosen[0]]
    d2 = (diff * diff).sum(axis=1)
    d2[chosen[0]] = 0.0
    while len(chosen) < k:
        cum = np.cumsum(d2)
        total = float(cum[-1])
        if total <= 0.0:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rest[rng.integers(len(rest))])
        else:
            nxt = int(np.searchsorted(cum, rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
            while d2[nxt] == 0.0:  # guard against round-off at the top end
                nxt -= 1
        chosen.append(nxt)
        diff = X - X[nxt]
        d2 = np.minimum(d2, (diff * diff).sum(axis=1))
        d2[chosen] = 0.0
    return X[chosen].copy()


def kmeans(vectors, k: int, distance: str = "euclidean", seed: int = 0,
           keys: Optional[Sequence[str]] = None, threads: int = 1, max_iter: int = MAX_ITER) -> KMeansResult:
    """Lloyd k-means with k-means++ seeding on L2-normalized inputs.

    ``distance="euclidean"`` clusters the normalized points by squared
    Euclidean distance; ``"cosine"`` runs spherical k-means (unit
    centroids, assignment by largest dot product). When ``keys`` are given
    points are visited in sorted key order, so the result does not depend
    on input order. Labels are returned in input order.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise DataError("NO_POINTS", "k-means needs a non-empty 2-D array")
    n = len(X)
    if not isinstance(k, (int, np.integer)) or k <= 0 or k > n:
        raise DataError("INVALID_K", f"k={k} for {n} points")
    if distance not in ("euclidean", "cosine"):
        raise DataError("BAD_DISTANCE", f"unknown distance {distance!r}")
    if not np.all(np.isfinite(X)):
        raise NumericError("NON_FINITE", "non-finite input vector")
    spherical = distance == "cosine"
    order = np.arange(n)
    if keys is not None:
        if len(keys) != n:
            raise DataError("LENGTH_MISMATCH", "one key per vector required")
        order = np.array(sorted(range(n), key=lambda i: keys[i]), dtype=np.int64)
    Xc = _normalize_rows(X[order])

    rng = np.random.default_rng(int(seed))
    C = _seed_plus_plus(Xc, int(k), rng)
    pool = ThreadPoolExecutor(threads) if threads and threads > 1 else None
    try:
        history = []
        prev = None
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            labels, dist = _assign(Xc, C, spherical, pool)
            labels, dist = _repair_empty(Xc, labels, dist, C, k)
            history.append(math.fsum(dist))
            if prev is not None and np.array_equal(labels, prev):
                converged = True
                break
            prev = labels
            C = _update(Xc, labels, C, spherical, pool)
        if not converged:
            dist = _point_dist(Xc, labels, C, spherical)
    finally:
        if pool:
            pool.shutdown()
    out = np.empty(n, dtype=np.int64)
    out[order] = labels
    return KMeansResult(out, C, math.fsum(dist), history, it, converged)


# ---------------------------------------------------------------------------
# Clustering schemes
# ---------------------------------------------------------------------------

@dataclass
class Clustering:
    k: int
    assignments: dict  # concept key -> cluster id
    inertia: float
    seed: int
    scheme: Scheme
    history: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def clusters(self) -> dict[int, list[str]]:
        out = defaultdict(list)
        for key in sorted(self.assignments):
            out[self.assignments[key]].append(key)
        return dict(sorted(out.items()))

    def multi_clusters(self) -> list[list[str]]:
        return [m for m in self.clusters.values() if len(m) >= 2]


def _stack(vectors: Mapping[str, np.ndarray], keys):
    return np.array([np.asarray(getattr(vectors[k], "vector", vectors[k]), dtype=np.float64) for k in keys])


def cluster_one_stage(vectors: Mapping[str, np.ndarray], k: int, seed: int = 0, threads: int = 1) -> Clustering:
    keys = sorted(vectors)
    res = kmeans(_stack(vectors, keys), k, "euclidean", seed, keys, threads)
    return Clustering(k, {key: int(c) for key, c in zip(keys, res.labels)}, res.inertia, seed,
                      Scheme.ONE_STAGE, res.history)


def allocate_clusters(sizes: Sequence[int], k_total: int) -> list[int]:
    """Split ``k_total`` clusters across groups proportionally to their sizes.

    Start from k_i = max(1, round(k_total * n_i / N)) (halves round up),
    then move one cluster at a time: add to the group furthest below its
    quota, or take from the group furthest above it, never going below 1 or
    above n_i. Ties favor lower group indices. Exact integer arithmetic.
    Empty groups get 0.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise DataError("BAD_SIZES", "group sizes must be non-negative")
    total = sum(sizes)
    active = [i for i, s in enumerate(sizes) if s > 0]
    if not active or k_total < len(active) or k_total > total:
        raise DataError("INVALID_K", f"k_total={k_total} for {len(active)} groups of {total} concepts")
    k = [0] * len(sizes)
    excess = [0] * len(sizes)  # (q_i - k_i) * total
    for i in active:
        k[i] = max(1, (2 * k_total * sizes[i] + total) // (2 * total))
        k[i] = min(k[i], sizes[i])
        excess[i] = k_total * sizes[i] - k[i] * total
    gap = k_total - sum(k)
    while gap > 0:
        i = max((i for i in active if k[i] < sizes[i]), key=lambda i: (excess[i], -i))
        k[i] += 1
        excess[i] -= total
        gap -= 1
    while gap < 0:
        i = min((i for i in active if k[i] > 1), key=lambda i: (excess[i], -i))
        k[i] -= 1
        excess[i] += total
        gap += 1
    return k


def default_group_count(n_words: int, k_total: int) -> int:
    return max(1, min(n_words, k_total // 10))


def cluster_two_stage(concepts, vectors: Mapping[str, np.ndarray], word_table, mode: str = "noun_first",
                      k_total: int = 10, seed: int = 0, n_groups: Optional[int] = None,
                      threads: int = 1) -> Clustering:
    """Group concepts by clustering their representative words, then run
    k-means on concept vectors inside each group.

    Concepts whose representative word is missing (no noun/adjective, or
    not in ``word_table``) form one residual group.
    """
    from .pivot import concept_representatives

    if mode not in ("noun_first", "adj_first"):
        raise DataError("BAD_MODE", f"unknown two-stage mode {mode!r}")
    by_key = {c.key: c for c in concepts}
    rep_word = {}
    residual = []
    for key in sorted(vectors):
        c = by_key.get(key)
        word = None
        if c is not None and c.pivot_surface:
            try:
                reps = concept_representatives(c)
                word = reps.noun if mode == "noun_first" else reps.adjective
            except DataError as exc:
                if exc.code != "NO_NOUN":
                    raise
        if word is not None and word in word_table:
            rep_word[key] = word
        else:
            residual.append(key)
    if not rep_word:
        raise DataError("NO_REPRESENTATIVES", f"no concept has a usable representative ({mode})")

    words = sorted(set(rep_word.values()))
    g = n_groups if n_groups is not None else default_group_count(len(words), k_total)
    g = max(1, min(g, len(words)))
    stage1 = kmeans(np.array([word_table[w] for w in words]), g, "euclidean",
                    derive_seed(seed, "two_stage:words"), words, threads)
    word_group = {w: int(l) for w, l in zip(words, stage1.labels)}
    groups = [[] for _ in range(g)]
    for key in sorted(rep_word):
        groups[word_group[rep_word[key]]].append(key)
    if residual:
        groups.append(residual)
    groups = [grp for grp in groups if grp]
    alloc = allocate_clusters([len(grp) for grp in groups], k_total)

    assignments = {}
    inertia = []
    offset = 0
    for gi, (grp, k_i) in enumerate(zip(groups, alloc)):
        res = kmeans(_stack(vectors, grp), k_i, "euclidean", derive_seed(seed, f"two_stage:group:{gi}"),
                     grp, threads)
        for key, lab in zip(grp, res.labels):
            assignments[key] = offset + int(lab)
        inertia.append(res.inertia)
        offset += k_i
    scheme = Scheme.TWO_STAGE_NOUN if mode == "noun_first" else Scheme.TWO_STAGE_ADJ
    return Clustering(k_total, assignments, math.fsum(inertia), seed, scheme,
                      details={"group_sizes": [len(grp) for grp in groups], "allocation": alloc,
                               "residual": len(residual), "word_groups": g})


def save_clustering(clustering: Clustering, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["concept_key", "cluster_id"])
        for key in sorted(clustering.assignments):
            w.writerow([key, clustering.assignments[key]])


def load_assignments(path) -> dict[str, int]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return {r[0]: int(r[1]) for r in rows[1:]}


# ---------------------------------------------------------------------------
# Consistency
# ---------------------------------------------------------------------------

def _multi(clusters) -> list[list[str]]:
    if isinstance(clusters, Clustering):
        return clusters.multi_clusters()
    if isinstance(clusters, Mapping):
        groups = defaultdict(list)
        for key in sorted(clusters):
            groups[clusters[key]].append(key)
        return [m for _, m in sorted(groups.items()) if len(m) >= 2]
    return [list(m) for m in clusters if len(m) >= 2]


def semantic_consistency(clustering, cooc: CoOccurrenceMatrix, pivot_of: Mapping[str, str],
                         denominator: str = "members") -> float:
    """Average over multi-ANP clusters of the summed co-occurrence distance of
    co-occurring member pairs, divided by the cluster size
    (``denominator="members"``) or by the number of such pairs (``"pairs"``;
    clusters without co-occurring pairs then contribute 0).

    ``clustering`` is a Clustering, a key->cluster mapping or a list of
    member lists; ``pivot_of`` maps concept keys to co-occurrence index
    surfaces.
    """
    if denominator not in ("members", "pairs"):
        raise DataError("BAD_DENOMINATOR", f"unknown denominator {denominator!r}")
    multi = _multi(clustering)
    if not multi:
        raise DataError("NO_MULTI_CLUSTERS", "no cluster has two or more ANPs")
    scores = []
    for members in multi:
        pos = [cooc.position.get(normalize_surface(pivot_of[m])) if m in pivot_of else None for m in members]
        dists = []
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                p, q = pos[a], pos[b]
                if p is None or q is None or p == q or cooc.count(p, q) == 0:
                    continue
                dists.append(cooc.distance(p, q))
        total = math.fsum(dists)
        if denominator == "members":
            scores.append(total / len(members))
        else:
            scores.append(total / len(dists) if dists else 0.0)
    return math.fsum(scores) / len(scores)


def sentiment_consistency(clustering, polarities: Mapping[str, float]) -> float:
    """Mean within-cluster population variance of sentiment over multi-ANP clusters."""
    multi = _multi(clustering)
    if not multi:
        raise DataError("NO_MULTI_CLUSTERS", "no cluster has two or more ANPs")
    scores = []
    for members in multi:
        missing = [m for m in members if m not in polarities]
        if missing:
            raise DataError("MISSING_POLARITY", f"no polarity for {missing[0]}", keys=missing[:10])
        vals = [float(polarities[m]) for m in members]
        mean = math.fsum(vals) / len(vals)
        scores.append(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
    return math.fsum(scores) / len(scores)


def combined_consistency(sem_c: float, sen_c: float) -> float:
    return (sem_c + sen_c) / 2


@dataclass
class ConsistencyReport:
    sem_C: float
    sen_C: float
    mu: float
    C: int
    k: int
    sem_C_pairs: Optional[float] = None

    def to_dict(self):
        out = {"sem_C": self.sem_C, "sen_C": self.sen_C, "mu": self.mu, "C": self.C, "k": self.k}
        if self.sem_C_pairs is not None:
            out["sem_C_pairs"] = self.sem_C_pairs
        return out


def consistency_report(clustering: Clustering, cooc: CoOccurrenceMatrix, pivot_of, polarities,
                       pairs_denominator: bool = False) -> ConsistencyReport:
    sem = semantic_consistency(clustering, cooc, pivot_of)
    sen = sentiment_consistency(clustering, polarities)
    alt = semantic_consistency(clustering, cooc, pivot_of, "pairs") if pairs_denominator else None
    return ConsistencyReport(sem, sen, combined_consistency(sem, sen), len(_multi(clustering)),
                             clustering.k, alt)


# ---------------------------------------------------------------------------
# Connectivity
# ---------------------------------------------------------------------------

@dataclass
class ConnectivityMatrix:
    languages: list
    matrix: list
    mode: str = "pairs"

    def to_dict(self):
        return {"languages": self.languages, "matrix": self.matrix, "mode": self.mode}


def connectivity_matrix(clustering, languages: Mapping[str, str], mode: str = "pairs") -> ConnectivityMatrix:
    """Co-clustered concept counts between languages.

    ``pairs``: M[a][b] adds count_a * count_b per cluster (a != b) and the
    diagonal adds C(count_a, 2); symmetric. ``concepts``: M[a][b] counts
    concepts of a sharing a cluster with at least one other concept of b;
    not symmetric in general.
    """
    if mode not in ("pairs", "concepts"):
        raise DataError("BAD_MODE", f"unknown connectivity mode {mode!r}")
    if isinstance(clustering, Clustering):
        groups = list(clustering.clusters.values())
    elif isinstance(clustering, Mapping):
        tmp = defaultdict(list)
        for key in sorted(clustering):
            tmp[clustering[key]].append(key)
        groups = [tmp[c] for c in sorted(tmp)]
    else:
        groups = [list(g) for g in clustering]
    langs = sorted({languages[k] for g in groups for k in g})
    at = {l: i for i, l in enumerate(langs)}
    M = [[0] * len(langs) for _ in langs]
    for members in groups:
        counts = Counter(languages[k] for k in members)
        present = sorted(counts)
        for a in present:
            for b in present:
                ia, ib = at[a], at[b]
                if mode == "pairs":
                    M[ia][ib] += counts[a] * (counts[a] - 1) // 2 if a == b else counts[a] * counts[b]
                elif a == b:
                    M[ia][ib] += counts[a] if counts[a] >= 2 else 0
                else:
                    M[ia][ib] += counts[a]
    return ConnectivityMatrix(langs, M, mode)
