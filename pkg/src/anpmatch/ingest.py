"""Loaders for embeddings, lexicons, annotations, image tags, face detections
and translation dictionaries, plus annotation quality statistics.

Row-level problems are collected into an :class:`IngestReport` instead of
aborting the load; pass ``strict=True`` to make them fatal.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, NumericError
from .model import (
    AnnotationRecord, Lexicon, SentimentSource, SentimentValue,
    normalize_language, normalize_surface, validate_concept,
)

log = logging.getLogger(__name__)


class Tokenization(str, Enum):
    WORDS = "words"
    WORDS_PLUS_ANP = "words_plus_anp"


class EmbeddingTable:
    """Token -> dense vector map backed by one float64 matrix."""

    def __init__(self, tokens: Sequence[str], vectors, window: int = 5,
                 tokenization=Tokenization.WORDS):
        vectors = np.asarray(vectors, dtype=np.float64)
        if len(tokens) == 0:
            raise DataError("EMPTY_TABLE", "embedding table has no entries")
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens) or vectors.shape[1] < 1:
            raise DataError("DIM_MISMATCH", f"vectors of shape {vectors.shape} for {len(tokens)} tokens")
        if not np.all(np.isfinite(vectors)):
            raise DataError("NON_FINITE", "embedding contains non-finite values")
        if window < 1:
            raise DataError("BAD_WINDOW", f"window must be positive, got {window}")
        self.tokens = list(tokens)
        self.index = {}
        for i, tok in enumerate(self.tokens):
            if tok in self.index:
                raise DataError("DUPLICATE_TOKEN", f"duplicate token {tok!r}")
            self.index[tok] = i
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.window = int(window)
        self.tokenization = Tokenization(tokenization)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self.index[token]]

    def get(self, token, default=None):
        i = self.index.get(token)
        return default if i is None else self.vectors[i]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return (self.tokens == other.tokens and self.window == other.window
                and self.tokenization == other.tokenization
                and np.array_equal(self.vectors, other.vectors))

    def with_metadata(self, window=None, tokenization=None) -> "EmbeddingTable":
        return EmbeddingTable(self.tokens, self.vectors,
                              self.window if window is None else window,
                              self.tokenization if tokenization is None else tokenization)


@dataclass
class IngestReport:
    """Row-level rejections gathered while loading files."""

    rejected: list = field(default_factory=list)
    loaded: dict = field(default_factory=dict)
    strict: bool = False

    def reject(self, path, row, code, message=""):
        if self.strict:
            raise DataError(code, f"{path}:{row}: {message}", row=row)
        log.warning("%s:%s rejected (%s) %s", path, row, code, message)
        self.rejected.append({"file": str(path), "row": row, "code": code, "message": message})

    def count(self, kind, n):
        self.loaded[kind] = self.loaded.get(kind, 0) + n

    def to_dict(self):
        return {"loaded": dict(sorted(self.loaded.items())), "rejected": list(self.rejected)}


def _report(report, strict):
    if report is None:
        report = IngestReport(strict=strict)
    elif strict:
        report.strict = True
    return report


def _read_lines(path):
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError("UNREADABLE", f"cannot read {path}: {exc}") from exc


def _parse_header(line, path):
    parts = line.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise DataError("MALFORMED_HEADER", f"{path}: expected 'V D' header, got {line!r}")
    v, d = int(parts[0]), int(parts[1])
    if v == 0:
        raise DataError("EMPTY_TABLE", f"{path}: header declares zero tokens")
    if d == 0:
        raise DataError("MALFORMED_HEADER", f"{path}: header declares zero dimensions")
    return v, d


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

def load_embeddings_text(path, window: int = 5, tokenization=Tokenization.WORDS) -> EmbeddingTable:
    lines = [ln for ln in _read_lines(path) if ln.strip()]
    if not lines:
        raise DataError("MALFORMED_HEADER", f"{path}: empty file")
    v, d = _parse_header(lines[0], path)
    rows = lines[1:]
    if len(rows) != v:
        raise DataError("COUNT_MISMATCH", f"{path}: header declares {v} rows, found {len(rows)}")
    tokens = []
    vectors = np.empty((v, d), dtype=np.float64)
    for i, line in enumerate(rows):
        parts = line.rstrip().split(" ")
        if len(parts) != d + 1:
            raise DataError("DIM_MISMATCH", f"{path}:{i + 2}: expected {d} values, got {len(parts) - 1}",
                            row=i + 2)
        try:
            vectors[i] = [float(x) for x in parts[1:]]
        except ValueError as exc:
            raise DataError("BAD_FLOAT", f"{path}:{i + 2}: {exc}", row=i + 2) from exc
        if not np.all(np.isfinite(vectors[i])):
            raise DataError("NON_FINITE", f"{path}:{i + 2}: non-finite value", row=i + 2)
        tokens.append(parts[0])
    return EmbeddingTable(tokens, vectors, window, tokenization)


def load_embeddings_binary(path, window: int = 5, tokenization=Tokenization.WORDS) -> EmbeddingTable:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError("UNREADABLE", f"cannot read {path}: {exc}") from exc
    nl = data.find(b"\n")
    if nl < 0:
        raise DataError("MALFORMED_HEADER", f"{path}: missing header line")
    v, d = _parse_header(data[:nl].decode("ascii", errors="replace"), path)
    pos = nl + 1
    width = 4 * d
    tokens = []
    vectors = np.empty((v, d), dtype=np.float64)
    for i in range(v):
        # word2vec writers put a newline after each vector; tolerate it.
        while pos < len(data) and data[pos:pos + 1] == b"\n":
            pos += 1
        sp = data.find(b" ", pos)
        if sp < 0 or sp + 1 + width > len(data):
            raise DataError("TRUNCATED", f"{path}: record {i + 1} of {v} is truncated", row=i + 1)
        try:
            tokens.append(data[pos:sp].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise DataError("BAD_TOKEN", f"{path}: record {i + 1}: {exc}", row=i + 1) from exc
        vectors[i] = np.frombuffer(data, dtype="<f4", count=d, offset=sp + 1)
        if not np.all(np.isfinite(vectors[i])):
            raise DataError("NON_FINITE", f"{path}: record {i + 1}: non-finite value", row=i + 1)
        pos = sp + 1 + width
    return EmbeddingTable(tokens, vectors, window, tokenization)


def load_embeddings(path, fmt: str = "auto", window: int = 5,
                    tokenization=Tokenization.WORDS) -> EmbeddingTable:
    if fmt == "auto":
        fmt = "binary" if str(path).endswith(".bin") else "text"
    if fmt == "binary":
        return load_embeddings_binary(path, window, tokenization)
    if fmt == "text":
        return load_embeddings_text(path, window, tokenization)
    raise DataError("BAD_FORMAT", f"unknown embedding format {fmt!r}")


def save_embeddings_text(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dimension}\n")
        for tok, vec in zip(table.tokens, table.vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def save_embeddings_binary(table: EmbeddingTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{len(table)} {table.dimension}\n".encode("ascii"))
        for tok, vec in zip(table.tokens, table.vectors):
            fh.write(tok.encode("utf-8") + b" ")
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


# ---------------------------------------------------------------------------
# Delimited files
# ---------------------------------------------------------------------------

def _na(value):
    value = (value or "").strip()
    return None if value in ("", "NA", "na", "NaN", "nan") else value


def _parse_polarity(value, source):
    value = _na(value)
    if value is None:
        return None
    pol = float(value)
    if not math.isfinite(pol):
        raise ValueError(f"non-finite polarity {value!r}")
    return SentimentValue(pol, source)


def load_lexicons(path, report: Optional[IngestReport] = None, strict: bool = False) -> dict[str, Lexicon]:
    """Load a lexicon TSV that may hold several languages.

    Columns: language, surface, adjective, nouns, crowd_polarity,
    auto_polarity, pos. The polarity and pos columns are optional.
    """
    report = _report(report, strict)
    concepts = defaultdict(list)
    sentiments = defaultdict(dict)
    seen = set()
    for row_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if row_no == 1 and cols[0].strip().lower() == "language":
            continue
        if len(cols) < 4:
            report.reject(path, row_no, "MISSING_COLUMNS", f"expected >= 4 columns, got {len(cols)}")
            continue
        cols += [""] * (7 - len(cols))
        try:
            crowd = _parse_polarity(cols[4], SentimentSource.CROWDSOURCED)
            auto = _parse_polarity(cols[5], SentimentSource.AUTOMATIC)
            concept = validate_concept({
                "language": cols[0], "surface": cols[1], "adjective": cols[2],
                "nouns": cols[3], "pos": _na(cols[6]),
            }, seen)
        except DataError as exc:
            report.reject(path, row_no, exc.code, exc.message)
            continue
        except ValueError as exc:
            report.reject(path, row_no, "BAD_POLARITY", str(exc))
            continue
        values = {}
        if crowd is not None:
            values[SentimentSource.CROWDSOURCED] = crowd
        if auto is not None:
            values[SentimentSource.AUTOMATIC] = auto
        concepts[concept.language].append(concept)
        if values:
            sentiments[concept.language][concept.key] = values
    out = {}
    for lang in sorted(concepts):
        out[lang] = Lexicon(lang, tuple(concepts[lang]), sentiments[lang])
        report.count(f"lexicon:{lang}", len(concepts[lang]))
    return out


def load_lexicon(path, language: str, report: Optional[IngestReport] = None,
                 strict: bool = False) -> Lexicon:
    language = normalize_language(language)
    lexicons = load_lexicons(path, report, strict)
    others = sorted(set(lexicons) - {language})
    if others:
        log.info("%s: ignoring rows for languages %s", path, others)
    return lexicons.get(language, Lexicon(language, ()))


@dataclass(frozen=True)
class AnnotationSet:
    records: tuple[AnnotationRecord, ...]

    def by_concept(self) -> dict[str, list[AnnotationRecord]]:
        groups = defaultdict(list)
        for rec in self.records:
            groups[rec.concept_key].append(rec)
        return dict(groups)

    def mean_ratings(self) -> dict[str, float]:
        return {key: math.fsum(r.rating for r in recs) / len(recs)
                for key, recs in self.by_concept().items()}

    def crowd_polarities(self) -> dict[str, dict[str, dict]]:
        """Per language: concept key -> {CROWDSOURCED: SentimentValue} from mean ratings.

        Computed as (sum - 3n) / 2n in one integer division, so polarities
        that are exact multiples of 0.1 compare exactly against thresholds.
        """
        out = defaultdict(dict)
        for key, recs in self.by_concept().items():
            lang = key.split(":", 1)[0]
            n = len(recs)
            pol = (sum(r.rating for r in recs) - 3 * n) / (2 * n)
            out[lang][key] = {SentimentSource.CROWDSOURCED: SentimentValue(pol, SentimentSource.CROWDSOURCED)}
        return dict(out)


def _csv_rows(path, delimiter=","):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            yield from enumerate(csv.reader(fh, delimiter=delimiter), start=1)
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError("UNREADABLE", f"cannot read {path}: {exc}") from exc


def load_annotations(path, report: Optional[IngestReport] = None, strict: bool = False) -> AnnotationSet:
    report = _report(report, strict)
    records = []
    seen = set()
    for row_no, row in _csv_rows(path):
        if not row or (row_no == 1 and row[0].strip().lower() == "language"):
            continue
        if len(row) != 4:
            report.reject(path, row_no, "MISSING_COLUMNS", f"expected 4 columns, got {len(row)}")
            continue
        try:
            lang = normalize_language(row[0])
            rating = int(row[3])
            rec = AnnotationRecord(lang, row[1].strip(), row[2].strip(), rating)
        except ValueError:
            report.reject(path, row_no, "BAD_RATING", f"rating {row[3]!r} is not an integer")
            continue
        except DataError as exc:
            report.reject(path, row_no, exc.code, exc.message)
            continue
        pair = (rec.concept_key, rec.worker_id)
        if pair in seen:
            report.reject(path, row_no, "DUPLICATE", f"worker {rec.worker_id} rated {rec.concept_key} twice")
            continue
        seen.add(pair)
        records.append(rec)
    report.count("annotations", len(records))
    return AnnotationSet(tuple(records))


@dataclass(frozen=True)
class ImageTagRecord:
    image_id: str
    language: str
    anp_tags: tuple[str, ...]


def load_image_tags(path, report: Optional[IngestReport] = None, strict: bool = False) -> list[ImageTagRecord]:
    report = _report(report, strict)
    out = []
    seen_ids = set()
    for row_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if row_no == 1 and cols[0].strip().lower() == "image_id":
            continue
        if len(cols) != 3:
            report.reject(path, row_no, "MISSING_COLUMNS", f"expected 3 columns, got {len(cols)}")
            continue
        image_id = cols[0].strip()
        try:
            lang = normalize_language(cols[1])
        except DataError as exc:
            report.reject(path, row_no, exc.code, exc.message)
            continue
        tags = []
        for tag in cols[2].split("|"):
            tag = normalize_surface(tag)
            if tag and tag not in tags:
                tags.append(tag)
        if not tags:
            report.reject(path, row_no, "NO_TAGS", f"image {image_id} has no tags")
            continue
        if image_id in seen_ids:
            report.reject(path, row_no, "DUPLICATE", f"image {image_id} listed twice")
            continue
        seen_ids.add(image_id)
        out.append(ImageTagRecord(image_id, lang, tuple(tags)))
    report.count("images", len(out))
    return out


@dataclass(frozen=True)
class FaceDetectionRecord:
    image_id: str
    image_width: int
    image_height: int
    boxes: tuple[tuple[int, int, int, int], ...] = ()


def load_face_detections(path, report: Optional[IngestReport] = None,
                         strict: bool = False) -> list[FaceDetectionRecord]:
    report = _report(report, strict)
    sizes = {}
    boxes = defaultdict(list)
    order = []
    for row_no, row in _csv_rows(path):
        if not row or (row_no == 1 and row[0].strip().lower() == "image_id"):
            continue
        if len(row) != 7:
            report.reject(path, row_no, "MISSING_COLUMNS", f"expected 7 columns, got {len(row)}")
            continue
        image_id = row[0].strip()
        try:
            w_img, h_img = int(row[1]), int(row[2])
            box = [c.strip() for c in row[3:7]]
            box = None if not any(box) else tuple(int(c) for c in box)
        except ValueError as exc:
            report.reject(path, row_no, "BAD_NUMBER", str(exc))
            continue
        if w_img <= 0 or h_img <= 0:
            report.reject(path, row_no, "BAD_IMAGE_SIZE", f"{w_img}x{h_img}")
            continue
        if image_id in sizes and sizes[image_id] != (w_img, h_img):
            report.reject(path, row_no, "SIZE_CONFLICT", f"image {image_id} has conflicting sizes")
            continue
        if box is not None:
            x, y, w, h = box
            if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > w_img or y + h > h_img:
                report.reject(path, row_no, "BOX_OUT_OF_BOUNDS", f"box {box} in {w_img}x{h_img}")
                continue
        if image_id not in sizes:
            sizes[image_id] = (w_img, h_img)
            order.append(image_id)
        if box is not None:
            boxes[image_id].append(box)
    report.count("face_images", len(order))
    return [FaceDetectionRecord(i, *sizes[i], tuple(boxes[i])) for i in order]


def load_dictionary(path, report: Optional[IngestReport] = None,
                    strict: bool = False) -> dict[tuple[str, str], str]:
    """Translation map (language, surface) -> pivot surface."""
    report = _report(report, strict)
    out = {}
    for row_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if row_no == 1 and cols[0].strip().lower() == "language":
            continue
        if len(cols) != 3 or not cols[1].strip() or not cols[2].strip():
            report.reject(path, row_no, "MISSING_COLUMNS", "expected language, surface, pivot_surface")
            continue
        try:
            lang = normalize_language(cols[0])
        except DataError as exc:
            report.reject(path, row_no, exc.code, exc.message)
            continue
        key = (lang, cols[1].strip())
        pivot = " ".join(cols[2].split())
        if key in out and out[key] != pivot:
            report.reject(path, row_no, "CONFLICT", f"{key} already maps to {out[key]!r}")
            continue
        out[key] = pivot
    report.count("dictionary", len(out))
    return out


# ---------------------------------------------------------------------------
# Annotation quality
# ---------------------------------------------------------------------------

@dataclass
class AgreementResult:
    per_concept: dict
    per_language: dict
    overall: float
    excluded: list


def modal_rating(ratings: Sequence[int]) -> tuple[int, float]:
    """Most frequent rating and its share; ties go to the rating nearest the mean,
    then to the lower rating."""
    counts = Counter(ratings)
    top = max(counts.values())
    mean = sum(ratings) / len(ratings)
    best = min((r for r, c in counts.items() if c == top), key=lambda r: (abs(r - mean), r))
    return best, top / len(ratings)


def annotator_agreement(annotations: AnnotationSet, min_records: int = 2) -> AgreementResult:
    per_concept = {}
    excluded = []
    by_lang = defaultdict(list)
    for key, recs in sorted(annotations.by_concept().items()):
        if len(recs) < min_records:
            excluded.append(key)
            continue
        _, share = modal_rating([r.rating for r in recs])
        per_concept[key] = share
        by_lang[recs[0].language].append(share)
    if not per_concept:
        raise DataError("NO_ANNOTATIONS", f"no concept has >= {min_records} ratings")
    per_language = {lang: math.fsum(v) / len(v) for lang, v in sorted(by_lang.items())}
    overall = math.fsum(per_language.values()) / len(per_language)
    return AgreementResult(per_concept, per_language, overall, excluded)


def sentiment_correlation(a: Iterable[float], b: Iterable[float]) -> float:
    """Pearson correlation of two equally long series."""
    x = np.asarray(list(a), dtype=np.float64)
    y = np.asarray(list(b), dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("LENGTH_MISMATCH", f"series lengths {x.shape} and {y.shape}")
    if len(x) < 2:
        raise DataError("TOO_SHORT", "need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0.0 or syy == 0.0:
        raise NumericError("CONSTANT_SERIES", "correlation undefined for a constant series")
    den = math.sqrt(sxx) * math.sqrt(syy)  # separate roots: the product can underflow
    if den == 0.0:
        raise NumericError("CONSTANT_SERIES", "variance underflows; correlation undefined")
    r = math.fsum(dx * dy) / den
    return max(-1.0, min(1.0, r))


def pearson_or_none(a, b) -> Optional[float]:
    try:
        return sentiment_correlation(a, b)
    except (NumericError, DataError):
        return None
