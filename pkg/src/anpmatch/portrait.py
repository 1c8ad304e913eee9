"""Portrait analytics: per-ANP portrait scores, face-ANP selection, per-language
sentiment/face statistics, multilinguality correlations and language profiles."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .clustering import derive_seed, kmeans
from .errors import DataError
from .ingest import FaceDetectionRecord, ImageTagRecord, pearson_or_none
from .model import polarity_to_rating


def anp_key(language: str, pivot_surface: str) -> str:
    return f"{language}:{pivot_surface}"


def anp_language(key: str) -> str:
    return key.split(":", 1)[0]


def anp_images(tags: Iterable[ImageTagRecord]) -> dict[str, list[str]]:
    """ANP key (image language, pivot tag) -> image ids, in input order."""
    out = defaultdict(list)
    for rec in tags:
        for tag in rec.anp_tags:
            out[anp_key(rec.language, tag)].append(rec.image_id)
    return dict(out)


def _face_counts(detections: Iterable[FaceDetectionRecord]) -> dict[str, FaceDetectionRecord]:
    return {d.image_id: d for d in detections}


def portrait_scores(detections: Iterable[FaceDetectionRecord], images: Mapping[str, Sequence[str]]):
    """Share of each ANP's images with at least one detected face.

    Images without a detection record are ignored. Returns (scores,
    excluded ANP keys with no usable image).
    """
    det = _face_counts(detections)
    scores, excluded = {}, []
    for key in sorted(images):
        known = [i for i in dict.fromkeys(images[key]) if i in det]
        if not known:
            excluded.append(key)
            continue
        scores[key] = sum(1 for i in known if det[i].boxes) / len(known)
    return scores, excluded


@dataclass
class FaceSelection:
    anps: list
    languages: list
    dropped_languages: dict


def filter_face_anps(scores: Mapping[str, float], threshold: float = 0.6, min_per_language: int = 20) -> FaceSelection:
    """Keep ANPs scoring strictly above ``threshold`` in languages with at
    least ``min_per_language`` of them."""
    per_lang = defaultdict(list)
    for key in sorted(scores):
        if scores[key] > threshold:
            per_lang[anp_language(key)].append(key)
    kept = {l: v for l, v in per_lang.items() if len(v) >= min_per_language}
    dropped = {l: len(v) for l, v in sorted(per_lang.items()) if l not in kept}
    if not kept:
        raise DataError("EMPTY_SELECTION", f"no language has >= {min_per_language} ANPs above {threshold}")
    anps = sorted(k for v in kept.values() for k in v)
    return FaceSelection(anps, sorted(kept), dropped)


def _box_size(box, det: FaceDetectionRecord, mode: str) -> float:
    ratio = (box[2] * box[3]) / (det.image_width * det.image_height)
    return 100.0 * (math.sqrt(ratio) if mode == "linear" else ratio)


def anp_face_sizes(images: Mapping[str, Sequence[str]], detections, mode: str = "linear") -> dict[str, float]:
    """Mean face size (% of image) over all boxes in each ANP's images."""
    det = _face_counts(detections)
    out = {}
    for key in sorted(images):
        sizes = [_box_size(b, det[i], mode) for i in dict.fromkeys(images[key]) if i in det for b in det[i].boxes]
        if sizes:
            out[key] = math.fsum(sizes) / len(sizes)
    return out


@dataclass
class PortraitStats:
    language: str
    rho_face_sent: Optional[float]
    sent_faces: Optional[float]
    sent_all: Optional[float]
    diff_pct: Optional[float]
    face_size_pct: Optional[float]
    faces_per_image: Optional[float]
    face_anps: int
    all_anps: int

    COLUMNS = ("language", "rho_face_sent", "sent_faces", "sent_all", "diff_pct",
               "face_size_pct", "faces_per_image", "face_anps", "all_anps")

    def row(self):
        return [getattr(self, c) for c in self.COLUMNS]


def diff_percent(sent_faces, sent_all) -> Optional[float]:
    if sent_faces is None or not sent_all:
        return None
    return 100.0 * (sent_faces - sent_all) / sent_all


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else None


def face_sentiment_stats(selection: FaceSelection, scores: Mapping[str, float], polarities: Mapping[str, float],
                         images: Mapping[str, Sequence[str]], detections: Iterable[FaceDetectionRecord],
                         scale: str = "rating", face_size_mode: str = "linear",
                         faces_mode: str = "all_images") -> list[PortraitStats]:
    """Per retained language: portrait-score/sentiment correlation over all
    scored ANPs, mean sentiment of face ANPs vs all ANPs, face size and
    faces per image over the images of the face ANPs.

    ``polarities`` are on [-1, 1]; ``scale="rating"`` reports means on the
    1-5 scale. ``faces_mode="face_images"`` averages detections over
    face-containing images only.
    """
    if scale not in ("rating", "polarity"):
        raise DataError("BAD_SCALE", f"unknown sentiment scale {scale!r}")
    if face_size_mode not in ("linear", "area"):
        raise DataError("BAD_MODE", f"unknown face size mode {face_size_mode!r}")
    if faces_mode not in ("all_images", "face_images"):
        raise DataError("BAD_MODE", f"unknown faces-per-image mode {faces_mode!r}")
    det = _face_counts(detections)
    conv = polarity_to_rating if scale == "rating" else float
    face_set = set(selection.anps)
    out = []
    for lang in selection.languages:
        scored = [k for k in sorted(scores) if anp_language(k) == lang and k in polarities]
        rho = pearson_or_none([scores[k] for k in scored], [polarities[k] for k in scored])
        lang_all = [k for k in sorted(polarities) if anp_language(k) == lang]
        faces = [k for k in lang_all if k in face_set]
        sent_faces = _mean(conv(polarities[k]) for k in faces)
        sent_all = _mean(conv(polarities[k]) for k in lang_all)
        imgs = list(dict.fromkeys(i for k in selection.anps if anp_language(k) == lang
                                  for i in images.get(k, ()) if i in det))
        boxes = [(b, det[i]) for i in imgs for b in det[i].boxes]
        size = _mean(_box_size(b, d, face_size_mode) for b, d in boxes)
        denom = len(imgs) if faces_mode == "all_images" else sum(1 for i in imgs if det[i].boxes)
        per_image = len(boxes) / denom if denom else None
        out.append(PortraitStats(lang, rho, sent_faces, sent_all, diff_percent(sent_faces, sent_all),
                                 size, per_image, len(faces), len(lang_all)))
    return out


def multilinguality_correlations(assignments: Mapping[str, int], polarities: Mapping[str, float],
                                 face_sizes: Mapping[str, float]):
    """Pearson correlation, over multi-ANP clusters, of the number of
    distinct languages with mean sentiment and with mean face size.
    Each is None when undefined (e.g. every cluster monolingual)."""
    clusters = defaultdict(list)
    for key in sorted(assignments):
        clusters[assignments[key]].append(key)
    x_s, y_s, x_f, y_f = [], [], [], []
    for cid in sorted(clusters):
        members = clusters[cid]
        if len(members) < 2:
            continue
        n_lang = len({anp_language(k) for k in members})
        sent = _mean(polarities[k] for k in members if k in polarities)
        size = _mean(face_sizes[k] for k in members if k in face_sizes)
        if sent is not None:
            x_s.append(n_lang)
            y_s.append(sent)
        if size is not None:
            x_f.append(n_lang)
            y_f.append(size)
    return pearson_or_none(x_s, y_s), pearson_or_none(x_f, y_f)


@dataclass
class LanguageProfile:
    language: str
    vector: np.ndarray


def language_profiles(assignments: Mapping[str, int], k: int, total_per_language: Optional[Mapping[str, int]] = None):
    """Per language: share of its ANPs falling in each of the k clusters.

    ``total_per_language`` overrides the normaliser (e.g. when not every ANP
    of a language was clustered).
    """
    counts = defaultdict(lambda: np.zeros(k))
    for key in sorted(assignments):
        cid = assignments[key]
        if not 0 <= cid < k:
            raise DataError("BAD_CLUSTER", f"cluster id {cid} outside 0..{k - 1}")
        counts[anp_language(key)][cid] += 1
    out = []
    for lang in sorted(counts):
        total = (total_per_language or {}).get(lang, counts[lang].sum())
        out.append(LanguageProfile(lang, counts[lang] / total))
    return out


def cluster_languages(profiles: Sequence[LanguageProfile], k_values: Iterable[int] = range(2, 7), seed: int = 0):
    """Spherical k-means over language profiles for each k.

    Returns {k: sorted list of sorted language groups}.
    """
    langs = [p.language for p in profiles]
    X = np.array([p.vector for p in profiles])
    out = {}
    for k in k_values:
        if k > len(langs):
            raise DataError("INVALID_K", f"k={k} for {len(langs)} languages")
        res = kmeans(X, k, "cosine", derive_seed(seed, f"languages:{k}"), langs)
        groups = defaultdict(list)
        for lang, lab in zip(langs, res.labels):
            groups[int(lab)].append(lang)
        out[k] = sorted(sorted(g) for g in groups.values())
    return out
