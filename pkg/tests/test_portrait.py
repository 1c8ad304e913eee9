import math

import numpy as np
import pytest

from anpmatch.errors import DataError
from anpmatch.ingest import FaceDetectionRecord, ImageTagRecord, pearson_or_none
from anpmatch.portrait import (
    LanguageProfile, anp_face_sizes, anp_images, cluster_languages, diff_percent, face_sentiment_stats,
    filter_face_anps, language_profiles, multilinguality_correlations, portrait_scores,
)


def det(i, *boxes, w=100, h=100):
    return FaceDetectionRecord(str(i), w, h, tuple(boxes))


def test_portrait_score_examples():
    imgs = {"en:a b": ["1", "2", "3", "4", "5"]}
    all_faces = [det(i, (0, 0, 10, 10)) for i in range(1, 6)]
    assert portrait_scores(all_faces, imgs)[0]["en:a b"] == 1.0
    assert portrait_scores([det(i) for i in range(1, 6)], imgs)[0]["en:a b"] == 0.0
    mixed = [det(1, (0, 0, 5, 5)), det(2, (0, 0, 5, 5)), det(3, (1, 1, 5, 5)), det(4), det(5)]
    assert portrait_scores(mixed, imgs)[0]["en:a b"] == 0.6


def test_images_without_detection_are_ignored():
    scores, excluded = portrait_scores([det(1, (0, 0, 1, 1))], {"en:x": ["1", "9"], "en:y": ["9"]})
    assert scores == {"en:x": 1.0} and excluded == ["en:y"]


def test_filter_strict_threshold_and_language_minimum():
    scores = {f"en:a{i}": 0.61 for i in range(20)}
    scores["en:edge"] = 0.6
    scores.update({f"fr:a{i}": 0.9 for i in range(19)})
    sel = filter_face_anps(scores)
    assert "en:edge" not in sel.anps and len(sel.anps) == 20
    assert sel.languages == ["en"] and sel.dropped_languages == {"fr": 19}
    with pytest.raises(DataError) as e:
        filter_face_anps({"fr:x": 0.9})
    assert e.value.code == "EMPTY_SELECTION"


def test_diff_percent():
    assert diff_percent(3.0, 3.0) == 0.0
    assert diff_percent(None, 3.0) is None and diff_percent(3.0, 0.0) is None


@pytest.mark.parametrize("faces, all_, printed", [(4.13, 3.67, 12.48), (4.30, 3.57, 20.33), (3.54, 3.55, -0.26)])
def test_table_internal_consistency(faces, all_, printed):
    assert abs(diff_percent(faces, all_) - printed) <= 0.15


def test_five_anp_language_oracle():
    # 5 ANPs, one image each except a2 (two images); detections on 200x100 images
    images = {"en:a0": ["i0"], "en:a1": ["i1"], "en:a2": ["i2", "i5"], "en:a3": ["i3"], "en:a4": ["i4"]}
    dets = [det("i0", (0, 0, 20, 10), (10, 10, 40, 20), w=200), det("i1", (0, 0, 50, 50), w=200),
            det("i2", w=200), det("i5", (0, 0, 100, 100), w=200), det("i3", w=200), det("i4", w=200)]
    pol = {"en:a0": 0.5, "en:a1": 0.25, "en:a2": -0.5, "en:a3": 0.0, "en:a4": 1.0}
    scores, _ = portrait_scores(dets, images)
    assert scores == {"en:a0": 1.0, "en:a1": 1.0, "en:a2": 0.5, "en:a3": 0.0, "en:a4": 0.0}
    sel = filter_face_anps(scores, 0.6, 2)
    (st,) = face_sentiment_stats(sel, scores, pol, images, dets)
    keys = sorted(pol)
    rho = pearson_or_none([scores[k] for k in keys], [pol[k] for k in keys])
    sent_faces = (3 + 2 * 0.5 + 3 + 2 * 0.25) / 2
    sent_all = sum(3 + 2 * p for p in pol.values()) / 5
    area = 200 * 100
    sizes = [100 * math.sqrt(20 * 10 / area), 100 * math.sqrt(40 * 20 / area), 100 * math.sqrt(50 * 50 / area)]
    assert st.rho_face_sent == pytest.approx(rho, abs=1e-12)
    assert abs(st.sent_faces - sent_faces) < 1e-9 and abs(st.sent_all - sent_all) < 1e-9
    assert abs(st.diff_pct - 100 * (sent_faces - sent_all) / sent_all) < 1e-9
    assert abs(st.face_size_pct - sum(sizes) / 3) < 1e-9
    assert st.faces_per_image == 1.5 and (st.face_anps, st.all_anps) == (2, 5)
    (area_mode,) = face_sentiment_stats(sel, scores, pol, images, dets, face_size_mode="area")
    assert abs(area_mode.face_size_pct - 100 * (200 + 800 + 2500) / area / 3) < 1e-9
    (pol_scale,) = face_sentiment_stats(sel, scores, pol, images, dets, scale="polarity")
    assert pol_scale.sent_faces == pytest.approx(0.375)


def test_faces_per_image_modes():
    images = {"en:a": ["1", "2", "3", "4"]}
    dets = [det(1, (0, 0, 1, 1), (0, 0, 2, 2)), det(2, (0, 0, 1, 1)), det(3, (0, 0, 1, 1)), det(4)]
    scores, _ = portrait_scores(dets, images)
    sel = filter_face_anps(scores, 0.6, 1)
    (a,) = face_sentiment_stats(sel, scores, {"en:a": 0.1}, images, dets)
    (b,) = face_sentiment_stats(sel, scores, {"en:a": 0.1}, images, dets, faces_mode="face_images")
    assert a.faces_per_image == 1.0 and b.faces_per_image == pytest.approx(4 / 3)


def test_face_sizes_per_anp():
    sizes = anp_face_sizes({"en:a": ["1"], "en:b": ["2"]}, [det(1, (0, 0, 10, 10)), det(2)])
    assert sizes == {"en:a": pytest.approx(10.0)}


def test_anp_images_keys():
    tags = [ImageTagRecord("1", "es", ("happy dog", "sad cat")), ImageTagRecord("2", "en", ("happy dog",))]
    assert anp_images(tags) == {"es:happy dog": ["1"], "es:sad cat": ["1"], "en:happy dog": ["2"]}


def test_multilinguality_monolingual_is_none():
    assign = {"en:a": 0, "en:b": 0, "fr:c": 1, "fr:d": 1}
    rho_s, rho_f = multilinguality_correlations(assign, {k: 0.1 for k in assign}, {})
    assert rho_s is None and rho_f is None


def test_multilinguality_six_cluster_oracle():
    rng = np.random.default_rng(3)
    langs = ["en", "es", "fr", "de"]
    assign, pol, size = {}, {}, {}
    for c in range(6):
        for j in range(c % 4 + 2):
            key = f"{langs[(c + j) % (c % 4 + 1)]}:x{c}_{j}"
            assign[key] = c
            pol[key] = float(rng.uniform(-1, 1))
            size[key] = float(rng.uniform(5, 60))
    x, ys, yf = [], [], []
    for c in range(6):
        members = [k for k in assign if assign[k] == c]
        x.append(len({k.split(":")[0] for k in members}))
        ys.append(sum(pol[k] for k in members) / len(members))
        yf.append(sum(size[k] for k in members) / len(members))

    def pearson(a, b):
        ma, mb = sum(a) / len(a), sum(b) / len(b)
        num = sum((p - ma) * (q - mb) for p, q in zip(a, b))
        return num / math.sqrt(sum((p - ma) ** 2 for p in a) * sum((q - mb) ** 2 for q in b))

    rho_s, rho_f = multilinguality_correlations(assign, pol, size)
    assert abs(rho_s - pearson(x, ys)) < 1e-12 and abs(rho_f - pearson(x, yf)) < 1e-12


def test_language_profiles_and_groups():
    assign = {"en:a": 0, "en:b": 1, "tr:c": 2, "tr:d": 2, "ru:e": 2, "fr:f": 0, "fr:g": 1}
    profiles = language_profiles(assign, 3)
    assert [p.language for p in profiles] == ["en", "fr", "ru", "tr"]
    assert profiles[0].vector.tolist() == [0.5, 0.5, 0.0]
    groups = cluster_languages(profiles, [2], seed=1)
    assert groups[2] == [["en", "fr"], ["ru", "tr"]]
    scaled = [LanguageProfile(p.language, p.vector * s) for p, s in zip(profiles, [3, 0.2, 7, 1.5])]
    assert cluster_languages(scaled, [2], seed=1) == groups
    with pytest.raises(DataError):
        cluster_languages(profiles, [5])
    with pytest.raises(DataError):
        language_profiles({"en:a": 3}, 3)


def test_identical_profiles_deterministic():
    profiles = [LanguageProfile(l, np.array([0.5, 0.5])) for l in ("de", "en", "it")]
    a = cluster_languages(profiles, [2], seed=4)
    assert a == cluster_languages(profiles, [2], seed=4)
    assert sum(len(g) for g in a[2]) == 3
