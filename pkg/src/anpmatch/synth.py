"""Deterministic synthetic fixture: three languages (en, es, fr), ~200 ANPs,
annotations, a pivot dictionary, a small word+ANP embedding table, image tags
and face detections. Used for the bundled demo run and the end-to-end tests.

Everything is drawn from ``numpy.random.default_rng(seed)`` and written with
fixed formatting, so the same seed gives byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

# english, spanish, french, valence
ADJECTIVES = [
    ("happy", "feliz", "heureux", 0.8),
    ("sad", "triste", "triste", -0.7),
    ("beautiful", "hermoso", "beau", 0.9),
    ("ugly", "feo", "laid", -0.8),
    ("old", "viejo", "vieux", -0.1),
    ("young", "joven", "jeune", 0.4),
    ("dark", "oscuro", "sombre", -0.4),
    ("bright", "brillante", "lumineux", 0.6),
    ("quiet", "tranquilo", "calme", 0.3),
    ("angry", "enojado", "fâché", -0.8),
    ("lonely", "solitario", "solitaire", -0.5),
    ("funny", "gracioso", "drôle", 0.7),
    ("cold", "frío", "froid", -0.2),
    ("warm", "cálido", "chaud", 0.5),
    ("wild", "salvaje", "sauvage", 0.1),
    ("cute", "lindo", "mignon", 0.8),
]

# english, spanish, french, topic, depicts people
NOUNS = [
    ("dog", "perro", "chien", "animal", False),
    ("cat", "gato", "chat", "animal", False),
    ("girl", "chica", "fille", "people", True),
    ("boy", "chico", "garçon", "people", True),
    ("face", "cara", "visage", "people", True),
    ("smile", "sonrisa", "sourire", "people", True),
    ("man", "hombre", "homme", "people", True),
    ("woman", "mujer", "femme", "people", True),
    ("street", "calle", "rue", "city", False),
    ("city", "ciudad", "ville", "city", False),
    ("house", "casa", "maison", "city", False),
    ("sky", "cielo", "ciel", "nature", False),
    ("forest", "bosque", "forêt", "nature", False),
    ("sea", "mar", "mer", "nature", False),
    ("flower", "flor", "fleur", "nature", False),
]

TOPICS = ("animal", "people", "city", "nature")
COUNTS = {"en": 90, "es": 70, "fr": 50}
LANG_WEIGHTS = {"en": 0.45, "es": 0.33, "fr": 0.22}
DIM = 16
N_IMAGES = 600
WIDTH, HEIGHT = 640, 480

# Extra concepts whose translation is not word-for-word.
EXTRAS = [
    # language, surface, adjective, nouns, pivot, valence
    ("es", "casa de campo", "", "casa campo", "house of the country", 0.4),
    ("fr", "vieux garçon", "vieux", "garçon", "lonely man", -0.3),
    ("es", "perro caliente", "caliente", "perro", "hot dog", 0.3),
]
UNTRANSLATED = [
    ("es", "gato negro", "negro", "gato", -0.2),
    ("fr", "ciel gris", "gris", "ciel", -0.3),
]


def _surface(lang, adj, noun):
    return f"{adj} {noun}" if lang == "en" else f"{noun} {adj}"


def _build_concepts(rng):
    """(language, surface, adjective, noun, pivot or None, valence, topic, person)."""
    combos = [(a, n) for a in range(len(ADJECTIVES)) for n in range(len(NOUNS))]
    out = []
    for li, lang in enumerate(("en", "es", "fr")):
        picks = sorted(rng.choice(len(combos), COUNTS[lang], replace=False))
        for p in picks:
            a, n = combos[p]
            adj, noun = ADJECTIVES[a][li], NOUNS[n][li]
            pivot = f"{ADJECTIVES[a][0]} {NOUNS[n][0]}"
            out.append((lang, _surface(lang, adj, noun), adj, noun, pivot,
                        ADJECTIVES[a][3], NOUNS[n][3], NOUNS[n][4]))
    for lang, surface, adj, nouns, pivot, val in EXTRAS:
        out.append((lang, surface, adj, nouns, pivot, val, "people" if "man" in pivot else "city",
                    "man" in pivot))
    for lang, surface, adj, noun, val in UNTRANSLATED:
        out.append((lang, surface, adj, noun, None, val, "animal", False))
    return out


def _latent(rng, concepts):
    """Per-concept latent sentiment. Non-English concepts drift from the
    English valence and occasionally flip sign (culture-specific shifts)."""
    out = []
    for c in concepts:
        lang, val = c[0], c[5]
        s = val + rng.normal(0, 0.15)
        if lang != "en" and rng.random() < 0.15:
            s = -s
        out.append(float(np.clip(s, -1, 1)))
    return out


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")


def write_fixture(directory, seed: int = 7) -> dict:
    """Write the fixture files plus ``fixture.ini``; returns name -> path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    concepts = _build_concepts(rng)
    latent = _latent(rng, concepts)

    # lexicon: automatic polarity given, crowd polarity comes from annotations
    lines = ["language\tsurface\tadjective\tnouns\tcrowd_polarity\tauto_polarity\tpos"]
    for c, s in zip(concepts, latent):
        auto = float(np.clip(s + rng.normal(0, 0.2), -1, 1))
        lines.append(f"{c[0]}\t{c[1]}\t{c[2]}\t{c[3]}\tNA\t{auto:.3f}\t")
    _write(d / "lexicon.tsv", "\n".join(lines) + "\n")

    rows = ["language,surface,worker_id,rating"]
    for c, s in zip(concepts, latent):
        for w in rng.choice(40, 5, replace=False):
            r = int(np.clip(np.rint(3 + 2 * s + rng.normal(0, 0.6)), 1, 5))
            rows.append(f"{c[0]},{c[1]},w{int(w):02d},{r}")
    _write(d / "annotations.csv", "\n".join(rows) + "\n")

    lines = ["language\tsurface\tpivot_surface"]
    for c in concepts:
        if c[0] != "en" and c[4] is not None:
            lines.append(f"{c[0]}\t{c[1]}\t{c[4]}")
    _write(d / "dictionary.tsv", "\n".join(lines) + "\n")

    # embeddings: noun vectors cluster by topic, adjective vectors by valence
    centers = {t: rng.normal(0, 1, DIM) for t in TOPICS}
    axis = rng.normal(0, 1, DIM)
    words = {}
    for en, _, _, val in ADJECTIVES:
        words[en] = val * axis + rng.normal(0, 0.4, DIM)
    for en, _, _, topic, _ in NOUNS:
        words[en] = centers[topic] + rng.normal(0, 0.4, DIM)
    for w in ("hot", "lonely", "country", "of", "the"):
        words.setdefault(w, rng.normal(0, 1, DIM))
    pivots = sorted({c[4] for c in concepts if c[4] is not None and c[0] == "en"})
    for p in pivots[::3]:
        a, n = p.split()
        words[f"{a}_{n}"] = words[a] + words[n] + rng.normal(0, 0.3, DIM)
    lines = [f"{len(words)} {DIM}"]
    for tok in sorted(words):
        lines.append(tok + " " + " ".join(f"{x:.6f}" for x in words[tok]))
    _write(d / "embeddings.txt", "\n".join(lines) + "\n")

    # image tags: each image has a language and topic and 1-4 ANP tags
    by_lang_topic = {}
    for c in concepts:
        if c[4] is not None:
            by_lang_topic.setdefault((c[0], c[6]), []).append(c)
    langs = list(LANG_WEIGHTS)
    weights = np.array([LANG_WEIGHTS[l] for l in langs])
    tag_lines = ["image_id\tlanguage\tanp_tags"]
    face_lines = ["image_id,width,height,x,y,w,h"]
    for i in range(N_IMAGES):
        lang = langs[rng.choice(len(langs), p=weights)]
        topic = TOPICS[rng.integers(len(TOPICS))]
        pool = by_lang_topic.get((lang, topic)) or [c for c in concepts if c[0] == lang and c[4]]
        n_tags = int(rng.integers(1, 5))
        idx = rng.choice(len(pool), min(n_tags, len(pool)), replace=False)
        tags = [pool[j] for j in sorted(idx)]
        if rng.random() < 0.2:  # off-topic tag
            others = [c for c in concepts if c[0] == lang and c[4] is not None]
            tags.append(others[rng.integers(len(others))])
        image_id = f"img{i:04d}"
        tag_lines.append(f"{image_id}\t{lang}\t" + "|".join(dict.fromkeys(c[4] for c in tags)))
        if rng.random() < 0.03:
            continue  # no detector output for this image
        people = sum(c[7] for c in tags) / len(tags)
        n_faces = 0
        if rng.random() < 0.08 + 0.85 * people:
            n_faces = int(rng.integers(1, 4))
        if n_faces == 0:
            face_lines.append(f"{image_id},{WIDTH},{HEIGHT},,,,")
        for _ in range(n_faces):
            w = int(rng.integers(24, 200))
            h = int(min(HEIGHT, round(w * rng.uniform(1.0, 1.3))))
            x = int(rng.integers(0, WIDTH - w + 1))
            y = int(rng.integers(0, HEIGHT - h + 1))
            face_lines.append(f"{image_id},{WIDTH},{HEIGHT},{x},{y},{w},{h}")
    _write(d / "image_tags.tsv", "\n".join(tag_lines) + "\n")
    _write(d / "faces.csv", "\n".join(face_lines) + "\n")

    _write(d / "fixture.ini", "\n".join([
        "[anpmatch]",
        "lexicon = lexicon.tsv",
        "annotations = annotations.csv",
        "dictionary = dictionary.tsv",
        "embeddings = embeddings.txt",
        "image_tags = image_tags.tsv",
        "face_detections = faces.csv",
        "pivot_language = en",
        "embedding_tokenization = words_plus_anp",
        "compose_mode = learned_with_fallback",
        "scheme = one_stage",
        "k = 20",
        f"seed = {seed}",
        "thresholds = 0, 0.1, 0.2, 0.3",
        "min_per_language = 5",
        "portrait_k = 8",
        "language_k_min = 2",
        "language_k_max = 3",
        "",
    ]))
    names = ("lexicon.tsv", "annotations.csv", "dictionary.tsv", "embeddings.txt",
             "image_tags.tsv", "faces.csv", "fixture.ini")
    return {n: d / n for n in names}


def fixture_dir() -> Path:
    """Directory of the fixture bundled with the package."""
    return Path(__file__).resolve().parent / "data" / "fixture"
