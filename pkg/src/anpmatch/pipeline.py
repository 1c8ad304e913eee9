"""Pipeline stages. Each stage reads configured inputs plus on-disk artifacts
of earlier stages from the output directory and writes its own artifacts.

Every artifact carries the config hash and seed: JSON files as top-level
keys, CSV/TSV files as a leading ``#`` comment line.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import clustering as cl
from . import embed, ingest, pivot, portrait, relatedness
from .config import PipelineConfig
from .errors import ConfigError, DataError
from .model import SentimentSource, normalize_surface

log = logging.getLogger(__name__)

STAGES = ("ingest-check", "translate", "shift-table", "compose", "cooc-build", "relatedness",
          "cluster", "consistency", "connectivity", "portrait", "report")

# Artifact file names per stage.
ARTIFACTS = {
    "ingest-check": ["ingest_report.json"],
    "translate": ["translations.tsv", "exact_match.json"],
    "shift-table": ["shift_table.csv"],
    "compose": ["concept_vectors.tsv", "compose.json"],
    "cooc-build": ["cooc_triplets.csv", "cooc_index.txt", "cooc.json"],
    "relatedness": ["relatedness.json"],
    "cluster": ["clustering.csv", "clustering.json"],
    "consistency": ["consistency.json"],
    "connectivity": ["connectivity.json"],
    "portrait": ["portrait_stats.csv", "portrait.json", "language_groups.json"],
    "report": ["manifest.json"],
}


def _clean(value):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.12g}")
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _clean(value.item())
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def _fmt(value):
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


class Run:
    """Shared state for one pipeline invocation."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.output)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config_hash = config.hash()
        self.report = ingest.IngestReport(strict=config.strict)
        self._cache = {}

    # -- writers ------------------------------------------------------------

    def stamp(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.config.seed}

    def write_json(self, name, payload):
        body = dict(self.stamp())
        body.update(payload)
        text = json.dumps(_clean(body), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        (self.out / name).write_text(text, encoding="utf-8")

    def write_table(self, name, header, rows, delimiter=","):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config_hash} seed={self.config.seed}\n")
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n",
                       quoting=csv.QUOTE_MINIMAL if delimiter == "," else csv.QUOTE_NONE, escapechar="\\")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        (self.out / name).write_text(buf.getvalue(), encoding="utf-8")

    def read_table(self, name, delimiter=","):
        path = self.out / name
        if not path.is_file():
            raise DataError("MISSING_ARTIFACT", f"{name} not found; run the producing stage first")
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader((ln for ln in fh if not ln.startswith("#")), delimiter=delimiter,
                                          quoting=csv.QUOTE_MINIMAL if delimiter == "," else csv.QUOTE_NONE,
                                          escapechar="\\")]
        return rows[0], rows[1:]

    def read_json(self, name):
        path = self.out / name
        if not path.is_file():
            raise DataError("MISSING_ARTIFACT", f"{name} not found; run the producing stage first")
        return json.loads(path.read_text(encoding="utf-8"))

    # -- inputs -------------------------------------------------------------

    def need(self, name):
        if not self.config.paths(name):
            raise ConfigError("MISSING_INPUT", f"configuration does not set {name!r}")
        return self.config.paths(name)

    def lexicons(self):
        if "lexicons" not in self._cache:
            merged = {}
            for path in self.need("lexicon"):
                for lang, lex in ingest.load_lexicons(path, self.report).items():
                    if lang in merged:
                        lex = merged[lang].with_concepts(merged[lang].concepts + lex.concepts) \
                            .with_sentiments(lex.sentiments)
                    merged[lang] = lex
            if self.config.annotations:
                crowd = self.annotations().crowd_polarities()
                merged = {lang: lex.with_sentiments(crowd.get(lang, {})) for lang, lex in merged.items()}
            self._cache["lexicons"] = dict(sorted(merged.items()))
        return self._cache["lexicons"]

    def annotations(self):
        if "annotations" not in self._cache:
            self._cache["annotations"] = ingest.load_annotations(self.need("annotations")[0], self.report)
        return self._cache["annotations"]

    def dictionary(self):
        if "dictionary" not in self._cache:
            self._cache["dictionary"] = ingest.load_dictionary(self.need("dictionary")[0], self.report)
        return self._cache["dictionary"]

    def table(self):
        if "table" not in self._cache:
            c = self.config
            self._cache["table"] = ingest.load_embeddings(self.need("embeddings")[0], c.embeddings_format,
                                                          c.embedding_window, c.embedding_tokenization)
        return self._cache["table"]

    def image_tags(self):
        if "tags" not in self._cache:
            self._cache["tags"] = ingest.load_image_tags(self.need("image_tags")[0], self.report)
        return self._cache["tags"]

    def detections(self):
        if "faces" not in self._cache:
            self._cache["faces"] = ingest.load_face_detections(self.need("face_detections")[0], self.report)
        return self._cache["faces"]

    def polarity_map(self) -> dict:
        """Concept key -> polarity from the configured source (other source as fallback)."""
        out = {}
        for lex in self.lexicons().values():
            for c in lex:
                val = lex.polarity(c, self.config.polarity_source, fallback=True)
                if val is not None:
                    out[c.key] = val.polarity
        return out

    # -- earlier artifacts --------------------------------------------------

    def translated(self):
        """Translated concepts rebuilt from translations.tsv, in lexicon order."""
        _, rows = self.read_table("translations.tsv", "\t")
        pivots = {(r[0], r[1]): r[2] for r in rows}
        return [c.with_pivot(pivots[(c.language, c.surface)])
                for lex in self.lexicons().values() for c in lex if (c.language, c.surface) in pivots]

    def concept_vectors(self):
        _, rows = self.read_table("concept_vectors.tsv", "\t")
        return {r[0]: (r[1], np.array([float(x) for x in r[3:]])) for r in rows}

    def cooc(self):
        return relatedness.load_cooccurrence(self.out / "cooc_triplets.csv", self.out / "cooc_index.txt")

    def assignments(self):
        _, rows = self.read_table("clustering.csv")
        return {r[0]: int(r[1]) for r in rows}


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_ingest_check(run: Run):
    c = run.config
    summary = {"lexicons": {l: len(x) for l, x in run.lexicons().items()}}
    if c.annotations:
        anns = run.annotations()
        try:
            agr = ingest.annotator_agreement(anns)
            summary["agreement"] = {"overall": agr.overall, "per_language": agr.per_language,
                                    "excluded": agr.excluded}
        except DataError as exc:
            summary["agreement"] = {"error": exc.code}
        crowd, auto = [], []
        for lex in run.lexicons().values():
            for con in lex:
                a = lex.polarity(con, SentimentSource.CROWDSOURCED)
                b = lex.polarity(con, SentimentSource.AUTOMATIC)
                if a is not None and b is not None:
                    crowd.append(a.polarity)
                    auto.append(b.polarity)
        summary["crowd_auto_correlation"] = ingest.pearson_or_none(crowd, auto)
        summary["crowd_auto_pairs"] = len(crowd)
    if c.dictionary:
        summary["dictionary_entries"] = len(run.dictionary())
    if c.embeddings:
        t = run.table()
        summary["embeddings"] = {"tokens": len(t), "dimension": t.dimension, "window": t.window,
                                 "tokenization": t.tokenization.value}
    if c.image_tags:
        summary["images"] = len(run.image_tags())
    if c.face_detections:
        summary["face_images"] = len(run.detections())
    summary["ingest"] = run.report.to_dict()
    run.write_json("ingest_report.json", summary)


def stage_translate(run: Run):
    client = pivot.DictionaryClient(run.dictionary())
    batch = pivot.translate_lexicons(run.lexicons().values(), client, run.config.pivot_language,
                                     run.config.threads)
    run.write_table("translations.tsv", ["language", "surface", "pivot_surface"],
                    [(x.language, x.surface, x.pivot_surface) for x in batch.concepts], "\t")
    index = pivot.exact_match_index(batch.concepts)
    groups = {k: sorted(x.key for x in v) for k, v in sorted(index.items())}
    per_lang = defaultdict(lambda: {"translated": 0, "untranslated": 0})
    for x in batch.concepts:
        per_lang[x.language]["translated"] += 1
    for key in batch.untranslated:
        per_lang[key.split(":", 1)[0]]["untranslated"] += 1
    sizes = defaultdict(int)
    for v in index.values():
        sizes[len(v)] += 1
    run.write_json("exact_match.json", {
        "pivot_language": run.config.pivot_language,
        "coverage": dict(sorted(per_lang.items())),
        "untranslated": sorted(batch.untranslated),
        "group_size_histogram": {str(k): v for k, v in sorted(sizes.items())},
        "multilingual_groups": sum(1 for v in index.values() if len({x.language for x in v}) > 1),
        "groups": groups,
    })


def stage_shift_table(run: Run):
    lexicons = run.lexicons()
    pivot_lang = run.config.pivot_language
    if pivot_lang not in lexicons:
        raise DataError("NO_PIVOT_LEXICON", f"no lexicon rows for pivot language {pivot_lang!r}")
    reports = pivot.sentiment_shift_table(lexicons, run.translated(), lexicons[pivot_lang],
                                          run.config.thresholds, run.config.polarity_source)
    run.write_table("shift_table.csv", SHIFT_HEADER, [shift_row(r) for r in reports])


SHIFT_HEADER = ["language", "threshold", "total", "matched", "shifted", "pct_of_matched", "pct_of_all"]


def shift_row(r: pivot.ShiftReport):
    pm, pa = r.shifted_pct_of_matched, r.shifted_pct_of_all
    return [r.language, f"{r.threshold:g}", r.total_count, r.matched_count, r.shifted_count,
            None if pm is None else round(pm, 6), None if pa is None else round(pa, 6)]


def stage_compose(run: Run):
    table = run.table()
    mode = run.config.compose_mode
    concepts = run.translated()
    rows, oov, dropped = [], [], 0
    for con in concepts:
        try:
            cv = embed.compose(con, table, mode)
        except DataError as exc:
            if exc.code != "OOV_CONCEPT":
                raise
            oov.append(con.key)
            continue
        dropped += bool(cv.dropped_stopwords)
        rows.append([con.key, normalize_surface(con.pivot_surface), cv.provenance.value]
                    + [repr(float(x)) for x in cv.vector])
    buf_header = ["concept_key", "pivot_surface", "provenance"] + [f"d{i}" for i in range(table.dimension)]
    run.write_table("concept_vectors.tsv", buf_header, rows, "\t")
    run.write_json("compose.json", {
        "mode": mode, "tokenization": table.tokenization.value, "window": table.window,
        "coverage": embed.coverage_report(concepts, table, mode),
        "oov": sorted(oov), "stopwords_dropped_concepts": dropped,
    })


def stage_cooc_build(run: Run):
    index = sorted({normalize_surface(c.pivot_surface) for c in run.translated()})
    cap = run.config.sample_cap or None
    cooc, stats = relatedness.build_cooccurrence(run.image_tags(), index, cap)
    relatedness.save_cooccurrence(cooc, run.out / "cooc_triplets.csv", run.out / "cooc_index.txt")
    with open(run.out / "cooc_triplets.csv", "r+", encoding="utf-8") as fh:
        body = fh.read()
        fh.seek(0)
        fh.write(f"# config_hash={run.config_hash} seed={run.config.seed}\n" + body)
    run.write_json("cooc.json", {
        "concepts": len(cooc), "nonzero_pairs": sum(1 for _ in cooc.nonzero_pairs()),
        "images": stats.images, "capped_tags": stats.capped_tags, "sample_cap": cap,
        "unknown_tags": dict(sorted(stats.unknown_tags.items())),
    })


def _pivot_vectors(vectors):
    out = {}
    for key in sorted(vectors):
        surface, vec = vectors[key]
        out.setdefault(surface, vec)
    return out


def stage_relatedness(run: Run):
    if not (run.out / "cooc_triplets.csv").is_file():
        raise DataError("NO_PAIRS", "no co-occurrence data; run cooc-build first")
    cooc = run.cooc()
    vectors = run.concept_vectors()
    members = defaultdict(set)
    for key, (surface, _) in vectors.items():
        members[key.split(":", 1)[0]].add(surface)
    res = relatedness.relatedness_by_language(_pivot_vectors(vectors), cooc, members,
                                              run.config.relatedness_assignment)
    if res.pair_count_mismatch:
        log.warning("closed-form pair count %s differs from counted %s", res.closed_form_pairs, res.pairs)
    run.write_json("relatedness.json", dict(res.to_dict(), assignment=run.config.relatedness_assignment))


def stage_cluster(run: Run):
    c = run.config
    vectors = {k: v for k, (_, v) in run.concept_vectors().items()}
    seed = cl.derive_seed(c.seed, "cluster")
    if c.scheme == "one_stage":
        result = cl.cluster_one_stage(vectors, c.k, seed, c.threads)
    else:
        mode = "noun_first" if c.scheme == "two_stage_noun" else "adj_first"
        result = cl.cluster_two_stage(run.translated(), vectors, run.table(), mode, c.k, seed,
                                      c.groups or None, c.threads)
    run.write_table("clustering.csv", ["concept_key", "cluster_id"],
                    [(k, result.assignments[k]) for k in sorted(result.assignments)])
    run.write_json("clustering.json", {
        "scheme": result.scheme.value, "k": result.k, "stage_seed": seed, "inertia": result.inertia,
        "iterations": len(result.history), "concepts": len(result.assignments),
        "cluster_sizes": [len(m) for m in result.clusters.values()], "details": result.details,
    })


def _clustering_from_disk(run: Run) -> cl.Clustering:
    meta = run.read_json("clustering.json")
    return cl.Clustering(meta["k"], run.assignments(), meta["inertia"], meta["stage_seed"], cl.Scheme(meta["scheme"]))


def stage_consistency(run: Run):
    clustering = _clustering_from_disk(run)
    pivot_of = {k: s for k, (s, _) in run.concept_vectors().items()}
    if not (run.out / "cooc_triplets.csv").is_file():
        raise DataError("NO_PAIRS", "no co-occurrence data; run cooc-build first")
    rep = cl.consistency_report(clustering, run.cooc(), pivot_of, run.polarity_map(),
                                run.config.sem_pairs_denominator)
    run.write_json("consistency.json", dict(rep.to_dict(), scheme=clustering.scheme.value,
                                            polarity_source=run.config.polarity_source))


def stage_connectivity(run: Run):
    assignments = run.assignments()
    langs = {k: k.split(":", 1)[0] for k in assignments}
    conn = cl.connectivity_matrix(assignments, langs, run.config.connectivity_mode)
    run.write_json("connectivity.json", conn.to_dict())


def stage_portrait(run: Run):
    c = run.config
    tags = run.image_tags()
    dets = run.detections()
    images = portrait.anp_images(tags)
    scores, excluded = portrait.portrait_scores(dets, images)
    selection = portrait.filter_face_anps(scores, c.portrait_threshold, c.min_per_language)

    # ANP polarity: mean over the concepts of that language translating to the tag.
    pol = run.polarity_map()
    acc = defaultdict(list)
    for con in run.translated():
        if con.key in pol:
            acc[portrait.anp_key(con.language, normalize_surface(con.pivot_surface))].append(pol[con.key])
    anp_pol = {k: math.fsum(v) / len(v) for k, v in sorted(acc.items())}
    stats = portrait.face_sentiment_stats(selection, scores, anp_pol, images, dets, "rating",
                                          c.face_size_mode, c.faces_mode)
    run.write_table("portrait_stats.csv", list(portrait.PortraitStats.COLUMNS), [s.row() for s in stats])

    vectors = _pivot_vectors(run.concept_vectors())
    face_vecs = {}
    for key in selection.anps:
        surface = key.split(":", 1)[1]
        if surface in vectors:
            face_vecs[key] = vectors[surface]
    k_face = min(c.portrait_k or c.k, len(face_vecs))
    payload = {"selection": {"face_anps": len(selection.anps), "languages": selection.languages,
                             "dropped_languages": selection.dropped_languages,
                             "unscored_anps": len(excluded), "threshold": c.portrait_threshold,
                             "min_per_language": c.min_per_language},
               "face_size_mode": c.face_size_mode, "faces_mode": c.faces_mode}
    groups = {}
    if k_face >= 1:
        face_seed = cl.derive_seed(c.seed, "portrait")
        fc = cl.cluster_one_stage(face_vecs, k_face, face_seed, c.threads)
        sizes = portrait.anp_face_sizes(images, dets, c.face_size_mode)
        rho_sent, rho_size = portrait.multilinguality_correlations(fc.assignments, anp_pol, sizes)
        totals = defaultdict(int)
        for key in selection.anps:
            totals[portrait.anp_language(key)] += 1
        profiles = portrait.language_profiles(fc.assignments, k_face, totals)
        k_hi = min(c.language_k_max, len(profiles))
        ks = list(range(c.language_k_min, k_hi + 1))
        groups = portrait.cluster_languages(profiles, ks, cl.derive_seed(c.seed, "portrait:languages"))
        payload.update({
            "face_clustering": {"k": k_face, "stage_seed": face_seed, "inertia": fc.inertia,
                                "clustered_anps": len(face_vecs)},
            "multilinguality": {"rho_languages_sentiment": rho_sent, "rho_languages_facesize": rho_size},
            "language_profiles": {p.language: p.vector.tolist() for p in profiles},
            "language_k_range": ks,
        })
    run.write_json("portrait.json", payload)
    run.write_json("language_groups.json", {"groups": {str(k): v for k, v in groups.items()}})


def stage_report(run: Run):
    artifacts = {}
    for stage in STAGES[:-1]:
        for name in ARTIFACTS[stage]:
            path = run.out / name
            if not path.is_file():
                continue
            data = path.read_bytes()
            entry = {"stage": stage, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
            if name.endswith(".json"):
                entry["content"] = json.loads(data.decode("utf-8"))
            elif name.endswith(".csv") and name not in ("cooc_triplets.csv", "clustering.csv"):
                entry["content"] = data.decode("utf-8")
            artifacts[name] = entry
    if not artifacts:
        raise DataError("MISSING_ARTIFACT", "no stage artifacts to bundle")
    run.write_json("manifest.json", {"config": run.config.canonical(), "artifacts": artifacts})


RUNNERS = {
    "ingest-check": stage_ingest_check,
    "translate": stage_translate,
    "shift-table": stage_shift_table,
    "compose": stage_compose,
    "cooc-build": stage_cooc_build,
    "relatedness": stage_relatedness,
    "cluster": stage_cluster,
    "consistency": stage_consistency,
    "connectivity": stage_connectivity,
    "portrait": stage_portrait,
    "report": stage_report,
}

# Inputs a stage cannot run without (run-all skips the stage when unset).
REQUIRES = {
    "translate": ("lexicon", "dictionary"),
    "shift-table": ("lexicon", "dictionary"),
    "compose": ("lexicon", "dictionary", "embeddings"),
    "cooc-build": ("lexicon", "dictionary", "image_tags"),
    "relatedness": ("lexicon", "dictionary", "embeddings", "image_tags"),
    "cluster": ("lexicon", "dictionary", "embeddings"),
    "consistency": ("lexicon", "dictionary", "embeddings", "image_tags"),
    "connectivity": ("lexicon", "dictionary", "embeddings"),
    "portrait": ("lexicon", "dictionary", "embeddings", "image_tags", "face_detections"),
}


def run_stage(stage: str, config: PipelineConfig, run: Run = None) -> Run:
    if stage not in RUNNERS:
        raise ConfigError("UNKNOWN_STAGE", f"unknown stage {stage!r}")
    run = run or Run(config)
    RUNNERS[stage](run)
    return run


def run_all(config: PipelineConfig) -> list:
    """Run every stage whose inputs are configured; returns the stages run."""
    run = Run(config)
    done = []
    for stage in STAGES:
        if any(not config.paths(p) for p in REQUIRES.get(stage, ())):
            log.info("skipping %s: inputs not configured", stage)
            continue
        RUNNERS[stage](run)
        done.append(stage)
    return done
