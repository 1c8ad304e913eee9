import csv
import json
import shutil

import pytest

from anpmatch import cli, pipeline
from anpmatch.config import PipelineConfig, load_config
from anpmatch.errors import ConfigError
from anpmatch.synth import write_fixture

from conftest import DATA, write


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- configuration ----------------------------------------------------------------

def test_config_file_and_overrides(fixture_ini):
    cfg = load_config(str(fixture_ini), {"k": "7", "thresholds": "0.5", "strict": "true"})
    assert cfg.k == 7 and cfg.thresholds == [0.5] and cfg.strict is True
    assert cfg.seed == 7 and cfg.compose_mode == "learned_with_fallback"
    assert cfg.lexicon[0].endswith("lexicon.tsv")


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError) as e:
        load_config(None, {"k": "0"})
    assert e.value.code == "BAD_VALUE"
    with pytest.raises(ConfigError) as e:
        load_config(None, {"scheme": "three_stage"})
    assert e.value.code == "BAD_VALUE"
    with pytest.raises(ConfigError) as e:
        load_config(None, {"lexicon": [str(tmp_path / "nope.tsv")]})
    assert e.value.code == "MISSING_PATH"
    ini = write(tmp_path / "c.ini", "[anpmatch]\nbogus = 1\n")
    with pytest.raises(ConfigError) as e:
        load_config(str(ini))
    assert e.value.code == "UNKNOWN_KEY"
    with pytest.raises(ConfigError) as e:
        load_config(str(write(tmp_path / "d.ini", "[other]\n")))
    assert e.value.code == "BAD_CONFIG"


def test_config_hash_ignores_location_and_threads(tmp_path, fixture_path):
    copy = tmp_path / "elsewhere"
    shutil.copytree(fixture_path, copy)
    a = load_config(str(fixture_path / "fixture.ini"), {"output": "x"})
    b = load_config(str(copy / "fixture.ini"), {"output": "y", "threads": "4"})
    assert a.hash() == b.hash()
    assert a.hash() != load_config(str(copy / "fixture.ini"), {"seed": "8"}).hash()
    (copy / "lexicon.tsv").write_text((copy / "lexicon.tsv").read_text() + "en\tnew thing\tnew\tthing\t\t\t\n")
    assert a.hash() != load_config(str(copy / "fixture.ini")).hash()


def test_defaults():
    cfg = PipelineConfig().validate(check_paths=False)
    assert cfg.portrait_threshold == 0.6 and cfg.min_per_language == 20 and cfg.sample_cap == 1000


# -- CLI ------------------------------------------------------------------------

def test_missing_input_exit_code(capsys, tmp_path):
    code, _, err = run_cli(capsys, "translate", "--output", tmp_path)
    assert code == 2
    assert json.loads(err)["error"] == "MISSING_INPUT"


def test_missing_path_exit_code(capsys, tmp_path):
    code, _, err = run_cli(capsys, "ingest-check", "--lexicon", tmp_path / "none.tsv")
    assert code == 2 and json.loads(err)["error"] == "MISSING_PATH"


def test_relatedness_without_cooc(capsys, tmp_path, fixture_ini):
    code, _, err = run_cli(capsys, "relatedness", "--config", fixture_ini, "--output", tmp_path)
    assert code == 3
    payload = json.loads(err)
    assert payload["error"] == "NO_PAIRS" and payload["exit_code"] == 3


def test_strict_mode_data_error(capsys, tmp_path, fixture_path):
    bad = write(tmp_path / "lex.tsv", "en\thappy dog\thappy\tdog\t\t\t\nen\thappy dog\thappy\tdog\t\t\t\n")
    code, _, err = run_cli(capsys, "ingest-check", "--lexicon", bad, "--strict", "--output", tmp_path / "o")
    assert code == 3 and json.loads(err)["error"] == "DUPLICATE"


def test_numeric_error_exit_code(capsys, tmp_path, monkeypatch, fixture_ini):
    from anpmatch.errors import NumericError

    def boom(run):
        raise NumericError("NON_FINITE", "synthetic")

    monkeypatch.setitem(pipeline.RUNNERS, "cluster", boom)
    code, _, err = run_cli(capsys, "cluster", "--config", fixture_ini, "--output", tmp_path)
    assert code == 4 and json.loads(err)["error"] == "NON_FINITE"


def test_shift_table_matches_committed_oracle(capsys, tmp_path, fixture_ini):
    assert run_cli(capsys, "translate", "--config", fixture_ini, "--output", tmp_path)[0] == 0
    assert run_cli(capsys, "shift-table", "--config", fixture_ini, "--output", tmp_path)[0] == 0
    lines = (tmp_path / "shift_table.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config_hash=") and lines[0].endswith("seed=7")
    expected = (DATA / "expected_shift_table.csv").read_text(encoding="utf-8").splitlines()
    assert lines[1:] == expected


def test_shift_table_oracle_recomputed(fixture_path):
    import oracles
    rows = oracles.fixture_shift_table(fixture_path / "lexicon.tsv", fixture_path / "annotations.csv",
                                       fixture_path / "dictionary.tsv", ["0", "0.1", "0.2", "0.3"])
    with open(DATA / "expected_shift_table.csv", encoding="utf-8", newline="") as fh:
        assert list(csv.reader(fh))[1:] == rows


def test_stages_compose_from_disk(capsys, tmp_path, fixture_ini):
    for stage in pipeline.STAGES:
        code, out, err = run_cli(capsys, stage, "--config", fixture_ini, "--output", tmp_path)
        assert code == 0, err
        assert json.loads(out)["stage"] == stage
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 7 and len(manifest["config_hash"]) == 64
    for name, entry in manifest["artifacts"].items():
        if name.endswith(".json"):
            assert entry["content"]["config_hash"] == manifest["config_hash"]
    for name in ("shift_table.csv", "clustering.csv", "portrait_stats.csv", "cooc_triplets.csv",
                 "translations.tsv", "concept_vectors.tsv"):
        first = (tmp_path / name).read_text(encoding="utf-8").splitlines()[0]
        assert first == f"# config_hash={manifest['config_hash']} seed=7"


def test_report_needs_artifacts(capsys, tmp_path, fixture_ini):
    code, _, err = run_cli(capsys, "report", "--config", fixture_ini, "--output", tmp_path)
    assert code == 3 and json.loads(err)["error"] == "MISSING_ARTIFACT"


def test_report_twice_identical(capsys, tmp_path, fixture_ini):
    assert run_cli(capsys, "run-all", "--config", fixture_ini, "--output", tmp_path)[0] == 0
    first = (tmp_path / "manifest.json").read_bytes()
    assert run_cli(capsys, "report", "--config", fixture_ini, "--output", tmp_path)[0] == 0
    assert (tmp_path / "manifest.json").read_bytes() == first


@pytest.mark.parametrize("scheme", ["two_stage_noun", "two_stage_adj"])
def test_two_stage_schemes(capsys, tmp_path, fixture_ini, scheme):
    code, _, err = run_cli(capsys, "run-all", "--config", fixture_ini, "--output", tmp_path, "--scheme", scheme,
                           "--sem-pairs-denominator", "--connectivity-mode", "concepts")
    assert code == 0, err
    meta = json.loads((tmp_path / "clustering.json").read_text())
    assert meta["scheme"] == scheme and sum(meta["details"]["allocation"]) == 20
    cons = json.loads((tmp_path / "consistency.json").read_text())
    assert cons["mu"] == pytest.approx((cons["sem_C"] + cons["sen_C"]) / 2, abs=1e-11)
    assert "sem_C_pairs" in cons


def test_run_all_skips_unconfigured(capsys, tmp_path, fixture_path):
    code, out, _ = run_cli(capsys, "run-all", "--lexicon", fixture_path / "lexicon.tsv",
                           "--dictionary", fixture_path / "dictionary.tsv", "--output", tmp_path)
    assert code == 0
    assert json.loads(out)["stages"] == ["ingest-check", "translate", "shift-table", "report"]


def test_make_fixture_reproduces_bundled_files(capsys, tmp_path, fixture_path):
    code, _, _ = run_cli(capsys, "make-fixture", tmp_path, "--seed", "7")
    assert code == 0
    for f in fixture_path.iterdir():
        assert (tmp_path / f.name).read_bytes() == f.read_bytes(), f.name


def test_fixture_size():
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as d:
        paths = write_fixture(d, seed=11)
        rows = Path(paths["lexicon.tsv"]).read_text(encoding="utf-8").splitlines()[1:]
        langs = {r.split("\t")[0] for r in rows}
        assert langs == {"en", "es", "fr"} and 190 <= len(rows) <= 230
