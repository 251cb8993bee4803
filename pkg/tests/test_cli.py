import json

import pytest

from vprank.cli import main


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--persons", "6", "--frames", "10", "--dim", "6", "--noise", "0.5", "--seed", "2", "--out", str(out)]) == 0
    return out


def rank(data_dir, out, *extra):
    m = str(data_dir / "manifest.json")
    return main(["rank", "--probe", m, "--gallery", m, "--out", str(out), *extra])


def test_synth_writes_manifest(data_dir):
    doc = json.loads((data_dir / "manifest.json").read_text())
    assert len(doc["videos"]) == 12 and doc["dim"] == 6


def test_synth_zero_noise_pipeline_is_perfect(tmp_path, capsys):
    out = tmp_path / "clean"
    main(["synth", "--persons", "8", "--frames", "5", "--dim", "4", "--noise", "0", "--out", str(out)])
    assert rank(out, tmp_path / "r.json", "--agg", "count") == 0
    capsys.readouterr()
    assert main(["eval", "--rankings", str(tmp_path / "r.json"), "--json", "--ranks", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["cmc"]["1"] == 1.0


@pytest.mark.parametrize("agg", ["count", "kemeny", "cemc"])
def test_rank_document(data_dir, tmp_path, agg):
    assert rank(data_dir, tmp_path / "r.json", "--agg", agg, "--seed", "9", "--k", "2") == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["method"] == agg and doc["seed"] == 9 and doc["k"] == "2" and doc["distance"] == "min"
    assert len(doc["queries"]) == 6
    q = doc["queries"][0]
    assert sorted(q["order"]) == list(range(6)) and len(q["scores"]) == 6
    if agg == "cemc":
        assert doc["params"]["samples"] == 200


def test_rank_capacity_exit_code(tmp_path):
    out = tmp_path / "big"
    main(["synth", "--persons", "11", "--frames", "2", "--dim", "2", "--out", str(out)])
    assert rank(out, tmp_path / "r.json", "--agg", "kemeny") == 3
    assert rank(out, tmp_path / "r.json", "--agg", "kemeny", "--cap", "11") == 0


def test_rank_input_error_exit_code(tmp_path, data_dir):
    assert main(["rank", "--probe", str(tmp_path / "missing.json"), "--gallery", str(tmp_path / "missing.json")]) == 2
    (data_dir / "probe" / "0000.femb").write_bytes(b"JUNKJUNKJUNKJUNK")
    assert rank(data_dir, tmp_path / "r.json") == 2


def test_bad_flag_exit_code(data_dir):
    with pytest.raises(SystemExit) as exc:
        main(["rank", "--probe", "x", "--gallery", "x", "--k", "0"])
    assert exc.value.code == 2


def test_eval_table_and_manifest_truth(data_dir, tmp_path, capsys):
    rank(data_dir, tmp_path / "r.json")
    m = str(data_dir / "manifest.json")
    capsys.readouterr()
    assert main(["eval", "--rankings", str(tmp_path / "r.json"), "--probe", m, "--gallery", m, "--ranks", "1,5"]) == 0
    text = capsys.readouterr().out
    assert "rank-1" in text and "rank-5" in text and "mAP" in text


def test_eval_rejects_bad_rankings(tmp_path):
    (tmp_path / "r.json").write_text("{}")
    assert main(["eval", "--rankings", str(tmp_path / "r.json")]) == 2


def test_bound_passes_and_json(capsys):
    assert main(["bound", "--eps", "0.1", "--t-values", "10,100", "--trials", "20000", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["holds"] and len(doc["points"]) == 2
    assert doc["points"][1]["theoretical_bound"] == pytest.approx(0.135335, abs=1e-6)


def test_bound_table(capsys):
    assert main(["bound", "--eps", "0.2", "--t-values", "5", "--trials", "1000"]) == 0
    assert "within bound" in capsys.readouterr().out


def test_diagnose_order(capsys):
    code = main(["diagnose-order", "--persons", "5", "--frames", "12", "--dim", "4", "--noise", "0.7", "--seeds", "0,1", "--agg", "all", "--json"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0 and doc["pass"]
    assert len(doc["order_invariance"]) == 6
    assert [row["k"] for row in doc["sample_rate_sweep"]] == ["1", "10", "30", "inf"]


def test_diagnose_order_on_manifests(data_dir, capsys):
    m = str(data_dir / "manifest.json")
    assert main(["diagnose-order", "--probe", m, "--gallery", m, "--seeds", "3", "--k", "1,inf"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
