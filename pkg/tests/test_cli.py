import csv
import json
import subprocess
import sys

import pytest

from sore.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth")
    assert main(["gen-corpus", "--n", "4", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_clean_json(capsys, fixtures_dir):
    code, out, _ = run(capsys, "clean", str(fixtures_dir / "news_page.html"), "--embedder", "hashing", "--format", "json")
    assert code == 0
    body = json.loads(out)
    assert len(body["decisions"]) == 72 and body["doc_id"] == "news_page"
    golden = json.loads((fixtures_dir / "news_page.response.json").read_text(encoding="utf-8"))
    assert body == golden


def test_clean_text_from_stdin(capsys, monkeypatch, news_html, cleaner):
    import io

    monkeypatch.setattr(sys, "stdin", io.TextIOWrapper(io.BytesIO(news_html.encode("utf-8"))))
    code, out, _ = run(capsys, "clean", "-")
    assert code == 0
    assert out == cleaner.clean(news_html).cleaned_text + "\n"


def test_clean_missing_file_exit_2(capsys):
    code, _, err = run(capsys, "clean", "missing.html")
    assert code == 2 and "missing.html" in err


def test_usage_errors_exit_1(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "clean")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "clean", "x.html", "--format", "xml")[0] == 1
    assert run(capsys, "sweep", "--corpus", "c", "--k-grid", "a,b", "--d-grid", "0.8")[0] == 1
    code, _, err = run(capsys, "clean", "x.html", "--k", "3")
    assert code == 1 and "core_fraction_k" in err
    assert run(capsys, "gen-corpus", "--n", "0", "--out", "x")[0] == 1


def test_timing_and_log(capsys, tmp_path, fixtures_dir):
    log = tmp_path / "log.jsonl"
    page = str(fixtures_dir / "news_page.html")
    code, _, err = run(capsys, "clean", page, page, "--timing", "--log", str(log))
    assert code == 0
    assert err.count(" ms\n") == 2 and "ms/doc" in err and "200 ms/doc" in err
    assert len(log.read_text().splitlines()) == 144


def test_index_build_and_reuse(capsys, tmp_path, fixtures_dir):
    out = tmp_path / "idx.bin"
    assert run(capsys, "index", "build", "--out", str(out))[0] == 0
    assert out.read_bytes() == (fixtures_dir / "default_groups.idx").read_bytes()
    code, text, _ = run(capsys, "clean", str(fixtures_dir / "news_page.html"), "--index", str(out), "--format", "json")
    assert code == 0 and json.loads(text)["stats"]["n_removed"] == 47
    out.write_bytes(out.read_bytes()[:-3])
    assert run(capsys, "clean", str(fixtures_dir / "news_page.html"), "--index", str(out))[0] == 2


def test_index_build_custom_groups(capsys, tmp_path):
    groups = tmp_path / "g.txt"
    groups.write_text("[Ads]\nBuy now\n[Legal]\nTerms of use\n", encoding="utf-8")
    out = tmp_path / "g.idx"
    assert run(capsys, "index", "build", "--groups", str(groups), "--out", str(out))[0] == 0
    from sore.ann import deserialize

    assert len(deserialize(out.read_bytes())) == 2


def test_groups_lint(capsys, tmp_path, fixtures_dir):
    code, out, _ = run(capsys, "groups-lint")
    assert code == 0
    assert out == (fixtures_dir / "groups_lint.txt").read_text(encoding="utf-8")
    bad = tmp_path / "bad.txt"
    bad.write_text("[A]\n\n[B]\nx\n", encoding="utf-8")
    code, _, err = run(capsys, "groups-lint", "--groups", str(bad))
    assert code == 2 and "line 1" in err


def test_sweep_two_rows(capsys, corpus, tmp_path):
    out = tmp_path / "pr.csv"
    code, _, _ = run(capsys, "sweep", "--corpus", str(corpus), "--k-grid", "0.1,0.2", "--d-grid", "0.8", "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 and [r["k"] for r in rows] == ["0.1", "0.2"]
    assert set(rows[0]) == {"k", "d", "precision", "recall", "f", "mean_removed_fraction", "skipped"}


def test_eval_pred_and_keywords(capsys, corpus, tmp_path):
    pred = tmp_path / "pred"
    pred.mkdir()
    log = tmp_path / "log.jsonl"
    for html in sorted(corpus.glob("*.html")):
        code, text, _ = run(capsys, "clean", str(html), "--log", str(log))
        assert code == 0
        (pred / f"{html.stem}.txt").write_text(text.rstrip("\n"), encoding="utf-8")
    code, out, _ = run(capsys, "eval", "--pred", str(pred), "--truth", str(corpus), "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert report["scores"]["n_docs"] == 4 and report["scores"]["macro"]["f_score"] > 0.8
    code, out, _ = run(capsys, "eval", "--truth", str(corpus), "--keywords", str(log))
    assert code == 0 and out.splitlines()[0].split() == ["Phrase", "Occurrence", "Accuracy"]
    assert run(capsys, "eval", "--truth", str(corpus))[0] == 1


def test_clean_via_server(capsys, monkeypatch, fixtures_dir):
    import httpx
    from fastapi.testclient import TestClient

    from sore.service import create_app

    with TestClient(create_app(background_load=False)) as client:
        monkeypatch.setattr(httpx, "post", lambda url, json, timeout: client.post("/v1/clean", json=json))
        code, out, _ = run(capsys, "clean", str(fixtures_dir / "news_page.html"), "--server", "http://x", "--format", "json")
    assert code == 0
    golden = json.loads((fixtures_dir / "news_page.response.json").read_text(encoding="utf-8"))
    assert json.loads(out) == golden


def test_server_unreachable_exit_2(capsys, fixtures_dir):
    code, _, err = run(capsys, "clean", str(fixtures_dir / "news_page.html"), "--server", "http://127.0.0.1:9")
    assert code == 2 and "cannot reach" in err


def test_console_script(fixtures_dir):
    proc = subprocess.run([sys.executable, "-m", "sore.cli", "clean", str(fixtures_dir / "news_page.html")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "composting" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "sore.cli", "clean", "nope.html"], capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stderr.startswith("sore: error:")
