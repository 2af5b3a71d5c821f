import json
import threading

import pytest
from fastapi.testclient import TestClient

from sore.core import CleanConfig, Cleaner
from sore.embedder import EmbedderConfig, RemoteProvider
from sore.errors import ProviderUnavailable
from sore.models import MAX_HTML_BYTES
from sore.service import create_app


@pytest.fixture(scope="module")
def shared_cleaner():
    return Cleaner(CleanConfig())


@pytest.fixture()
def client(shared_cleaner, tmp_path):
    app = create_app(build_cleaner=lambda: shared_cleaner, background_load=False,
                     log_path=tmp_path / "decisions.jsonl")
    with TestClient(app) as c:
        yield c


def test_clean_golden_response(client, news_html, fixtures_dir):
    r = client.post("/v1/clean", json={"html": news_html, "doc_id": "news_page"})
    assert r.status_code == 200
    golden = json.loads((fixtures_dir / "news_page.response.json").read_text(encoding="utf-8"))
    assert r.json() == golden


def test_response_shape(client, news_html, shared_cleaner):
    body = client.post("/v1/clean", json={"html": news_html}).json()
    assert body["cleaned_text"] == shared_cleaner.clean(news_html).cleaned_text
    assert body["title"] == "City council expands composting programme to all districts"
    removed_ids = {x["segment_id"] for x in body["removed"]}
    assert removed_ids == {d["segment_id"] for d in body["decisions"] if d["verdict"].startswith("removed")}
    assert all(set(x) >= {"text", "reason", "d_core", "d_outlier"} for x in body["removed"])
    assert body["fallback_applied"] is False


def test_config_overrides(client, news_html):
    body = client.post("/v1/clean", json={"html": news_html,
                                          "config_overrides": {"max_removal_fraction": 0.05}}).json()
    assert body["fallback_applied"] is True and body["removed"] == []
    r = client.post("/v1/clean", json={"html": news_html, "config_overrides": {"bogus": 1}})
    assert r.status_code == 400
    r = client.post("/v1/clean", json={"html": news_html, "config_overrides": {"core_fraction_k": 2}})
    assert r.status_code == 400


def test_bad_requests(client):
    assert client.post("/v1/clean", content=b"{not json", headers={"content-type": "application/json"}).status_code == 400
    assert client.post("/v1/clean", json={"doc_id": "x"}).status_code == 400
    assert client.post("/v1/clean", json={"html": ""}).status_code == 400


def test_empty_document_422(client):
    r = client.post("/v1/clean", json={"html": "<script>only()</script>"})
    assert r.status_code == 422 and r.json()["error"] == "EmptyDocument"
    assert client.post("/v1/clean", json={"html": "   "}).status_code == 422


def test_size_cap(client):
    big = "<p>" + "x" * (MAX_HTML_BYTES + 10) + "</p>"
    assert client.post("/v1/clean", json={"html": big}).status_code in (400, 413)
    huge = "x" * (2 * MAX_HTML_BYTES + 10)
    assert client.post("/v1/clean", json={"html": huge}).status_code == 413


def test_batch_isolation_and_order(client, news_html):
    items = [{"html": news_html, "doc_id": "a"}, {"html": "<style>x</style>", "doc_id": "b"},
             {"html": "<title>T</title><p>second document text</p>", "doc_id": "c"}, {"nope": 1}]
    r = client.post("/v1/clean/batch", json=items)
    assert r.status_code == 200
    out = r.json()
    assert [o.get("doc_id") for o in out] == ["a", "b", "c", None]
    assert out[1]["error"] == "EmptyDocument"
    assert out[3]["error"] == "BadRequest"
    assert "cleaned_text" in out[0] and "cleaned_text" in out[2]
    single = client.post("/v1/clean", json=items[0]).json()
    assert out[0] == single


def test_batch_order_under_parallelism(client):
    items = [{"html": f"<title>Doc {i}</title><p>paragraph number {i} with text</p>", "doc_id": str(i)}
             for i in range(20)]
    out = client.post("/v1/clean/batch", json=items).json()
    assert [o["doc_id"] for o in out] == [str(i) for i in range(20)]
    assert client.post("/v1/clean/batch", json=[]).json() == []
    assert client.post("/v1/clean/batch", json={"html": "x"}).status_code == 400


def test_decision_log(client, news_html, tmp_path):
    client.post("/v1/clean", json={"html": news_html, "doc_id": "d1"})
    client.post("/v1/clean", json={"html": "<p>short doc text</p>", "doc_id": "d2"})
    lines = (tmp_path / "decisions.jsonl").read_text(encoding="utf-8").splitlines()
    records = [json.loads(line) for line in lines]
    assert [r["doc_id"] for r in records].count("d1") == 72
    assert records[-1]["doc_id"] == "d2"
    for r in records:
        assert {"segment_id", "verdict", "reason", "d_core", "d_outlier", "nearest_phrase", "text",
                "truncated", "fallback_applied"} <= set(r)


def test_stats(client, news_html):
    client.post("/v1/clean", json={"html": news_html})
    client.post("/v1/clean", json={"html": news_html, "config_overrides": {"max_removal_fraction": 0.05}})
    client.post("/v1/clean", json={"html": "<script></script>"})
    s = client.get("/stats").json()
    assert s["docs_processed"] == 2
    assert s["fallback_count"] == 1
    assert s["errors"] == 1
    assert sum(s["removal_rate_histogram"].values()) == 2
    assert s["latency_ms"]["p50"] is not None and s["latency_ms"]["p99"] >= s["latency_ms"]["p50"]


def test_healthz_503_until_loaded(shared_cleaner):
    release = threading.Event()

    def slow_build():
        release.wait(10)
        return shared_cleaner

    app = create_app(build_cleaner=slow_build, background_load=True)
    with TestClient(app) as c:
        r = c.get("/healthz")
        assert r.status_code == 503 and r.json()["status"] == "loading"
        assert c.post("/v1/clean", json={"html": "<p>hello there</p>"}).status_code == 503
        release.set()
        app.state.sore.ready.wait(10)
        r = c.get("/healthz")
        assert r.status_code == 200 and r.json()["index_points"] == 112


def test_healthz_reports_load_failure():
    def broken():
        raise RuntimeError("index file unreadable")

    with TestClient(create_app(build_cleaner=broken, background_load=False)) as c:
        r = c.get("/healthz")
        assert r.status_code == 503 and "unreadable" in r.json()["detail"]


def test_embedder_unavailable_503():
    import httpx

    class Down(RemoteProvider):
        def __init__(self):
            super().__init__("http://stub", 256, max_retries=0,
                             transport=httpx.MockTransport(lambda r: httpx.Response(503)))

    config = CleanConfig(embedder=EmbedderConfig(provider="remote", dim=256, remote_endpoint="http://stub"))
    hashing = Cleaner(CleanConfig())
    cleaner = Cleaner(config, index_bytes=hashing.index_bytes, provider=Down())
    with TestClient(create_app(build_cleaner=lambda: cleaner, background_load=False)) as c:
        assert c.get("/healthz").status_code == 503
        r = c.post("/v1/clean", json={"html": "<p>hello there</p>"})
        assert r.status_code == 503 and r.json()["error"] == "ProviderUnavailable"
        out = c.post("/v1/clean/batch", json=[{"html": "<p>hello there</p>"}]).json()
        assert out[0]["error"] == "ProviderUnavailable"


def test_env_configuration(monkeypatch, tmp_path, shared_cleaner):
    index_path = tmp_path / "idx.bin"
    index_path.write_bytes(shared_cleaner.index_bytes)
    log_path = tmp_path / "env.jsonl"
    monkeypatch.setenv("SORE_INDEX_PATH", str(index_path))
    monkeypatch.setenv("SORE_LOG_PATH", str(log_path))
    import sore.service as service

    with TestClient(service.app) as c:
        c.app.state.sore.ready.wait(60)
        assert c.get("/healthz").status_code == 200
        c.post("/v1/clean", json={"html": "<p>hello there</p>", "doc_id": "env"})
    assert json.loads(log_path.read_text().splitlines()[0])["doc_id"] == "env"
