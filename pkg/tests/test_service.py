"""Service tests over the in-process ASGI client; no network, LLM disabled."""

from __future__ import annotations

import json
import threading
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from dabdesign.service import ApiConfig, SessionStore, create_app

SIX_TURNS = [
    "I need to design a modulation strategy for my DAB converter",
    "Let's go with triple phase shift",
    "minimize the current stress",
    "rated power: 200 W, input voltage: 200 V, output voltage: 160 V",
    "use PSO please",
    "show me the results",
]


@pytest.fixture
def config(tmp_path) -> ApiConfig:
    return ApiConfig(data_dir=tmp_path / "data")


@pytest.fixture
def client(config) -> TestClient:
    return TestClient(create_app(config))


class TestLifecycle:
    def test_create_starts_collecting(self, client):
        resp = client.post("/sessions", json={})
        assert resp.status_code == 201
        body = resp.json()
        assert body["phase"] == "CollectStrategy"
        assert body["session_id"]
        assert body["fixture"] == "dab200"

    def test_get_unknown_is_404(self, client):
        assert client.get("/sessions/doesnotexist").status_code == 404

    def test_list_and_delete(self, client):
        a = client.post("/sessions", json={}).json()["session_id"]
        b = client.post("/sessions", json={}).json()["session_id"]
        ids = [s["session_id"] for s in client.get("/sessions").json()["sessions"]]
        assert sorted(ids) == sorted([a, b])
        assert client.delete(f"/sessions/{a}").status_code == 204
        assert client.get(f"/sessions/{a}").status_code == 404
        assert client.delete(f"/sessions/{a}").status_code == 404

    def test_unknown_fixture_rejected(self, client):
        resp = client.post("/sessions", json={"fixture": "nope"})
        assert resp.status_code == 422

    def test_fixtures_endpoint(self, client):
        body = client.get("/fixtures").json()
        assert body["default"] == "dab200"
        assert body["fixtures"]["dab200"]["v_in"] == 200.0

    def test_persistence_survives_restart(self, config):
        with TestClient(create_app(config)) as first:
            sid = first.post("/sessions", json={}).json()["session_id"]
            first.post(f"/sessions/{sid}/messages", json={"text": "use tps"})
            before = first.get(f"/sessions/{sid}").json()
        with TestClient(create_app(config)) as second:
            after = second.get(f"/sessions/{sid}").json()
        assert after["phase"] == before["phase"] == "CollectObjective"
        assert after["spec"] == before["spec"]
        assert after["transcript"] == before["transcript"]


class TestMessages:
    def test_full_flow_produces_artifacts(self, client, config):
        sid = client.post("/sessions", json={}).json()["session_id"]
        last = None
        for text in SIX_TURNS:
            last = client.post(f"/sessions/{sid}/messages", json={"text": text})
            assert last.status_code == 200, last.text
        body = last.json()
        assert body["phase"] == "Done"
        assert body["report"] == {"report": "report.json", "landscape": "landscape.csv",
                                  "waveform": "waveform.csv"}
        adir = config.data_dir / sid / "artifacts"
        for name in ("report.json", "report_meta.json", "landscape.csv", "waveform.csv"):
            assert (adir / name).exists()

        report = client.get(f"/sessions/{sid}/report")
        assert report.status_code == 200
        doc = report.json()
        assert doc["spec"]["strategy"] == "TPS"
        assert "elapsed_seconds" not in doc  # runtime lives in the meta sidecar
        meta = json.loads((adir / "report_meta.json").read_text())
        assert meta["elapsed_seconds"] > 0

        wave = client.get(f"/sessions/{sid}/artifacts/waveform.csv")
        assert wave.status_code == 200
        assert wave.text.splitlines()[0] == "t,v_p,v_s,i_l"
        land = client.get(f"/sessions/{sid}/artifacts/landscape.csv")
        assert land.text.splitlines()[0] == "d0,d1,d2,fitness,p_avg,i_pp,zvs_complete"

    def test_done_session_conflicts(self, client):
        sid = client.post("/sessions", json={}).json()["session_id"]
        for text in SIX_TURNS:
            client.post(f"/sessions/{sid}/messages", json={"text": text})
        resp = client.post(f"/sessions/{sid}/messages", json={"text": "again"})
        assert resp.status_code == 409

    def test_malformed_body_is_4xx_with_schema(self, client):
        sid = client.post("/sessions", json={}).json()["session_id"]
        resp = client.post(f"/sessions/{sid}/messages", json={"wrong": 1})
        assert resp.status_code == 422
        assert "text" in json.dumps(resp.json())

    def test_message_to_unknown_session(self, client):
        resp = client.post("/sessions/zzz/messages", json={"text": "hi"})
        assert resp.status_code == 404

    def test_busy_session_rejected(self, client, config):
        sid = client.post("/sessions", json={}).json()["session_id"]
        store: SessionStore = client.app.state.store
        lock = store.lock_for(sid)
        assert lock.acquire(blocking=False)
        try:
            resp = client.post(f"/sessions/{sid}/messages", json={"text": "use tps"})
            assert resp.status_code == 409
            assert "busy" in resp.json()["detail"]
        finally:
            lock.release()
        assert client.post(f"/sessions/{sid}/messages",
                           json={"text": "use tps"}).status_code == 200

    def test_report_before_design_is_404(self, client):
        sid = client.post("/sessions", json={}).json()["session_id"]
        assert client.get(f"/sessions/{sid}/report").status_code == 404
        assert client.get(f"/sessions/{sid}/artifacts/waveform.csv").status_code == 404


class TestAtomicity:
    def test_session_file_never_torn(self, config):
        # the write path goes through write-then-rename; the temp file must
        # not linger and the document must always parse
        client = TestClient(create_app(config))
        sid = client.post("/sessions", json={}).json()["session_id"]
        for text in SIX_TURNS[:3]:
            client.post(f"/sessions/{sid}/messages", json={"text": text})
            doc = config.data_dir / sid / "session.json"
            json.loads(doc.read_text())
            assert not doc.with_suffix(".json.tmp").exists()
