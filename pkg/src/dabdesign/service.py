"""HTTP service hosting design-dialogue sessions with file-backed persistence.

One JSON document per session plus an artifacts directory, written with a
write-then-rename discipline so a crash between receive and reply never
leaves a torn file.  Message handling is serialized per session with
try-locks; concurrent senders to the same session get a busy response
instead of queueing.
"""

from __future__ import annotations

import json
import os
import shutil
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from . import dialogue as dlg
from .dialogue import (
    DesignEngines,
    DesignReport,
    DialogueState,
    GroundingContext,
    LlmClient,
    LlmClientConfig,
    Phase,
)
from .fixtures import DEFAULT_FIXTURE_ID, FIXTURES
from .optim import landscape_to_csv
from .physics import ConverterParams, SamplingGrid, waveform_to_csv
from .surrogate import SurrogatePair

REPORT_FILE = "report.json"
REPORT_META_FILE = "report_meta.json"
LANDSCAPE_FILE = "landscape.csv"
WAVEFORM_FILE = "waveform.csv"
ARTIFACT_FILES = (REPORT_FILE, REPORT_META_FILE, LANDSCAPE_FILE, WAVEFORM_FILE)


@dataclass
class ApiConfig:
    data_dir: Path
    listen: str = "127.0.0.1:8080"
    llm: LlmClientConfig = field(default_factory=LlmClientConfig)
    fixtures: dict[str, ConverterParams] = field(default_factory=lambda: dict(FIXTURES))
    default_fixture: str = DEFAULT_FIXTURE_ID
    pair_checkpoint: Path | None = None
    samples_per_period: int = 512
    seed: int = 0
    concurrency_limit: int = 4

    @classmethod
    def from_env(cls, env: dict | None = None) -> "ApiConfig":
        env = env if env is not None else dict(os.environ)
        llm = LlmClientConfig(
            endpoint=env.get("DABDESIGN_LLM_ENDPOINT", ""),
            model=env.get("DABDESIGN_LLM_MODEL", "gpt-4"),
            enabled=bool(env.get("DABDESIGN_LLM_ENDPOINT")),
        )
        ckpt = env.get("DABDESIGN_PAIR_CHECKPOINT")
        return cls(
            data_dir=Path(env.get("DABDESIGN_DATA_DIR", "./dabdesign-data")),
            listen=env.get("DABDESIGN_LISTEN", "127.0.0.1:8080"),
            llm=llm,
            pair_checkpoint=Path(ckpt) if ckpt else None,
            seed=int(env.get("DABDESIGN_SEED", "0")),
        )


def write_report_artifacts(report: DesignReport, directory: Path) -> dict[str, str]:
    """Write report.json (deterministic), its runtime sidecar, and the CSVs."""
    directory.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(directory / REPORT_FILE,
                       json.dumps(report.to_dict(), sort_keys=True, indent=2))
    _atomic_write_text(directory / REPORT_META_FILE,
                       json.dumps(report.meta_dict(), sort_keys=True, indent=2))
    landscape = report.landscape_slice or report.landscape
    landscape_to_csv(landscape, directory / LANDSCAPE_FILE)
    waveform_to_csv(report.waveform, directory / WAVEFORM_FILE)
    return {name: name for name in ARTIFACT_FILES}


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


@dataclass
class SessionRecord:
    session_id: str
    state: DialogueState
    fixture_id: str
    created_at: float
    updated_at: float

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "state": self.state.to_dict(),
            "fixture_id": self.fixture_id,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionRecord":
        return cls(d["session_id"], DialogueState.from_dict(d["state"]),
                   d["fixture_id"], float(d["created_at"]), float(d["updated_at"]))


class SessionStore:
    """Directory-per-session persistence with per-session try-locks."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _dir(self, session_id: str) -> Path:
        if not session_id or "/" in session_id or session_id.startswith("."):
            raise KeyError(session_id)
        return self.data_dir / session_id

    def _doc(self, session_id: str) -> Path:
        return self._dir(session_id) / "session.json"

    def artifacts_dir(self, session_id: str) -> Path:
        return self._dir(session_id) / "artifacts"

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def save(self, record: SessionRecord) -> None:
        d = self._dir(record.session_id)
        d.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(self._doc(record.session_id),
                           json.dumps(record.to_dict(), sort_keys=True))

    def load(self, session_id: str) -> SessionRecord:
        doc = self._doc(session_id)
        if not doc.exists():
            raise KeyError(session_id)
        return SessionRecord.from_dict(json.loads(doc.read_text(encoding="utf-8")))

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.data_dir.iterdir()
                      if (p / "session.json").exists())

    def delete(self, session_id: str) -> None:
        d = self._dir(session_id)
        if not (d / "session.json").exists():
            raise KeyError(session_id)
        shutil.rmtree(d)
        with self._registry_lock:
            self._locks.pop(session_id, None)


class CreateSessionBody(BaseModel):
    fixture: str | None = None


class MessageBody(BaseModel):
    text: str


def _session_response(record: SessionRecord, store: SessionStore) -> dict:
    artifacts = []
    adir = store.artifacts_dir(record.session_id)
    if adir.exists():
        artifacts = sorted(p.name for p in adir.iterdir())
    return {
        "session_id": record.session_id,
        "phase": record.state.phase.value,
        "fixture": record.fixture_id,
        "spec": record.state.spec.to_dict(),
        "transcript": [t.to_dict() for t in record.state.transcript],
        "created_at": record.created_at,
        "updated_at": record.updated_at,
        "artifacts": artifacts,
    }


def create_app(config: ApiConfig) -> FastAPI:
    store = SessionStore(config.data_dir)
    pair: SurrogatePair | None = None
    if config.pair_checkpoint and Path(config.pair_checkpoint).exists():
        pair = SurrogatePair.load(config.pair_checkpoint)
    llm = LlmClient(config.llm) if config.llm.enabled else None
    run_slots = threading.BoundedSemaphore(config.concurrency_limit)

    app = FastAPI(title="DAB modulation design service")
    app.state.store = store
    app.state.config = config

    def engines_for(fixture_id: str) -> DesignEngines:
        cp = config.fixtures[fixture_id]
        grid = SamplingGrid.for_converter(cp, config.samples_per_period)
        return DesignEngines(cp=cp, grid=grid, pair=pair, seed=config.seed)

    @app.exception_handler(KeyError)
    async def not_found(_req: Request, exc: KeyError):
        return JSONResponse(status_code=404, content={"detail": f"not found: {exc}"})

    @app.get("/fixtures")
    def list_fixtures() -> dict:
        return {"default": config.default_fixture,
                "fixtures": {k: v.to_dict() for k, v in config.fixtures.items()}}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody | None = None) -> dict:
        fixture_id = (body.fixture if body and body.fixture else config.default_fixture)
        if fixture_id not in config.fixtures:
            raise HTTPException(422, f"unknown fixture {fixture_id!r}; "
                                     f"known: {sorted(config.fixtures)}")
        import time as _time
        now = _time.time()
        record = SessionRecord(uuid.uuid4().hex, DialogueState(), fixture_id, now, now)
        store.save(record)
        return _session_response(record, store)

    @app.get("/sessions")
    def list_sessions() -> dict:
        return {"sessions": [_session_response(store.load(sid), store)
                             for sid in store.list_ids()]}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return _session_response(store.load(session_id), store)

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> None:
        store.delete(session_id)

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict:
        lock = store.lock_for(session_id)
        if not lock.acquire(blocking=False):
            raise HTTPException(409, "session is busy handling another message")
        try:
            record = store.load(session_id)
            if record.state.phase is Phase.DONE:
                raise HTTPException(409, "session already complete")
            engines = engines_for(record.fixture_id)
            grounding = GroundingContext.for_converter(engines.cp)
            had_report = record.state.report is not None
            with run_slots:
                _state, reply = dlg.advance(record.state, body.text, grounding,
                                            engines=engines, llm=llm)
            report_ref = None
            if record.state.report is not None and not had_report:
                write_report_artifacts(record.state.report,
                                       store.artifacts_dir(session_id))
            if record.state.report is not None:
                report_ref = {"report": REPORT_FILE, "landscape": LANDSCAPE_FILE,
                              "waveform": WAVEFORM_FILE}
            import time as _time
            record.updated_at = _time.time()
            store.save(record)
            return {"reply": reply, "phase": record.state.phase.value,
                    "spec": record.state.spec.to_dict(), "report": report_ref}
        finally:
            lock.release()

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str) -> JSONResponse:
        store.load(session_id)  # 404 when the session is unknown
        path = store.artifacts_dir(session_id) / REPORT_FILE
        if not path.exists():
            raise HTTPException(404, "no report for this session yet")
        return JSONResponse(json.loads(path.read_text(encoding="utf-8")))

    @app.get("/sessions/{session_id}/artifacts/{name}")
    def get_artifact(session_id: str, name: str) -> FileResponse:
        store.load(session_id)
        if name not in ARTIFACT_FILES:
            raise HTTPException(404, f"unknown artifact {name!r}")
        path = store.artifacts_dir(session_id) / name
        if not path.exists():
            raise HTTPException(404, f"artifact {name!r} not produced yet")
        media = "text/csv" if name.endswith(".csv") else "application/json"
        return FileResponse(path, media_type=media)

    return app
