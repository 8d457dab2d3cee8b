"""HTTP annotation service.

Thin JSON layer over StudySession: one state machine per session token,
every state change flushed to an append-only JSON-lines log before the
response is acknowledged, and full session state reconstructable by
replaying stored logs through fresh (deterministic) sessions on restart.
"""

from __future__ import annotations

import logging
import secrets
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .acquisition import TupleResponse
from .embed import (
    ArchSpec,
    EmbeddingModel,
    SceneDataset,
    load_checkpoint,
)
from .errors import (
    ConflictError,
    InvalidInputError,
    NotReadyError,
    OutOfOrderError,
    ScenesimError,
)
from .metrics import SKIP
from .scenes import load_scene_archive
from .session import SessionLog, StudyConfig, StudySession, shared_query_plan
from .study import _consistency_pairs, _scan_log, report_from_logs
from .metrics import consistency as consistency_metric

logger = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    dataset_path: str
    checkpoint_path: str | None = None
    storage_dir: str = "sessions"
    study: StudyConfig = field(default_factory=StudyConfig)
    host: str = "127.0.0.1"
    port: int = 8000

    def validate(self) -> None:
        if not Path(self.dataset_path).exists():
            raise InvalidInputError(f"dataset not found: {self.dataset_path}")
        if self.checkpoint_path and not Path(self.checkpoint_path).exists():
            raise InvalidInputError(f"checkpoint not found: {self.checkpoint_path}")


class _SessionState:
    def __init__(self, session: StudySession, log_path: Path):
        self.session = session
        self.log_path = log_path
        self.flushed = 0

    def flush(self) -> None:
        events = self.session.log.events
        if self.flushed == 0 and not self.log_path.exists():
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
        import json as _json

        with open(self.log_path, "a") as f:
            for e in events[self.flushed:]:
                f.write(_json.dumps(e, sort_keys=True) + "\n")
        self.flushed = len(events)


ERROR_STATUS = {
    InvalidInputError: 400,
    OutOfOrderError: 409,
    ConflictError: 409,
    NotReadyError: 409,
}


def create_app(cfg: ServiceConfig) -> FastAPI:
    cfg.validate()
    scenes = load_scene_archive(cfg.dataset_path)
    dataset = SceneDataset(scenes)
    if cfg.checkpoint_path:
        base_model = load_checkpoint(cfg.checkpoint_path)
    else:
        in_channels = 2 * scenes[0].n_agents
        base_model = EmbeddingModel(
            ArchSpec(in_channels=in_channels, width=8, embed_dim=16), seed=cfg.study.seed
        )
    storage = Path(cfg.storage_dir)
    storage.mkdir(parents=True, exist_ok=True)
    plan = shared_query_plan(dataset, cfg.study)

    app = FastAPI(title="scenesim annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, _SessionState] = {}
    app.state.sessions = sessions
    app.state.dataset = dataset

    def _restore() -> None:
        for path in sorted(storage.glob("session-*.jsonl")):
            stored = SessionLog.load(path)
            token = path.stem.removeprefix("session-")
            created = next(
                (e for e in stored.events if e["type"] == "session_created"), None
            )
            if created is None:
                logger.warning("skipping empty session log %s", path)
                continue
            session = StudySession(
                dataset,
                base_model,
                cfg.study,
                annotator_id=stored.annotator_id,
                session_seed=created["session_seed"],
                shared_plan=plan,
            )
            for e in stored.events:
                if e["type"] == "response_recorded":
                    nq = session.next_query()
                    session.record_response(
                        TupleResponse(
                            query_id=nq["query"].query_id,
                            outcome=e["outcome"],
                            response_ms=e["response_ms"],
                            annotator_id=e.get("annotator_id", ""),
                        )
                    )
                elif e["type"] == "survey_answer":
                    session.record_survey(e["question"], e["answer"])
            state = _SessionState(session, path)
            # The rebuilt log supersedes the stored one on the next flush.
            path.unlink()
            state.flush()
            sessions[token] = state
            logger.info("restored session %s (%d events)", token, len(stored.events))

    _restore()

    @app.exception_handler(ScenesimError)
    async def _scenesim_error(request: Request, exc: ScenesimError):
        status = next(
            (s for t, s in ERROR_STATUS.items() if isinstance(exc, t)), 500
        )
        return JSONResponse(
            status_code=status,
            content={"code": type(exc).__name__, "message": str(exc)},
        )

    def _get_state(token: str) -> _SessionState:
        state = sessions.get(token)
        if state is None:
            raise KeyError(token)
        return state

    @app.exception_handler(KeyError)
    async def _not_found(request: Request, exc: KeyError):
        return JSONResponse(
            status_code=404, content={"code": "NotFound", "message": str(exc)}
        )

    @app.post("/sessions")
    async def create_session(payload: dict | None = None):
        payload = payload or {}
        token = secrets.token_hex(8)
        annotator_id = payload.get("annotator_id") or f"annotator-{token}"
        session = StudySession(
            dataset,
            base_model,
            cfg.study,
            annotator_id=annotator_id,
            session_seed=int.from_bytes(bytes.fromhex(token), "big") % (2**31),
            shared_plan=plan,
        )
        state = _SessionState(session, storage / f"session-{token}.jsonl")
        state.flush()
        sessions[token] = state
        return {
            "session_id": token,
            "annotator_id": annotator_id,
            "phases": list(cfg.study.phases),
            "tuple_size": cfg.study.tuple_size,
            "survey_questions": [
                "expertise",
                "understanding",
                "difficulty",
                "strategy_feedback",
            ],
        }

    @app.get("/sessions/{token}/query")
    async def get_query(token: str):
        state = _get_state(token)
        nq = state.session.next_query()
        state.flush()
        if nq["status"] != "query":
            return {"status": nq["status"]}
        q = nq["query"]
        return {
            "status": "query",
            "phase": nq["phase"],
            "query_id": q.query_id,
            "head": q.head,
            "body": list(q.body),
            "display_order": nq["display_order"],
            "strategy": q.strategy,
        }

    @app.post("/sessions/{token}/response")
    async def post_response(token: str, payload: dict):
        state = _get_state(token)
        try:
            response = TupleResponse(
                query_id=str(payload["query_id"]),
                outcome=payload.get("outcome"),
                response_ms=float(payload.get("response_ms", 0.0)),
                annotator_id=state.session.annotator_id,
            )
        except KeyError as e:
            raise InvalidInputError(f"missing field {e}") from e
        info = state.session.record_response(response)
        state.flush()
        return {"accepted": True, **info}

    @app.post("/sessions/{token}/survey")
    async def post_survey(token: str, payload: dict):
        state = _get_state(token)
        state.session.record_survey(
            str(payload.get("question")), str(payload.get("answer"))
        )
        state.flush()
        return {"accepted": True}

    @app.get("/sessions/{token}/metrics")
    async def session_metrics(token: str):
        state = _get_state(token)
        scan = _scan_log(state.session.log)
        pairs = _consistency_pairs(scan)
        return {
            "phase": state.session.phase,
            "complete": state.session.complete,
            "non_skip_counts": scan["non_skips"],
            "consistency": consistency_metric(pairs) if pairs else None,
        }

    @app.get("/scenes/{scene_id}")
    async def get_scene(scene_id: str):
        if scene_id not in dataset.index:
            raise KeyError(scene_id)
        return dataset[scene_id].to_dict()

    @app.get("/export/report")
    async def export_report():
        logs = [s.session.log for s in sessions.values()]
        if not logs:
            raise NotReadyError("no sessions recorded")
        import json as _json

        return _json.loads(report_from_logs(logs).to_json())

    return app
