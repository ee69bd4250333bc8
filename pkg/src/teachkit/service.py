"""HTTP facade over sessions: the JSON API the web UI and scripts consume.

Handlers are thin wrappers over the session module. Each session mutation runs
under that session's lock (single writer), so concurrent clients cannot
corrupt state: one request wins, the loser receives a `conflict` error.
"""

from __future__ import annotations

import mimetypes
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, RedirectResponse, Response

from .session import (
    ConfigError,
    PendingItemError,
    Phase,
    PhaseError,
    PreparedDataset,
    Session,
    SessionConfig,
    create_session,
)
from .strategies import StrategyKind

ERROR_STATUS = {
    "bad_request": 400,
    "not_found": 404,
    "wrong_phase": 409,
    "conflict": 409,
    "internal": 500,
}


class ApiError(Exception):
    """Error with one of the fixed wire codes."""

    def __init__(self, code: str, message: str):
        assert code in ERROR_STATUS
        self.code = code
        self.message = message
        super().__init__(message)


@dataclass
class SessionRuntime:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)


class ServiceRegistry:
    """Shared state behind the app: immutable datasets, live sessions."""

    def __init__(self, log_dir: str | Path | None = None):
        self.datasets: dict[str, PreparedDataset] = {}
        self.sessions: dict[str, SessionRuntime] = {}
        self.log_dir = Path(log_dir) if log_dir is not None else None
        self._create_lock = threading.Lock()

    def add_dataset(self, prepared: PreparedDataset) -> None:
        self.datasets[prepared.data.name] = prepared

    def get_dataset(self, name: str) -> PreparedDataset:
        try:
            return self.datasets[name]
        except KeyError:
            raise ApiError("not_found", f"unknown dataset {name!r}") from None

    def get_session(self, session_id: str) -> SessionRuntime:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ApiError("not_found", f"unknown session {session_id!r}") from None

    def create(self, prepared: PreparedDataset, config: SessionConfig) -> Session:
        with self._create_lock:
            session = create_session(prepared, config, log_dir=self.log_dir)
            self.sessions[session.id] = SessionRuntime(session=session)
        return session


def _error_response(code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=ERROR_STATUS[code], content={"code": code, "message": message}
    )


def _parse_config(body: dict, registry: ServiceRegistry) -> tuple[PreparedDataset, SessionConfig]:
    if not isinstance(body, dict):
        raise ApiError("bad_request", "request body must be a JSON object")
    dataset_name = body.get("dataset")
    if not dataset_name:
        raise ApiError("bad_request", "dataset: required")
    prepared = registry.get_dataset(str(dataset_name))
    try:
        strategy = StrategyKind.parse(str(body.get("strategy", "")))
    except ValueError as exc:
        raise ApiError("bad_request", str(exc)) from None
    try:
        config = SessionConfig(
            dataset=str(dataset_name),
            strategy=strategy,
            seed=int(body.get("seed", secrets.randbits(32))),
            teach_rounds=body.get("teach_rounds"),
            test_rounds=body.get("test_rounds"),
            min_response_ms=int(body.get("min_response_ms", 3000)),
            bonus_threshold=float(body.get("bonus_threshold", 0.6)),
            prior_knowledge=bool(body.get("prior_knowledge", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ApiError("bad_request", f"invalid config: {exc}") from None
    return prepared, config


def _next_payload(session: Session) -> dict:
    if session.phase is Phase.DONE:
        return {
            "phase": "done",
            "round": session.config.teach_rounds + session.config.test_rounds,
            "item_id": None,
            "image_url": None,
        }
    pending = session.pending_item
    if pending is None:
        if session.phase is Phase.TEACHING:
            issued = session.next_teaching_item()
        else:
            issued = session.next_test_item()
        pending = session.pending_item
        assert pending is not None and pending["item_id"] == issued["item_id"]
    return {
        "phase": pending["phase"],
        "round": pending["round"],
        "total_rounds": (
            session.config.teach_rounds
            if pending["phase"] == Phase.TEACHING.value
            else session.config.test_rounds
        ),
        "item_id": pending["item_id"],
        "image_url": f"/images/{session.config.dataset}/{pending['item_id']}",
    }


def _synthetic_placeholder(item_id: str) -> Response:
    svg = (
        '<svg xmlns="http://www.w3.org/2000/svg" width="320" height="240">'
        '<rect width="100%" height="100%" fill="#e8e8f0"/>'
        f'<text x="50%" y="50%" text-anchor="middle" font-family="monospace" '
        f'font-size="16" fill="#333">{item_id}</text></svg>'
    )
    return Response(content=svg, media_type="image/svg+xml")


def create_app(registry: ServiceRegistry) -> FastAPI:
    app = FastAPI(title="teachkit", docs_url=None, redoc_url=None)
    app.state.registry = registry

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc.code, exc.message)

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        return _error_response("internal", f"{type(exc).__name__}: {exc}")

    @app.get("/api/datasets")
    async def list_datasets():
        return {
            "datasets": [
                {
                    "name": p.data.name,
                    "classes": p.data.class_names,
                    "n_items": p.data.n_items,
                }
                for p in registry.datasets.values()
            ]
        }

    @app.post("/api/sessions", status_code=201)
    async def create_session_endpoint(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise ApiError("bad_request", "body is not valid JSON") from None
        prepared, config = _parse_config(body, registry)
        try:
            session = registry.create(prepared, config)
        except ConfigError as exc:
            raise ApiError("bad_request", str(exc)) from None
        return {
            "session_id": session.id,
            "C": prepared.data.n_classes,
            "class_names": prepared.data.class_names,
            "teach_rounds": session.config.teach_rounds,
            "test_rounds": session.config.test_rounds,
        }

    @app.get("/api/sessions/{session_id}/next")
    async def next_item(session_id: str):
        runtime = registry.get_session(session_id)
        with runtime.lock:
            try:
                return _next_payload(runtime.session)
            except (PhaseError, PendingItemError) as exc:
                raise ApiError("wrong_phase", str(exc)) from None

    @app.post("/api/sessions/{session_id}/answer")
    async def submit_answer(session_id: str, request: Request):
        runtime = registry.get_session(session_id)
        try:
            body = await request.json()
        except Exception:
            raise ApiError("bad_request", "body is not valid JSON") from None
        item_id = body.get("item_id")
        class_index = body.get("class_index")
        response_ms = body.get("response_ms")
        if item_id is None or class_index is None or response_ms is None:
            raise ApiError(
                "bad_request", "answer requires item_id, class_index, response_ms"
            )
        session = runtime.session
        with runtime.lock:
            phase = session.phase
            try:
                if phase is Phase.TEACHING:
                    reveal = session.submit_teaching_answer(
                        str(item_id), int(class_index), float(response_ms)
                    )
                    return {"true_class": reveal["true_class"]}
                if phase is Phase.TESTING:
                    session.submit_test_answer(
                        str(item_id), int(class_index), float(response_ms)
                    )
                    return {}
                raise ApiError("wrong_phase", "session is finished")
            except PendingItemError as exc:
                raise ApiError("conflict", str(exc)) from None
            except PhaseError as exc:
                raise ApiError("wrong_phase", str(exc)) from None
            except (TypeError, ValueError) as exc:
                raise ApiError("bad_request", str(exc)) from None

    @app.get("/api/sessions/{session_id}/result")
    async def session_result(session_id: str):
        runtime = registry.get_session(session_id)
        with runtime.lock:
            try:
                result = runtime.session.finalize()
            except PhaseError as exc:
                raise ApiError("wrong_phase", str(exc)) from None
        return result.to_dict()

    @app.get("/images/{dataset}/{item_id}")
    async def serve_image(dataset: str, item_id: str):
        prepared = registry.get_dataset(dataset)
        try:
            index = prepared.id_to_index[item_id]
        except KeyError:
            raise ApiError("not_found", f"unknown item {item_id!r}") from None
        uri = prepared.data.image_uris[index]
        if uri.startswith(("http://", "https://")):
            return RedirectResponse(uri)
        if uri.startswith("synthetic://"):
            return _synthetic_placeholder(item_id)
        path = Path(uri)
        if not path.is_absolute() and prepared.data.source_dir is not None:
            path = prepared.data.source_dir / path
        if not path.is_file():
            raise ApiError("not_found", f"image file missing for {item_id!r}")
        media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return FileResponse(path, media_type=media_type)

    return app
