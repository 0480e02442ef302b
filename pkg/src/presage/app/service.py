"""HTTP/JSON service: loaded bundles, per-session instance state, and thin
deterministic wrappers over the library operations."""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..dataset import Instance, apply_normalizer, load_instances
from ..explain import Explanation
from ..forecast import run_forecaster, slide_window
from ..mathcore import DimensionMismatchError
from ..models import ModelBundle, load_bundle, pm_predict
from ..prescribe import (
    MOD_KINDS,
    MODE_FUTURE,
    MODE_WITHIN_WINDOW,
    Modification,
    apply_modification,
    compare_prescription,
    xyz_prescribe,
)
from . import ops

DEFAULT_TTL_SECONDS = 30 * 60


class ApiFailure(Exception):
    """Maps one handler failure to one machine-readable code."""

    def __init__(self, status: int, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.detail = detail or {}


def _not_found(code: str, message: str) -> ApiFailure:
    return ApiFailure(404, code, message)


def _bad_request(code: str, message: str) -> ApiFailure:
    return ApiFailure(400, code, message)


@dataclass
class LoadedBundle:
    name: str
    bundle: ModelBundle
    instances: list[Instance]  # raw windows from the store


@dataclass
class Session:
    id: str
    bundle_name: str
    instance_index: int
    seed: int
    base: Instance  # normalized
    modifications: list[Modification] = field(default_factory=list)
    current: Instance | None = None
    explanation: Explanation | None = None
    explanation_payload: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)

    def replay(self) -> Instance:
        instance = self.base
        for mod in self.modifications:
            instance = apply_modification(instance, mod)
        self.current = instance
        return instance


class EngineState:
    """All service state: immutable bundles plus mutable sessions."""

    def __init__(self, bundles: list[LoadedBundle], ttl_seconds: float = DEFAULT_TTL_SECONDS):
        if not bundles:
            raise ValueError("the service needs at least one bundle")
        self.bundles = {lb.name: lb for lb in bundles}
        self.default_bundle = bundles[0].name
        self.ttl = ttl_seconds
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def bundle(self, name: str) -> LoadedBundle:
        if name not in self.bundles:
            raise _not_found("unknown_bundle", f"no bundle named {name!r}")
        return self.bundles[name]

    def create_session(self, bundle_name: str, instance_index: int, seed: int) -> Session:
        loaded = self.bundle(bundle_name)
        if not 0 <= instance_index < len(loaded.instances):
            raise _not_found(
                "unknown_instance",
                f"instance {instance_index} out of range (bundle has {len(loaded.instances)})",
            )
        base = apply_normalizer(loaded.instances[instance_index], loaded.bundle.normalizer)
        session = Session(
            id=uuid.uuid4().hex,
            bundle_name=bundle_name,
            instance_index=instance_index,
            seed=seed,
            base=base,
        )
        session.current = base
        with self._lock:
            self._purge_expired()
            self.sessions[session.id] = session
        return session

    def session(self, session_id: str) -> Session:
        with self._lock:
            self._purge_expired()
            session = self.sessions.get(session_id)
            if session is None:
                raise _not_found("unknown_session", f"no session {session_id!r}")
            session.last_access = time.monotonic()
            return session

    def delete_session(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self.sessions:
                raise _not_found("unknown_session", f"no session {session_id!r}")
            del self.sessions[session_id]

    def _purge_expired(self) -> None:
        now = time.monotonic()
        expired = [sid for sid, s in self.sessions.items() if now - s.last_access > self.ttl]
        for sid in expired:
            del self.sessions[sid]


def load_engine_state(
    pairs: list[tuple[str | Path, str | Path]], ttl_seconds: float = DEFAULT_TTL_SECONDS
) -> EngineState:
    """Load (bundle file, instance directory) pairs and cross-check them."""
    loaded = []
    for bundle_path, store_path in pairs:
        bundle = load_bundle(bundle_path)
        store = load_instances(store_path)
        if store.geometry != bundle.geometry:
            raise ValueError(
                f"{store_path}: store geometry {store.geometry} does not match bundle {bundle.geometry}"
            )
        if not np.allclose(store.normalizer.mean, bundle.normalizer.mean, atol=1e-9) or not np.allclose(
            store.normalizer.std, bundle.normalizer.std, atol=1e-9
        ):
            raise ValueError(f"{store_path}: store normalizer disagrees with bundle")
        loaded.append(
            LoadedBundle(name=Path(bundle_path).stem, bundle=bundle, instances=store.instances)
        )
    return EngineState(loaded, ttl_seconds)


class CreateSessionRequest(BaseModel):
    bundle: str | None = None
    instance_index: int = Field(ge=0)
    seed: int = 0


class ExplainRequest(BaseModel):
    method: str
    seed: int | None = None
    count: int = Field(default=ops.DEFAULT_NEIGHBOR_COUNT, ge=10, le=5000)


class ModifyRequest(BaseModel):
    feature: int = Field(ge=0)
    start: int = Field(ge=0)
    end: int = Field(gt=0)
    kind: str
    amplitude: float = Field(default=0.0, ge=0.0)
    seed: int = 0


class ForecastRequest(BaseModel):
    forecaster: str = "neural"
    Z: int | None = Field(default=None, ge=1)


class PrescribeRequest(BaseModel):
    desired_target: float = Field(ge=0.0)
    mode: str = MODE_FUTURE
    forecaster: str = "neural"


def _session_json(state: EngineState, session: Session) -> dict:
    bundle = state.bundle(session.bundle_name).bundle
    return {
        "id": session.id,
        "bundle": session.bundle_name,
        "instance_index": session.instance_index,
        "seed": session.seed,
        "geometry": ops.geometry_to_json(bundle.geometry),
        "rul_scale": bundle.normalizer.rul_scale,
        "modifications": [ops.modification_to_json(m) for m in session.modifications],
        "instance": ops.instance_to_json(session.current, bundle),
        "explained": session.explanation is not None,
    }


def _prediction_json(state: EngineState, session: Session) -> dict:
    bundle = state.bundle(session.bundle_name).bundle
    scale = bundle.normalizer.rul_scale
    return {
        "rul": pm_predict(bundle.pm, session.current, scale),
        "base_rul": pm_predict(bundle.pm, session.base, scale),
        "local_prediction": session.explanation.local_prediction if session.explanation else None,
        "modification_count": len(session.modifications),
    }


def create_app(state: EngineState, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="presage", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiFailure)
    async def _api_failure(request: Request, exc: ApiFailure):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": str(exc), "detail": exc.detail},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "validation", "message": "invalid request", "detail": {"errors": exc.errors()}},
        )

    @app.exception_handler(Exception)
    async def _internal(request: Request, exc: Exception):
        return JSONResponse(
            status_code=500,
            content={"code": "internal", "message": str(exc), "detail": {}},
        )

    @app.get("/bundles")
    def list_bundles():
        return [
            {
                "name": lb.name,
                "geometry": ops.geometry_to_json(lb.bundle.geometry),
                "instance_count": len(lb.instances),
                "rul_scale": lb.bundle.normalizer.rul_scale,
            }
            for lb in state.bundles.values()
        ]

    @app.get("/bundles/{name}/instances")
    def list_instances(name: str):
        lb = state.bundle(name)
        return {
            "count": len(lb.instances),
            "items": [
                {
                    "index": i,
                    "unit_id": inst.unit_id,
                    "end_cycle": inst.end_cycle,
                    "rul_target": inst.rul_target,
                }
                for i, inst in enumerate(lb.instances)
            ],
        }

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        session = state.create_session(
            request.bundle or state.default_bundle, request.instance_index, request.seed
        )
        return _session_json(state, session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_json(state, state.session(session_id))

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        state.delete_session(session_id)
        return Response(status_code=204)

    @app.get("/sessions/{session_id}/prediction")
    def prediction(session_id: str):
        session = state.session(session_id)
        with session.lock:
            return _prediction_json(state, session)

    @app.post("/sessions/{session_id}/explain")
    def explain(session_id: str, request: ExplainRequest):
        session = state.session(session_id)
        bundle = state.bundle(session.bundle_name).bundle
        with session.lock:
            seed = session.seed if request.seed is None else request.seed
            try:
                explanation, metrics = ops.run_explanation(
                    bundle, session.current, request.method, seed, request.count
                )
            except ValueError as exc:
                raise _bad_request("validation", str(exc)) from exc
            session.explanation = explanation
            payload = ops.explanation_payload(explanation, metrics, seed)
            session.explanation_payload = payload
            return payload

    @app.post("/sessions/{session_id}/modify")
    def modify(session_id: str, request: ModifyRequest):
        session = state.session(session_id)
        bundle = state.bundle(session.bundle_name).bundle
        geo = bundle.geometry
        if request.kind not in MOD_KINDS:
            raise _bad_request("validation", f"unknown modification kind {request.kind!r}")
        if request.feature >= geo.J or request.end > geo.N or request.start >= request.end:
            raise ApiFailure(
                409,
                "geometry_mismatch",
                f"modification range does not fit geometry J={geo.J}, N={geo.N}",
            )
        mod = Modification(
            feature=request.feature,
            start=request.start,
            end=request.end,
            kind=request.kind,
            amplitude=request.amplitude,
            seed=request.seed,
        )
        with session.lock:
            session.modifications.append(mod)
            session.replay()
            session.explanation = None
            session.explanation_payload = None
            return {
                "modification": ops.modification_to_json(mod),
                "prediction": _prediction_json(state, session),
                "instance": ops.instance_to_json(session.current, bundle),
            }

    @app.delete("/sessions/{session_id}/modify/last")
    def undo_modification(session_id: str):
        session = state.session(session_id)
        bundle = state.bundle(session.bundle_name).bundle
        with session.lock:
            if not session.modifications:
                raise _bad_request("no_modifications", "no modification to undo")
            removed = session.modifications.pop()
            session.replay()
            session.explanation = None
            session.explanation_payload = None
            return {
                "removed": ops.modification_to_json(removed),
                "prediction": _prediction_json(state, session),
                "instance": ops.instance_to_json(session.current, bundle),
            }

    @app.get("/sessions/{session_id}/recommendations")
    def recommendations(session_id: str, seed: int | None = None):
        session = state.session(session_id)
        bundle = state.bundle(session.bundle_name).bundle
        with session.lock:
            if session.explanation is None:
                raise _bad_request("no_explanation", "request an explanation first")
            used = session.seed if seed is None else seed
            result = ops.run_recommendations(bundle, session.current, session.explanation, used)
            return ops.recommendations_to_json(result, used)

    @app.post("/sessions/{session_id}/forecast")
    def forecast(session_id: str, request: ForecastRequest):
        session = state.session(session_id)
        bundle = state.bundle(session.bundle_name).bundle
        with session.lock:
            try:
                fc = run_forecaster(bundle, session.current, request.forecaster, request.Z)
            except DimensionMismatchError as exc:
                raise ApiFailure(409, "geometry_mismatch", str(exc)) from exc
            except ValueError as exc:
                raise _bad_request("validation", str(exc)) from exc
            scale = bundle.normalizer.rul_scale
            slid = slide_window(session.current, fc)
            return {
                "source": fc.source,
                "Z": fc.normalized.shape[0],
                "forecast": fc.values.tolist(),
                "forecast_normalized": fc.normalized.tolist(),
                "future_rul": pm_predict(bundle.pm, slid, scale),
            }

    @app.post("/sessions/{session_id}/prescribe")
    def prescribe(session_id: str, request: PrescribeRequest):
        session = state.session(session_id)
        bundle = state.bundle(session.bundle_name).bundle
        if request.mode not in (MODE_WITHIN_WINDOW, MODE_FUTURE):
            raise _bad_request("validation", f"unknown mode {request.mode!r}")
        with session.lock:
            try:
                suggestion = xyz_prescribe(bundle, session.current, request.desired_target, request.mode)
                report = compare_prescription(
                    bundle, session.current, suggestion, request.forecaster, request.desired_target
                )
            except DimensionMismatchError as exc:
                raise ApiFailure(409, "geometry_mismatch", str(exc)) from exc
            except ValueError as exc:
                raise _bad_request("validation", str(exc)) from exc
            payload = ops.report_to_json(report)
            payload["mode"] = request.mode
            payload["forecaster"] = request.forecaster
            return payload

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
