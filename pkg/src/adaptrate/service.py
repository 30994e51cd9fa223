"""HTTP service for live, human-in-the-loop inference sessions.

A session wraps one inference engine: the service recommends the next
sample time, accepts reported observations (at the recommended time or
any other positive time), exposes posterior snapshots, and can
auto-advance simulation-backed sessions. Sessions persist as plain JSON
files in the data directory and survive restarts byte-exactly: floats are
serialized via repr round-tripping and the simulation RNG state is stored
alongside.

Endpoints (all JSON):

* ``POST   /sessions``                      create; body: model, prior, config, mode
* ``GET    /sessions``                      list summaries
* ``GET    /sessions/{id}``                 one summary
* ``POST   /sessions/{id}/observations``    report (state, time, idempotency_key?)
* ``POST   /sessions/{id}/advance``         simulated sessions only (steps?)
* ``GET    /sessions/{id}/posterior``       marginals/joint/covariance (?resolution=K)
* ``DELETE /sessions/{id}``                 idempotent delete

Errors return ``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import json
import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import bayes, chains, design
from .design import InferenceEngine, TraceStep

AWAITING = "awaiting_observation"
CONVERGED = "converged"
ABORTED = "aborted"


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class CreateSessionRequest(BaseModel):
    model: dict
    prior: dict
    config: dict = {}
    mode: dict = {"kind": "manual"}


class ObservationRequest(BaseModel):
    state: int
    time: float
    idempotency_key: str | None = None


class AdvanceRequest(BaseModel):
    steps: int = 1


class Session:
    """One live inference run plus its bookkeeping."""

    def __init__(self, session_id: str, engine: InferenceEngine, mode: dict,
                 prior_cfg: dict):
        self.id = session_id
        self.engine = engine
        self.mode = mode
        self._prior_cfg = prior_cfg
        self.observer = None
        if mode["kind"] == "simulated":
            self.observer = design.SimulatedObserver(
                engine.model, np.asarray(mode["h_true"], dtype=float),
                int(mode["seed"]))
            if mode.get("rng_state") is not None:
                self.observer.rng.bit_generator.state = mode["rng_state"]
        self.lock = threading.Lock()
        self.status = AWAITING
        self.recommended_offset: float | None = None
        self.objective_value: float | None = None
        self.seen_keys: dict[str, int] = {}
        self.refresh_recommendation()

    @property
    def simulated(self) -> bool:
        return self.observer is not None

    def refresh_recommendation(self) -> None:
        if self.engine.converged():
            self.status = CONVERGED
            self.recommended_offset = None
            self.objective_value = None
            return
        if len(self.engine.steps) >= self.engine.config.step_cap:
            self.status = ABORTED
            self.recommended_offset = None
            self.objective_value = None
            return
        self.status = AWAITING
        self.recommended_offset, self.objective_value = self.engine.recommend()

    def recommended_time(self) -> float | None:
        if self.recommended_offset is None:
            return None
        if self.engine.model.protocol == chains.RESET_EACH_SAMPLE:
            return self.recommended_offset
        return self.engine.t_last + self.recommended_offset

    def apply(self, t_obs: float, state: int) -> None:
        self.engine.apply_observation(t_obs, state)
        self.refresh_recommendation()

    def advance_once(self) -> None:
        offset = self.recommended_offset
        t_obs = self.recommended_time()
        state = self.observer(self.engine.x_prev, t_obs, offset)
        self.apply(t_obs, state)

    def summary(self) -> dict:
        eng = self.engine
        return {
            "id": self.id,
            "model": eng.model.to_config(),
            "prior": self._prior_cfg,
            "mode": {"kind": self.mode["kind"]},
            "status": self.status,
            "steps": len(eng.steps),
            "converged": self.status == CONVERGED,
            "theta": eng.config.theta,
            "threshold": eng.threshold,
            "criterion_value": eng.criterion_value(),
            "recommended_offset": self.recommended_offset,
            "recommended_time": self.recommended_time(),
            "objective": self.objective_value,
            "last_observation_time": eng.t_last if eng.steps else None,
            "x_prev": eng.x_prev,
            "n_states": eng.model.n_states,
            "map_estimate": list(map(float, bayes.map_estimate(eng.posterior))),
            "mean": list(map(float, bayes.posterior_mean(eng.posterior))),
        }

    def to_json(self) -> dict:
        eng = self.engine
        mode = dict(self.mode)
        if self.simulated:
            mode["rng_state"] = self.observer.rng.bit_generator.state
        return {
            "id": self.id,
            "model": eng.model.to_config(),
            "prior": self._prior_cfg,
            "config": eng.config.to_dict(),
            "mode": mode,
            "posterior_csv": bayes.posterior_to_csv(eng.posterior),
            "x_prev": eng.x_prev,
            "t_last": eng.t_last,
            "initial_criterion": eng.initial_criterion,
            "steps": [
                {"n": s.n, "t": s.t, "state": s.state,
                 "expected_objective": s.expected_objective,
                 "criterion": s.criterion,
                 "map_estimate": list(s.map_estimate), "mean": list(s.mean)}
                for s in eng.steps],
            "status": self.status,
            "recommended_offset": self.recommended_offset,
            "objective_value": self.objective_value,
            "seen_keys": self.seen_keys,
        }


def _build_engine(model_cfg: dict, prior_cfg: dict, config_cfg: dict):
    try:
        model = chains.model_from_config(model_cfg)
        prior = bayes.prior_from_config(prior_cfg)
        config = design.config_from_dict(config_cfg)
        engine = InferenceEngine(model, prior, config)
    except (ValueError, TypeError, KeyError) as exc:
        raise ServiceError(422, "invalid_session_request", str(exc))
    return engine


def _session_from_json(data: dict) -> Session:
    engine = _build_engine(data["model"], data["prior"], data["config"])
    restored = bayes.posterior_from_csv(data["posterior_csv"])
    engine.posterior = bayes.Posterior(
        engine.posterior.kind,
        restored.density.reshape(engine.posterior.density.shape),
        engine.posterior.grid, engine.posterior.configs)
    engine.x_prev = int(data["x_prev"])
    engine.t_last = float(data["t_last"])
    engine.initial_criterion = float(data["initial_criterion"])
    engine.steps = [
        TraceStep(n=s["n"], t=s["t"], state=s["state"],
                  expected_objective=s["expected_objective"],
                  criterion=s["criterion"],
                  map_estimate=tuple(s["map_estimate"]), mean=tuple(s["mean"]))
        for s in data["steps"]]
    session = Session(data["id"], engine, data["mode"], data["prior"])
    session.seen_keys = dict(data.get("seen_keys", {}))
    return session


class SessionStore:
    """In-memory session registry backed by one JSON file per session."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        for name in sorted(os.listdir(data_dir)):
            if name.endswith(".json"):
                with open(os.path.join(data_dir, name)) as f:
                    session = _session_from_json(json.load(f))
                self.sessions[session.id] = session

    def path(self, session_id: str) -> str:
        return os.path.join(self.data_dir, f"{session_id}.json")

    def persist(self, session: Session) -> None:
        tmp = self.path(session.id) + ".tmp"
        with open(tmp, "w") as f:
            json.dump(session.to_json(), f)
        os.replace(tmp, self.path(session.id))

    def add(self, session: Session) -> None:
        with self._registry_lock:
            self.sessions[session.id] = session
        self.persist(session)

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id}")
        return session

    def delete(self, session_id: str) -> bool:
        with self._registry_lock:
            existed = self.sessions.pop(session_id, None) is not None
        try:
            os.remove(self.path(session_id))
            existed = True
        except FileNotFoundError:
            pass
        return existed


def _posterior_payload(session: Session, resolution: int) -> dict:
    eng = session.engine
    post = eng.posterior
    payload = {
        "criterion_value": eng.criterion_value(),
        "threshold": eng.threshold,
        "map_estimate": list(map(float, bayes.map_estimate(post))),
        "mean": list(map(float, bayes.posterior_mean(post))),
        "covariance": bayes.posterior_covariance(post).tolist(),
    }
    if post.kind == bayes.CONFIGS:
        payload["kind"] = "binary"
        payload["edge_labels"] = list(eng.model.rate_labels())
        payload["edge_marginals"] = [
            float(bayes.posterior_marginal(post, k)) for k in range(post.d)]
    else:
        payload["kind"] = "grid"
        axes, marginals = [], []
        for k in range(post.grid.ndim):
            ax = post.grid.axes[k]
            stride = max(1, (ax.size - 1) // max(resolution - 1, 1))
            idx = np.arange(0, ax.size, stride)
            marg = bayes.posterior_marginal(post, k)[idx]
            w = bayes.trapezoid_weights(ax[idx])
            total = float(np.sum(w * marg))
            axes.append(ax[idx].tolist())
            marginals.append((marg / total if total > 0 else marg).tolist())
        payload["axes"] = axes
        payload["marginals"] = marginals
        if post.grid.ndim == 2:
            s0 = max(1, (post.grid.axes[0].size - 1) // max(resolution - 1, 1))
            s1 = max(1, (post.grid.axes[1].size - 1) // max(resolution - 1, 1))
            joint = post.density[::s0, ::s1]
            w0 = bayes.trapezoid_weights(post.grid.axes[0][::s0])
            w1 = bayes.trapezoid_weights(post.grid.axes[1][::s1])
            mass = float(np.sum(joint * np.outer(w0, w1)))
            payload["joint"] = (joint / mass if mass > 0 else joint).tolist()
    if session.status == AWAITING:
        cfg = eng.config
        times = np.geomspace(cfg.delta_min, cfg.delta_max, cfg.n_candidates)
        eng._qfield = design._weight_field(post, eng._weight_mode())
        values = [float(eng._objective(float(t))) for t in times]
        payload["objective_curve"] = {"offsets": times.tolist(), "values": values}
    return payload


def create_app(data_dir: str = "./adaptrate-sessions") -> FastAPI:
    app = FastAPI(title="adaptrate session service")
    store = SessionStore(data_dir)
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code,
                                               "message": exc.message}})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422,
                            content={"error": {"code": "invalid_payload",
                                               "message": str(exc.errors())}})

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        mode = dict(req.mode)
        if mode.get("kind") not in ("manual", "simulated"):
            raise ServiceError(422, "invalid_mode",
                               "mode.kind must be 'manual' or 'simulated'")
        engine = _build_engine(req.model, req.prior, req.config)
        if mode["kind"] == "simulated":
            h_true = mode.get("h_true")
            if h_true is None or len(h_true) != engine.model.d:
                raise ServiceError(422, "invalid_mode",
                                   f"simulated mode needs {engine.model.d} true rates")
            mode.setdefault("seed", 0)
        session = Session(uuid.uuid4().hex, engine, mode, req.prior)
        store.add(session)
        return session.summary()

    @app.get("/sessions")
    def list_sessions():
        with store._registry_lock:
            sessions = list(store.sessions.values())
        return {"sessions": [s.summary() for s in sessions]}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.get(session_id).summary()

    @app.post("/sessions/{session_id}/observations")
    def report_observation(session_id: str, req: ObservationRequest):
        session = store.get(session_id)
        with session.lock:
            key = req.idempotency_key
            if key is not None and key in session.seen_keys:
                return session.summary()
            if session.status != AWAITING:
                raise ServiceError(409, "not_awaiting",
                                   f"session status is {session.status}")
            model = session.engine.model
            if not 0 <= req.state < model.n_states:
                raise ServiceError(422, "invalid_state",
                                   f"state must lie in 0..{model.n_states - 1}")
            if session.engine.observation_dt(req.time) <= 0:
                raise ServiceError(422, "non_increasing_time",
                                   "observation time must exceed the last sample time")
            session.apply(req.time, req.state)
            if key is not None:
                session.seen_keys[key] = len(session.engine.steps)
            store.persist(session)
            return session.summary()

    @app.post("/sessions/{session_id}/advance")
    def advance(session_id: str, req: AdvanceRequest):
        session = store.get(session_id)
        with session.lock:
            if not session.simulated:
                raise ServiceError(409, "not_simulated",
                                   "advance only applies to simulated sessions")
            for _ in range(max(1, req.steps)):
                if session.status != AWAITING:
                    break
                session.advance_once()
            store.persist(session)
            return session.summary()

    @app.get("/sessions/{session_id}/posterior")
    def posterior(session_id: str, resolution: int = 61):
        session = store.get(session_id)
        with session.lock:
            return _posterior_payload(session, max(2, resolution))

    @app.delete("/sessions/{session_id}")
    def delete(session_id: str):
        return {"deleted": store.delete(session_id)}

    return app
