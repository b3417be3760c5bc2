"""Interactive supervision service: sessions, patch sets, runs, artifacts.

Runs execute on a worker thread per session; trace rows are appended under a
condition variable so event-stream readers always see a consistent prefix.
Artifacts are produced by the same writers as the batch CLI, so labels.png
bytes are identical for identical inputs.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from . import imageio
from .driver import FULL, PIECEWISE, RunAborted, RunConfig, run_pc_sms, run_sms
from .energy import ModelParams
from .imageio import ImageFormatError
from .solvers import SolverOptions
from .supervision import Supervision, SupervisionError


@dataclass
class RunState:
    run_id: str
    config_echo: dict
    status: str = "queued"  # queued -> running -> done | failed
    rows: list = field(default_factory=list)
    error: str | None = None
    result = None
    summary: dict | None = None
    k: int = 0


@dataclass
class Session:
    session_id: str
    image: np.ndarray
    supervision: Supervision | None = None
    runs: dict = field(default_factory=dict)
    active_run: str | None = None


def _parse_config(doc: dict) -> tuple[RunConfig, dict]:
    params = ModelParams(
        k=int(doc.get("k", 2)),
        lam=float(doc.get("lambda", 10.0)),
        alpha=float(doc.get("alpha", 2.0)),
        epsilon=float(doc.get("epsilon", 1.5)),
    )
    config = RunConfig(
        model=str(doc.get("model", FULL)),
        params=params,
        max_outer=int(doc.get("max_outer", 100)),
        energy_tol=float(doc.get("tol", 1e-5)),
        seed=int(doc.get("seed", 0)),
        init=str(doc.get("init", "quantile")),
        solver=SolverOptions(),
    )
    echo = {"k": params.k, "lambda": params.lam, "alpha": params.alpha,
            "epsilon": params.epsilon, "model": config.model,
            "max_outer": config.max_outer, "tol": config.energy_tol,
            "seed": config.seed, "init": config.init}
    return config, echo


def create_app(max_pixels: int = 4096 * 4096, data_dir=None) -> FastAPI:
    app = FastAPI(title="softms supervision service")
    sessions: dict[str, Session] = {}
    lock = threading.Lock()
    cond = threading.Condition(lock)
    data_path = Path(data_dir) if data_dir else None
    if data_path:
        data_path.mkdir(parents=True, exist_ok=True)

    def _error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    def _get_session(sid: str) -> Session | None:
        with lock:
            return sessions.get(sid)

    @app.post("/api/v1/sessions")
    async def create_session(request: Request):
        body = await request.body()
        try:
            image = imageio.decode_image(body)
        except ImageFormatError as exc:
            return _error(400, str(exc))
        h, w = image.shape[-2:]
        if h * w > max_pixels:
            return _error(413, f"image too large: {w}x{h} exceeds "
                               f"{max_pixels} pixels")
        sid = secrets.token_hex(8)
        with lock:
            sessions[sid] = Session(session_id=sid, image=image)
        if data_path:
            np.save(data_path / f"{sid}_image.npy", image)
        return JSONResponse({"session_id": sid, "width": w, "height": h})

    @app.put("/api/v1/sessions/{sid}/supervision")
    async def put_supervision(sid: str, request: Request):
        session = _get_session(sid)
        if session is None:
            return _error(404, "unknown session")
        try:
            doc = await request.json()
            sup = Supervision.from_dict(doc)
            k = max((p.channel for p in sup.patches), default=2)
            report = sup.validate(session.image.shape[-1],
                                  session.image.shape[-2], k)
        except (SupervisionError, json.JSONDecodeError, ValueError) as exc:
            return _error(422, str(exc))
        with lock:
            session.supervision = sup
        if data_path:
            (data_path / f"{sid}_supervision.json").write_text(
                json.dumps(sup.to_dict()))
        return JSONResponse({"stored": True,
                             "areas": {str(c): a
                                       for c, a in report["areas"].items()}})

    def _execute(session: Session, state: RunState, config: RunConfig):
        sup = session.supervision
        if sup is not None and sup.patches:
            try:
                sup.validate(session.image.shape[-1],
                             session.image.shape[-2], config.params.k)
            except SupervisionError as exc:
                with cond:
                    state.status = "failed"
                    state.error = str(exc)
                    session.active_run = None
                    cond.notify_all()
                return
        run = run_sms if config.model == FULL else run_pc_sms

        def on_row(row):
            with cond:
                state.rows.append({
                    "iter": row.iteration,
                    "data": row.energy.data_term,
                    "sobolev": row.energy.sobolev_term,
                    "mm": row.energy.mm_term,
                    "total": row.energy.total,
                    "max_dp": row.max_dp,
                })
                cond.notify_all()

        try:
            result = run(session.image, config, sup, on_iteration=on_row)
        except (RunAborted, ValueError) as exc:
            with cond:
                state.status = "failed"
                state.error = str(exc)
                session.active_run = None
                cond.notify_all()
            return
        with cond:
            state.result = result
            state.summary = {
                "parameters": state.config_echo,
                "iterations": result.trace.rows[-1].iteration,
                "converged": result.trace.converged,
                "energy": result.trace.rows[-1].energy.as_dict(),
                "pattern_residual": result.trace.pattern_residual,
                "ownership_residual": result.trace.ownership_residual,
                "dumb": result.trace.dumb,
            }
            if result.means is not None:
                state.summary["means"] = np.asarray(result.means).tolist()
            state.status = "done"
            session.active_run = None
            cond.notify_all()

    @app.post("/api/v1/sessions/{sid}/runs")
    async def start_run(sid: str, request: Request):
        session = _get_session(sid)
        if session is None:
            return _error(404, "unknown session")
        try:
            doc = await request.json()
            config, echo = _parse_config(doc if isinstance(doc, dict) else {})
        except (ValueError, json.JSONDecodeError) as exc:
            return _error(422, str(exc))
        rid = secrets.token_hex(8)
        state = RunState(run_id=rid, config_echo=echo, k=config.params.k)
        with lock:
            if session.active_run is not None:
                return _error(409, "a run is already active on this session")
            session.runs[rid] = state
            session.active_run = rid
            state.status = "running"
        worker = threading.Thread(target=_execute,
                                  args=(session, state, config), daemon=True)
        worker.start()
        return JSONResponse({"run_id": rid}, status_code=202)

    def _get_run(sid: str, rid: str):
        session = _get_session(sid)
        if session is None:
            return None, None
        with lock:
            return session, session.runs.get(rid)

    @app.get("/api/v1/sessions/{sid}/runs/{rid}/events")
    async def events(sid: str, rid: str, request: Request):
        session, state = _get_run(sid, rid)
        if state is None:
            return _error(404, "unknown run")
        try:
            start = max(int(request.query_params.get("from", 1)), 1)
        except ValueError:
            start = 1

        def stream():
            cursor = start - 1  # rows list index
            while True:
                with cond:
                    cond.wait_for(lambda: len(state.rows) > cursor
                                  or state.status in ("done", "failed"),
                                  timeout=30.0)
                    rows = state.rows[cursor:]
                    status = state.status
                    error = state.error
                    cursor += len(rows)
                for row in rows:
                    yield json.dumps(row) + "\n"
                if status in ("done", "failed"):
                    term = {"status": status}
                    if error:
                        term["error"] = error
                    yield json.dumps(term) + "\n"
                    return

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    def _finished_run(sid: str, rid: str):
        session, state = _get_run(sid, rid)
        if state is None or state.status != "done":
            return None, None
        return session, state

    @app.get("/api/v1/sessions/{sid}/runs/{rid}/ownership/{channel}")
    async def ownership(sid: str, rid: str, channel: int):
        _, state = _finished_run(sid, rid)
        if state is None:
            return _error(404, "run not finished or unknown")
        if not 1 <= channel <= state.k:
            return _error(404, f"channel {channel} outside 1..{state.k}")
        png = imageio.gray_png_bytes(state.result.ownerships[channel - 1])
        return Response(png, media_type="image/png")

    @app.get("/api/v1/sessions/{sid}/runs/{rid}/labels")
    async def labels(sid: str, rid: str):
        _, state = _finished_run(sid, rid)
        if state is None:
            return _error(404, "run not finished or unknown")
        png = imageio.labels_png_bytes(state.result.labels, state.k)
        return Response(png, media_type="image/png")

    @app.get("/api/v1/sessions/{sid}/runs/{rid}/labels/palette")
    async def palette(sid: str, rid: str):
        _, state = _finished_run(sid, rid)
        if state is None:
            return _error(404, "run not finished or unknown")
        return JSONResponse({"palette": imageio.palette_json(state.k)})

    @app.get("/api/v1/sessions/{sid}/runs/{rid}/summary")
    async def summary(sid: str, rid: str):
        _, state = _finished_run(sid, rid)
        if state is None:
            return _error(404, "run not finished or unknown")
        return JSONResponse(state.summary)

    frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend), html=True),
                  name="ui")

    return app
