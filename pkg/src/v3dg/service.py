"""Long-running viewer service: WebSocket frame streaming with live camera,
tolerance and mode updates.

Message handling never blocks on rendering: each connection owns a render
worker thread fed through a generation-counted state cell. Updates mark the
state dirty; the worker renders the newest state and drops frames whose state
went stale while rendering (latest-state-wins coalescing). Every frame's
stats come from the selection pass that produced exactly that frame.
"""

from __future__ import annotations

import asyncio
import base64
import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .cli import _render_scene
from .model import look_at
from .raster import to_png_bytes
from .raster.pipeline import DEFAULT_OPTIONS, RenderOptions
from .select import LoadedScene

MAX_WIDTH = 1920
MAX_HEIGHT = 1080
MODES = ("lod", "vanilla", "radius-clip", "layer-debug")


@dataclass(frozen=True)
class SessionState:
    """Current view parameters for one connection."""

    position: tuple = (0.0, -10.0, 3.0)
    target: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 0.0, 1.0)
    tau: float = 2048.0
    mode: str = "lod"
    width: int = 480
    height: int = 270
    clip: float = 2.0


class Session:
    """State cell plus render worker for one WebSocket connection."""

    def __init__(self, loaded: LoadedScene, state: SessionState,
                 loop: asyncio.AbstractEventLoop, outbox: asyncio.Queue,
                 options: RenderOptions = DEFAULT_OPTIONS):
        self.loaded = loaded
        self.options = options
        self._state = state
        self._loop = loop
        self._outbox = outbox
        self._cond = threading.Condition()
        self._pending = 1  # render an initial frame on connect
        self._rendered = 0
        self._frame_id = 0
        self._closed = False
        self._worker = threading.Thread(target=self._run, daemon=True)

    def start(self) -> None:
        self._worker.start()

    def stop(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def _mark_dirty(self, new_state: Optional[SessionState] = None) -> None:
        with self._cond:
            if new_state is not None:
                self._state = new_state
            self._pending += 1
            self._cond.notify_all()

    def handle(self, msg) -> Optional[dict]:
        """Apply one client message; returns an error reply or None."""
        if not isinstance(msg, dict) or "type" not in msg:
            return {"type": "error", "message": "malformed message"}
        kind = msg.get("type")
        state = self._state
        try:
            if kind == "setCamera":
                pos = _vec3(msg, "position")
                target = _vec3(msg, "target")
                up = _vec3(msg, "up", default=(0.0, 0.0, 1.0))
                if np.allclose(pos, target):
                    return {"type": "error", "message": "camera position equals target"}
                self._mark_dirty(replace(state, position=pos, target=target, up=up))
            elif kind == "setTolerance":
                tau = msg.get("tau")
                if not isinstance(tau, (int, float)) or not np.isfinite(tau) or tau < 0:
                    return {"type": "error", "message": "tolerance must be >= 0"}
                self._mark_dirty(replace(state, tau=float(tau)))
            elif kind == "setMode":
                mode = msg.get("mode")
                if mode not in MODES:
                    return {"type": "error",
                            "message": f"mode must be one of {', '.join(MODES)}"}
                self._mark_dirty(replace(state, mode=mode))
            elif kind == "setResolution":
                w, h = msg.get("w"), msg.get("h")
                if (not isinstance(w, int) or not isinstance(h, int)
                        or not (1 <= w <= MAX_WIDTH) or not (1 <= h <= MAX_HEIGHT)):
                    return {"type": "error",
                            "message": f"resolution must be within {MAX_WIDTH}x{MAX_HEIGHT}"}
                self._mark_dirty(replace(state, width=w, height=h))
            elif kind == "requestFrame":
                self._mark_dirty()
            else:
                return {"type": "error", "message": f"unknown message type {kind!r}"}
        except ValueError as exc:
            return {"type": "error", "message": str(exc)}
        return None

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._closed and self._pending == self._rendered:
                    self._cond.wait()
                if self._closed:
                    return
                gen = self._pending
                state = self._state
            try:
                payload = self._render(state)
            except Exception as exc:
                payload = {"type": "error", "message": f"render failed: {exc}"}
            with self._cond:
                if self._closed:
                    return
                if self._pending != gen:
                    continue  # newer state arrived; drop this frame unsent
                self._rendered = gen
                if payload.get("type") == "frame":
                    self._frame_id += 1
                    payload["frameId"] = self._frame_id
            self._loop.call_soon_threadsafe(self._outbox.put_nowait, payload)

    def _render(self, state: SessionState) -> dict:
        cam = look_at(eye=state.position, target=state.target, up=state.up,
                      width=state.width, height=state.height, fov_x=np.pi / 4)
        img, stats = _render_scene(self.loaded, cam, state.mode, state.tau,
                                   state.clip, self.options)
        return {
            "type": "frame",
            "frameId": 0,  # assigned on emit
            "stats": stats,
            "png": base64.b64encode(to_png_bytes(img)).decode("ascii"),
        }


def _vec3(msg, key, default=None):
    value = msg.get(key, default)
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{key} must be a finite 3-vector")
    return tuple(float(v) for v in arr)


def _default_state(loaded: LoadedScene, resolution) -> SessionState:
    lo, hi = loaded.bounds()
    center = (lo + hi) / 2.0
    extent = float(np.linalg.norm(hi - lo)) / 2.0 or 5.0
    eye = center + extent * 1.8 * np.array([0.0, -0.8, 0.45])
    return SessionState(position=tuple(eye), target=tuple(center),
                        width=resolution[0], height=resolution[1])


def create_app(loaded: LoadedScene, default_resolution=(480, 270),
               options: RenderOptions = DEFAULT_OPTIONS,
               frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="v3dg viewer service")
    base_state = _default_state(loaded, default_resolution)

    @app.get("/scene")
    def scene_meta():
        lo, hi = loaded.bounds()
        return {
            "assets": sorted(loaded.scene.assets.keys()),
            "instanceCount": len(loaded.scene.instances),
            "boundingBox": {"min": list(lo), "max": list(hi)},
            "residentCount": loaded.resident_count(),
        }

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        outbox: asyncio.Queue = asyncio.Queue()
        session = Session(loaded, base_state, asyncio.get_running_loop(), outbox,
                          options=options)
        session.start()

        async def drain():
            while True:
                await websocket.send_json(await outbox.get())

        sender = asyncio.create_task(drain())
        try:
            while True:
                try:
                    msg = await websocket.receive_json()
                except json.JSONDecodeError:
                    await websocket.send_json(
                        {"type": "error", "message": "malformed message"})
                    continue
                reply = session.handle(msg)
                if reply is not None:
                    await websocket.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            session.stop()
            sender.cancel()

    default_frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    static_root = Path(frontend_dir) if frontend_dir else default_frontend
    if static_root.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_root), html=True), name="ui")
    return app
