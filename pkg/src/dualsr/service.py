"""HTTP inference service: image upload, cached scale-parameterized
restoration, and model metadata."""

from __future__ import annotations

import hashlib
import io
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from .checkpoint import Bundle
from .codec import DOWNSCALE
from .infer import EpsCache, GuidanceScales, UI_SCALE_MAX, blend_from_cache, build_cache


@dataclass
class Session:
    image_id: str
    lq: np.ndarray
    cache: EpsCache
    last_access: float = field(default_factory=time.time)


class SessionStore:
    """LRU session map with exclusive insertion per image id."""

    def __init__(self, capacity: int = 64):
        self.capacity = capacity
        self._lock = threading.Lock()
        self._sessions: OrderedDict[str, Session] = OrderedDict()
        self._building: dict[str, threading.Event] = {}

    def get(self, image_id: str) -> Session | None:
        with self._lock:
            s = self._sessions.get(image_id)
            if s is not None:
                s.last_access = time.time()
                self._sessions.move_to_end(image_id)
            return s

    def get_or_build(self, image_id: str, builder) -> Session:
        """One in-flight cache build per id; duplicate uploads await it."""
        while True:
            with self._lock:
                s = self._sessions.get(image_id)
                if s is not None:
                    self._sessions.move_to_end(image_id)
                    return s
                ev = self._building.get(image_id)
                if ev is None:
                    ev = threading.Event()
                    self._building[image_id] = ev
                    break
            ev.wait()
        try:
            session = builder()
            with self._lock:
                self._sessions[image_id] = session
                self._sessions.move_to_end(image_id)
                while len(self._sessions) > self.capacity:
                    self._sessions.popitem(last=False)
            return session
        finally:
            with self._lock:
                self._building.pop(image_id, None)
            ev.set()


def _png_bytes(x: np.ndarray) -> bytes:
    arr = np.clip(np.round(x * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr.transpose(1, 2, 0)).save(buf, format="PNG")
    return buf.getvalue()


def _decode_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    img.load()
    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def create_app(bundle: Bundle, max_dim: int = 512, capacity: int = 64,
               cors_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="dualsr inference service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["*"],
    )
    store = SessionStore(capacity=capacity)
    app.state.bundle = bundle
    app.state.sessions = store
    warm = {"ready": False}

    @app.on_event("startup")
    def _warmup():
        # one tiny restore so the first user request is not the first forward
        probe = np.full((3, DOWNSCALE * 2, DOWNSCALE * 2), 0.5)
        build_cache(probe, bundle)
        warm["ready"] = True

    def _error(status: int, msg: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": msg})

    @app.post("/images")
    async def upload(request: Request):
        data = await request.body()
        try:
            x = _decode_png(data)
        except Exception:
            return _error(400, "malformed PNG")
        _, h, w = x.shape
        if h > max_dim or w > max_dim:
            return _error(413, f"image too large; max dimension {max_dim}")
        if h % DOWNSCALE or w % DOWNSCALE:
            return _error(422, f"image dims ({w}x{h}) must be divisible by {DOWNSCALE}")
        image_id = hashlib.sha256(data).hexdigest()[:16]

        def builder() -> Session:
            return Session(image_id=image_id, lq=x,
                           cache=build_cache(x, bundle, image_id=image_id))

        store.get_or_build(image_id, builder)
        return {"image_id": image_id, "width": w, "height": h}

    @app.post("/restore")
    async def restore(payload: dict):
        image_id = payload.get("image_id")
        session = store.get(image_id) if image_id else None
        if session is None:
            return _error(404, f"unknown image id {image_id!r}")
        try:
            lp = float(payload["lambda_pix"])
            ls = float(payload["lambda_sem"])
            if not (np.isfinite(lp) and np.isfinite(ls)):
                raise ValueError
            scales = GuidanceScales(lp, ls)
        except (KeyError, TypeError, ValueError):
            return _error(400, "lambda_pix and lambda_sem must be finite numbers")
        evals_before = bundle.student_base.eval_count
        out = blend_from_cache(session.cache, scales, bundle)
        evals_used = bundle.student_base.eval_count - evals_before
        return Response(
            content=_png_bytes(out),
            media_type="image/png",
            headers={
                "X-Image-Id": image_id,
                "X-Lambda-Pix": repr(lp),
                "X-Lambda-Sem": repr(ls),
                "X-Denoiser-Evals": str(evals_used),
            },
        )

    @app.get("/models")
    def models():
        if not warm["ready"]:
            return _error(503, "warming up")
        return {
            "checkpoint_tag": bundle.tag,
            "schedule": bundle.schedule_params,
            "lora_ranks": {
                "pixel": bundle.pix.rank if bundle.pix else None,
                "semantic": bundle.sem.rank if bundle.sem else None,
            },
            "ui_scale_range": [0.0, UI_SCALE_MAX],
        }

    return app
