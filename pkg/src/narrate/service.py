"""HTTP service exposing the session pipeline.

Endpoints return JSON except renders (image/png) and mesh (model/obj);
errors are JSON {code, message, detail}.
"""

from __future__ import annotations

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from starlette.datastructures import UploadFile

from .session import RenderParams, ServiceError, SessionStore


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="narrate", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    async def service_error_handler(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.payload())

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions")
    async def create_session(request: Request):
        form = await request.form()
        files: dict[str, bytes] = {}
        for name, item in form.multi_items():
            if isinstance(item, UploadFile):
                files[name] = await item.read()
            else:
                files[name] = str(item).encode()
        manifest = store.create_session(files)
        return {"id": manifest["id"]}

    @app.post("/sessions/{session_id}/stages/{stage}")
    def run_stage(session_id: str, stage: str):
        manifest = store.run_stage(session_id, stage)
        return {"id": session_id, "stage": stage,
                "record": manifest["stages"][stage]}

    @app.get("/sessions/{session_id}/render")
    def render_view(session_id: str, yaw: float = 0.0, pitch: float = 0.0,
                    output: str = "fused", light: str = "loop",
                    kd: float = 1.0, ks: str = "0.25,0.25,0.25,0.25"):
        try:
            gains = tuple(float(t) for t in ks.split(",")) if ks else ()
        except ValueError:
            raise ServiceError("bad_gains",
                               "ks must be a comma-separated float list",
                               {"ks": ks}, status=422)
        params = RenderParams(yaw_deg=yaw, pitch_deg=pitch, light=light,
                              kd=kd, ks=gains, output=output)
        png = store.render_view(session_id, params)
        return Response(content=png, media_type="image/png")

    @app.post("/sessions/{session_id}/lights")
    async def add_light(session_id: str, request: Request):
        form = await request.form()
        blob = None
        for _, item in form.multi_items():
            if isinstance(item, UploadFile):
                blob = await item.read()
        if blob is None:
            blob = await request.body()
        if not blob:
            raise ServiceError("bad_light", "no environment map uploaded",
                               status=422)
        light_id = store.add_light(session_id, blob)
        return {"light_id": light_id}

    @app.post("/sessions/{session_id}/neural")
    async def add_neural(session_id: str, request: Request,
                         yaw: float = 0.0, pitch: float = 0.0):
        form = await request.form()
        blob = None
        for _, item in form.multi_items():
            if isinstance(item, UploadFile):
                blob = await item.read()
        if blob is None:
            blob = await request.body()
        if not blob:
            raise ServiceError("bad_asset", "no neural render uploaded",
                               status=422)
        key = store.add_neural_render(session_id, yaw, pitch, blob)
        return {"pose": key}

    @app.get("/sessions/{session_id}/mesh")
    def get_mesh(session_id: str):
        return Response(content=store.mesh_obj(session_id),
                        media_type="model/obj")

    return app
