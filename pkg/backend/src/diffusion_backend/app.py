"""HTTP surface: four endpoints speaking the JSON+base64 wire protocol.

    POST /v1/denoise  {prompt, step, total_steps, guidance_scale, seed,
                       shape, data}              -> {guidance, next_image, shape}
    POST /v1/encode   {shape, data}              -> {shape, data}
    POST /v1/decode   {shape, data}              -> {shape, data}
    GET  /v1/codec                               -> codec descriptor

Malformed payloads get HTTP 400; every endpoint returns 503 until a model is
loaded.  Responses are deterministic per (prompt, image, step, total_steps).
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import PayloadError, encode_array, decode_array, load_model

REQUIRED_DENOISE_FIELDS = ("prompt", "step", "total_steps", "shape", "data")


def create_app(model_id: str | None = "analytic", preload: bool = True) -> FastAPI:
    app = FastAPI(title="diffusion-backend", docs_url=None, redoc_url=None)
    app.state.model = None
    app.state.model_id = model_id
    if preload:
        app.state.model = load_model(model_id)

    def model_or_503():
        if app.state.model is None:
            return None
        return app.state.model

    def unavailable():
        return JSONResponse(status_code=503, content={"error": "model not loaded"})

    def bad_request(msg: str):
        return JSONResponse(status_code=400, content={"error": msg})

    async def body_of(request: Request):
        try:
            obj = await request.json()
        except Exception:
            raise PayloadError("request body is not valid JSON")
        if not isinstance(obj, dict):
            raise PayloadError("request body must be a JSON object")
        return obj

    @app.post("/v1/denoise")
    async def denoise(request: Request):
        model = model_or_503()
        if model is None:
            return unavailable()
        try:
            obj = await body_of(request)
            for field in REQUIRED_DENOISE_FIELDS:
                if field not in obj:
                    raise PayloadError(f"missing field {field!r}")
            x = decode_array(obj["data"], obj["shape"])
            step = int(obj["step"])
            total = int(obj["total_steps"])
            eps, nxt = model.predict_noise(str(obj["prompt"]), x, step, total)
        except PayloadError as exc:
            return bad_request(str(exc))
        except (TypeError, ValueError) as exc:
            return bad_request(f"malformed request: {exc}")
        return {
            "shape": list(x.shape),
            "guidance": encode_array(eps),
            "next_image": encode_array(nxt),
        }

    @app.post("/v1/encode")
    async def encode(request: Request):
        model = model_or_503()
        if model is None:
            return unavailable()
        try:
            obj = await body_of(request)
            if "shape" not in obj or "data" not in obj:
                raise PayloadError("missing 'shape' or 'data'")
            img = decode_array(obj["data"], obj["shape"])
            z = model.codec.encode(img)
        except PayloadError as exc:
            return bad_request(str(exc))
        except (TypeError, ValueError) as exc:
            return bad_request(f"malformed request: {exc}")
        return {"shape": list(z.shape), "data": encode_array(z)}

    @app.post("/v1/decode")
    async def decode(request: Request):
        model = model_or_503()
        if model is None:
            return unavailable()
        try:
            obj = await body_of(request)
            if "shape" not in obj or "data" not in obj:
                raise PayloadError("missing 'shape' or 'data'")
            z = decode_array(obj["data"], obj["shape"])
            img = model.codec.decode(z)
        except PayloadError as exc:
            return bad_request(str(exc))
        except (TypeError, ValueError) as exc:
            return bad_request(f"malformed request: {exc}")
        return {"shape": list(img.shape), "data": encode_array(img)}

    @app.get("/v1/codec")
    async def codec(request: Request):
        model = model_or_503()
        if model is None:
            return unavailable()
        return model.codec.descriptor()

    return app
