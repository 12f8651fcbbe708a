"""HTTP client for a remote denoiser backend.

Speaks the JSON+base64 protocol:

    POST /v1/denoise  {prompt, step, total_steps, guidance_scale, seed, shape, data}
                      -> {guidance, next_image, shape}
    POST /v1/encode   {shape, data} -> {shape, data}
    POST /v1/decode   {shape, data} -> {shape, data}
    GET  /v1/codec    -> {latent_shape, pixel_shape, scale_factor}

Responses with mismatched shapes are rejected, never resized.
"""

from __future__ import annotations

import numpy as np
import requests

from .denoise import CodecDescriptor, DenoiseRequest, DenoiseResponse
from .errors import BackendError, ProtocolError
from .wire import decode_array, encode_array


class RemoteBackend:
    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._http = requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        try:
            r = self._http.post(self.base_url + path, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"backend unreachable at {self.base_url}: {exc}") from exc
        if r.status_code == 503:
            raise BackendError("backend model not loaded (503)")
        if r.status_code != 200:
            raise ProtocolError(f"{path} returned HTTP {r.status_code}: {r.text[:200]}")
        return r.json()

    def session(self, prompt: str) -> "RemoteDenoiser":
        return RemoteDenoiser(self, prompt)

    def codec(self) -> "RemoteCodec":
        return RemoteCodec(self)

    def codec_descriptor(self) -> CodecDescriptor:
        try:
            r = self._http.get(self.base_url + "/v1/codec", timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"backend unreachable: {exc}") from exc
        if r.status_code != 200:
            raise BackendError(f"/v1/codec returned HTTP {r.status_code}")
        obj = r.json()
        return CodecDescriptor(
            latent_shape=tuple(obj["latent_shape"]),
            pixel_shape=tuple(obj["pixel_shape"]),
            scale_factor=int(obj["scale_factor"]),
        )


class RemoteDenoiser:
    def __init__(self, backend: RemoteBackend, prompt: str):
        self.backend = backend
        self.prompt = prompt

    def guidance_step(self, req: DenoiseRequest) -> DenoiseResponse:
        img = np.asarray(req.image, dtype=np.float32)
        obj = self.backend._post(
            "/v1/denoise",
            {
                "prompt": self.prompt,
                "step": req.step,
                "total_steps": req.total_steps,
                "guidance_scale": req.guidance_scale,
                "seed": req.rng_seed,
                "shape": list(img.shape),
                "data": encode_array(img),
            },
        )
        shape = tuple(obj.get("shape", ()))
        if shape != img.shape:
            raise ProtocolError(f"response shape {shape} != request shape {img.shape}")
        return DenoiseResponse(
            guidance=decode_array(obj["guidance"], shape),
            next_image=decode_array(obj["next_image"], shape),
        )


class RemoteCodec:
    def __init__(self, backend: RemoteBackend):
        self.backend = backend

    def encode(self, img) -> np.ndarray:
        a = np.asarray(img, dtype=np.float32)
        obj = self.backend._post("/v1/encode", {"shape": list(a.shape), "data": encode_array(a)})
        return decode_array(obj["data"], obj["shape"])

    def decode(self, z) -> np.ndarray:
        a = np.asarray(z, dtype=np.float32)
        obj = self.backend._post("/v1/decode", {"shape": list(a.shape), "data": encode_array(a)})
        return decode_array(obj["data"], obj["shape"])
