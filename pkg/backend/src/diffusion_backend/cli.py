"""Serve the backend: ``diffusion-backend --port 8080``.

The model identifier comes from ``DIFFUSION_BACKEND_MODEL`` (default
"analytic"); the flag ``--model`` overrides the environment.
"""

from __future__ import annotations

import argparse
import os

import uvicorn

from .app import create_app


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="diffusion-backend")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8080)
    ap.add_argument(
        "--model",
        default=None,
        help="model identifier; defaults to $DIFFUSION_BACKEND_MODEL or 'analytic'",
    )
    args = ap.parse_args(argv)
    model_id = args.model or os.environ.get("DIFFUSION_BACKEND_MODEL", "analytic")
    app = create_app(model_id=model_id)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
