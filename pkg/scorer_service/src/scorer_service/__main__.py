"""Command line launcher: parse flags into a ServiceConfig and serve it."""

from __future__ import annotations

import argparse
import os

import uvicorn

from .app import create_app
from .config import MAX_BATCH_CAP, ServiceConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorer-service",
        description="Serve entailment (and mock language-model) scores over HTTP.",
    )
    parser.add_argument("--model", default="mock", help="checkpoint name, or 'mock'")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--fixtures", default=None, help="JSON fixtures (mock mode)")
    parser.add_argument("--max-batch", type=int, default=MAX_BATCH_CAP)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8130)
    parser.add_argument(
        "--token",
        default=os.environ.get("SCORER_SERVICE_TOKEN"),
        help="shared bearer token; unset disables authentication",
    )
    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    config = ServiceConfig(
        model=args.model,
        device=args.device,
        mock=args.model == "mock",
        fixtures=args.fixtures,
        max_batch=args.max_batch,
        host=args.host,
        port=args.port,
        token=args.token,
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
