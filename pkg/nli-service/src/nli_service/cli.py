"""Command line entry point: serve the NLI model over HTTP."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import uvicorn

from nli_service.app import CONFIG_ENV_VAR, create_app
from nli_service.config import ConfigError, NliServiceConfig, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nli-service",
        description="Serve a small NLI cross-encoder over the backend wire protocol.",
    )
    parser.add_argument("--config", help="service config JSON (defaults apply if omitted)")
    parser.add_argument("--host", help="override the configured listen host")
    parser.add_argument("--port", type=int, help="override the configured listen port")
    return parser


def console_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else NliServiceConfig()
        if args.host or args.port:
            overrides = {}
            if args.host:
                overrides["host"] = args.host
            if args.port:
                overrides["port"] = args.port
            config = replace(config, **overrides)
        config.resolve_model_path()
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if config.workers > 1:
        if not args.config:
            print("error: --config is required to run multiple workers",
                  file=sys.stderr)
            return 2
        os.environ[CONFIG_ENV_VAR] = args.config
        uvicorn.run("nli_service.app:app_from_env", factory=True,
                    host=config.host, port=config.port, workers=config.workers)
    else:
        uvicorn.run(create_app(config), host=config.host, port=config.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(console_main())
