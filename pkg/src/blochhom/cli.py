"""Command-line client for the certification service.

The CLI parses the TOML run configuration, posts it to the HTTP service
(an in-process instance by default, a remote one with --server) and reports
the verdicts.  Exit code 0 means every verdict passed.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, RunConfig, load_run_config
from .service import COMMAND_KINDS, app

RUN_COMMANDS = ("ahom", "elliptic-sweep", "maxwell-sweep", "abstract-check",
                "properties")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blochhom",
        description="Certified homogenisation sweeps on Bloch fibres.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ahom": "tabulate the homogenised tensor over a theta grid",
        "elliptic-sweep": "certify the elliptic O(eps) resolvent gap",
        "maxwell-sweep": "certify the Maxwell O(eta) resolvent gap",
        "abstract-check": "certify random families against the explicit budget",
        "properties": "run the homogenised-tensor property battery",
    }
    for name in RUN_COMMANDS:
        cmd = sub.add_parser(name, help=helps[name])
        cmd.add_argument("--config", required=True, metavar="PATH",
                         help="TOML run configuration")
        cmd.add_argument("--out", default=None, metavar="DIR",
                         help="output directory (overrides the config)")
        cmd.add_argument("--server", default=None, metavar="URL",
                         help="base URL of a running service; "
                              "default computes in process")
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8780)
    return parser


def request_payload(config: RunConfig) -> dict:
    return {
        "kind": config.kind,
        "space": {"d": config.d, "n": config.n, "n_trunc": config.n_trunc},
        "coefficients": config.coefficients,
        "theta_points": config.theta_points,
        "eps": {"start": config.eps_start, "stop": config.eps_stop,
                "count": config.eps_count},
        "seed": config.seed,
        "out_dir": config.out_dir,
        "workers": config.workers,
        "tolerances": config.tolerances,
        "options": config.options,
    }


def _post(command: str, payload: dict, server: str):
    import httpx

    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(f"/v1/run/{command}", json=payload)

    import asyncio

    async def in_process():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://service",
                                     timeout=None) as client:
            return await client.post(f"/v1/run/{command}", json=payload)

    return asyncio.run(in_process())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    kind = COMMAND_KINDS[args.command]
    try:
        config = load_run_config(args.config, kind=kind, out_override=args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    response = _post(args.command, request_payload(config), args.server)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except Exception:
            detail = response.text
        print(f"error ({response.status_code}): {detail}", file=sys.stderr)
        return 2

    summary = response.json()
    print(f"kind:        {summary['kind']}")
    print(f"digest:      {summary['config_digest']}")
    print(f"rows:        {summary['rows']}")
    if summary.get("slope") is not None:
        print(f"slope:       {summary['slope']:.4f} "
              f"(residual {summary['slope_residual']:.4f})")
    if summary.get("max_err_ratio") is not None:
        print(f"max ratio:   {summary['max_err_ratio']:.6f}")
    print(f"outputs:     {summary['csv_path']}, {summary['summary_path']}")
    print(f"wall time:   {summary['wall_time']:.2f}s")
    print(f"verdict:     {'all pass' if summary['all_pass'] else 'FAILURES'}")
    return 0 if summary["all_pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
