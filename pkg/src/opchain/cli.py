"""Command-line front end.

The CLI is a thin client of the HTTP service: by default it spins the service
up in-process (no socket, artifacts land under --base-dir), and with
--server it talks to a remote instance instead.  Exit code 0 means every
configured tolerance and curve check passed.

Subcommands: run <config.json>, preset <name>, compare <csvA> <csvB> --tol,
serve, presets.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import httpx

from . import __version__


POLL_SECONDS = 0.5


class ServiceClient:
    """HTTP client bound either to an in-process app or a remote server."""

    def __init__(self, server: str | None, base_dir: str = "runs"):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings
            with warnings.catch_warnings():
                ## the in-process test client is our transport, not a test
                ## shim; keep its import-time deprecation chatter out of the
                ## command output (starlette raises it as a UserWarning)
                warnings.filterwarnings(
                    "ignore", message="Using `httpx` with `starlette")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(base_dir=base_dir),
                                      base_url="http://opchain.internal")

    def request(self, method: str, path: str, **kwargs) -> httpx.Response:
        return self._client.request(method, path, **kwargs)

    def submit_and_wait(self, payload: dict) -> dict:
        """POST /runs, poll until the job leaves the queue, return the detail."""
        resp = self.request("POST", "/runs", json=payload)
        if resp.status_code == 422:
            raise ClickConfigError(resp.json()["detail"])
        resp.raise_for_status()
        job_id = resp.json()["id"]
        while True:
            detail = self.request("GET", f"/runs/{job_id}")
            detail.raise_for_status()
            data = detail.json()
            if data["state"] in ("done", "failed"):
                return data
            time.sleep(POLL_SECONDS)


class ClickConfigError(click.ClickException):
    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, list):
            text = "invalid configuration:\n" + "\n".join(
                f"  - {p}" for p in problems)
        else:
            text = str(problems)
        super().__init__(text)


def _fmt(value) -> str:
    """Scientific notation where possible; non-finite values arrive as strings."""
    try:
        return f"{float(value):.3e}"
    except (TypeError, ValueError):
        return str(value)


def _report_job(data: dict) -> bool:
    """Print a job outcome; return True iff it passed."""
    if data["state"] == "failed":
        click.echo(f"{data['kind']} {data['name']}: FAILED ({data['error']})")
        return False
    passed = bool(data["passed"])
    click.echo(f"{data['kind']} {data['name']}: "
               f"{'pass' if passed else 'FAIL'}  ->  {data['output_dir']}")
    summary = data.get("summary") or {}
    if data["kind"] == "preset":
        for label, ok in summary.get("runs", {}).items():
            click.echo(f"  run {label}: {'pass' if ok else 'FAIL'}")
        for chk in summary.get("checks", []):
            click.echo(f"  check {chk['type']}: "
                       f"{'pass' if chk['passed'] else 'FAIL'}")
    else:
        for key, verdict in (summary.get("comparison_checked") or {}).items():
            click.echo(f"  {key}: max_abs_error={_fmt(verdict['max_abs_error'])} "
                       f"tolerance={_fmt(verdict['tolerance'])} "
                       f"{'pass' if verdict['passed'] else 'FAIL'}")
    return passed


@click.group()
@click.version_option(version=__version__)
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; default is in-process.")
@click.option("--base-dir", default="runs", show_default=True,
              help="Artifact root for in-process execution.")
@click.pass_context
def main(ctx, server, base_dir):
    """Heisenberg-picture operator dynamics: runs, presets, comparisons."""
    ctx.obj = {"server": server, "base_dir": base_dir}


def _client(ctx) -> ServiceClient:
    return ServiceClient(ctx.obj["server"], base_dir=ctx.obj["base_dir"])


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", default=None, help="Artifact directory.")
@click.option("--threads", type=int, default=None,
              help="TEBD worker threads (overrides config).")
@click.pass_context
def run(ctx, config_path, output_dir, threads):
    """Execute one run configuration (JSON file)."""
    try:
        config = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ClickConfigError([f"{config_path}: not valid JSON: {exc}"])
    payload = {"config": config, "output_dir": output_dir, "threads": threads}
    data = _client(ctx).submit_and_wait(payload)
    sys.exit(0 if _report_job(data) else 1)


@main.command()
@click.argument("name", required=False)
@click.option("--list", "show_list", is_flag=True,
              help="List available presets and exit.")
@click.option("--output-dir", default=None, help="Artifact directory.")
@click.option("--threads", type=int, default=None,
              help="TEBD worker threads (overrides configs).")
@click.pass_context
def preset(ctx, name, show_list, output_dir, threads):
    """Execute a named preset bundle shipped with the package."""
    client = _client(ctx)
    if show_list or name is None:
        resp = client.request("GET", "/presets")
        resp.raise_for_status()
        for info in resp.json():
            click.echo(f"{info['name']} ({info['n_runs']} runs): "
                       f"{info['description']}")
        if name is None and not show_list:
            raise ClickConfigError("missing preset name (see the list above)")
        return
    payload = {"preset": name, "output_dir": output_dir, "threads": threads}
    data = client.submit_and_wait(payload)
    sys.exit(0 if _report_job(data) else 1)


@main.command()
@click.argument("csv_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("csv_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--tol", type=float, required=True,
              help="Maximum allowed per-column absolute deviation.")
@click.pass_context
def compare(ctx, csv_a, csv_b, tol):
    """Compare two CSV artifacts column by column."""
    resp = _client(ctx).request("POST", "/compare", json={
        "path_a": str(Path(csv_a).resolve()),
        "path_b": str(Path(csv_b).resolve()),
        "tol": tol,
    })
    if resp.status_code == 404:
        raise ClickConfigError(resp.json()["detail"])
    resp.raise_for_status()
    report = resp.json()
    for col, err in report["max_abs_error"].items():
        click.echo(f"{col}: max_abs_error={_fmt(err)}")
    for problem in report["problems"]:
        click.echo(f"problem: {problem}")
    click.echo("pass" if report["passed"] else "FAIL")
    sys.exit(0 if report["passed"] else 1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service on a socket."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(base_dir=ctx.obj["base_dir"]), host=host, port=port)


if __name__ == "__main__":
    main()
