"""Command line front door: serve the gateway, chat in a REPL, run sims."""

from __future__ import annotations

import click

from .clock import sec3
from .rtdb import ingest_catalog
from .sim import (
    MODES,
    compare_modes,
    load_script,
    run_simulation,
    write_report,
)


def _load_catalog(spots: str | None):
    if spots is None:
        from .sim import default_catalog

        return default_catalog()
    return ingest_catalog(spots)


def _build_backend(backend: str, script: str | None, base_url: str, model: str):
    from .service.app import build_backend

    return build_backend(backend, script, base_url, model)


@click.group()
def main():
    """Asynchronous dual-path dialogue engine."""


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--spots", type=click.Path(exists=True), default=None,
              help="Spot catalog JSONL (default: packaged demo city).")
@click.option("--backend", type=click.Choice(["mock", "scripted", "http"]),
              default="mock", show_default=True)
@click.option("--script", type=click.Path(exists=True), default=None,
              help="Reply script for the scripted backend.")
@click.option("--base-url", default="", help="HTTP backend endpoint.")
@click.option("--model", default="", help="HTTP backend model name.")
def serve(port, host, spots, backend, script, base_url, model):
    """Run the HTTP/WebSocket gateway."""
    import uvicorn

    from .service.app import create_app

    app = create_app(
        catalog=_load_catalog(spots),
        backend=_build_backend(backend, script, base_url, model),
    )
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--spots", type=click.Path(exists=True), default=None)
@click.option("--backend", type=click.Choice(["mock", "scripted", "http"]),
              default="mock", show_default=True)
@click.option("--script", type=click.Path(exists=True), default=None)
@click.option("--base-url", default="")
@click.option("--model", default="")
@click.option("--realtime", is_flag=True,
              help="Pause for simulated speech playback time.")
def repl(spots, backend, script, base_url, model, realtime):
    """Chat with the engine in the terminal."""
    from .service.repl import run_repl

    run_repl(
        _build_backend(backend, script, base_url, model),
        catalog=_load_catalog(spots),
        realtime=realtime,
    )


@main.command()
@click.option("--script", "script_path", type=click.Path(exists=True),
              required=True, help="Persona script JSON.")
@click.option("--mode", type=click.Choice([*MODES, "compare"]),
              default="compare", show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Write the structured report here.")
@click.option("--spots", type=click.Path(exists=True), default=None)
def sim(script_path, mode, report_path, spots):
    """Replay a persona script on the virtual clock and measure gaps."""
    script = load_script(script_path)
    catalog = _load_catalog(spots)
    if mode == "compare":
        report = compare_modes(script, catalog)
        click.echo("turn  gap_async  gap_sync  delta")
        for row in report.per_turn:
            click.echo(
                "%4d  %9s  %8s  %5s"
                % (
                    row.turn_id,
                    sec3(row.gap_async_us),
                    sec3(row.gap_sync_us),
                    sec3(row.delta_us),
                )
            )
        click.echo(
            "mean  %9s  %8s  %5s"
            % (
                sec3(report.async_report.mean_gap_us),
                sec3(report.sync_report.mean_gap_us),
                sec3(report.sync_report.mean_gap_us - report.async_report.mean_gap_us),
            )
        )
    else:
        report = run_simulation(script, mode, catalog)
        click.echo("turn  gap  barrier_wait  stale")
        for row in report.per_turn:
            click.echo(
                "%4d  %s  %12s  %s"
                % (
                    row.turn_id,
                    sec3(row.gap_us),
                    sec3(row.barrier_wait_us),
                    "yes" if row.stale else "no",
                )
            )
        click.echo("mean gap %s over %d turns" % (
            sec3(report.mean_gap_us), len(report.per_turn)))
    if report_path:
        write_report(report, report_path)
        click.echo("report written to %s" % report_path)


if __name__ == "__main__":
    main()
