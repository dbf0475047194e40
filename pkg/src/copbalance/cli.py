"""Command-line front door: trials, sweeps, bring-up, live service,
calibration store maintenance.

The COP_SEED environment variable overrides --seed everywhere.
"""

from __future__ import annotations

import json
import os
import pathlib

import click

from copbalance import calibration as cal
from copbalance.control import PidGains
from copbalance.harness import (
    TrialConfig,
    bringup as run_bringup,
    standard_grid,
    report_to_csv,
    report_to_markdown,
    run_sweep,
    run_trials,
    trial_to_csv,
)
from copbalance.telemetry import ChannelModel


def _seed(seed: int) -> int:
    env = os.environ.get("COP_SEED")
    return int(env) if env else seed


def _write_trials(records, out: pathlib.Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(records):
        (out / f"trial_{i}.csv").write_text(trial_to_csv(rec))


def _write_report(report, out: pathlib.Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_to_csv(report))
    (out / "report.md").write_text(report_to_markdown(report))


@click.group()
def main():
    """Center-of-pressure balance experiments."""


@main.command()
@click.option("--kp", default=0.10, show_default=True)
@click.option("--ki", default=0.0, show_default=True)
@click.option("--kd", default=0.0, show_default=True)
@click.option("--tilt-deg", default=3.0, show_default=True)
@click.option("--foot", default="alternate",
              type=click.Choice(["left", "right", "alternate"]), show_default=True)
@click.option("--trials", default=6, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--no-control", is_flag=True, help="Disable the PID correction.")
@click.option("--loss-prob", default=0.0, show_default=True)
@click.option("--latency-ms", default=0.0, show_default=True)
@click.option("--jitter-ms", default=0.0, show_default=True)
@click.option("--out", type=click.Path(path_type=pathlib.Path), default="out",
              show_default=True)
def run(kp, ki, kd, tilt_deg, foot, trials, seed, no_control, loss_prob,
        latency_ms, jitter_ms, out):
    """Run seeded foot-lift trials and write trial_<n>.csv logs."""
    config = TrialConfig(
        gains=PidGains(kp=kp, ki=ki, kd=kd),
        tilt_deg=tilt_deg,
        foot=foot,
        trials=trials,
        seed=_seed(seed),
        control_enabled=not no_control,
        channel=ChannelModel(loss_prob=loss_prob, latency_ms=latency_ms,
                             jitter_ms=jitter_ms),
    )
    records = run_trials(config)
    _write_trials(records, out)
    falls = sum(1 for r in records if r.outcome == "Fall")
    for i, rec in enumerate(records):
        click.echo(f"trial {i}: {rec.outcome}  rms={rec.rms:.4f}")
    click.echo(f"{trials - falls}/{trials} kept balance; logs in {out}/")


@main.command()
@click.option("--grid", type=click.Path(exists=True, path_type=pathlib.Path),
              help="JSON list of {kp, ki, kd}; defaults to the standard gain tables.")
@click.option("--tilt-deg", default=3.0, show_default=True)
@click.option("--trials", default=6, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=pathlib.Path), default="out",
              show_default=True)
def sweep(grid, tilt_deg, trials, seed, out):
    """Sweep a gain grid and write report.csv / report.md."""
    if grid is not None:
        points = [
            PidGains(kp=p.get("kp", 0.0), ki=p.get("ki", 0.0), kd=p.get("kd", 0.0))
            for p in json.loads(grid.read_text())
        ]
    else:
        points = standard_grid()
    config = TrialConfig(gains=PidGains(), tilt_deg=tilt_deg, trials=trials,
                         seed=_seed(seed))
    report = run_sweep(points, config)
    _write_report(report, out)
    click.echo(report_to_markdown(report))


@main.command()
@click.option("--seed", default=0, show_default=True)
@click.option("--trials", default=6, show_default=True)
@click.option("--out", type=click.Path(path_type=pathlib.Path), default="out",
              show_default=True)
def bringup(seed, trials, out):
    """Sweep the standard grid and report which gain points hold balance."""
    config = TrialConfig(trials=trials, seed=_seed(seed))
    result = run_bringup(config)
    _write_report(result["report"], out)
    click.echo(report_to_markdown(result["report"]))
    if result["best"] is None:
        click.echo("no grid point achieved 100 %")
        raise SystemExit(1)
    g = result["best"].gains
    click.echo(
        f"best 100% point: kp={g.kp} ki={g.ki} kd={g.kd} "
        f"rms={result['best'].mean_rms:.4f}"
    )


@main.command()
@click.option("--port", default=8390, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", type=click.Path(path_type=pathlib.Path),
              default="calibration.copc", show_default=True)
@click.option("--udp-port", type=int, default=None,
              help="Route foot packets over local UDP datagrams on this port.")
@click.option("--frontend", type=click.Path(exists=True, file_okay=False,
                                            path_type=pathlib.Path),
              default=None, help="Serve the built tuning console from this dir "
                                 "(defaults to ./frontend when present).")
def serve(port, host, store, udp_port, frontend):
    """Start the live service (HTTP + WebSocket) for the tuning console."""
    from copbalance.service import PortInUse, serve_live

    if frontend is None:
        candidate = pathlib.Path("frontend")
        if (candidate / "index.html").exists():
            frontend = candidate
    try:
        serve_live(port=port, host=host, store_path=str(store), udp_port=udp_port,
                   frontend_dir=None if frontend is None else str(frontend))
    except PortInUse as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--cell", required=True, type=click.IntRange(0, 7),
              help="Store cell index: left foot 0-3, right foot 4-7.")
@click.option("--tare", required=True, type=float, help="Raw counts at no load.")
@click.option("--loaded", required=True, type=float,
              help="Raw counts under the reference mass.")
@click.option("--mass", required=True, type=float, help="Reference mass in grams.")
@click.option("--store", type=click.Path(path_type=pathlib.Path),
              default="calibration.copc", show_default=True)
def calibrate(cell, tare, loaded, mass, store):
    """Two-point fit for one cell; updates the calibration store file."""
    try:
        coeffs = cal.fit_two_point(tare, loaded, mass, cell_id=cell % 4)
    except (cal.DegenerateCalibration, ValueError) as exc:
        raise click.ClickException(str(exc))
    if store.exists():
        current = cal.load_store(store)
    else:
        current = cal.CalibrationStore()
    updated = current.replaced(foot=cell // 4, cell_id=cell % 4, coeffs=coeffs)
    cal.save_store(updated, store)
    click.echo(
        f"cell {cell}: gradient={coeffs.gradient!r} g/count, "
        f"offset={coeffs.offset_counts!r} counts -> {store}"
    )


if __name__ == "__main__":
    main()
