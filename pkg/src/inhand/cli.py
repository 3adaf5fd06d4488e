"""Command-line client for the tracking service.

Every verb talks HTTP. Without ``--server`` the app runs in-process over an
ASGI transport, so file outputs land on the local filesystem; with
``--server`` the same requests go to a remote instance.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=3600.0) as client:
            resp = client.post(path, json=payload)
    else:
        # in-process: run the ASGI app for just this request
        import asyncio
        from .service import create_app

        async def _go():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                    transport=transport, base_url="http://inhand.local",
                    timeout=3600.0) as client:
                return await client.post(path, json=payload)

        resp = asyncio.run(_go())
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        click.echo(f"error ({resp.status_code}): {detail}", err=True)
        sys.exit(1)
    return resp.json()


_server_opt = click.option("--server", default=None, metavar="URL",
                           help="remote service URL; default runs in-process")


@click.group()
def main():
    """Pose tracking over an ensemble of contact-physics simulations."""


@main.command()
@click.option("--kind", default="grasp-rotate", show_default=True,
              type=click.Choice(["grasp-rotate", "gait"]))
@click.option("--object", "object_", default="spam", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--ticks", default=600, show_default=True)
@click.option("--zero-noise", is_flag=True, help="record noiseless observations")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_server_opt
def record(kind, object_, seed, ticks, zero_noise, out, server):
    """Script one demonstration and save it as a trajectory file."""
    data = _post(server, "/record", {
        "kind": kind, "object": object_, "seed": seed, "ticks": ticks,
        "zero_noise": zero_noise,
    })
    Path(out).write_text(data["jsonl"])
    click.echo(f"{out}: {data['num_ticks']} ticks, "
               f"net rotation {data['net_rotation']:.3f} rad, "
               f"scene {data['scene_hash']}")


def _variant_payload(optimizer, regime, lanes, window, exploration_scale,
                     contacts_off, slip_off, name=None):
    return {
        "name": name or f"{optimizer}-{regime}",
        "optimizer": optimizer, "regime": regime, "num_lanes": lanes,
        "window": window, "exploration_scale": exploration_scale,
        "contacts_off": contacts_off, "slip_off": slip_off,
    }


@main.command()
@click.option("--trajectory", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--object", "object_", default="spam", show_default=True,
              help="library object the trajectory was recorded with")
@click.option("--optimizer", default="wrs", show_default=True,
              type=click.Choice(["wrs", "reps", "pbo", "eye", "olp"]))
@click.option("--regime", default="med", show_default=True,
              type=click.Choice(["zero", "low", "med", "high"]))
@click.option("--lanes", default=40, show_default=True)
@click.option("--window", default=15, show_default=True)
@click.option("--exploration-scale", default=1.0, show_default=True)
@click.option("--contacts-off", is_flag=True)
@click.option("--slip-off", is_flag=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="write the per-tick ADD series as CSV")
@_server_opt
def track(trajectory, object_, optimizer, regime, lanes, window,
          exploration_scale, contacts_off, slip_off, seed, out, server):
    """Run one tracker over one recorded trajectory."""
    data = _post(server, "/track", {
        "trajectory": {"object": object_, "jsonl": Path(trajectory).read_text(),
                       "label": Path(trajectory).stem},
        "variant": _variant_payload(optimizer, regime, lanes, window,
                                    exploration_scale, contacts_off, slip_off),
        "seed": seed,
        "include_series": out is not None,
    })
    click.echo(f"{data['trajectory']} / {data['variant']} seed={data['seed']}: "
               f"mean ADD {data['mean_add'] * 1000:.2f} mm, "
               f"max {data['max_add'] * 1000:.2f} mm, "
               f"final {data['final_add'] * 1000:.2f} mm, "
               f"diverged lanes {data['diverged']}")
    if out is not None:
        lines = ["# inhand-series-v1", "tick,add"]
        lines += [f"{i},{v!r}" for i, v in enumerate(data["series"])]
        Path(out).write_text("\n".join(lines) + "\n")
        click.echo(f"series -> {out}")


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        click.echo(f"cannot read config {path}: {exc}", err=True)
        sys.exit(1)


def _inline_paths(cfg: dict) -> dict:
    """Read local trajectory files so remote servers see their content."""
    for spec in cfg.get("trajectories", []):
        p = spec.get("path")
        if p and not spec.get("jsonl") and Path(p).exists():
            spec["jsonl"] = Path(p).read_text()
    return cfg


_ROW_FMT = "{:<22} {:<26} {:>4} {:>10} {:>10} {:>10}"


def _print_rows(rows):
    click.echo(_ROW_FMT.format("trajectory", "variant", "runs",
                               "mean_add", "seed_std", "final_add"))
    for r in rows:
        click.echo(_ROW_FMT.format(
            r["trajectory"], r["variant"], r["runs"],
            f"{r['mean_add'] * 1000:.2f}mm",
            f"{r['std_between_seeds'] * 1000:.2f}mm",
            f"{r['mean_final_add'] * 1000:.2f}mm"))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              required=True, help="experiment grid as JSON")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="metrics directory (overrides the config)")
@click.option("--jobs", default=None, type=int)
@_server_opt
def experiment(config_path, out, jobs, server):
    """Run a full experiment grid and emit metrics files."""
    cfg = _inline_paths(_load_config(config_path))
    if out is not None:
        cfg["out"] = out
    if jobs is not None:
        cfg["jobs"] = jobs
    data = _post(server, "/experiment", cfg)
    _print_rows(data["rows"])
    click.echo(f"{data['num_runs']} runs"
               + (f", {len(data['files'])} files" if data["files"] else ""))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              required=True)
@click.option("--axis", required=True,
              type=click.Choice(["exploration", "K", "contacts_off", "slip_off"]))
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="directory for the derived config files")
@_server_opt
def ablate(config_path, axis, out, server):
    """Generate variant experiment configs along one ablation axis."""
    cfg = _load_config(config_path)
    data = _post(server, "/ablate", {"config": cfg, "axis": axis})
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, derived in enumerate(data["configs"]):
        p = out_dir / f"{Path(config_path).stem}-{axis}-{i}.json"
        p.write_text(json.dumps(derived, indent=2) + "\n")
        click.echo(str(p))


@main.command()
@click.option("--out", "metrics_dir", type=click.Path(exists=True,
              file_okay=False), required=True,
              help="metrics directory produced by `experiment`")
@_server_opt
def report(metrics_dir, server):
    """Aggregate emitted metrics into a summary table."""
    data = _post(server, "/report", {"out": metrics_dir})
    _print_rows(data["rows"])


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8322, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn
    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
