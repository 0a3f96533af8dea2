"""Command line entry point: ``vgtbench run|report|render|detect``.

Exit codes: 0 success, 1 configuration/usage error, 2 data error.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .assets import resolve
from .bench.config import ConfigError, validate_config
from .bench.pipeline import MeshLoadError, run as run_bench
from .bench.report import EmptyResults, format_direction, report as write_report
from .detect import DetectError, DetectorParams, detect as run_detect, write_detections_csv
from .mesh_io import MeshError, load_mesh, normalize_mesh
from .raster import Camera, SuiteError, parse_transform, render as render_scene

EXIT_CONFIG = 1
EXIT_DATA = 2


class DataError(click.ClickException):
    exit_code = EXIT_DATA


class ConfigProblem(click.ClickException):
    exit_code = EXIT_CONFIG


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              help="TOML run configuration.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (overrides the config).")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Scene worker processes.")
@click.option("--no-report", is_flag=True, help="Skip plot/table generation.")
def run(config_path, out_dir, workers, no_report):
    """Run the full benchmark described by a config file."""
    try:
        cfg = validate_config(config_path)
    except ConfigError as exc:
        raise ConfigProblem(str(exc)) from exc
    out = Path(out_dir or cfg.output)
    try:
        run_bench(cfg, out_dir=out, workers=workers)
    except (MeshLoadError, MeshError, OSError) as exc:
        raise DataError(str(exc)) from exc
    click.echo(f"wrote {out / 'results.csv'} and {out / 'summary.json'}")
    if not no_report:
        _report(out)


def _report(results_dir: Path):
    try:
        files = write_report(results_dir)
    except EmptyResults as exc:
        raise DataError(str(exc)) from exc
    for f in files:
        click.echo(f"wrote {f}")
    summary = json.loads((results_dir / "summary.json").read_text(encoding="utf-8"))
    text = format_direction(summary)
    if text:
        click.echo(text)


@cli.command()
@click.option("--results", "results_dir", required=True, type=click.Path(file_okay=False))
def report(results_dir):
    """Generate plots and tables from a results directory."""
    _report(Path(results_dir))


@cli.command()
@click.option("--model", required=True, help="Mesh path or builtin:<name>.")
@click.option("--transform", "transform_spec", default="Identity", show_default=True,
              help="e.g. RotX:30, RotZ:90, ScaleXY:2 or ScaleXY:2,1.5.")
@click.option("--dump-gbuffer", is_flag=True, help="Also write the binary G-buffer dump.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--size", type=int, default=300, show_default=True, help="Square image size in pixels.")
def render(model, transform_spec, dump_gbuffer, out_dir, size):
    """Render one scene to PNG (debug)."""
    try:
        tr = parse_transform(transform_spec)
        camera = Camera(width=size, height=size)
    except (SuiteError, ValueError) as exc:
        raise ConfigProblem(str(exc)) from exc
    try:
        mesh = normalize_mesh(load_mesh(resolve(model)))
    except (MeshError, OSError) as exc:
        raise DataError(str(exc)) from exc
    gb = render_scene(mesh, tr, camera)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{mesh.name}_{tr.desc.replace('(', '_').replace(')', '').replace(',', '_')}"
    gb.save_png(out / f"{stem}.png")
    click.echo(f"wrote {out / (stem + '.png')} ({int(gb.mask.sum())} covered pixels)")
    if dump_gbuffer:
        gb.dump(out / f"{stem}.gbuf")
        click.echo(f"wrote {out / (stem + '.gbuf')}")


@cli.command()
@click.option("--image", required=True, type=click.Path(dir_okay=False))
@click.option("--detector", required=True)
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), default=None,
              help="CSV path (default: print to stdout).")
def detect(image, detector, out_csv):
    """Run one detector on a grayscale image (debug)."""
    from PIL import Image

    try:
        with Image.open(image) as im:
            img = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise DataError(f"{image}: {exc}") from exc
    try:
        pts = run_detect(img, detector, DetectorParams())
    except DetectError as exc:
        raise (ConfigProblem if "unknown detector" in str(exc) else DataError)(str(exc)) from exc
    write_detections_csv(pts, out_csv or sys.stdout)
    if out_csv:
        click.echo(f"wrote {len(pts)} points to {out_csv}")


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="vgtbench", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        code = exc.exit_code
        if isinstance(exc, click.UsageError):
            code = EXIT_CONFIG
        sys.exit(code)
    except click.Abort:
        sys.exit(EXIT_CONFIG)
    sys.exit(0)


if __name__ == "__main__":
    main()
