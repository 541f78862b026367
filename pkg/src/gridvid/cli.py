"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/processing error.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .codec import (
    EncodeConfig,
    StageTimer,
    decode_frame,
    encode_quality_ladder,
    encode_sequence,
    psnr,
    stream_report,
)
from .container import StreamReader, build_manifest, write_manifest
from .errors import GridVidError
from .gridio import read_feature_grid, read_motion_field, write_feature_grid
from .render import (
    Camera,
    RenderConfig,
    image_to_png,
    load_decoder_weights,
    render_image,
    write_raw_rgb,
)
from .synth import SceneSpec, write_scene


@click.group()
def cli():
    """Volumetric feature-grid video tools: synthesize, encode, decode, render, serve."""


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def synth(spec_path, out_dir):
    """Generate a synthetic scene (RRFG frames + RRFM motion fields)."""
    doc = json.loads(Path(spec_path).read_text())
    spec = SceneSpec.from_json(doc)
    summary = write_scene(spec, out_dir)
    click.echo(f"wrote {summary['frames']} frames and {summary['motions']} motion fields to {summary['dir']}")


def _load_sequence(grids_dir, motions_dir):
    grid_paths = sorted(Path(grids_dir).glob("*.rrfg"))
    if not grid_paths:
        raise GridVidError(f"no .rrfg files in {grids_dir}")
    grids = [read_feature_grid(p) for p in grid_paths]
    motions = []
    if len(grids) > 1:
        motion_paths = sorted(Path(motions_dir).glob("*.rrfm")) if motions_dir else []
        if len(motion_paths) != len(grids) - 1:
            raise GridVidError(
                f"need {len(grids) - 1} motion fields, found {len(motion_paths)} in {motions_dir}"
            )
        motions = [read_motion_field(p) for p in motion_paths]
    return grids, motions


@cli.command()
@click.option("--grids", "grids_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--motions", "motions_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--sq", "sq_values", multiple=True, type=float, default=(1.0,), show_default=True,
              help="Quantization scale; repeat for a multi-quality ladder.")
@click.option("--tau", type=float, default=0.0, show_default=True)
@click.option("--gof", type=int, default=20, show_default=True)
@click.option("--kernel", type=int, default=8, show_default=True)
@click.option("--pca-rank", type=int, default=None)
@click.option("--fps", type=float, default=25.0, show_default=True)
@click.option("--decoder-weights", type=click.Path(exists=True, dir_okay=False),
              help="Embed MLP decoder weights (enables mlp render mode).")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Stream file for a single --sq, directory for a ladder.")
@click.option("--report", "report_path", type=click.Path(), help="Encode report JSON path.")
def encode(grids_dir, motions_dir, sq_values, tau, gof, kernel, pca_rank, fps,
           decoder_weights, out_path, report_path):
    """Encode RRFG frames (plus RRFM motion) into one or more RRFV streams."""
    grids, motions = _load_sequence(grids_dir, motions_dir)
    weights = Path(decoder_weights).read_bytes() if decoder_weights else b""
    cfg = EncodeConfig(
        sq_ladder=tuple(sq_values), tau=tau, gof_length=gof, kernel=kernel,
        pca_rank=pca_rank, frame_rate=fps,
        decoder_mode="mlp" if weights else "direct", decoder_weights=weights,
    )
    out = Path(out_path)
    if len(sq_values) == 1 and out.suffix == ".rrfv":
        blob = encode_sequence(grids, motions, cfg)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(blob)
        kbps = len(blob) * 8.0 * fps / len(grids) / 1000.0
        manifest = build_manifest(len(grids), gof, fps, [
            {"sq": sq_values[0], "avg_bitrate_kbps": round(kbps, 3), "path": out.name}
        ])
        write_manifest(out.with_suffix(".manifest.json"), manifest)
        streams = [out]
    else:
        manifest, streams = encode_quality_ladder(grids, motions, cfg, out)
        write_manifest(out / "manifest.json", manifest)

    reports = {}
    for path in streams:
        with StreamReader(path) as reader:
            reports[path.name] = stream_report(reader)
    report_file = Path(report_path) if report_path else (
        out.with_suffix(".report.json") if out.suffix == ".rrfv" else out / "report.json"
    )
    report_file.parent.mkdir(parents=True, exist_ok=True)
    report_file.write_text(json.dumps(reports, indent=2) + "\n")

    for name, rep in reports.items():
        click.echo(
            f"{name}: {rep['frame_count']} frames, {rep['totals']['total']} bytes "
            f"({rep['compression_ratio']:.0f}x vs raw), mean I {rep['mean_i_bytes']:.0f} B, "
            f"mean P {rep['mean_p_bytes']:.0f} B"
        )
    click.echo(f"report: {report_file}")


@cli.command()
@click.option("--in", "stream_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--frame", type=int, required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--timing/--no-timing", default=False, help="Print per-stage decode times.")
def decode(stream_path, frame, out_path, timing):
    """Decode one frame from a stream into an RRFG file."""
    timer = StageTimer()
    with StreamReader(stream_path) as reader:
        grid = decode_frame(reader, frame, timer)
    write_feature_grid(out_path, grid)
    click.echo(f"decoded frame {frame} -> {out_path}")
    if timing:
        for stage, agg in sorted(timer.summary().items()):
            click.echo(f"  {stage:12s} {agg['total_ms']:8.2f} ms over {agg['count']} calls")


@cli.command()
@click.option("--in", "stream_path", required=True, type=click.Path(exists=True, dir_okay=False))
def info(stream_path):
    """Show header, GOF table, and per-frame sizes by category."""
    with StreamReader(stream_path) as reader:
        h = reader.header
        rep = stream_report(reader)
    click.echo(f"stream:      {stream_path}")
    click.echo(f"grid:        {h.dims[0]}x{h.dims[1]}x{h.dims[2]} x{h.channels} channels")
    click.echo(f"bbox:        {h.bbox_min.tolist()} .. {h.bbox_max.tolist()}")
    click.echo(f"frames:      {h.frame_count} @ {h.frame_rate:g} fps, GOF length {h.gof_length} "
               f"({rep['gof_count']} GOFs)")
    click.echo(f"quantizer:   sq={h.default_sq:g}, kernel={h.kernel}, decoder={h.decoder_mode}")
    click.echo(f"total bytes: {rep['totals']['total']} ({rep['compression_ratio']:.0f}x vs raw f32)")
    click.echo(f"{'frame':>5} {'type':>4} {'gof':>3} {'residual':>9} {'motion':>7} {'pca':>6} {'other':>6} {'total':>9}")
    for row in rep["frames"]:
        click.echo(f"{row['frame']:>5} {row['type']:>4} {row['gof']:>3} {row['residual']:>9} "
                   f"{row['motion']:>7} {row['pca']:>6} {row['other']:>6} {row['total']:>9}")
    totals = rep["totals"]
    click.echo(f"{'sum':>5} {'':>4} {'':>3} {totals['residual']:>9} {totals['motion']:>7} "
               f"{totals['pca']:>6} {totals['other']:>6} {totals['total']:>9}")


@cli.command()
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--weights", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["direct", "mlp"]), default="direct", show_default=True)
@click.option("--samples", type=int, default=128, show_default=True)
@click.option("--near", type=float, default=None)
@click.option("--far", type=float, default=None)
@click.option("--background", nargs=3, type=float, default=(0.0, 0.0, 0.0), show_default=True)
@click.option("--density-floor", type=float, default=0.05, show_default=True)
@click.option("--density-shift", type=float, default=0.0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--raw-out", type=click.Path(), help="Also dump raw f32 RGB for metrics.")
def render(grid_path, camera_path, out_path, weights, mode, samples, near, far,
           background, density_floor, density_shift, threads, raw_out):
    """Render an RRFG grid to PNG with a camera from a JSON file."""
    grid = read_feature_grid(grid_path)
    cam_doc = json.loads(Path(camera_path).read_text())
    camera = Camera(
        position=np.array(cam_doc["position"], dtype=np.float64),
        target=np.array(cam_doc["target"], dtype=np.float64),
        up=np.array(cam_doc.get("up", (0.0, 1.0, 0.0)), dtype=np.float64),
        fov_deg=float(cam_doc.get("fov_deg", 45.0)),
        width=int(cam_doc.get("width", 256)),
        height=int(cam_doc.get("height", 256)),
    )
    if near is None:
        near = float(cam_doc.get("near", 0.1))
    if far is None:
        far = float(cam_doc.get("far", 4.0))
    cfg = RenderConfig(
        samples=samples, near=near, far=far, background=tuple(background),
        mode=mode, density_shift=density_shift, density_floor=density_floor,
    )
    decoder = load_decoder_weights(weights) if weights else None
    image = render_image(grid, camera, cfg, decoder, threads=threads)
    Path(out_path).write_bytes(image_to_png(image))
    if raw_out:
        write_raw_rgb(raw_out, image)
    click.echo(f"rendered {camera.width}x{camera.height} -> {out_path}")


@cli.command("psnr")
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--peak", type=float, default=None, help="Signal peak; defaults to max |ref|.")
def psnr_cmd(ref_path, test_path, peak):
    """PSNR between two RRFG grids, in dB, on stdout."""
    ref = read_feature_grid(ref_path)
    test = read_feature_grid(test_path)
    if peak is None:
        peak = float(np.abs(ref.data).max()) or 1.0
    value = psnr(ref.data, test.data, peak)
    click.echo("inf" if math.isinf(value) else f"{value:.4f}")


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--samples", type=int, default=96, show_default=True)
@click.option("--cache", "cache_capacity", type=int, default=48, show_default=True)
@click.option("--max-size", type=int, default=1024, show_default=True)
def serve(manifest_path, port, host, samples, cache_capacity, max_size):
    """Start the HTTP streaming service for an encoded quality ladder."""
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings(
        manifest_path=manifest_path, samples=samples,
        cache_capacity=cache_capacity, max_size=max_size,
    )
    app = create_app(settings)
    click.echo(f"serving {manifest_path} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (GridVidError, OSError, ValueError, KeyError, IndexError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
