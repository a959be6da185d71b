"""Command-line entry points: codec reports, one-shot projection, headless
experiments, and the live console service."""

import json
import math
import pathlib
import sys
import time

import click
import numpy as np

from . import containers
from .depth_codec import (CodecParams, DepthMap, StreamSpec, bandwidth_estimate,
                          decode_depth, decode_map, encode_depth, encode_map,
                          quantization_step)
from .depth_codec import EncodedDepthMap
from .errors import InvalidInputError
from .motion import PoseDelta, VehicleGeometry
from .projection import COMPILED, RgbImage, project_frame


@click.group()
@click.option("--seed", default=0, type=int, show_default=True,
              help="Seed for anything stochastic.")
@click.option("--out-dir", default="out", type=click.Path(), show_default=True,
              help="Directory for generated files.")
@click.pass_context
def main(ctx, seed, out_dir):
    """Predictive-display teleoperation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["out_dir"] = pathlib.Path(out_dir)


@main.command("codec-report")
@click.option("--d-min", default=1.0, show_default=True)
@click.option("--d-max", default=20.0, show_default=True)
@click.option("--rows", default=10, show_default=True, help="Sweep rows printed.")
@click.option("--csv", "csv_path", default=None, type=click.Path(),
              help="Also write the full sweep as CSV.")
@click.option("--compressed/--no-compressed", default=True, show_default=True,
              help="Measure compressed bandwidth on a synthetic render.")
@click.pass_context
def cmd_codec_report(ctx, d_min, d_max, rows, csv_path, compressed):
    """Depth-code curve, quantization step, and link bandwidth estimates."""
    if not (0 < d_min < d_max):
        raise click.UsageError("need 0 < d-min < d-max")
    p = CodecParams(d_min=d_min, d_max=d_max) if (d_min, d_max) != (1.0, 20.0) \
        else CodecParams()
    click.echo(f"codec: a={p.a} c={p.c} range [{p.d_min}, {p.d_max}] m")
    click.echo(f"endpoints: encode({p.d_min:g} m)={encode_depth(p.d_min, p)} "
               f"encode({p.d_max:g} m)={encode_depth(p.d_max, p)}")

    depths = np.linspace(p.d_min, p.d_max, max(rows, 2))
    click.echo(f"{'depth_m':>8} {'code':>5} {'decoded_m':>10} {'step_m':>8}")
    for d in depths:
        code = encode_depth(float(d), p)
        click.echo(f"{d:8.3f} {code:5d} {decode_depth(code, p):10.4f} "
                   f"{quantization_step(float(d), p):8.4f}")

    rgb = StreamSpec(byte_depth=1, height=376, width=672, channels=3, fps=30)
    raw_depth = StreamSpec(byte_depth=4, height=376, width=672, channels=1, fps=30)
    enc_depth = StreamSpec(byte_depth=1, height=376, width=672, channels=1, fps=30)
    click.echo("\nuncompressed bandwidth (MB/s, decimal | binary):")
    total_dec = total_bin = 0.0
    for name, s in (("rgb 376x672x3 @30", rgb),
                    ("depth f32 @30", raw_depth),
                    ("depth u8 encoded @30", enc_depth)):
        dec, binv = bandwidth_estimate(s), bandwidth_estimate(s, binary_mb=True)
        click.echo(f"  {name:24s} {dec:6.2f} | {binv:6.2f}")
        if "encoded" not in name:
            total_dec += dec
            total_bin += binv
    click.echo(f"  {'total (rgb + f32 depth)':24s} {total_dec:6.2f} | {total_bin:6.2f}")

    if compressed:
        from .simworld import build_scene, CameraPose, render

        scene = build_scene(seed=ctx.obj["seed"])
        img, dm = render(scene, CameraPose(0.0, 0.0, 1.6, 0.0, math.radians(5.0)),
                         672, 376, math.radians(90.0), math.radians(60.0))
        rgb_bytes = len(containers.rgb_to_payload(img.data))
        depth_bytes = len(containers.codes_to_payload(encode_map(dm).codes))
        mbs = (rgb_bytes + depth_bytes) * 30 / 1e6
        click.echo(f"\ncompressed pipeline (JPEG rgb + PNG depth, 30 fps): "
                   f"{mbs:.2f} MB/s")

    if csv_path:
        sweep = np.linspace(p.d_min, p.d_max, 10_000)
        codes = [encode_depth(float(d), p) for d in sweep]
        out = np.column_stack([sweep, codes,
                               [decode_depth(c, p) for c in codes],
                               [quantization_step(float(d), p) for d in sweep]])
        np.savetxt(csv_path, out, delimiter=",", fmt="%.6f",
                   header="depth_m,code,decoded_m,step_m", comments="")
        click.echo(f"sweep written to {csv_path}")


@main.command("project")
@click.argument("rgb_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("depth_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dx", default=0.0, show_default=True, help="Lateral shift, m (right +).")
@click.option("--dz", default=0.0, show_default=True, help="Forward shift, m.")
@click.option("--dyaw", default=0.0, show_default=True, help="Yaw change, degrees (right +).")
@click.option("--pitch", default=0.0, show_default=True, help="Camera mounting pitch, degrees down.")
@click.option("--fov-h", default=90.0, show_default=True)
@click.option("--fov-v", default=60.0, show_default=True)
@click.option("--mask/--no-mask", default=False, help="Also write the validity mask.")
@click.option("--workers", default=1, show_default=True)
@click.pass_context
def cmd_project(ctx, rgb_path, depth_path, dx, dz, dyaw, pitch, fov_h, fov_v,
                mask, workers):
    """Warp one RGB + 8-bit-depth frame pair into a shifted camera pose."""
    from PIL import Image

    out_dir = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        rgb = RgbImage(containers.payload_to_rgb(pathlib.Path(rgb_path).read_bytes()))
        codes = containers.payload_to_codes(pathlib.Path(depth_path).read_bytes())
    except Exception as exc:
        raise click.ClickException(f"could not read inputs: {exc}")
    enc = EncodedDepthMap(codes, fov_h=math.radians(fov_h), fov_v=math.radians(fov_v))
    dm = decode_map(enc)
    if (rgb.height, rgb.width) != (dm.height, dm.width):
        raise click.ClickException(
            f"dimension mismatch: rgb {rgb.height}x{rgb.width} "
            f"vs depth {dm.height}x{dm.width}")
    delta = PoseDelta(dx_cam=dx, dz_cam=dz, dpsi_cam=math.radians(dyaw))
    geom = VehicleGeometry(cam_pitch=math.radians(pitch))
    t0 = time.perf_counter()
    out, warped = project_frame(rgb, dm, delta, geom, workers=workers)
    elapsed = (time.perf_counter() - t0) * 1000.0
    out_path = out_dir / "projected.png"
    Image.fromarray(out.data).save(out_path)
    click.echo(f"wrote {out_path} ({elapsed:.1f} ms, "
               f"backend={'compiled' if COMPILED else 'python'}, "
               f"{100.0 * warped.valid_mask.mean():.1f}% valid pre-inpaint)")
    if mask:
        mask_path = out_dir / "projected_mask.png"
        Image.fromarray((warped.valid_mask * 255).astype(np.uint8)).save(mask_path)
        click.echo(f"wrote {mask_path}")


@main.command("experiment")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def cmd_experiment(ctx, config_path):
    """Run one headless closed-loop experiment from a YAML config."""
    from .loop import ExperimentConfig, run_experiment

    try:
        cfg = ExperimentConfig.from_file(config_path)
    except InvalidInputError as exc:
        raise click.ClickException(str(exc))
    if ctx.obj["seed"] != 0:
        cfg.seed = ctx.obj["seed"]
    report = run_experiment(cfg, out_dir=ctx.obj["out_dir"])
    click.echo(report.to_json())
    if not report.completed:
        click.echo("warning: lap not completed within max_duration", err=True)


@main.command("serve")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--track", default="r7_80", show_default=True)
@click.option("--fps", default=15.0, show_default=True)
@click.option("--width", default=336, show_default=True)
@click.option("--height", default=188, show_default=True)
@click.option("--downlink-delay", default=0.100, show_default=True)
@click.option("--uplink-delay", default=0.050, show_default=True)
@click.option("--pp/--no-pp", default=True, show_default=True)
@click.pass_context
def cmd_serve(ctx, port, host, track, fps, width, height, downlink_delay,
              uplink_delay, pp):
    """Serve the live vehicle simulation for the browser console."""
    from .service import ServiceConfig, serve

    cfg = ServiceConfig(track=track, seed=ctx.obj["seed"], width=width,
                        height=height, fps=fps, downlink_delay=downlink_delay,
                        uplink_delay=uplink_delay, pp=pp)
    click.echo(f"serving ws://{host}:{port}/ws (health at /health)")
    try:
        serve(cfg, port=port, host=host)
    except OSError as exc:
        raise click.ClickException(f"cannot bind {host}:{port}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
