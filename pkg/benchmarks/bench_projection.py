"""Benchmark the warp kernels: compiled extension vs pure-Python fallback.

Usage:
    python3 benchmarks/bench_projection.py [--repeats 11] [--width 672]
                                           [--height 376]

Times the two hot kernels (span paint and fast-marching inpaint) through both
backends on the same rendered frame, then the full project_frame pipeline
with the active backend. Outputs median wall time per call.
"""

import argparse
import math
import statistics
import time

import numpy as np

from teleview.depth_codec import decode_map, encode_map
from teleview.motion import PoseDelta, VehicleGeometry
from teleview.projection import (COMPILED, depth_to_points, get_backend,
                                 make_transform, points_to_pixels,
                                 project_frame, transform_points)
from teleview.simworld import CameraPose, build_scene, make_track, render


def timeit(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=11)
    ap.add_argument("--width", type=int, default=672)
    ap.add_argument("--height", type=int, default=376)
    args = ap.parse_args()

    fov_h, fov_v = math.radians(90.0), math.radians(60.0)
    geom = VehicleGeometry(wheelbase=1.76, cam_offset=0.8,
                           cam_pitch=math.radians(5.0))
    scene = build_scene(make_track("r7_80"), seed=0)
    cam = CameraPose(0.0, 2.0, 1.6, 0.0, pitch=geom.cam_pitch)
    rgb, dm = render(scene, cam, args.width, args.height, fov_h, fov_v)
    dm = decode_map(encode_map(dm))
    delta = PoseDelta(dx_cam=0.1, dz_cam=1.2, dpsi_cam=math.radians(5.0))

    pc = depth_to_points(dm)
    moved = transform_points(pc, make_transform(delta, geom))
    xd, yd, zn, _ = points_to_pixels(moved)
    paint_args = (np.ascontiguousarray(xd), np.ascontiguousarray(yd),
                  np.ascontiguousarray(pc.z), np.ascontiguousarray(zn),
                  np.ascontiguousarray(moved.valid.astype(np.uint8)),
                  np.ascontiguousarray(rgb.data), args.height, args.width)

    print(f"frame {args.height}x{args.width}, {args.repeats} repeats, "
          f"compiled extension available: {COMPILED}")
    backends = ["python"] + (["compiled"] if COMPILED else [])
    results = {}
    for name in backends:
        be = get_backend(name)
        out = be.paint_spans(*paint_args)
        mask = np.asarray(out[2], dtype=np.uint8)
        inpaint_args = (np.ascontiguousarray(np.asarray(out[0])),
                        np.ascontiguousarray(mask), 5)
        t_paint = timeit(lambda: be.paint_spans(*paint_args), args.repeats)
        t_inpaint = timeit(lambda: be.telea_inpaint(*inpaint_args),
                           args.repeats)
        results[name] = (t_paint, t_inpaint)
        print(f"  {name:9s} paint_spans {t_paint:9.2f} ms   "
              f"telea_inpaint {t_inpaint:9.2f} ms")

    if COMPILED:
        sp_paint = results["python"][0] / results["compiled"][0]
        sp_inp = results["python"][1] / results["compiled"][1]
        print(f"  speedup   paint_spans {sp_paint:8.1f}x    "
              f"telea_inpaint {sp_inp:8.1f}x")

    t_full = timeit(lambda: project_frame(rgb, dm, delta, geom), args.repeats)
    print(f"full project_frame pipeline ({'compiled' if COMPILED else 'python'}"
          f" backend): {t_full:.2f} ms median "
          f"({'within' if t_full <= 33.0 else 'OVER'} the 33 ms frame budget)")


if __name__ == "__main__":
    main()
