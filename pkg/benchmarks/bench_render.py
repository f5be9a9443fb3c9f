"""Benchmark: compiled render core vs the pure-numpy fallback.

Run:  python3 benchmarks/bench_render.py
"""
import time

import numpy as np

from navworld.world import generate_layout
from navworld.world import render_numpy

try:
    from navworld.world import _render_core

    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False


def frames_per_second(impl, layout, size, seconds=1.0):
    rng = np.random.default_rng(0)
    poses = [(rng.uniform(2, 14), rng.uniform(2.2, 3.8), rng.uniform(-3, 3)) for _ in range(64)]
    n = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < seconds:
        x, y, h = poses[n % len(poses)]
        impl.render_frame(layout.grid, layout.face_tex, x, y, h, size, size, 25.0)
        n += 1
    return n / (time.perf_counter() - t0)


def env_steps_per_second(size, seconds=2.0):
    from navworld.world import MazeEnv

    env = MazeEnv(generate_layout("static_mini", 1), img_hw=(size, size))
    env.reset(0)
    rng = np.random.default_rng(0)
    n = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < seconds:
        _, _, done, _ = env.step(int(rng.integers(8)))
        n += 1
        if done:
            env.reset(n)
    return n / (time.perf_counter() - t0)


def main():
    layout = generate_layout("imaze", 7)
    print(f"{'frame size':>12} {'numpy fps':>12} {'compiled fps':>14} {'speedup':>9}")
    for size in (16, 32, 64, 84):
        numpy_fps = frames_per_second(render_numpy, layout, size)
        if HAVE_COMPILED:
            compiled_fps = frames_per_second(_render_core, layout, size)
            print(f"{size:>10}px {numpy_fps:>12.0f} {compiled_fps:>14.0f} {compiled_fps / numpy_fps:>8.1f}x")
        else:
            print(f"{size:>10}px {numpy_fps:>12.0f} {'n/a':>14} {'n/a':>9}")
    if HAVE_COMPILED:
        rgb1, d1 = render_numpy.render_frame(layout.grid, layout.face_tex, 8.5, 10.5, 0.7, 84, 84, 25.0)
        rgb2, d2 = _render_core.render_frame(layout.grid, layout.face_tex, 8.5, 10.5, 0.7, 84, 84, 25.0)
        print(f"\nbackends bit-identical: rgb={np.array_equal(rgb1, rgb2)}, depth={np.array_equal(d1, d2)}")
    print(f"\nagent steps/s with rendering, 32px (selected backend): {env_steps_per_second(32):.0f}")


if __name__ == "__main__":
    main()
