"""Wall-time benchmarking of full-frame rendering."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError


@dataclass
class BenchResult:
    name: str
    frames: int
    total_seconds: float
    rays_per_frame: int
    threads: int
    frame_seconds: list = field(default_factory=list)
    digest: str = ""

    def __post_init__(self):
        if self.frames < 1:
            raise ConfigError("a benchmark needs at least one timed frame")

    @property
    def seconds_per_frame(self):
        return self.total_seconds / self.frames

    @property
    def us_per_ray(self):
        return 1e6 * self.seconds_per_frame / self.rays_per_frame

    def as_dict(self):
        return {"name": self.name, "frames": self.frames, "threads": self.threads,
                "total_seconds": self.total_seconds,
                "seconds_per_frame": self.seconds_per_frame,
                "us_per_ray": self.us_per_ray, "rays_per_frame": self.rays_per_frame,
                "digest": self.digest}


def _sharded(render_rays, origins, dirs, threads, pool):
    if threads == 1:
        return render_rays(origins, dirs)
    parts = np.array_split(np.arange(len(origins)), threads)
    futs = [pool.submit(render_rays, origins[p], dirs[p]) for p in parts]
    return np.concatenate([f.result() for f in futs])


def bench_walltime(name, render_rays, poses, threads=1, warmup=1, digest=""):
    """Time ``render_rays(origins, dirs) -> rgb`` over every pose's full frame.

    Ray generation and image assembly are inside the timed region; the
    first ``warmup`` poses are rendered but not timed. Rays of a frame are
    split into ``threads`` shards, each worker running single-threaded BLAS.
    """
    from .scene import generate_rays

    if threads < 1:
        raise ConfigError("threads must be >= 1")
    if len(poses) <= warmup:
        raise ConfigError("need more poses than warm-up frames")
    times = []
    with threadpool_limits(limits=1), ThreadPoolExecutor(threads) as pool:
        for k, pose in enumerate(poses):
            t0 = time.perf_counter()
            o, d = generate_rays(pose)
            img = _sharded(render_rays, o, d, threads, pool).reshape(
                pose.height, pose.width, 3)
            dt = time.perf_counter() - t0
            del img
            if k >= warmup:
                times.append(dt)
    rays = poses[0].height * poses[0].width
    return BenchResult(name, len(times), float(sum(times)), rays, threads, times, digest)


def student_renderer(model, encoder, near, far):
    from .student import render_rays

    return lambda o, d: render_rays(model, encoder, o, d, near, far)


def teacher_renderer(model, near, far, background, n_samples=None):
    from .teacher import render_rays

    return lambda o, d: render_rays(model, o, d, near, far, background, n_samples)
