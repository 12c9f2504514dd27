"""Counter-based random streams addressed by (master_seed, stream_id, position).

Each stream is a Philox-4x64 generator keyed by the pair (seed, stream).
Gaussians come from numpy's ziggurat ``standard_normal``, which is
deterministic across platforms for a fixed bit stream.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= MASK64:
            raise ValueError("master_seed must fit in 64 bits")
        if not 0 <= int(self.stream_id) <= MASK64:
            raise ValueError("stream_id must fit in 64 bits")

    def generator(self, position: int = 0) -> np.random.Generator:
        """Fresh generator positioned ``position`` Philox blocks into the stream."""
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        bg = np.random.Philox(key=key)
        if position:
            bg.advance(position)
        return np.random.Generator(bg)

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.master_seed, stream_id)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng), 0).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def master_seed_of(rng) -> int:
    if isinstance(rng, RngStream):
        return rng.master_seed
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    raise TypeError("Monte Carlo drivers need an RngStream or an integer master seed")


def map_replicas(fn, replicas: int, seed: int, workers: int = 1, width: int = 1):
    """Evaluate ``fn(i, generator_i)`` for i < replicas; replica i uses stream (seed, i).

    ``fn`` returns ``width`` floats. Results land in a preallocated array
    indexed by replica, so the output does not depend on ``workers``.
    """
    out = np.empty((replicas, width), dtype=np.float64)
    base = RngStream(seed, 0)

    def run(lo, hi):
        for i in range(lo, hi):
            out[i] = fn(i, base.child(i).generator())

    if workers <= 1 or replicas < 2:
        run(0, replicas)
    else:
        bounds = np.linspace(0, replicas, min(workers, replicas) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
            for fut in futures:
                fut.result()
    return out[:, 0] if width == 1 else out
