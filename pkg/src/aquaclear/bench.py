"""Forward-pass throughput benchmark.

Times repeated single-image forward passes on a fixed random input after a
warmup phase.  Wall-clock numbers are hardware facts, not contracts; the
report pairs them with the analytic GFLOP count so throughput can be judged
against the arithmetic actually performed.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import network

MIN_ITERS = 10
MIN_WARMUP = 3


@dataclass
class BenchReport:
    height: int
    width: int
    warmup: int
    iters: int
    threads: int
    times: list[float] = field(default_factory=list)

    gflops: float = 0.0
    params: int = 0

    @property
    def time_min(self) -> float:
        return min(self.times)

    @property
    def time_median(self) -> float:
        return float(np.median(self.times))

    @property
    def time_mean(self) -> float:
        return float(np.mean(self.times))

    @property
    def fps(self) -> float:
        return 1.0 / self.time_median

    def to_dict(self) -> dict:
        return {
            "resolution": {"height": self.height, "width": self.width},
            "warmup": self.warmup,
            "iters": self.iters,
            "threads": self.threads,
            "seconds": {"min": self.time_min, "median": self.time_median,
                        "mean": self.time_mean},
            "fps": self.fps,
            "gflops": self.gflops,
            "params": self.params,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def run_benchmark(weights: network.NetworkWeights, height: int, width: int,
                  iters: int = 30, warmup: int = 5, threads: int = 1,
                  seed: int = 0) -> BenchReport:
    """Benchmark ``iters`` timed forward passes at the given resolution.

    ``threads`` > 1 runs the timed passes concurrently (each is still timed
    individually).  Requires iters >= 10 and warmup >= 3 so the medians mean
    something.
    """
    if iters < MIN_ITERS:
        raise ValueError(f"iters must be >= {MIN_ITERS}, got {iters}")
    if warmup < MIN_WARMUP:
        raise ValueError(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    rng = np.random.default_rng(seed)
    image = rng.random((1, 3, height, width), dtype=np.float32)

    def one_pass(_i: int) -> float:
        start = time.perf_counter()
        network.enhance(image, weights)
        return time.perf_counter() - start

    for i in range(warmup):
        one_pass(i)
    if threads == 1:
        times = [one_pass(i) for i in range(iters)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            times = list(pool.map(one_pass, range(iters)))
    report = BenchReport(height, width, warmup, iters, threads, times)
    report.gflops = network.count_gflops(weights, height, width)
    report.params = network.count_params(weights)
    return report
