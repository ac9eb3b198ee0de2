"""Monte-Carlo benchmark: repeated noisy replicates of a synthetic scene,
denoised by each method, summarized as mean and sample sd of the RMSE.

Replicate seeds are derived from (base seed, size, noise sd, replicate
index), so every replicate gets an independent stream and all methods see
the same noisy images.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np

from .grid import NoiseSpec, SceneSpec, add_noise, rmse, synth
from .pipeline import MODES, default_params, denoise

__all__ = ["BenchRow", "replicate_seed", "run_bench", "write_csv", "read_csv"]

CSV_HEADER = "scene,n,sd,method,L,mean_rmse,sd_rmse,seconds"


@dataclass(frozen=True)
class BenchRow:
    scene: str
    n: int
    sd: float
    method: str
    replicates: int
    mean_rmse: float
    sd_rmse: float
    seconds: float


def replicate_seed(base_seed: int, n: int, sd: float, rep: int) -> int:
    """Deterministic 64-bit seed for one noise replicate."""
    sd_bits = struct.unpack("<Q", struct.pack("<d", float(sd)))[0]
    ss = np.random.SeedSequence((int(base_seed), int(n), sd_bits, int(rep)))
    return int(ss.generate_state(1, np.uint64)[0])


def run_bench(
    scene: str,
    sizes,
    sds,
    replicates: int,
    methods,
    base_seed: int = 0,
    threads: int = 0,
) -> list[BenchRow]:
    """One row per (size, noise sd, method) combination.

    `seconds` is the wall-clock total of the denoise calls over the
    replicates (noise generation and scoring excluded).
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    for m in methods:
        if m not in MODES:
            raise ValueError(f"unknown method {m!r} (choose from {MODES})")
    rows = []
    for n in sizes:
        truth = synth(SceneSpec.parse(scene, n))
        for sd in sds:
            noisy = [
                add_noise(truth, NoiseSpec(sd=sd, seed=replicate_seed(base_seed, n, sd, rep)))
                for rep in range(1, replicates + 1)
            ]
            for method in methods:
                params = default_params(n, mode=method)
                scores = []
                elapsed = 0.0
                for img in noisy:
                    t0 = time.perf_counter()
                    restored = denoise(img, params, threads=threads)
                    elapsed += time.perf_counter() - t0
                    scores.append(rmse(restored, truth))
                mean = float(np.mean(scores))
                spread = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
                rows.append(
                    BenchRow(scene, n, float(sd), method, replicates, mean, spread, elapsed)
                )
    return rows


def write_csv(rows, path) -> None:
    """Write rows sorted by (scene, n, sd, method), numbers at 4 decimals."""
    ordered = sorted(rows, key=lambda r: (r.scene, r.n, r.sd, r.method))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in ordered:
            fh.write(
                f"{r.scene},{r.n},{r.sd:.4f},{r.method},{r.replicates},"
                f"{r.mean_rmse:.4f},{r.sd_rmse:.4f},{r.seconds:.4f}\n"
            )


def read_csv(path) -> list[BenchRow]:
    """Parse a file produced by `write_csv`."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected benchmark CSV header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            # scene names may contain commas (e.g. step(16,90,200))
            scene, n, sd, method, reps, mean, spread, seconds = line.rsplit(",", 7)
            rows.append(
                BenchRow(
                    scene,
                    int(n),
                    float(sd),
                    method,
                    int(reps),
                    float(mean),
                    float(spread),
                    float(seconds),
                )
            )
    return rows
