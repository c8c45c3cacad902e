#!/usr/bin/env python3
"""Recovery-time observations: tilted grid-rebound kernel vs the exact
conditional refresh.

Simulates the sir-recovery-s3.2 preset (recovery events observed
exactly, infection times latent) and runs both viable kernels on the
same dataset. The untilted kernel is omitted: its proposals ignore the
data and are almost surely incompatible with the indicator likelihood.
Reports indicator-MAJD mixing, their ratio, and credible-interval
coverage of the true counts.
"""

import argparse
from pathlib import Path

import numpy as np

from rippler import io as rio
from rippler.config import build_model, config_to_dict, derive_rngs, load_preset
from rippler.diagnostics import (coverage_fraction, credible_intervals,
                                 default_burn_in, majd_from_series)
from rippler.models import simulate_dataset
from rippler.samplers import run_chain

KERNELS = ("rippler-data-informed", "iffbs")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/recovery-study")
    parser.add_argument("--iterations", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    cfg = load_preset("sir-recovery-s3.2")
    seed = cfg.seed if args.seed is None else args.seed
    iterations = (cfg.sampler.iterations if args.iterations is None
                  else args.iterations)
    model = build_model(cfg)
    rngs = derive_rngs(seed)
    x_true, y = simulate_dataset(model, rngs["simulation"])
    recovered = int((x_true[-1] == 3).sum())
    print(f"dataset: {recovered} of {model.state_space.num_individuals} "
          f"individuals recover within the horizon")

    out_root = Path(args.out)
    burn = default_burn_in(iterations)
    majd = {}
    for kernel in KERNELS:
        chain_rng, tuner_rng = (np.random.default_rng(s) for s in
                                np.random.SeedSequence([seed, 1]).spawn(2))
        result = run_chain(kernel, model, y, iterations, chain_rng,
                           rng_tuner=tuner_rng,
                           latent_updates=cfg.sampler.latent_updates,
                           kappa=cfg.sampler.kappa,
                           epsilon=cfg.sampler.epsilon,
                           kappa_max=cfg.sampler.kappa_max,
                           target_rate=cfg.sampler.target_rate)
        intervals = credible_intervals(result.counts, burn_in=burn)
        cover = coverage_fraction(x_true, intervals,
                                  model.state_space.num_states)
        majd[kernel] = majd_from_series(result.majd_ind, burn)
        out_dir = out_root / kernel
        out_dir.mkdir(parents=True, exist_ok=True)
        rio.write_intervals_csv(out_dir / "intervals.csv", intervals)
        rio.write_trace_csv(out_dir / "trace.csv", result.trace, iterations,
                            cfg.sampler.latent_updates)
        rio.write_manifest(out_dir / "manifest.json", config_to_dict(cfg),
                           seed, f"recovery-study[{kernel}]",
                           ["intervals.csv", "trace.csv"])
        print(f"{kernel:24s} coverage {cover:.3f}   indicator-MAJD "
              f"{majd[kernel]:9.1f}   {result.seconds:6.1f}s")
    ratio = majd["rippler-data-informed"] / majd["iffbs"]
    print(f"mixing ratio (tilted grid-rebound / conditional refresh): "
          f"{ratio:.1f}x")


if __name__ == "__main__":
    main()
