#!/usr/bin/env python3
"""State-space scaling benchmark on the staged-exposure and
multi-strain presets.

For each preset the swept axis grows the state count S from 4 to 10;
every kernel runs the same iteration budget per size and the script
reports the log-log slope of per-run seconds against S (expected:
roughly linear for the grid-rebound kernels, roughly quadratic for the
conditional refresh) and mixing per unit time at the largest S.
"""

import argparse
from pathlib import Path

from rippler import io as rio
from rippler.config import build_model, config_to_dict, derive_rngs, load_preset
from rippler.diagnostics import loglog_slope, scaling_benchmark
from rippler.models import simulate_dataset


def run_preset(name, out_dir, iterations=None, seed=None):
    cfg = load_preset(name)
    bench = cfg.benchmark
    seed = cfg.seed if seed is None else seed
    iterations = bench.iterations if iterations is None else iterations
    rngs = derive_rngs(seed)
    instances = []
    for size in bench.sizes:
        model = build_model(cfg, size=size)
        _, y = simulate_dataset(model, rngs["simulation"])
        instances.append((model.state_space.num_states, model, y))
    rows = scaling_benchmark(instances, bench.kernels, iterations, seed,
                             latent_updates=bench.latent_updates,
                             majd_variant=bench.majd_variant)
    out_dir.mkdir(parents=True, exist_ok=True)
    rio.write_majd_csv(out_dir / "scaling.csv", rows)
    rio.write_manifest(out_dir / "manifest.json", config_to_dict(cfg), seed,
                       f"scaling[{name}]", ["scaling.csv"])

    print(f"== {name}")
    s_top = max(r["S"] for r in rows)
    for kernel in bench.kernels:
        mine = [r for r in rows if r["kernel"] == kernel]
        slope = loglog_slope([r["S"] for r in mine],
                             [r["seconds"] for r in mine])
        top = next(r for r in mine if r["S"] == s_top)
        per_time = top["majd"] / top["relative_time"]
        print(f"{kernel:24s} slope {slope:5.2f}   "
              f"majd/rel-time at S={s_top}: {per_time:9.1f}")
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/scaling", help="output root")
    parser.add_argument("--iterations", type=int, default=None,
                        help="override the presets' benchmark iterations")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()
    root = Path(args.out)
    for name in ("seir-5.3", "sis-5.4"):
        run_preset(name, root / name, iterations=args.iterations,
                   seed=args.seed)
    print(f"wrote scaling tables under {root}")


if __name__ == "__main__":
    main()
