"""Command-line harness: simulate, infer, benchmark, oracle.

Each subcommand resolves one RunConfig (from --config PATH or a
--preset token), derives per-purpose random streams from the master
seed, and writes CSV outputs plus a manifest into --out. Running the
same subcommand with the same resolved config twice produces identical
bytes everywhere except the wall-clock columns of benchmark tables.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as rio
from .chmm import RipplerError, state_counts
from .config import (ConfigError, PRESET_NAMES, build_model, config_to_dict,
                     derive_rngs, load_config, load_preset)
from .diagnostics import (acceptance_by_kappa, credible_intervals,
                          default_burn_in, empirical_config_probs,
                          enumerate_posterior, loglog_slope, majd_from_series,
                          scaling_benchmark, tv_distance)
from .models import simulate_dataset
from .samplers import RIPPLER_KERNELS, run_chain


def _run_configured_chain(cfg, model, y, rngs, store_latent=False):
    sc = cfg.sampler
    return run_chain(sc.kernel, model, y, sc.iterations, rngs["chain"],
                     rng_tuner=rngs["tuner"], latent_updates=sc.latent_updates,
                     kappa=sc.kappa, epsilon=sc.epsilon,
                     kappa_max=sc.kappa_max, target_rate=sc.target_rate,
                     store_latent=store_latent)


def cmd_simulate(cfg, out_dir):
    """Draw one dataset from the configured model and write X.csv,
    Y.csv, and the manifest."""
    model = build_model(cfg)
    rngs = derive_rngs(cfg.seed)
    x, y = simulate_dataset(model, rngs["simulation"])
    rio.write_matrix_csv(out_dir / "X.csv", x)
    rio.write_matrix_csv(out_dir / "Y.csv", y)
    outputs = ["X.csv", "Y.csv"]
    rio.write_manifest(out_dir / "manifest.json", config_to_dict(cfg),
                       cfg.seed, "simulate", outputs)
    print(f"simulate: wrote {', '.join(outputs)} to {out_dir}")
    return 0


def cmd_infer(cfg, out_dir, data_dir=None):
    """Run the configured kernel and write the trace, per-iteration
    state counts, credible intervals, mixing summary, per-size
    acceptance table (grid-rebound kernels), and ripple-size
    histogram."""
    model = build_model(cfg)
    rngs = derive_rngs(cfg.seed)
    if data_dir is not None:
        data = Path(data_dir)
        y = rio.read_matrix_csv(data if data.is_file() else data / "Y.csv")
    else:
        _, y = simulate_dataset(model, rngs["simulation"])
    result = _run_configured_chain(cfg, model, y, rngs)
    sc = cfg.sampler
    outputs = []

    rio.write_trace_csv(out_dir / "trace.csv", result.trace, sc.iterations,
                        sc.latent_updates)
    outputs.append("trace.csv")
    rio.write_state_counts_csv(out_dir / "state_counts.csv", result.counts)
    outputs.append("state_counts.csv")

    if sc.iterations > 0:
        burn = default_burn_in(sc.iterations)
        rio.write_intervals_csv(out_dir / "intervals.csv",
                                credible_intervals(result.counts,
                                                   burn_in=burn))
        outputs.append("intervals.csv")
        rio.write_majd_csv(out_dir / "majd.csv", [
            dict(kernel=sc.kernel, S=model.state_space.num_states,
                 majd=majd_from_series(result.majd_abs, burn),
                 seconds=result.seconds, relative_time=1.0),
        ])
        outputs.append("majd.csv")
    if sc.kernel in RIPPLER_KERNELS:
        table = acceptance_by_kappa(result.trace, sc.kappa_max)
        rio.write_acceptance_csv(out_dir / "acceptance_by_kappa.csv", table)
        outputs.append("acceptance_by_kappa.csv")
    rio.write_ripple_histogram_csv(out_dir / "ripple_histogram.csv",
                                   result.trace["ripple_size"])
    outputs.append("ripple_histogram.csv")

    rio.write_manifest(out_dir / "manifest.json", config_to_dict(cfg),
                       cfg.seed, "infer", outputs)
    print(f"infer[{sc.kernel}]: {sc.iterations} iterations x "
          f"{sc.latent_updates} updates in {result.seconds:.2f}s; wrote "
          f"{len(outputs)} files to {out_dir}")
    return 0


def cmd_benchmark(cfg, out_dir):
    """Sweep the configured state-space sizes, time every kernel on
    each, and write the scaling table."""
    if cfg.benchmark is None:
        raise ConfigError("config has no benchmark section")
    bench = cfg.benchmark
    rngs = derive_rngs(cfg.seed)
    instances = []
    for size in bench.sizes:
        model = build_model(cfg, size=size)
        _, y = simulate_dataset(model, rngs["simulation"])
        instances.append((model.state_space.num_states, model, y))
    rows = scaling_benchmark(instances, bench.kernels, bench.iterations,
                             cfg.seed, latent_updates=bench.latent_updates,
                             majd_variant=bench.majd_variant)
    rio.write_majd_csv(out_dir / "scaling.csv", rows)
    rio.write_manifest(out_dir / "manifest.json", config_to_dict(cfg),
                       cfg.seed, "benchmark", ["scaling.csv"])
    for kernel in bench.kernels:
        mine = [r for r in rows if r["kernel"] == kernel]
        slope = loglog_slope([r["S"] for r in mine],
                             [r["seconds"] for r in mine])
        print(f"benchmark[{kernel}]: time-vs-S log-log slope {slope:.2f}")
    print(f"benchmark: wrote scaling.csv to {out_dir}")
    return 0


def cmd_oracle(cfg, out_dir):
    """Enumerate the exact posterior of a tiny instance and report each
    configured kernel's total-variation distance from it."""
    if cfg.oracle is None:
        raise ConfigError("config has no oracle section")
    model = build_model(cfg)
    rngs = derive_rngs(cfg.seed)
    _, y = simulate_dataset(model, rngs["simulation"])
    exact = enumerate_posterior(model, y)
    rio.write_enumeration_csv(out_dir / "enumeration.csv", exact)

    updates = cfg.oracle.updates
    rows = []
    for kernel in cfg.oracle.kernels:
        result = run_chain(kernel, model, y, updates, rngs["chain"],
                           rng_tuner=rngs["tuner"], latent_updates=1,
                           kappa=cfg.sampler.kappa,
                           epsilon=cfg.sampler.epsilon,
                           kappa_max=cfg.sampler.kappa_max,
                           target_rate=cfg.sampler.target_rate,
                           store_latent=True)
        emp = empirical_config_probs(result.latent, model.state_space,
                                     burn_in=default_burn_in(updates))
        tv = tv_distance(emp, exact)
        rows.append(dict(kernel=kernel, updates=updates, tv=tv))
        print(f"oracle[{kernel}]: TV {tv:.4f} over {updates} updates")
    rio.write_oracle_report_csv(out_dir / "oracle_report.csv", rows)
    rio.write_manifest(out_dir / "manifest.json", config_to_dict(cfg),
                       cfg.seed, "oracle",
                       ["enumeration.csv", "oracle_report.csv"])
    print(f"oracle: wrote enumeration.csv, oracle_report.csv to {out_dir}")
    return 0


def _resolve_config(args):
    if (args.config is None) == (args.preset is None):
        raise ConfigError("give exactly one of --config PATH or --preset "
                          "NAME")
    cfg = (load_config(args.config) if args.config is not None
           else load_preset(args.preset))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _resolve_out(args, cfg):
    out = args.out or cfg.out_dir or "."
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rippler",
        description="Latent-state MCMC for count-coupled epidemic models")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("simulate", "draw a dataset from the configured model"),
        ("infer", "run the configured kernel on a dataset"),
        ("benchmark", "time kernels across state-space sizes"),
        ("oracle", "compare kernels against exact enumeration"),
    )
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to a YAML run config")
        p.add_argument("--preset", choices=PRESET_NAMES,
                       help="named built-in config")
        p.add_argument("--seed", type=int,
                       help="override the config's master seed")
        p.add_argument("--out", help="output directory (default: the "
                       "config's out_dir, else the working directory)")
        if name == "infer":
            p.add_argument("--data", help="observation CSV, or a directory "
                           "holding Y.csv from a simulate run (default: "
                           "simulate in-process)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        out_dir = _resolve_out(args, cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "infer":
            return cmd_infer(cfg, out_dir, data_dir=args.data)
        if args.command == "benchmark":
            return cmd_benchmark(cfg, out_dir)
        return cmd_oracle(cfg, out_dir)
    except (RipplerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
