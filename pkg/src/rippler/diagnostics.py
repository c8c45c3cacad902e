"""Mixing diagnostics and exactness oracles.

Mixing is summarised by the mean absolute jump distance (MAJD): the
per-iteration sum over cells of a pointwise distance between successive
latent matrices, averaged over iterations. Two pointwise distances are
provided, the absolute state difference (sensible when states are
ordered stages) and the change indicator (sensible when state labels
are categories). The chain drivers stream the same quantities as they
run; the functions here recompute them from stored sample stacks.

For instances small enough to enumerate, `enumerate_posterior` returns
the exact posterior over full latent matrices, indexed by an integer
configuration id (base-S digits, cell (1, 1) least significant), and
`empirical_config_probs` histograms a sample stack on the same ids so
the two can be compared in total variation.
"""

import time

import numpy as np

from .chmm import (RipplerError, observation_loglik_total, path_log_prior,
                   state_counts)

ENUMERATION_LIMIT = 2_000_000


def majd_ordered(samples, burn_in=0):
    """Mean summed absolute state change between successive matrices of
    a (K, T, N) stack, after dropping the first `burn_in` samples."""
    kept = np.asarray(samples)[burn_in:]
    if kept.shape[0] < 2:
        raise RipplerError("need at least two samples after burn-in")
    diff = np.abs(np.diff(kept.astype(np.int64), axis=0))
    return float(diff.sum(axis=(1, 2)).mean())


def majd_indicator(samples, burn_in=0):
    """Mean number of cells changed between successive matrices."""
    kept = np.asarray(samples)[burn_in:]
    if kept.shape[0] < 2:
        raise RipplerError("need at least two samples after burn-in")
    diff = np.diff(kept.astype(np.int64), axis=0) != 0
    return float(diff.sum(axis=(1, 2)).mean())


def majd_from_series(series, burn_in=0):
    """Average of a per-iteration jump-distance series as streamed by
    the chain drivers."""
    kept = np.asarray(series, float)[burn_in:]
    if kept.size == 0:
        raise RipplerError("no iterations left after burn-in")
    return float(kept.mean())


def default_burn_in(iterations, fraction=0.1):
    return int(fraction * iterations)


def credible_intervals(counts, level=0.95, burn_in=0):
    """Pointwise median and central credible band of per-state counts.

    `counts` is a (K, T, S) stack; returns (T, S, 3) with the median,
    lower and upper quantiles along the last axis.
    """
    kept = np.asarray(counts)[burn_in:]
    if kept.shape[0] == 0:
        raise RipplerError("no iterations left after burn-in")
    alpha = (1.0 - level) / 2.0
    qs = np.quantile(kept, [0.5, alpha, 1.0 - alpha], axis=0)
    return np.moveaxis(qs, 0, -1)


def coverage_fraction(x_true, intervals, num_states):
    """Fraction of (time, state) pairs whose true occupancy count lies
    inside the credible band."""
    true_counts = state_counts(x_true, num_states)
    lo = intervals[:, :, 1]
    hi = intervals[:, :, 2]
    inside = (true_counts >= lo) & (true_counts <= hi)
    return float(inside.mean())


def tv_distance(p, q):
    """Total variation distance between two distributions on the same
    finite index set."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if p.shape != q.shape:
        raise RipplerError("distributions must share their index set")
    return 0.5 * float(np.abs(p - q).sum())


def num_configurations(space):
    return space.num_states ** (space.num_individuals * space.num_timepoints)


def config_id(x, num_states):
    """Integer id of a latent matrix: base-S digits in cell order
    (1, 1), (1, 2), ..., (2, 1), ...; cell (1, 1) least significant."""
    digits = np.asarray(x, np.int64).ravel() - 1
    weights = num_states ** np.arange(digits.size, dtype=np.int64)
    return int(digits @ weights)


def config_matrix(cid, space):
    """Inverse of `config_id`."""
    T, N = space.shape
    S = space.num_states
    digits = np.empty(T * N, np.int64)
    for k in range(T * N):
        digits[k] = cid % S
        cid //= S
    return digits.reshape(T, N) + 1


def enumerate_posterior(model, y):
    """Exact posterior probability of every latent configuration,
    indexed by configuration id. Refuses state spaces with more than
    ENUMERATION_LIMIT configurations."""
    space = model.state_space
    total = num_configurations(space)
    if total > ENUMERATION_LIMIT:
        raise RipplerError(
            "enumeration over %d configurations is infeasible; the limit "
            "is %d" % (total, ENUMERATION_LIMIT))
    logf = model.observation_loglik_table(y)
    logw = np.full(total, -np.inf)
    for cid in range(total):
        x = config_matrix(cid, space)
        lp = path_log_prior(model, x)
        if not np.isfinite(lp):
            continue
        logw[cid] = lp + observation_loglik_total(model, x, y, table=logf)
    finite = np.isfinite(logw)
    if not finite.any():
        raise RipplerError("no configuration has positive posterior mass")
    shift = logw[finite].max()
    probs = np.zeros(total)
    probs[finite] = np.exp(logw[finite] - shift)
    probs /= probs.sum()
    return probs


def empirical_config_probs(samples, space, burn_in=0):
    """Histogram of a (K, T, N) sample stack on configuration ids."""
    total = num_configurations(space)
    if total > ENUMERATION_LIMIT:
        raise RipplerError("state space too large to histogram by id")
    kept = np.asarray(samples)[burn_in:]
    K = kept.shape[0]
    digits = kept.reshape(K, -1).astype(np.int64) - 1
    weights = space.num_states ** np.arange(digits.shape[1], dtype=np.int64)
    cids = digits @ weights
    return np.bincount(cids, minlength=total) / K


def acceptance_by_kappa(trace, kappa_max):
    """Per-move-size proposal and acceptance tallies of a grid-rebound
    trace, split into exploration and exploitation updates. Returns a
    dict of equal-length arrays keyed by column name."""
    kappa = trace["kappa"]
    accepted = trace["accepted"]
    explored = trace["explored"]
    ks = np.arange(1, kappa_max + 1)
    out = dict(kappa=ks)
    for label, mask in (("", np.ones_like(kappa, bool)),
                        ("exploit_", explored == 0)):
        props = np.array([(mask & (kappa == k)).sum() for k in ks])
        accs = np.array([(mask & (kappa == k) & (accepted == 1)).sum()
                         for k in ks])
        with np.errstate(invalid="ignore"):
            rate = np.where(props > 0, accs / np.maximum(props, 1), np.nan)
        out[label + "proposals"] = props
        out[label + "accepts"] = accs
        out[label + "rate"] = rate
    return out


def modal_kappa(trace, start=0, stop=None):
    """Most frequent exploitation move size over an update window."""
    kappa = trace["kappa"][start:stop]
    explored = trace["explored"][start:stop]
    kept = kappa[explored == 0]
    if kept.size == 0:
        raise RipplerError("no exploitation updates in the window")
    return int(np.bincount(kept).argmax())


def loglog_slope(sizes, seconds):
    """Least-squares slope of log time against log size."""
    xs = np.log(np.asarray(sizes, float))
    ys = np.log(np.asarray(seconds, float))
    return float(np.polyfit(xs, ys, 1)[0])


def scaling_benchmark(instances, kernels, iterations, seed, latent_updates=10,
                      majd_variant="ordered", warmup=5, **kwargs):
    """Time each kernel across instances of growing state-space size.

    `instances` is a sequence of (size, model, y) triples, smallest
    first; datasets are prepared by the caller so simulation and I/O
    stay outside the timed region. Returns one row dict per
    (kernel, size) with keys kernel, S, majd, seconds, relative_time,
    where relative_time normalises by the kernel's first (smallest)
    instance and majd averages the per-iteration series after the
    default burn-in.
    """
    if majd_variant not in ("ordered", "indicator"):
        raise RipplerError("majd_variant must be 'ordered' or 'indicator'")
    rows = []
    burn = default_burn_in(iterations)
    for kernel in kernels:
        base = None
        for size, model, y in instances:
            per_update, result = time_per_update(
                kernel, model, y, iterations, seed, warmup=warmup,
                latent_updates=latent_updates, **kwargs)
            seconds = result.seconds
            if base is None:
                base = seconds
            series = (result.majd_abs if majd_variant == "ordered"
                      else result.majd_ind)
            rows.append(dict(kernel=kernel, S=size,
                             majd=majd_from_series(series, burn),
                             seconds=seconds,
                             relative_time=seconds / base))
    return rows


def time_per_update(kernel, model, y, iterations, seed, warmup=5, **kwargs):
    """Median-free single-shot timing of one chain run divided by its
    update count. A short warm-up run absorbs compilation."""
    from .samplers import run_chain

    def _run(n, seed_offset):
        rng = np.random.default_rng(seed + seed_offset)
        rng_tuner = np.random.default_rng(seed + seed_offset + 1)
        return run_chain(kernel, model, y, n, rng, rng_tuner=rng_tuner,
                         **kwargs)

    _run(warmup, 1000)
    t0 = time.perf_counter()
    result = _run(iterations, 0)
    elapsed = time.perf_counter() - t0
    updates = iterations * kwargs.get("latent_updates", 1)
    return elapsed / updates, result
