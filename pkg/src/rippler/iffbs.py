"""Single-individual forward-filter backward-sampler.

One update redraws the full trajectory of one individual from its exact
conditional given everyone else's trajectory and the data. Because the
transition law couples individuals through occupancy counts, the filter
row at time t multiplies three ingredients for each candidate state r:

* the individual's own arrival probability (initial row at t = 1,
  otherwise the previous filter row pushed through the individual's
  transition matrix),
* the emission likelihood of its observation at t,
* the coupling weight: the joint probability of every other
  individual's realised t -> t+1 transition when this individual sits
  in r, which changes the counts everyone reacts to.

Coupling weights are handled in log space with a max shift. The
backward pass reuses the stored own-transition rows; the coupling is
already inside the filter and must not be applied twice.

`run_iffbs` drives the compiled kernel for count-coupled models and
falls back to this numpy implementation for anything else, consuming
the identical random stream.
"""

import time

import numpy as np

from . import _kernels
from .chmm import InfeasibleStateError, categorical_index, snapshot_counts, validate_observations, validate_states
from .rippler import (ChainResult, _alloc_common, _record_iteration_py,
                      _theta_chunks, initial_state, raise_for_status)


def iffbs_filter(model, x, i, fobs):
    """Forward filter for individual i (0-based column index) given the
    rest of the matrix. Returns (filt, rowbank): normalised filter rows
    (T, S) and the individual's own transition rows for each candidate
    source state, rowbank[t, r, s] = P(move r -> s over t -> t+1)."""
    T, N = x.shape
    S = model.state_space.num_states
    filt = np.empty((T, S))
    rowbank = np.empty((max(T - 1, 1), S, S))
    others = np.arange(N) != i

    for t in range(T - 1):
        logC = np.empty(S)
        for r in range(S):
            snap = x[t].copy()
            snap[i] = r + 1
            counts = snapshot_counts(snap, S)
            P = model.prob_matrix(t + 1, counts)
            with np.errstate(divide="ignore"):
                logP = np.log(P)
            logC[r] = logP[x[t, others] - 1, x[t + 1, others] - 1].sum()
            rowbank[t, r] = P[r]
        if t == 0:
            arow = model.initial_probs()[i] * fobs[0, i]
        else:
            arow = (filt[t - 1] @ rowbank[t - 1]) * fobs[t, i]
        weights = np.zeros(S)
        finite = np.isfinite(logC)
        if finite.any():
            weights[finite] = np.exp(logC[finite] - logC[finite].max())
        arow = arow * weights
        tot = arow.sum()
        if tot <= 0.0:
            raise InfeasibleStateError(
                "filter row vanished at time %d for individual %d"
                % (t + 1, i))
        filt[t] = arow / tot

    if T == 1:
        brow = model.initial_probs()[i] * fobs[0, i]
    else:
        brow = (filt[T - 2] @ rowbank[T - 2]) * fobs[T - 1, i]
    tot = brow.sum()
    if tot <= 0.0:
        raise InfeasibleStateError(
            "filter row vanished at the last time point for individual %d"
            % i)
    filt[T - 1] = brow / tot
    return filt, rowbank


def iffbs_backward_sample(filt, rowbank, rng):
    """Draw a trajectory from the filtered distribution, back to front;
    consumes exactly T uniforms."""
    T, S = filt.shape
    col = np.empty(T, np.int64)
    col[T - 1] = categorical_index(rng.random(), filt[T - 1])
    for t in range(T - 2, -1, -1):
        brow = filt[t] * rowbank[t, :, col[t + 1] - 1]
        tot = brow.sum()
        if tot <= 0.0:
            raise InfeasibleStateError(
                "backward row vanished at time %d" % (t + 1))
        col[t] = categorical_index(rng.random(), brow / tot)
    return col


def column_log_density(filt, rowbank, col):
    """log density of a full column under the filtered backward draw;
    deterministic companion of `iffbs_backward_sample` used to check
    the update against brute-force conditionals."""
    T = filt.shape[0]
    total = np.log(filt[T - 1, col[T - 1] - 1])
    for t in range(T - 2, -1, -1):
        brow = filt[t] * rowbank[t, :, col[t + 1] - 1]
        total += np.log(brow[col[t] - 1] / brow.sum())
    return float(total)


def python_iffbs_update(model, x, fobs, rng):
    """One update in numpy, consuming randomness in the kernel's order:
    one bounded integer, then T uniforms."""
    N = x.shape[1]
    i = int(rng.integers(0, N))
    filt, rowbank = iffbs_filter(model, x, i, fobs)
    col = iffbs_backward_sample(filt, rowbank, rng)
    changed = int((col != x[:, i]).sum())
    x_new = x.copy()
    x_new[:, i] = col
    return x_new, dict(individual=i, changed=changed)


def run_iffbs(model, y, iterations, rng, latent_updates=1, x0=None,
              store_latent=False, theta_updater=None, theta_rng=None,
              force_python=False):
    """Run `iterations` sweeps of `latent_updates` single-individual
    refreshes each (random scan). Every update is a Gibbs draw, so the
    trace records only how many cells each one changed."""
    T, N = model.state_space.shape
    S = model.state_space.num_states
    validate_observations(y, model.state_space)
    logf = model.observation_loglik_table(y)
    fobs = np.exp(logf)
    if x0 is None:
        x = initial_state(model, y, rng)
    else:
        validate_states(x0, model.state_space)
        x = x0.astype(np.int64).copy()

    counts, majd_abs, majd_ind, latent = _alloc_common(
        iterations, T, N, S, store_latent)
    total_updates = iterations * latent_updates
    trace = dict(ripple_size=np.zeros(total_updates, np.int64))

    export = model.kernel_export()
    use_kernel = export is not None and not force_python
    t_start = time.perf_counter()
    current = model
    if use_kernel:
        for lo, hi in _theta_chunks(iterations, theta_updater):
            export = current.kernel_export()
            params = np.asarray(export.params, float)
            u0, u1 = lo * latent_updates, hi * latent_updates
            status = _kernels.iffbs_chain(
                export.kind, params, current.initial_probs(), logf, fobs, x,
                hi - lo, latent_updates, rng,
                counts[lo:hi], majd_abs[lo:hi], majd_ind[lo:hi],
                latent[lo:hi] if store_latent else latent, store_latent,
                trace["ripple_size"][u0:u1])
            raise_for_status(status)
            if theta_updater is not None:
                current = theta_updater(current, x, y, theta_rng)
                logf = current.observation_loglik_table(y)
                fobs = np.exp(logf)
    else:
        x_prev = x.copy()
        upd = 0
        for it in range(iterations):
            for _ in range(latent_updates):
                x, info = python_iffbs_update(current, x, fobs, rng)
                trace["ripple_size"][upd] = info["changed"]
                upd += 1
            _record_iteration_py(x, x_prev, counts, majd_abs, majd_ind,
                                 latent, store_latent, it)
            if theta_updater is not None:
                current = theta_updater(current, x, y, theta_rng)
                logf = current.observation_loglik_table(y)
                fobs = np.exp(logf)
    seconds = time.perf_counter() - t_start

    return ChainResult(
        kernel="iffbs", x=x, counts=counts, majd_abs=majd_abs,
        majd_ind=majd_ind, trace=trace,
        latent=latent if store_latent else None, seconds=seconds)
