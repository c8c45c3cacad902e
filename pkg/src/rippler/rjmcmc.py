"""Reversible-jump event-time sampler for monotone S -> I -> R paths.

An SIR trajectory is equivalent to a pair of event times per
individual: the first infective time a and the first recovered time b,
with 0 standing for "never" and 1 <= a < b <= T otherwise. Updates act
on this event representation, so the sampler jumps between models of
different dimension (never infected / infected / infected-and-
recovered):

* move: shift one existing event uniformly inside its feasible window
  (infection in 1..b-1, or 1..T while no recovery exists; recovery in
  a+1..T); windows do not depend on the value being replaced, but the
  applicable-type count can (an unrecovered infection at the final time
  cannot gain a recovery), so the ratio carries the count change.
* add: insert the next missing event at a uniformly drawn time
  (infection anywhere in 1..T, recovery in a+1..T).
* remove: delete the last event (the recovery if present, else the
  infection).

The applicable types are enumerated in the fixed order move, add,
remove and one is picked uniformly; the dimension-matching proposal
ratio therefore carries both the window lengths and the applicable-type
counts on each side. The acceptance ratio multiplies that by the full
path density ratio (the changed column shifts infective counts that
every susceptible individual reacts to) and by the individual's own
observation terms.
"""

import math
import time

import numpy as np

from . import _kernels
from .chmm import (InfeasibleStateError, InvariantError, RipplerError,
                   path_log_prior, validate_observations, validate_states)
from .models import KIND_SIR
from .rippler import (ChainResult, _alloc_common, _record_iteration_py,
                      _theta_chunks, initial_state, raise_for_status)

MOVE, ADD, REMOVE = 0, 1, 2


def states_to_events(x):
    """Event times (infection, recovery) of each column; raises unless
    every column is a monotone path on states 1 -> 2 -> 3."""
    T, N = x.shape
    infection = np.zeros(N, np.int64)
    recovery = np.zeros(N, np.int64)
    for j in range(N):
        col = x[:, j]
        a = np.nonzero(col == 2)[0]
        b = np.nonzero(col == 3)[0]
        infection[j] = a[0] + 1 if a.size else (b[0] + 1 if b.size else 0)
        recovery[j] = b[0] + 1 if b.size else 0
        rebuilt = _column_from_events(infection[j], recovery[j], T)
        if not np.array_equal(rebuilt, col):
            raise InvariantError(
                "column %d is not a monotone 1 -> 2 -> 3 path" % j)
    return infection, recovery


def _column_from_events(a, b, T):
    tt = np.arange(1, T + 1)
    col = np.ones(T, np.int64)
    if a > 0:
        col[tt >= a] = 2
    if b > 0:
        col[tt >= b] = 3
    return col


def events_to_states(infection, recovery, T):
    N = infection.shape[0]
    x = np.empty((T, N), np.int64)
    for j in range(N):
        x[:, j] = _column_from_events(infection[j], recovery[j], T)
    return x


def applicable_move_count(a, b, T):
    """How many move types apply to event pair (a, b): add-infection
    only when fully susceptible; move/remove always once infected; plus
    add-recovery while none exists and the window a+1..T is non-empty."""
    if a == 0:
        return 1
    if b == 0:
        return 3 if a < T else 2
    return 2


def python_rjmcmc_update(model, x, infection, recovery, logf,
                         log_prior_cur, rng):
    """One update in numpy, mirroring the kernel's draw order. Mutates
    x, infection, recovery in place; returns (log_prior_cur, info)."""
    T, N = x.shape
    j = int(rng.integers(0, N))
    a = int(infection[j])
    b = int(recovery[j])
    n_app = applicable_move_count(a, b, T)

    if a == 0:
        mtype = ADD
    else:
        pick = int(rng.integers(0, n_app)) if n_app > 1 else 0
        if b == 0 and a >= T:
            mtype = MOVE if pick == 0 else REMOVE
        elif b == 0:
            mtype = (MOVE, ADD, REMOVE)[pick]
        else:
            mtype = MOVE if pick == 0 else REMOVE

    a2, b2 = a, b
    log_q = 0.0
    if mtype == MOVE:
        event = int(rng.integers(0, 2)) if b > 0 else 0
        if event == 0:
            hi = b - 1 if b > 0 else T
            a2 = 1 + int(rng.integers(0, hi))
        else:
            b2 = a + 1 + int(rng.integers(0, T - a))
        # windows and the event sub-draw match in reverse, but the
        # applicable-type count can change (an unrecovered infection
        # moving onto or off the final time loses or gains add-recovery)
        log_q = math.log(n_app / applicable_move_count(a2, b2, T))
    elif mtype == ADD:
        if a == 0:
            a2 = 1 + int(rng.integers(0, T))
            log_q = math.log(T * n_app / applicable_move_count(a2, 0, T))
        else:
            b2 = a + 1 + int(rng.integers(0, T - a))
            log_q = math.log(
                (T - a) * n_app / applicable_move_count(a, b2, T))
    else:
        if b > 0:
            b2 = 0
            log_q = -math.log(
                (T - a) * applicable_move_count(a, 0, T) / n_app)
        else:
            a2 = 0
            log_q = -math.log(T * applicable_move_count(0, 0, T) / n_app)

    col_save = x[:, j].copy()
    x[:, j] = _column_from_events(a2, b2, T)
    log_prior_star = path_log_prior(model, x)
    dlogf = float(
        logf[np.arange(T), j, x[:, j] - 1].sum()
        - logf[np.arange(T), j, col_save - 1].sum())
    log_ratio = log_prior_star - log_prior_cur + dlogf + log_q

    a_draw = rng.random()
    accepted = log_ratio >= 0.0 or a_draw < math.exp(log_ratio)
    if accepted:
        changed = int((x[:, j] != col_save).sum())
        infection[j] = a2
        recovery[j] = b2
        log_prior_cur = log_prior_star
    else:
        changed = 0
        x[:, j] = col_save
    info = dict(individual=j, move_type=mtype, accepted=accepted,
                log_ratio=log_ratio, changed=changed)
    return log_prior_cur, info


def run_rjmcmc(model, y, iterations, rng, latent_updates=1, x0=None,
               store_latent=False, theta_updater=None, theta_rng=None,
               force_python=False):
    """Run `iterations` sweeps of `latent_updates` event-time updates
    each. Requires the three-state SIR transition structure."""
    export = model.kernel_export()
    if export is None or export.kind != KIND_SIR:
        raise RipplerError(
            "the event-time sampler requires the SIR transition structure")
    T, N = model.state_space.shape
    S = model.state_space.num_states
    validate_observations(y, model.state_space)
    logf = model.observation_loglik_table(y)
    if x0 is None:
        x = initial_state(model, y, rng)
    else:
        validate_states(x0, model.state_space)
        x = x0.astype(np.int64).copy()
    infection, recovery = states_to_events(x)
    if not np.isfinite(path_log_prior(model, x)):
        raise InfeasibleStateError(
            "starting matrix has zero density under the dynamics")

    counts, majd_abs, majd_ind, latent = _alloc_common(
        iterations, T, N, S, store_latent)
    total_updates = iterations * latent_updates
    trace = dict(
        accepted=np.zeros(total_updates, np.int64),
        log_ratio=np.zeros(total_updates),
        ripple_size=np.zeros(total_updates, np.int64),
    )

    t_start = time.perf_counter()
    current = model
    if not force_python:
        for lo, hi in _theta_chunks(iterations, theta_updater):
            params = np.asarray(current.kernel_export().params, float)
            u0, u1 = lo * latent_updates, hi * latent_updates
            status = _kernels.rjmcmc_chain(
                params[0], params[1], current.initial_probs(), logf, x,
                infection, recovery, hi - lo, latent_updates, rng,
                counts[lo:hi], majd_abs[lo:hi], majd_ind[lo:hi],
                latent[lo:hi] if store_latent else latent, store_latent,
                trace["accepted"][u0:u1], trace["log_ratio"][u0:u1],
                trace["ripple_size"][u0:u1])
            raise_for_status(status)
            if theta_updater is not None:
                current = theta_updater(current, x, y, theta_rng)
                logf = current.observation_loglik_table(y)
    else:
        x_prev = x.copy()
        upd = 0
        log_prior_cur = path_log_prior(current, x)
        for it in range(iterations):
            for _ in range(latent_updates):
                log_prior_cur, info = python_rjmcmc_update(
                    current, x, infection, recovery, logf,
                    log_prior_cur, rng)
                trace["accepted"][upd] = int(info["accepted"])
                trace["log_ratio"][upd] = info["log_ratio"]
                trace["ripple_size"][upd] = info["changed"]
                upd += 1
            _record_iteration_py(x, x_prev, counts, majd_abs, majd_ind,
                                 latent, store_latent, it)
            if theta_updater is not None:
                current = theta_updater(current, x, y, theta_rng)
                logf = current.observation_loglik_table(y)
                log_prior_cur = path_log_prior(current, x)
    seconds = time.perf_counter() - t_start

    return ChainResult(
        kernel="rjmcmc-sir", x=x, counts=counts, majd_abs=majd_abs,
        majd_ind=majd_ind, trace=trace,
        latent=latent if store_latent else None, seconds=seconds)
