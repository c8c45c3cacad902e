"""Grid-rebound latent-state updates for coupled hidden Markov chains.

The current latent matrix is read as the image of a uniform grid under
the deterministic forward map: cell (t, j) holds the uniform that
selected individual j's state at time t. The update

1. rebounds every cell to the half-open interval that reproduces the
   current state under the current conditioning (`compute_bounds`),
2. materialises a grid inside those intervals (`materialise_grid`),
3. picks a few cells with probability proportional to the mass outside
   their intervals and redraws them in that complement
   (`select_cells`, `propose_u_star`),
4. maps the edited grid forward again (`reconstruct`); a redrawn cell
   is guaranteed to change state, and the change perturbs the rows of
   every later time step, so downstream cells may move with it,
5. accepts or rejects with a ratio in which the grid densities cancel,
   leaving the observation terms and a selection correction: the
   product of remaining-weight ratios of the ordered
   without-replacement draw, which is W / W* when one cell is redrawn
   (`acceptance_log_ratio_*`, `selection_log_ratio`).

In the data-informed variant every row is tilted by the destination
emission likelihood before bounding and reconstruction; the observation
terms then live inside the rows and the ratio uses the row normalisers
instead.

The functions in this module are the numpy reference implementation
and work with any ModelSpec. `run_rippler` dispatches to the compiled
kernel when the model exports one, consuming the same random stream in
the same order, so both paths produce identical chains from identical
seeds.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .chmm import (InfeasibleStateError, InvariantError, RipplerError,
                   categorical_index, validate_observations, validate_states)
from .models import simulate_data_informed
from .chmm import simulate_centred

_ONE_BELOW = np.nextafter(1.0, 0.0)

STATUS_MESSAGES = {
    _kernels.ERR_NO_POSITIVE_WEIGHT:
        "every grid cell has zero selection weight; all rows are point "
        "masses and no move is possible",
    _kernels.ERR_INFEASIBLE_CURRENT:
        "current latent matrix has a zero-normaliser row under the "
        "tilted dynamics",
    _kernels.ERR_INFEASIBLE_INITIAL:
        "an initial row has zero mass after tilting by the first "
        "observation",
    _kernels.ERR_EMPTY_FILTER_ROW:
        "a filter row vanished: no candidate state is compatible with "
        "the conditioning",
}


def raise_for_status(status):
    if status == _kernels.OK:
        return
    msg = STATUS_MESSAGES.get(status, "kernel failed with status %d" % status)
    if status == _kernels.ERR_NO_POSITIVE_WEIGHT:
        raise InvariantError(msg)
    raise InfeasibleStateError(msg)


@dataclass
class Bounds:
    """Per-cell half-open intervals [lower, upper) that reproduce the
    current latent matrix, plus the log normaliser sum accumulated when
    the rows were tilted."""

    lower: np.ndarray
    upper: np.ndarray
    sum_log_normaliser: float = 0.0

    @property
    def widths(self):
        return self.upper - self.lower

    @property
    def weights(self):
        return 1.0 - self.widths

    @property
    def total_weight(self):
        return float(self.weights.sum())


@dataclass
class ReconstructResult:
    x: np.ndarray
    total_weight: float
    sum_log_normaliser: float
    feasible: bool
    weights: np.ndarray = None


def modified_prob_row(prob_row, f_row):
    """Tilt a probability row by emission likelihoods. Returns the
    renormalised row and its normaliser; a zero normaliser returns
    (None, 0.0)."""
    weighted = prob_row * f_row
    c = float(weighted.sum())
    if c <= 0.0:
        return None, 0.0
    return weighted / c, c


def _initial_rows(model, fobs, data_informed):
    rows = model.initial_probs()
    if not data_informed:
        return rows
    out = np.empty_like(rows)
    for j in range(rows.shape[0]):
        row, c = modified_prob_row(rows[j], fobs[0, j])
        if row is None:
            raise InfeasibleStateError(
                "initial row %d has zero mass after tilting" % j)
        out[j] = row
    return out


def compute_bounds(model, x, fobs=None, data_informed=False):
    """Interval bounds of the grid preimage of x. `fobs` is the dense
    emission likelihood table exp(logf), required when tilting.

    `sum_log_normaliser` accumulates the tilting normalisers of the
    transition cells (t >= 1) only: the initial-cell normalisers do not
    depend on the path, so they cancel from every acceptance ratio."""
    validate_states(x, model.state_space)
    T, N = x.shape
    if data_informed and fobs is None:
        raise ValueError("data_informed bounds need the emission table")
    lower = np.empty((T, N))
    upper = np.empty((T, N))
    sum_logc = 0.0
    init_rows = _initial_rows(model, fobs, data_informed)
    cum = np.cumsum(init_rows, axis=1)
    idx = x[0] - 1
    j_arange = np.arange(N)
    upper[0] = cum[j_arange, idx]
    lower[0] = upper[0] - init_rows[j_arange, idx]
    for t in range(1, T):
        rows = model.transition_rows(t, x[t - 1])
        if data_informed:
            weighted = rows * fobs[t]
            c = weighted.sum(axis=1)
            if np.any(c <= 0.0):
                raise InfeasibleStateError(
                    "zero-normaliser row at time %d on the current matrix"
                    % (t + 1))
            sum_logc += float(np.log(c).sum())
            rows = weighted / c[:, None]
        cum = np.cumsum(rows, axis=1)
        idx = x[t] - 1
        upper[t] = cum[j_arange, idx]
        lower[t] = upper[t] - rows[j_arange, idx]
    return Bounds(lower, upper, sum_logc)


def materialise_grid(bounds, r):
    """Place one uniform in each cell's interval from raw uniforms r."""
    return bounds.lower + r * (bounds.upper - bounds.lower)


def select_cells(weights, r, kappa):
    """Weighted sampling without replacement of up to kappa cells via
    exponential-race keys log(r)/w; zero-weight cells can never win.
    Returns (cells, keys) with cells shaped (kappa_eff, 2) ordered by
    descending key, which is the sequential-selection order."""
    with np.errstate(divide="ignore", invalid="ignore"):
        keys = np.where(weights > 0.0, np.log(r) / weights, -np.inf)
    flat = keys.ravel()
    positive = int((weights > 0.0).sum())
    kappa_eff = min(kappa, positive)
    if kappa_eff == 0:
        return np.empty((0, 2), np.int64), np.empty(0)
    order = np.argsort(-flat, kind="stable")[:kappa_eff]
    cells = np.empty((kappa_eff, 2), np.int64)
    cells[:, 0], cells[:, 1] = np.unravel_index(order, weights.shape)
    return cells, flat[order]


def propose_u_star(u, bounds, cells, r_vals):
    """Redraw the selected cells uniformly on the complement of their
    intervals, in the order given (one raw uniform per cell)."""
    out = u.copy()
    for m in range(cells.shape[0]):
        t, j = cells[m]
        lo = bounds.lower[t, j]
        hi = bounds.upper[t, j]
        v = r_vals[m] * (1.0 - (hi - lo))
        if v < lo:
            out[t, j] = v
        else:
            # hi + (v - lo) can round up to exactly 1.0 when the
            # complement is nearly the whole interval; keep the grid
            # inside [0, 1)
            out[t, j] = min(hi + (v - lo), _ONE_BELOW)
    return out


def reconstruct(model, u, fobs=None, data_informed=False):
    """Deterministic forward map from a grid to a latent matrix under
    the (possibly tilted) dynamics, accumulating the proposal's total
    selection weight and normaliser log-sum along the way."""
    T, N = model.state_space.shape
    x = np.empty((T, N), np.int64)
    weights = np.zeros((T, N))
    total_weight = 0.0
    sum_logc = 0.0
    init_rows = _initial_rows(model, fobs, data_informed)
    for j in range(N):
        s = categorical_index(u[0, j], init_rows[j])
        x[0, j] = s
        weights[0, j] = 1.0 - init_rows[j, s - 1]
        total_weight += weights[0, j]
    for t in range(1, T):
        rows = model.transition_rows(t, x[t - 1])
        for j in range(N):
            row = rows[j]
            if data_informed:
                row, c = modified_prob_row(row, fobs[t, j])
                if row is None:
                    return ReconstructResult(x, 0.0, 0.0, False)
                sum_logc += math.log(c)
            s = categorical_index(u[t, j], row)
            x[t, j] = s
            weights[t, j] = 1.0 - row[s - 1]
            total_weight += weights[t, j]
    return ReconstructResult(x, total_weight, sum_logc, True, weights)


def selection_log_ratio(total_weight, sel_weights, total_weight_star,
                        sel_weights_star):
    """Proposal correction for the ordered weighted without-replacement
    cell selection: each forward pick is paired with the same pick in
    reverse, leaving a product of remaining-weight ratios. Collapses to
    log(W) - log(W*) for a single cell. Returns -inf when the reverse
    order has probability zero (a selected cell became a point mass)."""
    ws = np.asarray(sel_weights, float)
    ws_star = np.asarray(sel_weights_star, float)
    if np.any(ws_star <= 0.0):
        return -math.inf
    remaining = total_weight - np.concatenate(([0.0], np.cumsum(ws[:-1])))
    remaining_star = total_weight_star - np.concatenate(
        ([0.0], np.cumsum(ws_star[:-1])))
    if np.any(remaining <= 0.0) or np.any(remaining_star <= 0.0):
        return -math.inf
    return float(np.log(remaining).sum() - np.log(remaining_star).sum())


def acceptance_log_ratio_standard(logf, x, x_star, total_weight,
                                  sel_weights, total_weight_star,
                                  sel_weights_star):
    """log acceptance ratio of the untilted update: observation terms
    of the two matrices plus the selection correction. Initial and
    transition densities cancel against the grid proposal."""
    log_sel = selection_log_ratio(total_weight, sel_weights,
                                  total_weight_star, sel_weights_star)
    if log_sel == -math.inf:
        return -math.inf
    T, N = x.shape
    tt, jj = np.meshgrid(np.arange(T), np.arange(N), indexing="ij")
    dlogf = float(logf[tt, jj, x_star - 1].sum() - logf[tt, jj, x - 1].sum())
    return dlogf + log_sel


def acceptance_log_ratio_data_informed(sum_logc, sum_logc_star,
                                       total_weight, sel_weights,
                                       total_weight_star, sel_weights_star):
    """log acceptance ratio of the tilted update. Under tilted rows the
    target factors as (tilted widths) x (row normalisers); the widths
    cancel against the grid proposal, leaving the normaliser ratio of
    the proposal over the current matrix. First-time-point normalisers
    do not depend on the latent matrix and drop out."""
    log_sel = selection_log_ratio(total_weight, sel_weights,
                                  total_weight_star, sel_weights_star)
    if log_sel == -math.inf:
        return -math.inf
    return sum_logc_star - sum_logc + log_sel


@dataclass
class AdaptiveTuner:
    """Epsilon-greedy choice of the number of redrawn cells, aiming the
    per-size empirical acceptance rate at `target_rate`. Counters start
    from one optimistic pseudo-proposal per size so untried sizes look
    exactly on target."""

    epsilon: float = 0.05
    kappa_max: int = 10
    target_rate: float = 0.234
    proposals: np.ndarray = field(init=False)
    accepts: np.ndarray = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.kappa_max < 1:
            raise ValueError("kappa_max must be at least 1")
        self.proposals = np.ones(self.kappa_max)
        self.accepts = np.full(self.kappa_max, self.target_rate)

    def choose(self, rng):
        """Returns (kappa, explored); consumes one uniform, plus one
        bounded integer when exploring."""
        if rng.random() < self.epsilon:
            return int(rng.integers(1, self.kappa_max + 1)), True
        rates = self.accepts / self.proposals
        return int(np.argmin(np.abs(rates - self.target_rate))) + 1, False

    def update(self, kappa, accepted):
        self.proposals[kappa - 1] += 1.0
        if accepted:
            self.accepts[kappa - 1] += 1.0

    def acceptance_estimates(self):
        return self.accepts / self.proposals


def python_rippler_update(model, x, logf, fobs, rng, rng_tuner,
                          kappa=None, tuner=None, data_informed=False):
    """One full update in numpy, consuming randomness in the kernel's
    documented order. Pass `kappa` for a fixed move size or `tuner` for
    the adaptive one. Returns (x_new, info dict)."""
    T, N = x.shape
    bounds = compute_bounds(model, x, fobs, data_informed)
    u = materialise_grid(bounds, rng.random((T, N)))
    explored = False
    if kappa is None:
        kappa, explored = tuner.choose(rng_tuner)
    cells, _ = select_cells(bounds.weights, rng.random((T, N)), kappa)
    if cells.shape[0] == 0:
        raise InvariantError(STATUS_MESSAGES[_kernels.ERR_NO_POSITIVE_WEIGHT])
    u_star = propose_u_star(u, bounds, cells, rng.random(cells.shape[0]))
    rec = reconstruct(model, u_star, fobs, data_informed)
    if not rec.feasible:
        log_ratio = -math.inf
        ripple = 0
        earliest_flip = True
    else:
        sel_w = bounds.weights[cells[:, 0], cells[:, 1]]
        sel_w_star = rec.weights[cells[:, 0], cells[:, 1]]
        # reverse-path support: the reverse move redraws each selected
        # cell's original value, so that value must sit outside the
        # proposal's interval there
        bounds_star = compute_bounds(model, rec.x, fobs, data_informed)
        ct, cj = cells[:, 0], cells[:, 1]
        inside = ((bounds_star.lower[ct, cj] <= u[ct, cj])
                  & (u[ct, cj] < bounds_star.upper[ct, cj]))
        # size match: the reverse move requests the same size and so
        # selects min(kappa, #positive proposal weights) cells, which
        # must equal the forward count for the paired path to exist
        rev_eff = min(kappa, int((rec.weights > 0.0).sum()))
        if inside.any() or rev_eff != cells.shape[0]:
            log_ratio = -math.inf
        elif data_informed:
            log_ratio = acceptance_log_ratio_data_informed(
                bounds.sum_log_normaliser, rec.sum_log_normaliser,
                bounds.total_weight, sel_w, rec.total_weight, sel_w_star)
        else:
            log_ratio = acceptance_log_ratio_standard(
                logf, x, rec.x, bounds.total_weight, sel_w,
                rec.total_weight, sel_w_star)
        ripple = int((rec.x != x).sum())
        t_min = int(cells[:, 0].min())
        earliest = cells[cells[:, 0] == t_min]
        earliest_flip = bool(
            (rec.x[t_min, earliest[:, 1]] != x[t_min, earliest[:, 1]]).all())
    a_draw = rng.random()
    accepted = rec.feasible and (log_ratio >= 0.0
                                 or a_draw < math.exp(log_ratio))
    if tuner is not None:
        tuner.update(kappa, accepted)
    x_new = rec.x if accepted else x
    info = dict(kappa=kappa, kappa_eff=cells.shape[0], accepted=accepted,
                ripple_size=ripple, log_ratio=log_ratio, explored=explored,
                earliest_flip=earliest_flip, cells=cells)
    return x_new, info


@dataclass
class ChainResult:
    """Output bundle of one chain run."""

    kernel: str
    x: np.ndarray
    counts: np.ndarray
    majd_abs: np.ndarray
    majd_ind: np.ndarray
    trace: dict
    latent: np.ndarray = None
    tuner_proposals: np.ndarray = None
    tuner_accepts: np.ndarray = None
    seconds: float = 0.0

    @property
    def iterations(self):
        return self.counts.shape[0]


def initial_state(model, y, rng, data_informed=False):
    """Starting latent matrix: a forward simulation, tilted towards the
    observations whenever the run needs a data-compatible start (tilted
    kernels, or indicator-valued likelihoods that zero out most prior
    paths)."""
    if data_informed or getattr(model.observation, "indicator", False):
        return simulate_data_informed(model, y, rng)
    return simulate_centred(model, rng)


def _alloc_common(iterations, T, N, S, store_latent):
    counts = np.zeros((iterations, T, S), np.int32)
    majd_abs = np.zeros(iterations)
    majd_ind = np.zeros(iterations)
    latent = np.zeros((iterations if store_latent else 0, T, N), np.int8)
    return counts, majd_abs, majd_ind, latent


def run_rippler(model, y, iterations, rng, rng_tuner, latent_updates=1,
                kappa="adaptive", epsilon=0.05, kappa_max=10,
                target_rate=0.234, data_informed=False, x0=None,
                store_latent=False, theta_updater=None, theta_rng=None,
                force_python=False):
    """Run a grid-rebound chain for `iterations` sweeps of
    `latent_updates` updates each. `kappa` is either a fixed integer
    move size or "adaptive". `theta_updater(model, x, y, rng) -> model`
    is invoked between sweeps when given."""
    T, N = model.state_space.shape
    S = model.state_space.num_states
    validate_observations(y, model.state_space)
    logf = model.observation_loglik_table(y)
    fobs = np.exp(logf)
    if x0 is None:
        x = initial_state(model, y, rng, data_informed)
    else:
        validate_states(x0, model.state_space)
        x = x0.astype(np.int64).copy()

    fixed_kappa = 0 if kappa == "adaptive" else int(kappa)
    if fixed_kappa < 0:
        raise ValueError("kappa must be positive or 'adaptive'")
    tuner = AdaptiveTuner(epsilon, kappa_max, target_rate)
    counts, majd_abs, majd_ind, latent = _alloc_common(
        iterations, T, N, S, store_latent)
    total_updates = iterations * latent_updates
    trace = dict(
        kappa=np.zeros(total_updates, np.int64),
        kappa_eff=np.zeros(total_updates, np.int64),
        accepted=np.zeros(total_updates, np.int64),
        ripple_size=np.zeros(total_updates, np.int64),
        log_ratio=np.zeros(total_updates),
        explored=np.zeros(total_updates, np.int64),
        earliest_flip=np.zeros(total_updates, np.int64),
    )

    export = model.kernel_export()
    use_kernel = export is not None and not force_python
    t_start = time.perf_counter()
    if use_kernel:
        current = model
        for lo, hi in _theta_chunks(iterations, theta_updater):
            export = current.kernel_export()
            params = np.asarray(export.params, float)
            n_it = hi - lo
            u0 = lo * latent_updates
            u1 = hi * latent_updates
            status = _kernels.rippler_chain(
                export.kind, params, current.initial_probs(), logf, fobs, x,
                data_informed, n_it, latent_updates, fixed_kappa,
                tuner.epsilon, tuner.kappa_max, tuner.target_rate,
                rng, rng_tuner, tuner.proposals, tuner.accepts,
                counts[lo:hi], majd_abs[lo:hi], majd_ind[lo:hi],
                latent[lo:hi] if store_latent else latent, store_latent,
                trace["kappa"][u0:u1], trace["kappa_eff"][u0:u1],
                trace["accepted"][u0:u1], trace["ripple_size"][u0:u1],
                trace["log_ratio"][u0:u1], trace["explored"][u0:u1],
                trace["earliest_flip"][u0:u1])
            raise_for_status(status)
            if theta_updater is not None:
                current = theta_updater(current, x, y, theta_rng)
                logf = current.observation_loglik_table(y)
                fobs = np.exp(logf)
        model = current
    else:
        x_prev = x.copy()
        upd = 0
        current = model
        for it in range(iterations):
            for _ in range(latent_updates):
                x, info = python_rippler_update(
                    current, x, logf, fobs, rng, rng_tuner,
                    kappa=None if fixed_kappa == 0 else fixed_kappa,
                    tuner=tuner if fixed_kappa == 0 else None,
                    data_informed=data_informed)
                for k in ("kappa", "kappa_eff", "ripple_size", "log_ratio"):
                    trace[k][upd] = info[k]
                trace["accepted"][upd] = int(info["accepted"])
                trace["explored"][upd] = int(info["explored"])
                trace["earliest_flip"][upd] = int(info["earliest_flip"])
                upd += 1
            _record_iteration_py(x, x_prev, counts, majd_abs, majd_ind,
                                 latent, store_latent, it)
            if theta_updater is not None:
                current = theta_updater(current, x, y, theta_rng)
                logf = current.observation_loglik_table(y)
                fobs = np.exp(logf)
        model = current
    seconds = time.perf_counter() - t_start

    name = "rippler-data-informed" if data_informed else "rippler"
    return ChainResult(
        kernel=name, x=x, counts=counts, majd_abs=majd_abs,
        majd_ind=majd_ind, trace=trace,
        latent=latent if store_latent else None,
        tuner_proposals=tuner.proposals if fixed_kappa == 0 else None,
        tuner_accepts=tuner.accepts if fixed_kappa == 0 else None,
        seconds=seconds)


def _theta_chunks(iterations, theta_updater):
    """Iteration blocks between parameter refreshes: the whole run when
    parameters are fixed, single sweeps otherwise."""
    if theta_updater is None:
        return [(0, iterations)]
    return [(i, i + 1) for i in range(iterations)]


def _record_iteration_py(x, x_prev, counts, majd_abs, majd_ind, latent,
                         store_latent, it):
    T, N = x.shape
    S = counts.shape[2]
    for s in range(S):
        counts[it, :, s] = (x == s + 1).sum(axis=1)
    diff = x - x_prev
    majd_ind[it] = float((diff != 0).sum())
    majd_abs[it] = float(np.abs(diff).sum())
    x_prev[:] = x
    if store_latent:
        latent[it] = x


def gaussian_walk_theta_updater(step=0.1, param_names=None):
    """Demo parameter move: a symmetric Gaussian step on the log of
    each rate parameter with a flat prior on the log scale, accepted
    against the full latent path density. Works on any model whose
    dataclass params are positive rates."""
    import dataclasses
    from .chmm import observation_loglik_total, path_log_prior

    def updater(model, x, y, rng):
        params = model.params
        names = param_names or [f.name for f in dataclasses.fields(params)]
        name = names[int(rng.integers(0, len(names)))]
        value = getattr(params, name)
        scalar = np.isscalar(value)
        arr = np.atleast_1d(np.asarray(value, float))
        prop = np.exp(np.log(arr) + step * rng.standard_normal(arr.size))
        new_value = float(prop[0]) if scalar else tuple(prop)
        new_params = dataclasses.replace(params, **{name: new_value})
        new_model = model.with_params(new_params)
        cur = path_log_prior(model, x)
        new = path_log_prior(new_model, x)
        if new - cur >= 0 or rng.random() < math.exp(new - cur):
            return new_model
        return model

    return updater
