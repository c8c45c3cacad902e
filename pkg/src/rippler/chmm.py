"""Coupled hidden Markov model (CHMM) primitives.

A CHMM tracks N individual Markov chains on a shared state space
{1..S} over T time points. The chains are coupled: the transition
probabilities of every chain at time t+1 may depend on the states of
all chains at time t (for the epidemic models in this package, only
through the per-state occupancy counts). Latent states live in a
T x N integer matrix X; observations in a T x N float matrix Y where
NaN marks a missing observation, which contributes a likelihood
factor of one.

State indices are 1-based everywhere in the public API and in
serialised files. Probability rows follow a half-open convention: a
uniform draw u selects state s when cum(s-1) <= u < cum(s), so every
u in [0, 1) has exactly one image and a zero-probability state is
never selected, including at interval endpoints.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

# Probability rows must sum to one within PROB_ROW_REJECT; deviations
# inside (PROB_ROW_EXACT, PROB_ROW_REJECT] are silently renormalised.
PROB_ROW_EXACT = 1e-12
PROB_ROW_REJECT = 1e-9


class RipplerError(Exception):
    """Base class for all errors raised by this package."""


class InvariantError(RipplerError):
    """An input violates a documented structural invariant."""


class InfeasibleStateError(RipplerError):
    """A zero-probability structure was encountered where positive mass
    is required (impossible realised transition, or a data-informed
    normaliser of zero)."""


@dataclass(frozen=True)
class StateSpace:
    """Dimensions of a CHMM: S states, N individuals, T time points."""

    num_states: int
    num_individuals: int
    num_timepoints: int

    def __post_init__(self):
        if self.num_states < 2:
            raise InvariantError(f"num_states must be >= 2, got {self.num_states}")
        if self.num_individuals < 1:
            raise InvariantError(
                f"num_individuals must be >= 1, got {self.num_individuals}"
            )
        if self.num_timepoints < 1:
            raise InvariantError(
                f"num_timepoints must be >= 1, got {self.num_timepoints}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_timepoints, self.num_individuals)


class KernelExport(NamedTuple):
    """Dispatch record for the compiled count-coupled fast path.

    `kind` selects the rate-matrix builder inside the jitted kernels and
    `params` is its flat parameter vector. Models that cannot express
    their transition law through per-state counts return None from
    ``ModelSpec.kernel_export`` and run on the pure-numpy path instead.
    """

    kind: int
    params: np.ndarray


def validate_states(x: np.ndarray, space: StateSpace) -> np.ndarray:
    """Check a latent state matrix against its state space.

    Parameters
    ----------
    x : ndarray, shape (T, N)
        Integer states, 1-based.
    space : StateSpace

    Returns
    -------
    ndarray of int64, shape (T, N)
    """
    x = np.asarray(x)
    if x.shape != space.shape:
        raise InvariantError(f"state matrix shape {x.shape} != {space.shape}")
    if not np.issubdtype(x.dtype, np.integer):
        raise InvariantError(f"state matrix must be integer, got dtype {x.dtype}")
    if x.min() < 1 or x.max() > space.num_states:
        raise InvariantError(
            f"state entries must lie in 1..{space.num_states}; "
            f"found range [{x.min()}, {x.max()}]"
        )
    return x.astype(np.int64, copy=False)


def validate_observations(y: np.ndarray, space: StateSpace) -> np.ndarray:
    """Check an observation matrix; NaN entries mark missing values."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != space.shape:
        raise InvariantError(f"observation matrix shape {y.shape} != {space.shape}")
    return y


def validate_uniform_grid(u: np.ndarray, space: StateSpace) -> np.ndarray:
    """Check a non-centred uniform grid: entries strictly inside (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != space.shape:
        raise InvariantError(f"uniform grid shape {u.shape} != {space.shape}")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise InvariantError("uniform grid entries must lie strictly inside (0, 1)")
    return u


def validate_prob_row(p: np.ndarray) -> np.ndarray:
    """Validate a probability row, renormalising tiny drift.

    Rows whose sum deviates from one by more than PROB_ROW_REJECT are
    rejected; deviations above PROB_ROW_EXACT are renormalised.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise InvariantError(f"probability row must be 1-d, got shape {p.shape}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise InvariantError("probability entries must lie in [0, 1]")
    dev = abs(float(p.sum()) - 1.0)
    if dev > PROB_ROW_REJECT:
        raise InvariantError(f"probability row sums to 1 {'+' if p.sum() > 1 else '-'} {dev:.3e}")
    if dev > PROB_ROW_EXACT:
        return p / p.sum()
    return p


def validate_rate_row(q: np.ndarray, current_state: int) -> np.ndarray:
    """Validate a transition rate row for a given current state.

    Off-diagonal entries must be non-negative and the diagonal entry
    must equal the negative sum of the off-diagonals.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1:
        raise InvariantError(f"rate row must be 1-d, got shape {q.shape}")
    r = current_state - 1
    if not 0 <= r < q.size:
        raise InvariantError(f"current_state {current_state} outside 1..{q.size}")
    off = np.delete(q, r)
    if np.any(off < 0.0):
        raise InvariantError("off-diagonal rates must be non-negative")
    if not np.isclose(q[r], -off.sum(), rtol=1e-9, atol=1e-12):
        raise InvariantError(
            f"diagonal rate {q[r]} must equal negative off-diagonal sum {-off.sum()}"
        )
    return q


def rates_to_probs(rates: np.ndarray, current_state: int) -> np.ndarray:
    """Convert one transition rate row into transition probabilities.

    For current state r with rate row q (q[r] = -sum of off-diagonals),
    the one-step probabilities over a unit time interval are

        p[r] = exp(q[r])
        p[s] = q[s] / (-q[r]) * (1 - exp(q[r]))     for s != r

    and the row degenerates to a point mass at r when the total exit
    rate is zero. No matrix exponential is involved: competing exits
    share the leaving mass proportionally to their rates.

    Parameters
    ----------
    rates : ndarray, shape (S,)
    current_state : int, 1-based

    Returns
    -------
    ndarray, shape (S,) of transition probabilities summing to one.
    """
    q = validate_rate_row(rates, current_state)
    r = current_state - 1
    p = np.zeros_like(q)
    q_rr = q[r]
    if q_rr == 0.0:
        p[r] = 1.0
        return p
    stay = np.exp(q_rr)
    p[r] = stay
    scale = (1.0 - stay) / (-q_rr)
    for s in range(q.size):
        if s != r:
            p[s] = q[s] * scale
    return p


def rate_matrix_to_probs(rates: np.ndarray) -> np.ndarray:
    """Row-wise rates_to_probs over a full S x S rate matrix."""
    rates = np.asarray(rates, dtype=np.float64)
    S = rates.shape[0]
    if rates.shape != (S, S):
        raise InvariantError(f"rate matrix must be square, got {rates.shape}")
    out = np.empty_like(rates)
    for r in range(S):
        out[r] = rates_to_probs(rates[r], r + 1)
    return out


def categorical_index(u: float, probs: np.ndarray) -> int:
    """Map a uniform draw to a state through the half-open inverse CDF.

    Returns the 1-based state s whose cumulative interval
    [cum(s-1), cum(s)) contains u. Equivalently one plus the number of
    cumulative sums less than or equal to u. States with zero
    probability are never returned; if floating-point slack pushes u at
    or beyond the final cumulative sum, the last positive-probability
    state is returned.
    """
    if not 0.0 <= u < 1.0:
        raise InvariantError(f"uniform value must lie in [0, 1), got {u}")
    acc = 0.0
    last_positive = -1
    for s in range(len(probs)):
        p = probs[s]
        if p > 0.0:
            last_positive = s
        acc += p
        if u < acc:
            return s + 1
    if last_positive < 0:
        raise InfeasibleStateError("probability row has no positive entry")
    return last_positive + 1


def categorical_rows(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorised categorical_index over per-individual rows.

    Parameters
    ----------
    rows : ndarray, shape (N, S)
    u : ndarray, shape (N,)

    Returns
    -------
    ndarray of int64, shape (N,), 1-based states.
    """
    cum = np.cumsum(rows, axis=1)
    idx = 1 + (cum <= u[:, None]).sum(axis=1)
    over = idx > rows.shape[1]
    if np.any(over):
        # fp slack past the last cumulative sum: last positive state
        last_pos = rows.shape[1] - 1 - np.argmax(rows[over, ::-1] > 0.0, axis=1)
        idx[over] = last_pos + 1
    return idx.astype(np.int64)


class ModelSpec(abc.ABC):
    """Contract a CHMM model must satisfy to drive simulation and
    inference.

    Concrete models carry their parameters; `t` arguments are 1-based
    source times and `snapshot` is the full length-N state vector at
    that time.
    """

    state_space: StateSpace

    @abc.abstractmethod
    def initial_probs(self) -> np.ndarray:
        """Initial state distribution per individual, shape (N, S)."""

    @abc.abstractmethod
    def transition_probs(self, t: int, j: int, snapshot: np.ndarray) -> np.ndarray:
        """Transition probability row of individual j (1-based) from
        time t to t+1, given the time-t snapshot. Shape (S,)."""

    @abc.abstractmethod
    def observation_loglik(self, y: float, s: int) -> float:
        """log f(y | state s); NaN observations return 0.0."""

    def transition_rows(self, t: int, snapshot: np.ndarray) -> np.ndarray:
        """All N transition rows at source time t, shape (N, S).

        The default loops over individuals; count-coupled models
        override this with a shared-matrix gather.
        """
        N = self.state_space.num_individuals
        S = self.state_space.num_states
        rows = np.empty((N, S))
        for j in range(N):
            rows[j] = self.transition_probs(t, j + 1, snapshot)
        return rows

    def observation_loglik_table(self, y: np.ndarray) -> np.ndarray:
        """Dense table of log f(y[t, j] | s), shape (T, N, S).

        Missing observations contribute zero rows. Kernels consume this
        table instead of calling back into Python.
        """
        T, N = self.state_space.shape
        S = self.state_space.num_states
        table = np.zeros((T, N, S))
        for t in range(T):
            for j in range(N):
                v = y[t, j]
                if np.isnan(v):
                    continue
                for s in range(S):
                    table[t, j, s] = self.observation_loglik(v, s + 1)
        return table

    def kernel_export(self) -> Optional[KernelExport]:
        """Dispatch record for the compiled fast path, or None."""
        return None


def state_counts(x: np.ndarray, num_states: int) -> np.ndarray:
    """Occupancy counts per (time, state), shape (T, S)."""
    T = x.shape[0]
    out = np.zeros((T, num_states), dtype=np.int64)
    for t in range(T):
        out[t] = np.bincount(x[t] - 1, minlength=num_states)
    return out


def snapshot_counts(snapshot: np.ndarray, num_states: int) -> np.ndarray:
    """Occupancy counts of one snapshot, shape (S,)."""
    return np.bincount(np.asarray(snapshot) - 1, minlength=num_states)


def simulate_centred(model: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw a latent state matrix X from the model prior.

    Time runs forward: initial states come from the per-individual
    initial distributions, then each step draws every individual's next
    state from its transition row given the current snapshot.
    """
    T, N = model.state_space.shape
    x = np.empty((T, N), dtype=np.int64)
    x[0] = categorical_rows(model.initial_probs(), rng.random(N))
    for t in range(1, T):
        rows = model.transition_rows(t, x[t - 1])
        x[t] = categorical_rows(rows, rng.random(N))
    return x


def simulate_noncentred(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    """Deterministic forward map from a uniform grid to states.

    Applying the half-open inverse CDF cell by cell reproduces the
    centred simulator in distribution when u is i.i.d. uniform; given a
    fixed grid the map is deterministic, which is what the samplers
    exploit.
    """
    T, N = model.state_space.shape
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (T, N):
        raise InvariantError(f"uniform grid shape {u.shape} != {(T, N)}")
    x = np.empty((T, N), dtype=np.int64)
    x[0] = categorical_rows(model.initial_probs(), u[0])
    for t in range(1, T):
        rows = model.transition_rows(t, x[t - 1])
        x[t] = categorical_rows(rows, u[t])
    return x


def path_log_prior(model: ModelSpec, x: np.ndarray) -> float:
    """log pi(X | theta): initial terms plus realised transition terms.

    Returns -inf for a path containing an impossible step.
    """
    T, N = model.state_space.shape
    x = validate_states(x, model.state_space)
    with np.errstate(divide="ignore"):
        total = float(
            np.log(model.initial_probs()[np.arange(N), x[0] - 1]).sum()
        )
        for t in range(1, T):
            rows = model.transition_rows(t, x[t - 1])
            total += float(np.log(rows[np.arange(N), x[t] - 1]).sum())
    return total


def observation_loglik_total(
    model: ModelSpec,
    x: np.ndarray,
    y: np.ndarray,
    table: Optional[np.ndarray] = None,
) -> float:
    """log pi(Y | theta, X) summed over observed cells."""
    T, N = model.state_space.shape
    if table is None:
        table = model.observation_loglik_table(y)
    tt, jj = np.meshgrid(np.arange(T), np.arange(N), indexing="ij")
    return float(table[tt, jj, x - 1].sum())
