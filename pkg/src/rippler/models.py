"""Individual-based epidemic models as count-coupled CHMMs.

Three transition structures are provided, each coupling individuals
only through per-state occupancy counts at the previous time point:

* SIR: susceptible (1), infective (2), recovered (3); infection rate
  beta * I(t), recovery rate gamma.
* SEIR with staged exposure: susceptible (1), exposure stages
  2..E+1, infective (E+2), recovered (E+3); stage i advances at rate
  sigma_i, infection enters stage 1 at rate beta * I(t).
* Multi-strain SIS: susceptible (1), strain i occupies state 1+i;
  infection with strain i at rate beta_i * I_i(t), recovery to
  susceptible at rate gamma_i, and direct strain switching i -> k at
  the cross-infection rate delta * beta_k * I_k(t).

Rates convert to one-step probabilities through
``chmm.rates_to_probs`` (competing exits share the leaving mass in
proportion to their rates; no matrix exponential).

Two observation processes are provided: imperfect diagnostic tests at
random times, and exact recovery times encoded per cell as
1 = susceptible-or-infective, 2 = infective, 3 = recovered.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .chmm import (
    InfeasibleStateError,
    InvariantError,
    KernelExport,
    ModelSpec,
    StateSpace,
    categorical_rows,
    rate_matrix_to_probs,
    simulate_centred,
    snapshot_counts,
)

# kernel dispatch ids shared with the compiled fast path
KIND_SIR = 0
KIND_SEIR = 1
KIND_MULTISTRAIN = 2

NEG_INF = float("-inf")

# recovery-time observation codes
OBS_S_OR_I = 1.0
OBS_I = 2.0
OBS_R = 3.0


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else NEG_INF


@dataclass(frozen=True)
class SirParams:
    beta: float
    gamma: float

    def __post_init__(self):
        if self.beta <= 0.0 or self.gamma <= 0.0:
            raise InvariantError("SIR rates beta and gamma must be positive")


@dataclass(frozen=True)
class SeirParams:
    beta: float
    gamma: float
    sigmas: tuple

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        if self.beta <= 0.0 or self.gamma <= 0.0:
            raise InvariantError("SEIR rates beta and gamma must be positive")
        if len(self.sigmas) < 1:
            raise InvariantError("SEIR needs at least one exposure stage")
        if any(s <= 0.0 for s in self.sigmas):
            raise InvariantError("SEIR stage rates sigma_i must be positive")

    @property
    def num_exposed_stages(self) -> int:
        return len(self.sigmas)


@dataclass(frozen=True)
class MultiStrainParams:
    betas: tuple
    gammas: tuple
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if len(self.betas) < 1 or len(self.betas) != len(self.gammas):
            raise InvariantError("betas and gammas must be non-empty, equal length")
        if any(b <= 0.0 for b in self.betas) or any(g <= 0.0 for g in self.gammas):
            raise InvariantError("strain rates must be positive")
        if self.delta < 0.0:
            raise InvariantError("cross-infection scaling delta must be >= 0")

    @property
    def num_strains(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class DiagnosticTestObservation:
    """Imperfect diagnostic tests applied on random occasions.

    Each (t, j) cell is tested independently with probability
    `test_probability`; a tested cell yields a positive result with
    probability `sensitivity` when the individual occupies one of
    `target_states`, and with probability 1 - `specificity` otherwise.
    Untested cells are missing (NaN).
    """

    indicator = False

    sensitivity: float
    specificity: float
    test_probability: float
    target_states: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "target_states", tuple(int(s) for s in self.target_states)
        )
        if not 0.0 < self.sensitivity <= 1.0:
            raise InvariantError("sensitivity must lie in (0, 1]")
        if not 0.0 < self.specificity <= 1.0:
            raise InvariantError("specificity must lie in (0, 1]")
        if not 0.0 <= self.test_probability <= 1.0:
            raise InvariantError("test_probability must lie in [0, 1]")
        if len(self.target_states) == 0:
            raise InvariantError("target_states must be non-empty")

    def loglik(self, y: float, s: int) -> float:
        if np.isnan(y):
            return 0.0
        hit = s in self.target_states
        if y == 1.0:
            return _log(self.sensitivity) if hit else _log(1.0 - self.specificity)
        if y == 0.0:
            return _log(1.0 - self.sensitivity) if hit else _log(self.specificity)
        raise InvariantError(f"test observations must be 0, 1 or NaN, got {y}")

    def loglik_table(self, y: np.ndarray, num_states: int) -> np.ndarray:
        T, N = y.shape
        pos_row = np.empty(num_states)
        neg_row = np.empty(num_states)
        for s in range(1, num_states + 1):
            hit = s in self.target_states
            pos_row[s - 1] = _log(self.sensitivity) if hit else _log(1.0 - self.specificity)
            neg_row[s - 1] = _log(1.0 - self.sensitivity) if hit else _log(self.specificity)
        table = np.zeros((T, N, num_states))
        table[y == 1.0] = pos_row
        table[y == 0.0] = neg_row
        bad = ~(np.isnan(y) | (y == 0.0) | (y == 1.0))
        if np.any(bad):
            raise InvariantError("test observations must be 0, 1 or NaN")
        return table

    def simulate(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        # draw order: test occasions first, then results
        tested = rng.random(x.shape) < self.test_probability
        infected = np.isin(x, self.target_states)
        p_pos = np.where(infected, self.sensitivity, 1.0 - self.specificity)
        results = (rng.random(x.shape) < p_pos).astype(np.float64)
        return np.where(tested, results, np.nan)


@dataclass(frozen=True)
class RecoveryTimeObservation:
    """Exact recovery times for linear S -> I -> R trajectories.

    Writing t~ for the first time an individual occupies the recovered
    state, the emitted code is 3 (recovered) for t >= t~, 2 (infective)
    for t = t~ - 1, and 1 (susceptible-or-infective) earlier.
    Individuals that never recover emit code 1 throughout: all the data
    say is that recovery has not happened yet. The likelihood is an
    indicator, so incompatible states score -inf rather than raising.
    """

    indicator = True

    infective_state: int = 2
    recovered_state: int = 3

    def loglik(self, y: float, s: int) -> float:
        if np.isnan(y):
            return 0.0
        if y == OBS_R:
            return 0.0 if s == self.recovered_state else NEG_INF
        if y == OBS_I:
            return 0.0 if s == self.infective_state else NEG_INF
        if y == OBS_S_OR_I:
            return 0.0 if s != self.recovered_state else NEG_INF
        raise InvariantError(f"recovery observations must be 1, 2, 3 or NaN, got {y}")

    def loglik_table(self, y: np.ndarray, num_states: int) -> np.ndarray:
        T, N = y.shape
        states = np.arange(1, num_states + 1)
        rows = {
            OBS_S_OR_I: np.where(states != self.recovered_state, 0.0, NEG_INF),
            OBS_I: np.where(states == self.infective_state, 0.0, NEG_INF),
            OBS_R: np.where(states == self.recovered_state, 0.0, NEG_INF),
        }
        table = np.zeros((T, N, num_states))
        for code, row in rows.items():
            table[y == code] = row
        bad = ~(np.isnan(y) | (y == OBS_S_OR_I) | (y == OBS_I) | (y == OBS_R))
        if np.any(bad):
            raise InvariantError("recovery observations must be 1, 2, 3 or NaN")
        return table

    def simulate(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        # deterministic given the path; rng kept for interface symmetry
        T, N = x.shape
        y = np.full((T, N), OBS_S_OR_I)
        for j in range(N):
            rec = np.nonzero(x[:, j] == self.recovered_state)[0]
            if rec.size:
                t_rec = rec[0]
                y[t_rec:, j] = OBS_R
                if t_rec >= 1:
                    y[t_rec - 1, j] = OBS_I
        return y


class CountModel(ModelSpec):
    """CHMM whose transition rows depend on the previous snapshot only
    through per-state occupancy counts, so one S x S matrix per time
    step serves every individual."""

    def __init__(self, space, observation, initial_state_probs=None):
        self.state_space = space
        self.observation = observation
        if initial_state_probs is not None:
            initial_state_probs = np.asarray(initial_state_probs, dtype=np.float64)
            N, S = space.num_individuals, space.num_states
            if initial_state_probs.shape != (N, S):
                raise InvariantError(
                    f"initial_state_probs shape {initial_state_probs.shape} != {(N, S)}"
                )
            rows_sum = initial_state_probs.sum(axis=1)
            if np.any(np.abs(rows_sum - 1.0) > 1e-9) or np.any(initial_state_probs < 0):
                raise InvariantError("initial_state_probs rows must be distributions")
        self._initial_state_probs = initial_state_probs
        if hasattr(observation, "target_states"):
            bad = [s for s in observation.target_states if not 1 <= s <= space.num_states]
            if bad:
                raise InvariantError(f"target_states {bad} outside 1..{space.num_states}")

    def rate_matrix(self, t: int, counts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def default_initial_probs(self) -> np.ndarray:
        raise NotImplementedError

    def initial_probs(self) -> np.ndarray:
        if self._initial_state_probs is not None:
            return self._initial_state_probs
        return self.default_initial_probs()

    def prob_matrix(self, t: int, counts: np.ndarray) -> np.ndarray:
        return rate_matrix_to_probs(self.rate_matrix(t, counts))

    def transition_probs(self, t: int, j: int, snapshot: np.ndarray) -> np.ndarray:
        counts = snapshot_counts(snapshot, self.state_space.num_states)
        return self.prob_matrix(t, counts)[snapshot[j - 1] - 1]

    def transition_rows(self, t: int, snapshot: np.ndarray) -> np.ndarray:
        counts = snapshot_counts(snapshot, self.state_space.num_states)
        return self.prob_matrix(t, counts)[np.asarray(snapshot) - 1]

    def observation_loglik(self, y: float, s: int) -> float:
        return self.observation.loglik(y, s)

    def observation_loglik_table(self, y: np.ndarray) -> np.ndarray:
        return self.observation.loglik_table(y, self.state_space.num_states)

    def with_params(self, params):
        """Copy of this model with the dynamics parameters replaced."""
        if not isinstance(params, type(self.params)):
            raise InvariantError(
                f"replacement params must be {type(self.params).__name__}"
            )
        clone = copy.copy(self)
        clone.params = params
        return clone


class SirModel(CountModel):
    """SIR model: states 1 = susceptible, 2 = infective, 3 = recovered."""

    SUSCEPTIBLE, INFECTIVE, RECOVERED = 1, 2, 3

    def __init__(self, params: SirParams, num_individuals: int, num_timepoints: int,
                 observation, initial_infectives: int = 1,
                 initial_state_probs=None):
        space = StateSpace(3, num_individuals, num_timepoints)
        super().__init__(space, observation, initial_state_probs)
        self.params = params
        if not 0 <= initial_infectives <= num_individuals:
            raise InvariantError("initial_infectives outside 0..N")
        self.initial_infectives = initial_infectives

    def default_initial_probs(self) -> np.ndarray:
        N = self.state_space.num_individuals
        probs = np.zeros((N, 3))
        probs[: self.initial_infectives, self.INFECTIVE - 1] = 1.0
        probs[self.initial_infectives :, self.SUSCEPTIBLE - 1] = 1.0
        return probs

    def rate_matrix(self, t: int, counts: np.ndarray) -> np.ndarray:
        q = np.zeros((3, 3))
        q[0, 1] = self.params.beta * counts[1]
        q[1, 2] = self.params.gamma
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    def kernel_export(self) -> KernelExport:
        return KernelExport(KIND_SIR, np.array([self.params.beta, self.params.gamma]))


class SeirModel(CountModel):
    """SEIR with staged exposure: 1 = S, 2..E+1 = exposure stages,
    E+2 = I, E+3 = R."""

    def __init__(self, params: SeirParams, num_individuals: int, num_timepoints: int,
                 observation, initial_infectives: int = 1,
                 initial_state_probs=None):
        E = params.num_exposed_stages
        space = StateSpace(E + 3, num_individuals, num_timepoints)
        super().__init__(space, observation, initial_state_probs)
        self.params = params
        if not 0 <= initial_infectives <= num_individuals:
            raise InvariantError("initial_infectives outside 0..N")
        self.initial_infectives = initial_infectives

    @property
    def infective_state(self) -> int:
        return self.params.num_exposed_stages + 2

    def default_initial_probs(self) -> np.ndarray:
        N = self.state_space.num_individuals
        probs = np.zeros((N, self.state_space.num_states))
        probs[: self.initial_infectives, self.infective_state - 1] = 1.0
        probs[self.initial_infectives :, 0] = 1.0
        return probs

    def rate_matrix(self, t: int, counts: np.ndarray) -> np.ndarray:
        S = self.state_space.num_states
        E = self.params.num_exposed_stages
        q = np.zeros((S, S))
        q[0, 1] = self.params.beta * counts[S - 2]
        for i in range(E):
            q[1 + i, 2 + i] = self.params.sigmas[i]
        q[S - 2, S - 1] = self.params.gamma
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    def kernel_export(self) -> KernelExport:
        return KernelExport(
            KIND_SEIR,
            np.array([self.params.beta, self.params.gamma, *self.params.sigmas]),
        )


class MultiStrainModel(CountModel):
    """Multi-strain SIS: state 1 = susceptible, state 1+i = infected
    with strain i. I_i(t) counts the individuals occupying strain i's
    state at time t."""

    def __init__(self, params: MultiStrainParams, num_individuals: int,
                 num_timepoints: int, observation,
                 initial_infectives_per_strain: int = 1,
                 initial_state_probs=None):
        M = params.num_strains
        space = StateSpace(M + 1, num_individuals, num_timepoints)
        super().__init__(space, observation, initial_state_probs)
        self.params = params
        if initial_infectives_per_strain < 0:
            raise InvariantError("initial_infectives_per_strain must be >= 0")
        if initial_infectives_per_strain * M > num_individuals:
            raise InvariantError("more initial infectives than individuals")
        self.initial_infectives_per_strain = initial_infectives_per_strain

    def default_initial_probs(self) -> np.ndarray:
        N = self.state_space.num_individuals
        M = self.params.num_strains
        k = self.initial_infectives_per_strain
        probs = np.zeros((N, M + 1))
        probs[:, 0] = 1.0
        for strain in range(M):
            for c in range(k):
                j = strain * k + c
                probs[j, 0] = 0.0
                probs[j, 1 + strain] = 1.0
        return probs

    def rate_matrix(self, t: int, counts: np.ndarray) -> np.ndarray:
        M = self.params.num_strains
        q = np.zeros((M + 1, M + 1))
        lam = np.array([self.params.betas[i] * counts[1 + i] for i in range(M)])
        q[0, 1:] = lam
        for i in range(M):
            q[1 + i, 0] = self.params.gammas[i]
            for k in range(M):
                if k != i:
                    q[1 + i, 1 + k] = self.params.delta * lam[k]
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    def kernel_export(self) -> KernelExport:
        return KernelExport(
            KIND_MULTISTRAIN,
            np.array([self.params.delta, *self.params.betas, *self.params.gammas]),
        )


def simulate_dataset(model: ModelSpec, rng: np.random.Generator):
    """Draw (X, Y) from the model: latent path first, then observations."""
    x = simulate_centred(model, rng)
    y = model.observation.simulate(x, rng)
    return x, y


def simulate_data_informed(
    model: ModelSpec,
    y: np.ndarray,
    rng: np.random.Generator,
    max_tries: int = 1000,
) -> np.ndarray:
    """Forward-simulate X from observation-reweighted rows.

    Each row is tilted by the emission likelihood of the destination
    cell and renormalised. With indicator likelihoods (recovery-time
    data) a simulated prefix can paint itself into a corner where some
    row has normaliser zero; the draw is then abandoned and retried up
    to `max_tries` times. A zero normaliser at t = 1 cannot be repaired
    by retrying and raises immediately.
    """
    T, N = model.state_space.shape
    f = np.exp(model.observation_loglik_table(y))
    init = model.initial_probs() * f[0]
    c0 = init.sum(axis=1)
    if np.any(c0 == 0.0):
        j = int(np.nonzero(c0 == 0.0)[0][0])
        raise InfeasibleStateError(
            f"initial distribution of individual {j + 1} is incompatible "
            f"with its first observation"
        )
    init = init / c0[:, None]
    for _ in range(max_tries):
        x = np.empty((T, N), dtype=np.int64)
        x[0] = categorical_rows(init, rng.random(N))
        feasible = True
        for t in range(1, T):
            rows = model.transition_rows(t, x[t - 1]) * f[t]
            c = rows.sum(axis=1)
            if np.any(c == 0.0):
                feasible = False
                break
            x[t] = categorical_rows(rows / c[:, None], rng.random(N))
        if feasible:
            return x
    raise InfeasibleStateError(
        f"no feasible data-informed path found in {max_tries} attempts"
    )
