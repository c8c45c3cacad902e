"""Core CHMM primitives: rate conversion, inverse-CDF mapping,
simulation and path densities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rippler.chmm import (
    InfeasibleStateError,
    InvariantError,
    StateSpace,
    categorical_index,
    categorical_rows,
    observation_loglik_total,
    path_log_prior,
    rate_matrix_to_probs,
    rates_to_probs,
    simulate_centred,
    simulate_noncentred,
    state_counts,
    validate_prob_row,
    validate_states,
    validate_uniform_grid,
)
from conftest import build_tiny_sis, build_small_sir


class TestRatesToProbs:
    def test_single_exit(self):
        # q12 = 0.125 from state 1: stay prob exp(-0.125)
        p = rates_to_probs(np.array([-0.125, 0.125]), 1)
        assert p[0] == pytest.approx(0.8824969025845955, abs=1e-15)
        assert p[1] == pytest.approx(1.0 - 0.8824969025845955, abs=1e-15)

    def test_zero_exit_rate_is_point_mass(self):
        p = rates_to_probs(np.array([0.0, 0.0, 0.0]), 2)
        assert np.array_equal(p, [0.0, 1.0, 0.0])

    def test_competing_exits_share_leaving_mass(self):
        a, b = 0.3, 0.9
        p = rates_to_probs(np.array([-(a + b), a, b]), 1)
        leave = 1.0 - np.exp(-(a + b))
        assert p[0] == pytest.approx(np.exp(-(a + b)))
        assert p[1] == pytest.approx(a / (a + b) * leave)
        assert p[2] == pytest.approx(b / (a + b) * leave)

    def test_rejects_negative_off_diagonal(self):
        with pytest.raises(InvariantError):
            rates_to_probs(np.array([0.2, -0.2]), 1)

    def test_rejects_inconsistent_diagonal(self):
        with pytest.raises(InvariantError):
            rates_to_probs(np.array([-0.5, 0.2]), 1)

    @given(
        st.lists(st.floats(0.0, 50.0), min_size=1, max_size=7),
        st.integers(0, 7),
    )
    @settings(max_examples=200)
    def test_rows_are_distributions(self, off, pos):
        pos = pos % (len(off) + 1)
        rates = off[:pos] + [-sum(off)] + off[pos:]
        p = rates_to_probs(np.array(rates), pos + 1)
        assert np.all(p >= 0.0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


class TestCategoricalIndex:
    def test_interior_point(self):
        assert categorical_index(0.25, np.array([0.1, 0.2, 0.7])) == 2

    def test_first_interval(self):
        assert categorical_index(0.05, np.array([0.1, 0.2, 0.7])) == 1

    def test_cut_point_maps_to_upper_interval(self):
        # half-open intervals: u on a boundary belongs to the interval above
        assert categorical_index(0.25, np.array([0.25, 0.25, 0.5])) == 2
        assert categorical_index(0.5, np.array([0.25, 0.25, 0.5])) == 3

    def test_zero_probability_state_skipped_at_cut_point(self):
        assert categorical_index(0.3, np.array([0.3, 0.0, 0.7])) == 3

    def test_zero_is_valid_input(self):
        assert categorical_index(0.0, np.array([0.4, 0.6])) == 1
        assert categorical_index(0.0, np.array([0.0, 1.0])) == 2

    def test_rejects_out_of_range(self):
        with pytest.raises(InvariantError):
            categorical_index(1.0, np.array([0.5, 0.5]))
        with pytest.raises(InvariantError):
            categorical_index(-0.1, np.array([0.5, 0.5]))

    @given(
        st.lists(st.floats(0.001, 1.0), min_size=2, max_size=6),
        st.floats(0.0, 1.0, exclude_max=True),
    )
    @settings(max_examples=300)
    def test_preimage_property(self, weights, u):
        p = np.array(weights) / sum(weights)
        s = categorical_index(u, p)
        cum = np.concatenate([[0.0], np.cumsum(p)])
        # same sequential accumulation as the implementation
        assert cum[s - 1] <= u
        assert u < cum[s] or s == len(p)

    def test_matches_vectorised_rows(self):
        rng = np.random.default_rng(0)
        rows = rng.dirichlet(np.ones(4), size=50)
        u = rng.random(50)
        vec = categorical_rows(rows, u)
        scalar = np.array([categorical_index(ui, row) for ui, row in zip(u, rows)])
        assert np.array_equal(vec, scalar)


class TestValidators:
    def test_prob_row_renormalises_small_drift(self):
        p = np.array([0.5, 0.5 + 5e-10])
        out = validate_prob_row(p)
        assert out.sum() == pytest.approx(1.0, abs=1e-15)

    def test_prob_row_keeps_exact_rows(self):
        p = np.array([0.5, 0.5])
        assert validate_prob_row(p) is p

    def test_prob_row_rejects_large_drift(self):
        with pytest.raises(InvariantError):
            validate_prob_row(np.array([0.5, 0.6]))

    def test_states_shape_and_range(self):
        space = StateSpace(2, 2, 3)
        with pytest.raises(InvariantError):
            validate_states(np.ones((3, 3), dtype=int), space)
        with pytest.raises(InvariantError):
            validate_states(np.zeros((3, 2), dtype=int), space)

    def test_uniform_grid_open_interval(self):
        space = StateSpace(2, 2, 2)
        with pytest.raises(InvariantError):
            validate_uniform_grid(np.array([[0.0, 0.5], [0.5, 0.5]]), space)
        with pytest.raises(InvariantError):
            validate_uniform_grid(np.array([[1.0, 0.5], [0.5, 0.5]]), space)


class TestSimulation:
    def test_shapes_and_ranges(self):
        model, _ = build_tiny_sis()
        x = simulate_centred(model, np.random.default_rng(1))
        assert x.shape == (3, 2)
        assert x.min() >= 1 and x.max() <= 2

    def test_noncentred_matches_centred_in_distribution(self):
        # 2-state chain, many individuals all infected at t=1: one-step
        # recovery frequency must match 1 - exp(-gamma) for both maps
        n = 4000
        from rippler.models import DiagnosticTestObservation, MultiStrainModel, MultiStrainParams

        model = MultiStrainModel(
            MultiStrainParams(betas=(0.9,), gammas=(0.5,), delta=0.0),
            num_individuals=n,
            num_timepoints=2,
            observation=DiagnosticTestObservation(0.9, 0.9, 0.1, (2,)),
            initial_state_probs=np.tile([0.0, 1.0], (n, 1)),
        )
        rng = np.random.default_rng(7)
        x_nc = simulate_noncentred(model, rng.random((2, n)))
        x_c = simulate_centred(model, np.random.default_rng(8))
        p = 1.0 - np.exp(-0.5)
        se = np.sqrt(p * (1 - p) / n)
        for x in (x_nc, x_c):
            assert np.all(x[0] == 2)
            rec_frac = (x[1] == 1).mean()
            assert abs(rec_frac - p) < 4 * se

    def test_noncentred_reproduces_centred_stream(self):
        # identical uniform inputs must give identical paths
        model, _ = build_tiny_sis()
        rng = np.random.default_rng(3)
        u = np.vstack([rng.random(2) for _ in range(3)])
        x1 = simulate_noncentred(model, u)
        x2 = simulate_centred(model, np.random.default_rng(3))
        assert np.array_equal(x1, x2)

    def test_state_counts(self):
        x = np.array([[1, 2], [2, 2], [1, 1]])
        c = state_counts(x, 2)
        assert np.array_equal(c, [[1, 1], [0, 2], [2, 0]])
        assert np.all(c.sum(axis=1) == 2)


class TestPathDensities:
    def test_prior_of_impossible_path_is_neg_inf(self):
        model, _ = build_tiny_sis()
        # infection appearing with no infective present has prior zero
        x = np.array([[1, 1], [1, 2], [1, 2]])
        assert path_log_prior(model, x) == float("-inf")

    def test_prior_sums_realised_transition_logs(self):
        model, _ = build_tiny_sis()
        x = np.array([[2, 1], [2, 1], [1, 1]])
        p_init = model.initial_probs()
        total = np.log(p_init[0, 1]) + np.log(p_init[1, 0])
        for t in range(1, 3):
            rows = model.transition_rows(t, x[t - 1])
            total += np.log(rows[0, x[t, 0] - 1]) + np.log(rows[1, x[t, 1] - 1])
        assert path_log_prior(model, x) == pytest.approx(total, abs=1e-12)

    def test_observation_total_ignores_missing(self):
        model, y = build_tiny_sis()
        x = np.array([[2, 1], [2, 1], [1, 1]])
        expected = model.observation.loglik(1.0, 2) + model.observation.loglik(0.0, 1)
        assert observation_loglik_total(model, x, y) == pytest.approx(expected)

    def test_observation_total_uses_table(self):
        model, x, y = build_small_sir()
        table = model.observation_loglik_table(y)
        direct = observation_loglik_total(model, x, y)
        via_table = observation_loglik_total(model, x, y, table=table)
        assert direct == pytest.approx(via_table, abs=1e-12)
