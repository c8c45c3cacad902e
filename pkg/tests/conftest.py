"""Shared model builders for the test suite.

The tiny fixtures are small enough for exact posterior enumeration
(S^(T*N) <= 1e6) and are reused by the unit, oracle and acceptance
tests.
"""

import numpy as np
import pytest

from rippler.models import (
    DiagnosticTestObservation,
    MultiStrainModel,
    MultiStrainParams,
    SeirModel,
    SeirParams,
    SirModel,
    SirParams,
)


def build_tiny_sis():
    """2-state single-strain SIS, N=2, T=3: 64 joint configurations."""
    obs = DiagnosticTestObservation(
        sensitivity=0.85, specificity=0.9, test_probability=0.5, target_states=(2,)
    )
    init = np.array([[0.6, 0.4], [0.6, 0.4]])
    model = MultiStrainModel(
        MultiStrainParams(betas=(0.9,), gammas=(0.5,), delta=0.0),
        num_individuals=2,
        num_timepoints=3,
        observation=obs,
        initial_state_probs=init,
    )
    y = np.full((3, 2), np.nan)
    y[0, 0] = 1.0
    y[2, 1] = 0.0
    return model, y


def build_tiny_sir():
    """3-state SIR, N=2, T=3: 729 joint configurations."""
    obs = DiagnosticTestObservation(
        sensitivity=0.8, specificity=0.9, test_probability=0.5, target_states=(2,)
    )
    init = np.array([[0.8, 0.2, 0.0], [0.8, 0.2, 0.0]])
    model = SirModel(
        SirParams(beta=0.7, gamma=0.5),
        num_individuals=2,
        num_timepoints=3,
        observation=obs,
        initial_state_probs=init,
    )
    y = np.full((3, 2), np.nan)
    y[1, 0] = 1.0
    y[2, 1] = 0.0
    return model, y


def build_small_sir(n=6, t=8, seed=11):
    """Mid-sized SIR with simulated test data, for functional tests."""
    obs = DiagnosticTestObservation(
        sensitivity=0.9, specificity=0.9, test_probability=0.4, target_states=(2,)
    )
    model = SirModel(
        SirParams(beta=0.25, gamma=0.15),
        num_individuals=n,
        num_timepoints=t,
        observation=obs,
        initial_infectives=1,
    )
    from rippler.models import simulate_dataset

    x, y = simulate_dataset(model, np.random.default_rng(seed))
    return model, x, y


def build_small_seir(n=5, t=7, stages=2, seed=12):
    obs = DiagnosticTestObservation(
        sensitivity=0.8, specificity=0.95, test_probability=0.4,
        target_states=(stages + 2,),
    )
    model = SeirModel(
        SeirParams(beta=0.3, gamma=0.2, sigmas=(0.4,) * stages),
        num_individuals=n,
        num_timepoints=t,
        observation=obs,
        initial_infectives=1,
    )
    from rippler.models import simulate_dataset

    x, y = simulate_dataset(model, np.random.default_rng(seed))
    return model, x, y


def build_small_multistrain(n=5, t=6, strains=2, seed=13):
    obs = DiagnosticTestObservation(
        sensitivity=0.8, specificity=0.95, test_probability=0.4,
        target_states=tuple(range(2, strains + 2)),
    )
    model = MultiStrainModel(
        MultiStrainParams(
            betas=(0.3,) * strains, gammas=(0.2,) * strains, delta=0.2
        ),
        num_individuals=n,
        num_timepoints=t,
        observation=obs,
        initial_infectives_per_strain=1,
    )
    from rippler.models import simulate_dataset

    x, y = simulate_dataset(model, np.random.default_rng(seed))
    return model, x, y


@pytest.fixture(scope="session")
def tiny_sis():
    return build_tiny_sis()


@pytest.fixture(scope="session")
def tiny_sir():
    return build_tiny_sir()


_acceptance_lines = []


def record_acceptance(criterion: str, passed: bool, detail: str):
    _acceptance_lines.append((criterion, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _acceptance_lines:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {criterion}: {detail}")
