"""Shared test helpers: random operators and small scenario builders."""

from __future__ import annotations

import numpy as np
import pytest

from causalcones import LabeledSpace, ProcessOperator, Role, SystemLabel


def rand_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + g.conj().T) / 2.0


def rand_psd(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    rank = rank or d
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    return g @ g.conj().T


def rand_state(rng: np.random.Generator, d: int) -> np.ndarray:
    rho = rand_psd(rng, d)
    return rho / np.trace(rho).real


def rand_operator(rng: np.random.Generator, space: LabeledSpace) -> ProcessOperator:
    return ProcessOperator(space, rand_hermitian(rng, space.total_dim))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20230817)


def bipartite_qubits() -> LabeledSpace:
    return LabeledSpace.from_party_dims({"A": (2, 2), "B": (2, 2)})


def tripartite_qubits() -> LabeledSpace:
    return LabeledSpace.from_party_dims({"A": (2, 2), "B": (2, 2), "C": (2, 2)})


def tripartite_no_c_out() -> LabeledSpace:
    """Three parties, the last one with a trivial outgoing system."""
    return LabeledSpace.from_party_dims({"A": (2, 2), "B": (2, 2), "C": (2, 1)})


def fourpartite_no_a_in() -> LabeledSpace:
    """Four parties with a trivial incoming system for the first."""
    return LabeledSpace.from_party_dims(
        {"A": (1, 2), "B": (2, 2), "C": (2, 2), "D": (2, 2)}
    )


def fourpartite_gap_scenario() -> LabeledSpace:
    """Four parties; first has no incoming, last has no outgoing system."""
    return LabeledSpace.from_party_dims(
        {"A": (1, 2), "B": (2, 2), "C": (2, 2), "D": (2, 1)}
    )


def label(party: str, role: str, dim: int = 2, tag: str = "") -> SystemLabel:
    return SystemLabel(party, Role(role), dim, tag)
