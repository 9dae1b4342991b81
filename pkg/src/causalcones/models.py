"""A zoo of named process matrices, witnesses, and random-process sampling.

All operators are returned as :class:`~causalcones.operators.ProcessOperator`
instances over explicitly labeled spaces, so they can be fed directly into the
subspace, cone, and robustness machinery.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import BadParams, UnsupportedDimension
from .operators import (
    ProcessOperator,
    identity_operator,
    partial_trace,
    tensor,
    white_noise,
)
from .spaces import LabeledSpace, Role, SystemLabel
from .subspaces import validity_subspace

_I = np.eye(2, dtype=complex)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def _kron(*ops: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0.0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def activation_scenario() -> LabeledSpace:
    """Three parties A, B with qubit in/out and C with a trivial output."""
    return LabeledSpace.from_party_dims({"A": (2, 2), "B": (2, 2), "C": (2, 1)})


_ACT_ORDER = (
    SystemLabel("C", Role.IN, 2),
    SystemLabel("A", Role.IN, 2),
    SystemLabel("B", Role.IN, 2),
    SystemLabel("A", Role.OUT, 2),
    SystemLabel("B", Role.OUT, 2),
    SystemLabel("C", Role.OUT, 1),
)


def activation_process() -> ProcessOperator:
    """A tripartite process whose bipartite conditionals are causally ordered,
    yet which is itself causally nonseparable.

    Its random robustness in the C-last separable cone is ``4/sqrt(3) - 2``.
    """
    s3 = np.sqrt(3.0)
    mat = (
        _kron(_I, _I, _I, _I, _I)
        - _kron(_I, _Z, _Z, _I, _I)
        + (s3 / 4.0)
        * (
            _kron(_I, _X, _X, _Z, _I)
            + _kron(_I, _X, _X, _I, _Z)
            + _kron(_I, _Y, _Y, _Z, _I)
            + _kron(_I, _Y, _Y, _I, _Z)
        )
        + 0.5 * (_kron(_Z, _Z, _I, _I, _I) - _kron(_Z, _I, _Z, _I, _I))
        + 0.25
        * (
            _kron(_X, _X, _Y, _Z, _I)
            - _kron(_X, _X, _Y, _I, _Z)
            - _kron(_X, _Y, _X, _Z, _I)
            + _kron(_X, _Y, _X, _I, _Z)
        )
    ) / 8.0
    return ProcessOperator.from_system_order(_ACT_ORDER, mat)


def activation_witness() -> ProcessOperator:
    """The optimal witness certifying nonseparability of
    :func:`activation_process`: it pairs with it to ``-(4/sqrt(3) - 2)`` and
    with white noise to ``1``.
    """
    s3 = np.sqrt(3.0)
    mat = (
        _kron(_I, _I, _I, _I, _I)
        - _kron(_I, _Z, _Z, _I, _I)
        - _kron(_I, _I, _I, _Z, _Z)
        + _kron(_I, _Z, _Z, _Z, _Z)
        - (2.0 / 3.0)
        * (
            _kron(_I, _X, _X, _I, _Z)
            + _kron(_I, _X, _X, _Z, _I)
            + _kron(_I, _Y, _Y, _I, _Z)
            + _kron(_I, _Y, _Y, _Z, _I)
        )
        + (1.0 / s3)
        * (
            _kron(_Z, _I, _Z, _I, _I)
            - _kron(_Z, _Z, _I, _I, _I)
            - _kron(_Z, _I, _Z, _Z, _Z)
            + _kron(_Z, _Z, _I, _Z, _Z)
        )
        + (1.0 / s3)
        * (
            _kron(_X, _X, _Y, _I, _Z)
            - _kron(_X, _X, _Y, _Z, _I)
            - _kron(_X, _Y, _X, _I, _Z)
            + _kron(_X, _Y, _X, _Z, _I)
        )
        + (1.0 / 3.0)
        * (
            _kron(_Y, _X, _X, _I, _Z)
            - _kron(_Y, _X, _X, _Z, _I)
            + _kron(_Y, _Y, _Y, _I, _Z)
            - _kron(_Y, _Y, _Y, _Z, _I)
        )
    ) / 4.0
    return ProcessOperator.from_system_order(_ACT_ORDER, mat)


def activation_witness_split() -> dict[str, ProcessOperator]:
    """The party-resolved decomposition of :func:`activation_witness` used to
    check its dual-cone feasibility by hand.
    """
    part_a = (
        -(4.0 / 3.0) * (_kron(_I, _X, _X, _I, _Z) + _kron(_I, _Y, _Y, _I, _Z)) / 4.0
    )
    part_b = (
        -(4.0 / 3.0) * (_kron(_I, _X, _X, _Z, _I) + _kron(_I, _Y, _Y, _Z, _I)) / 4.0
    )
    return {
        "A": ProcessOperator.from_system_order(_ACT_ORDER, part_a),
        "B": ProcessOperator.from_system_order(_ACT_ORDER, part_b),
    }


def conditional_scenario() -> LabeledSpace:
    """The bipartite A/B scenario left after conditioning on party C."""
    return LabeledSpace.from_party_dims({"A": (2, 2), "B": (2, 2)})


_COND_ORDER = (
    SystemLabel("A", Role.IN, 2),
    SystemLabel("B", Role.IN, 2),
    SystemLabel("A", Role.OUT, 2),
    SystemLabel("B", Role.OUT, 2),
)


def conditional_reference(
    c_x: float, c_z: float, order: str = "AB"
) -> ProcessOperator:
    """Closed form of the normalized bipartite process obtained from
    :func:`activation_process` by measuring C's incoming qubit.

    :param c_x: x component of the conditioning Bloch vector.
    :param c_z: z component of the conditioning Bloch vector.
    :param order: ``"AB"`` for the A-before-B branch, ``"BA"`` for the other.
    """
    if order not in ("AB", "BA"):
        raise BadParams(f"order must be 'AB' or 'BA', got {order!r}")
    s3 = np.sqrt(3.0)
    out_z = _kron(_Z, _I) if order == "AB" else _kron(_I, _Z)
    sign = 1.0 if order == "AB" else -1.0
    in_part = _kron(_I, _I)
    mat = (
        np.kron(_kron(_I, _I) - _kron(_Z, _Z), in_part)
        + (s3 / 2.0) * np.kron(_kron(_X, _X) + _kron(_Y, _Y), out_z)
        + (c_z / 2.0) * np.kron(_kron(_Z, _I) - _kron(_I, _Z), in_part)
        + sign * (c_x / 2.0) * np.kron(_kron(_X, _Y) - _kron(_Y, _X), out_z)
    ) / 4.0
    return ProcessOperator.from_system_order(_COND_ORDER, mat)


def conditional_eigenvalues(c_x: float, c_z: float) -> np.ndarray:
    """Sorted eigenvalues of :func:`conditional_reference` in closed form."""
    radius = 0.5 * np.sqrt((3.0 + c_x**2 + c_z**2) / 4.0)
    vals = np.array(8 * [0.0] + 4 * [0.5 - radius] + 4 * [0.5 + radius])
    return np.sort(vals)


def switch_scenario() -> LabeledSpace:
    """Four parties A(1,2), B(2,2), C(2,2), D(2,1)."""
    return LabeledSpace.from_party_dims(
        {"A": (1, 2), "B": (2, 2), "C": (2, 2), "D": (2, 1)}
    )


def switch_process(
    psi: Sequence[complex] | None = None, keep_target: bool = False
) -> ProcessOperator:
    """The quantum-switch process with a coherent control qubit.

    Party A prepares the control, B and C act in a superposition of the two
    relative orders, and D receives the control (plus, optionally, the target)
    at the end.

    :param psi: target-qubit amplitudes; defaults to ``|0>``.
    :param keep_target: if true, keep the final target system as a second
        incoming qubit for D instead of tracing it out.
    """
    psi_vec = np.array([1.0, 0.0], dtype=complex) if psi is None else np.asarray(
        psi, dtype=complex
    )
    if psi_vec.shape != (2,):
        raise BadParams("psi must be a 2-vector of amplitudes")
    psi_vec = psi_vec / np.linalg.norm(psi_vec)
    kets = (np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex))

    def vec(*factors: np.ndarray) -> np.ndarray:
        out = np.array([1.0 + 0.0j])
        for f in factors:
            out = np.kron(out, f)
        return out

    # System order: A_O(control), B_I, B_O, C_I, C_O, D_I(target), D_I(control).
    branch0 = np.zeros(2**7, dtype=complex)
    branch1 = np.zeros(2**7, dtype=complex)
    for a in range(2):
        for b in range(2):
            branch0 += vec(kets[0], psi_vec, kets[a], kets[a], kets[b], kets[b], kets[0])
            branch1 += vec(kets[1], kets[a], kets[b], psi_vec, kets[a], kets[b], kets[1])
    w = branch0 + branch1
    systems = (
        SystemLabel("A", Role.OUT, 2, "c"),
        SystemLabel("B", Role.IN, 2),
        SystemLabel("B", Role.OUT, 2),
        SystemLabel("C", Role.IN, 2),
        SystemLabel("C", Role.OUT, 2),
        SystemLabel("D", Role.IN, 2, "t"),
        SystemLabel("D", Role.IN, 2, "c"),
    )
    full = ProcessOperator.from_system_order(systems, np.outer(w, w.conj()))
    if not keep_target:
        full = partial_trace(full, [SystemLabel("D", Role.IN, 2, "t")])
    trivial = identity_operator(
        LabeledSpace([SystemLabel("A", Role.IN, 1), SystemLabel("D", Role.OUT, 1)])
    )
    return tensor(full, trivial)


def traced_switch_components(
    psi: Sequence[complex] | None = None,
) -> list[ProcessOperator]:
    """The two fixed-order components whose sum is the switch process with
    party D traced out entirely.

    Each component on its own is *not* a valid process: their validity
    violations cancel in the sum.
    """
    psi_vec = np.array([1.0, 0.0], dtype=complex) if psi is None else np.asarray(
        psi, dtype=complex
    )
    psi_vec = psi_vec / np.linalg.norm(psi_vec)
    rho = np.outer(psi_vec, psi_vec.conj())
    phi = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            phi[2 * i + i, 2 * j + j] = 1.0
    ket0 = np.diag([1.0, 0.0]).astype(complex)
    ket1 = np.diag([0.0, 1.0]).astype(complex)
    systems = (
        SystemLabel("A", Role.OUT, 2, "c"),
        SystemLabel("B", Role.IN, 2),
        SystemLabel("B", Role.OUT, 2),
        SystemLabel("C", Role.IN, 2),
        SystemLabel("C", Role.OUT, 2),
    )
    # |1>><<1| across (B_O, C_I) with B_I = rho requires slot order
    # B_I, (B_O C_I), C_O; re-express in the fixed slot order via permutation
    # of a 5-qubit kron built slotwise.
    comp_b_first = _five_slot(ket0, rho, phi, _I)
    comp_c_first = _five_slot_swapped(ket1, rho, phi, _I)
    trivial = identity_operator(LabeledSpace([SystemLabel("A", Role.IN, 1)]))
    out = []
    for mat in (comp_b_first, comp_c_first):
        op = ProcessOperator.from_system_order(systems, mat)
        out.append(tensor(op, trivial))
    return out


def _five_slot(
    ctrl: np.ndarray, b_in: np.ndarray, bo_ci: np.ndarray, c_out: np.ndarray
) -> np.ndarray:
    """Kron over slots (A_O, B_I, [B_O C_I], C_O) in that order."""
    return _kron(ctrl, b_in, bo_ci, c_out)


def _five_slot_swapped(
    ctrl: np.ndarray, c_in: np.ndarray, co_bi: np.ndarray, b_out: np.ndarray
) -> np.ndarray:
    """Kron placing the pair operator across (C_O, B_I) with C first in time.

    The target slot order is (A_O, B_I, B_O, C_I, C_O); the pair operator
    ``co_bi`` is given on (C_O, B_I), so the 5-qubit kron is built on
    (A_O, C_I, [C_O B_I], B_O) and then permuted.
    """
    raw = _kron(ctrl, c_in, co_bi, b_out)
    dims = [2] * 5
    # raw slots: A_O, C_I, C_O, B_I, B_O -> target: A_O, B_I, B_O, C_I, C_O
    perm = [0, 3, 4, 1, 2]
    tens = raw.reshape(dims + dims)
    tens = np.transpose(tens, perm + [p + 5 for p in perm])
    return tens.reshape(32, 32)


def traced_switch(psi: Sequence[complex] | None = None) -> ProcessOperator:
    """The switch process with party D traced out; it is causally separable."""
    comps = traced_switch_components(psi)
    return comps[0] + comps[1]


def gap_scenario() -> LabeledSpace:
    """Four parties A(1,2), B(2,2), C(2,2), D(2,1)."""
    return LabeledSpace.from_party_dims(
        {"A": (1, 2), "B": (2, 2), "C": (2, 2), "D": (2, 1)}
    )


_GAP_ORDER = (
    SystemLabel("A", Role.OUT, 2),
    SystemLabel("B", Role.IN, 2),
    SystemLabel("B", Role.OUT, 2),
    SystemLabel("C", Role.IN, 2),
    SystemLabel("C", Role.OUT, 2),
    SystemLabel("D", Role.IN, 2),
    SystemLabel("A", Role.IN, 1),
    SystemLabel("D", Role.OUT, 1),
)


def gap_process() -> ProcessOperator:
    """A causally nonseparable four-party process that nevertheless satisfies
    the weakened outer-cone conditions obtained by re-attributing each
    first-acting party's systems to party D only.  It separates the
    single-target relaxation from the full outer characterization.
    """
    mat = (
        _kron(_I, _I, _I, _I, _I, _I)
        + (_kron(_Z, _I, _Z, _Z, _I, _I) + _kron(_Z, _Z, _I, _X, _Z, _I))
        / np.sqrt(2.0)
    ) / 8.0
    return ProcessOperator.from_system_order(_GAP_ORDER, mat)


def gap_witness() -> ProcessOperator:
    """The witness pairing with :func:`gap_process` to ``1 - sqrt(2)``."""
    mat = (
        _kron(_I, _I, _I, _I, _I, _I)
        - (_kron(_Z, _I, _Z, _Z, _I, _I) + _kron(_Z, _Z, _I, _X, _Z, _I))
    ) / 8.0
    return ProcessOperator.from_system_order(_GAP_ORDER, mat)


def fixed_order_process(scenario: LabeledSpace, order: Sequence[str]) -> ProcessOperator:
    """A process implementing identity channels along a fixed party order.

    Each consecutive pair in ``order`` is linked by a classical identity
    channel from the earlier party's outgoing qubit to the later party's
    incoming qubit; all linking systems must be qubits.
    """
    if sorted(order) != sorted(scenario.parties):
        raise BadParams("order must list every party exactly once")
    mat = np.eye(scenario.total_dim, dtype=complex)
    ident = identity_operator(scenario)
    acc = ident
    for early, late in zip(order, order[1:]):
        out_sys = [s for s in scenario.systems if s.party == early and s.role is Role.OUT]
        in_sys = [s for s in scenario.systems if s.party == late and s.role is Role.IN]
        if len(out_sys) != 1 or len(in_sys) != 1:
            raise UnsupportedDimension(
                "fixed_order_process needs exactly one outgoing and one incoming "
                f"system per party, got {early}->{late}"
            )
        if out_sys[0].dim == 1 or in_sys[0].dim == 1:
            continue
        if out_sys[0].dim != 2 or in_sys[0].dim != 2:
            raise UnsupportedDimension("linking systems must be qubits")
        factor = _z_pair(scenario, out_sys[0], in_sys[0])
        acc = ProcessOperator(scenario, acc.matrix @ (ident.matrix + factor))
    d_in = 1
    for s in scenario.systems:
        if s.role is not Role.OUT:
            d_in *= s.dim
    return acc * (1.0 / d_in)


def _z_pair(
    scenario: LabeledSpace, first: SystemLabel, second: SystemLabel
) -> np.ndarray:
    ops = []
    for s in scenario.systems:
        if s in (first, second):
            ops.append(_Z)
        else:
            ops.append(np.eye(s.dim, dtype=complex))
    return _kron(*ops)


def sample_random_process(
    scenario: LabeledSpace,
    rng: np.random.Generator,
    symmetrize: Iterable[str] = (),
    tol: float = 1e-10,
) -> ProcessOperator:
    """Draw a random valid process matrix.

    A Ginibre-induced positive operator is projected onto the valid linear
    subspace, mixed with the least amount of white noise restoring positivity
    (found by bisection to ``tol``), and renormalized.

    :param symmetrize: parties (with identical system dimensions) over whose
        permutations the projected operator is averaged before noise-mixing.
    """
    dim = scenario.total_dim
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rough = ProcessOperator(scenario, g @ g.conj().T)
    valid = validity_subspace(scenario)
    w = valid.project(rough)
    parties = tuple(symmetrize)
    if parties:
        w = _symmetrize_parties(w, parties)
    d_out = 1
    for s in scenario.systems:
        if s.role is Role.OUT:
            d_out *= s.dim
    w = w * (d_out / w.trace())
    noise = white_noise(scenario) * (d_out / white_noise(scenario).trace())
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cand = w * (1.0 - mid) + noise * mid
        if cand.min_eigenvalue() >= -1e-13 * dim:
            hi = mid
        else:
            lo = mid
    return w * (1.0 - hi) + noise * hi


def _symmetrize_parties(w: ProcessOperator, parties: Sequence[str]) -> ProcessOperator:
    from itertools import permutations

    base = [w.space.party_systems(p) for p in parties]
    sig = [tuple((s.role, s.tag, s.dim) for s in group) for group in base]
    if len(set(sig)) != 1:
        raise BadParams("symmetrized parties must have identical system layouts")
    systems = list(w.space.systems)
    dims = list(w.space.dims)
    acc = np.zeros_like(w.matrix)
    count = 0
    for perm in permutations(range(len(parties))):
        mapping: dict[int, int] = {}
        for src_idx, dst_idx in enumerate(perm):
            for s_src, s_dst in zip(base[src_idx], base[dst_idx]):
                mapping[systems.index(s_src)] = systems.index(s_dst)
        axis_perm = [mapping.get(i, i) for i in range(len(systems))]
        n = len(dims)
        tens = w.matrix.reshape(dims + dims)
        tens = np.transpose(tens, axis_perm + [p + n for p in axis_perm])
        acc += tens.reshape(w.matrix.shape)
        count += 1
    return ProcessOperator(w.space, acc / count)
