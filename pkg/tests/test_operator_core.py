"""Tests for the labeled operator algebra.

Oracles used here are written independently of the library code paths:
index-arithmetic Kronecker products, loop-based partial traces, and a
coefficient-mask reimplementation of the trace-and-replace maps.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import causalcones as cc
from causalcones import (
    Factor,
    Instrument,
    LabeledSpace,
    ProcessOperator,
    Role,
    SystemLabel,
    TraceReplaceExpr,
)
from causalcones._basis import hermitian_basis
from causalcones.errors import DimensionMismatch

from conftest import (
    bipartite_qubits,
    label,
    rand_hermitian,
    rand_operator,
    rand_psd,
    rand_state,
    tripartite_qubits,
)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def kron_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Index-arithmetic Kronecker product (no np.kron)."""
    da, db = a.shape[0], b.shape[0]
    out = np.zeros((da * db, da * db), dtype=complex)
    for i, j, k, l in itertools.product(range(da), range(da), range(db), range(db)):
        out[i * db + k, j * db + l] = a[i, j] * b[k, l]
    return out


def partial_trace_oracle(mat: np.ndarray, dims: list[int], traced: list[int]) -> np.ndarray:
    """Loop-based partial trace over the factor positions in ``traced``."""
    keep = [i for i in range(len(dims)) if i not in traced]
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    out = np.zeros((dk, dk), dtype=complex)

    def flat(idx):
        v = 0
        for i, d in enumerate(dims):
            v = v * d + idx[i]
        return v

    def flat_keep(idx):
        v = 0
        for i in keep:
            v = v * dims[i] + idx[i]
        return v

    for row in itertools.product(*[range(d) for d in dims]):
        for col in itertools.product(*[range(d) for d in dims]):
            if any(row[i] != col[i] for i in traced):
                continue
            out[flat_keep(row), flat_keep(col)] += mat[flat(row), flat(col)]
    return out


def trace_replace_oracle(w: ProcessOperator, expr: TraceReplaceExpr) -> np.ndarray:
    """Coefficient-mask reimplementation: expand in the product basis by explicit
    trace integrals, zero the coordinates the expression kills, resynthesize."""
    space = w.space
    dims = space.dims
    bases = [hermitian_basis(d) for d in dims]
    out = np.zeros_like(w.matrix)
    big = space.total_dim
    for idx in itertools.product(*[range(d * d) for d in dims]):
        string = np.array([[1.0 + 0j]])
        for s, mu in enumerate(idx):
            string = np.kron(string, bases[s][mu])
        coeff = np.trace(string @ w.matrix) / big
        keep = True
        for f in expr.factors:
            positions = [space.index(s) for s in f.systems]
            identity_on_x = all(idx[p] == 0 for p in positions)
            if f.mode == "replace" and not identity_on_x:
                keep = False
            if f.mode == "one_minus_replace" and identity_on_x:
                keep = False
        if keep:
            out += coeff * string
    return out


# ---------------------------------------------------------------------------
# Spaces and construction
# ---------------------------------------------------------------------------

def test_canonical_order_sorts_party_then_role_then_tag():
    systems = [
        label("B", "in"),
        label("A", "out"),
        label("A", "in"),
        label("A", "ancilla_in", tag="x"),
        label("B", "out", dim=1),
    ]
    space = LabeledSpace(systems)
    assert [s.role for s in space.systems] == [
        Role.IN,
        Role.ANCILLA_IN,
        Role.OUT,
        Role.IN,
        Role.OUT,
    ]
    assert [s.party for s in space.systems] == ["A", "A", "A", "B", "B"]


def test_duplicate_identity_rejected():
    with pytest.raises(cc.spaces.LabelCollision):
        LabeledSpace([label("A", "in"), label("A", "in", dim=3)])


def test_hermitization_warns_on_large_asymmetry(rng):
    mat = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    with pytest.warns(UserWarning, match="symmetrized"):
        op = ProcessOperator(bipartite_qubits().restrict(
            [label("A", "in"), label("A", "out")]
        ), mat)
    assert np.allclose(op.matrix, op.matrix.conj().T)


def test_from_system_order_permutes(rng):
    a_i, a_o = label("A", "in"), label("A", "out")
    x = rand_hermitian(rng, 2)
    y = rand_hermitian(rng, 2)
    # given in order (A_O, A_I); canonical order is (A_I, A_O)
    op = ProcessOperator.from_system_order([a_o, a_i], np.kron(y, x))
    assert np.allclose(op.matrix, np.kron(x, y), atol=1e-13)


# ---------------------------------------------------------------------------
# Tensor and partial trace
# ---------------------------------------------------------------------------

def test_tensor_identities():
    a = cc.identity_operator(LabeledSpace([label("A", "in")]))
    b = cc.identity_operator(LabeledSpace([label("A", "out")]))
    t = cc.tensor(a, b)
    assert t.space.total_dim == 4
    assert np.allclose(t.matrix, np.eye(4))


def test_tensor_z_kron():
    z = np.diag([1.0, -1.0])
    a = ProcessOperator(LabeledSpace([label("A", "out")]), z)
    b = cc.identity_operator(LabeledSpace([label("B", "in")]))
    t = cc.tensor(a, b)
    assert np.allclose(t.matrix, np.diag([1, 1, -1, -1]))


def test_tensor_matches_kron_oracle(rng):
    a = rand_operator(rng, LabeledSpace([label("A", "in"), label("A", "out")]))
    b = rand_operator(rng, LabeledSpace([label("B", "in", dim=3)]))
    t = cc.tensor(a, b)
    assert np.allclose(t.matrix, kron_oracle(a.matrix, b.matrix), atol=1e-12)


def test_tensor_rejects_overlap(rng):
    a = rand_operator(rng, LabeledSpace([label("A", "in")]))
    with pytest.raises(cc.spaces.LabelCollision):
        cc.tensor(a, a)


def test_partial_trace_identity():
    space = tripartite_qubits()
    full = cc.identity_operator(space)
    traced = cc.partial_trace(full, space.party_systems("C"))
    assert np.allclose(traced.matrix, 4.0 * np.eye(16))


def test_partial_trace_matches_loop_oracle(rng):
    space = LabeledSpace(
        [label("A", "in"), label("A", "out", dim=3), label("B", "in")]
    )
    w = rand_operator(rng, space)
    got = cc.partial_trace(w, [label("A", "out", dim=3)])
    want = partial_trace_oracle(w.matrix, [2, 3, 2], [1])
    assert np.allclose(got.matrix, want, atol=1e-12)


def test_partial_trace_preserves_total_trace(rng):
    space = tripartite_qubits()
    w = rand_operator(rng, space)
    reduced = cc.partial_trace(w, space.party_systems("B"))
    assert reduced.trace() == pytest.approx(w.trace(), abs=1e-10)


def test_partial_trace_of_tensor_is_trace_times_rest(rng):
    a = rand_operator(rng, LabeledSpace([label("A", "in")]))
    b = rand_operator(rng, LabeledSpace([label("B", "in"), label("B", "out")]))
    t = cc.tensor(a, b)
    got = cc.partial_trace(t, b.space.systems)
    assert np.allclose(got.matrix, b.trace() * a.matrix, atol=1e-11)


def test_partial_trace_unknown_label(rng):
    w = rand_operator(rng, bipartite_qubits())
    with pytest.raises(cc.spaces.UnknownSystem):
        cc.partial_trace(w, [label("Z", "in")])


# ---------------------------------------------------------------------------
# Trace-and-replace
# ---------------------------------------------------------------------------

def _expr_1mo_replace(space: LabeledSpace, one_minus_parties, replace_parties):
    """``prod_i [1 - Out(i)] . Replace(all systems of replace_parties)``."""
    return TraceReplaceExpr.build(
        one_minus=[space.outgoing(p) for p in one_minus_parties],
        replace=[s for p in replace_parties for s in space.party_systems(p)],
    )


def test_replace_fixes_identity(rng):
    space = bipartite_qubits()
    ident = cc.identity_operator(space)
    expr = TraceReplaceExpr.build(replace=space.party_systems("A"))
    assert cc.trace_and_replace(ident, expr).allclose(ident)


def test_replace_idempotent(rng):
    space = tripartite_qubits()
    w = rand_operator(rng, space)
    expr = TraceReplaceExpr.build(replace=space.party_systems("B"))
    once = cc.trace_and_replace(w, expr)
    twice = cc.trace_and_replace(once, expr)
    assert twice.allclose(once, atol=1e-11)


def test_one_minus_replace_idempotent(rng):
    space = tripartite_qubits()
    w = rand_operator(rng, space)
    expr = TraceReplaceExpr.build(one_minus=[space.outgoing("A")])
    once = cc.trace_and_replace(w, expr)
    twice = cc.trace_and_replace(once, expr)
    assert twice.allclose(once, atol=1e-11)


def test_trace_replace_self_adjoint(rng):
    space = bipartite_qubits()
    a = rand_operator(rng, space)
    b = rand_operator(rng, space)
    expr = _expr_1mo_replace(space, ["A"], ["B"])
    lhs = cc.trace_and_replace(a, expr).hs_inner(b)
    rhs = a.hs_inner(cc.trace_and_replace(b, expr))
    assert lhs == pytest.approx(rhs, abs=1e-11 * a.hs_norm() * b.hs_norm())


def test_trace_replace_matches_mask_oracle(rng):
    space = bipartite_qubits()
    w = rand_operator(rng, space)
    for expr in [
        _expr_1mo_replace(space, ["A"], ["B"]),
        _expr_1mo_replace(space, ["B"], []),
        _expr_1mo_replace(space, ["A", "B"], []),
        TraceReplaceExpr.build(replace=space.incoming("A")),
    ]:
        got = cc.trace_and_replace(w, expr)
        want = trace_replace_oracle(w, expr)
        assert np.allclose(got.matrix, want, atol=1e-11)


def test_keep_mask_agrees_with_dense_action(rng):
    space = LabeledSpace(
        [label("A", "in"), label("A", "out", dim=3), label("B", "in"), label("B", "out", dim=1)]
    )
    w = rand_operator(rng, space)
    expr = TraceReplaceExpr.build(
        one_minus=[space.outgoing("A")], replace=space.party_systems("B")
    )
    mask = expr.keep_mask(space)
    kept = ProcessOperator.from_coeffs(space, w.coeffs() * mask)
    assert kept.allclose(cc.trace_and_replace(w, expr), atol=1e-11)


def test_factor_overlap_rejected():
    space = bipartite_qubits()
    with pytest.raises(ValueError):
        TraceReplaceExpr(
            [
                Factor(space.party_systems("A"), "replace"),
                Factor(space.incoming("A"), "one_minus_replace"),
            ]
        )


def test_one_minus_on_trivial_system_is_zero_map(rng):
    space = LabeledSpace([label("A", "in"), label("A", "out", dim=1), label("B", "in")])
    w = rand_operator(rng, space)
    expr = TraceReplaceExpr.build(one_minus=[space.outgoing("A")])
    assert expr.is_zero_map
    assert cc.trace_and_replace(w, expr).hs_norm() <= 1e-12


# ---------------------------------------------------------------------------
# Relabeling
# ---------------------------------------------------------------------------

def test_relabel_round_trip(rng):
    space = bipartite_qubits()
    w = rand_operator(rng, space)
    source = space.party_systems("A")
    target = label("B", "ancilla_in", dim=4, tag="tele")
    moved = cc.relabel_teleport(w, source, target)
    back = cc.relabel_teleport(moved, [target], source)
    assert back.space == space
    assert back.allclose(w, atol=1e-13)


def test_relabel_is_hs_isometry_and_preserves_psd(rng):
    space = bipartite_qubits()
    w = ProcessOperator(space, rand_psd(rng, 16))
    moved = cc.relabel_teleport(w, space.party_systems("A"), label("B", "ancilla_in", dim=4))
    assert moved.hs_norm() == pytest.approx(w.hs_norm(), rel=1e-12)
    assert moved.min_eigenvalue() >= -1e-10


def test_relabel_dimension_mismatch(rng):
    space = bipartite_qubits()
    w = rand_operator(rng, space)
    with pytest.raises(DimensionMismatch):
        cc.relabel_teleport(w, space.party_systems("A"), label("B", "ancilla_in", dim=3))


# ---------------------------------------------------------------------------
# Conditional matrices and Born rule
# ---------------------------------------------------------------------------

def test_conditional_with_identity_is_partial_trace(rng):
    space = tripartite_qubits()
    w = rand_operator(rng, space)
    m = cc.identity_operator(LabeledSpace(space.party_systems("C")))
    got = cc.conditional_matrix(w, m)
    want = cc.partial_trace(w, space.party_systems("C"))
    assert got.allclose(want, atol=1e-11)


def test_conditional_linearity(rng):
    space = bipartite_qubits()
    w = rand_operator(rng, space)
    sub = LabeledSpace(space.party_systems("A"))
    m1, m2 = rand_operator(rng, sub), rand_operator(rng, sub)
    lhs = cc.conditional_matrix(w, m1 + m2)
    rhs = cc.conditional_matrix(w, m1) + cc.conditional_matrix(w, m2)
    assert lhs.allclose(rhs, atol=1e-10)


def _measure_and_reprepare(space_party, rng) -> Instrument:
    """A two-outcome measure-and-reprepare instrument on one party (Choi form)."""
    sub = LabeledSpace(space_party)
    d_in = int(np.prod([s.dim for s in sub.systems if s.role != Role.OUT]))
    ins = [s for s in sub.systems if s.role != Role.OUT]
    outs = [s for s in sub.systems if s.role == Role.OUT]
    proj = rand_state(rng, d_in)
    evals, evecs = np.linalg.eigh(proj)
    p0 = evecs[:, :1] @ evecs[:, :1].conj().T
    p1 = np.eye(d_in) - p0
    elements = []
    for p in (p0, p1):
        rho = rand_state(rng, int(np.prod([s.dim for s in outs])) or 1)
        mat = np.kron(p, rho) if outs else p
        elements.append(ProcessOperator.from_system_order(ins + outs, mat))
    return Instrument(elements)


def test_born_rule_white_noise_normalized(rng):
    space = bipartite_qubits()
    w = cc.white_noise(space)
    instruments = [
        _measure_and_reprepare(space.party_systems("A"), rng),
        _measure_and_reprepare(space.party_systems("B"), rng),
    ]
    for ins in instruments:
        assert ins.is_complete(1e-9)
    table = cc.born_rule(w, instruments)
    assert table.min() >= -1e-10
    assert table.sum() == pytest.approx(1.0, abs=1e-9)


def test_born_rule_requires_normalization(rng):
    space = bipartite_qubits()
    w = 3.0 * cc.white_noise(space)
    instruments = [
        _measure_and_reprepare(space.party_systems("A"), rng),
        _measure_and_reprepare(space.party_systems("B"), rng),
    ]
    with pytest.raises(cc.operators.NotNormalized):
        cc.born_rule(w, instruments)


def test_instrument_completeness_defect(rng):
    sub = LabeledSpace([label("A", "in"), label("A", "out")])
    bad = Instrument([cc.identity_operator(sub, 0.3)])
    assert bad.completeness_defect() > 0.1


# ---------------------------------------------------------------------------
# Hilbert-Schmidt decomposition
# ---------------------------------------------------------------------------

def test_hs_decompose_identity():
    space = bipartite_qubits()
    ident = cc.identity_operator(space)
    coeffs = cc.hs_decompose(ident, cutoff=1e-14)
    assert coeffs == {(0, 0, 0, 0): pytest.approx(1.0)}


def test_hs_round_trip(rng):
    space = LabeledSpace(
        [label("A", "in"), label("A", "out", dim=3), label("B", "in", dim=1), label("B", "out")]
    )
    w = rand_operator(rng, space)
    coeffs = cc.hs_decompose(w)
    back = cc.hs_resynthesize(space, coeffs)
    assert back.allclose(w, atol=1e-12)


def test_hs_coefficient_convention(rng):
    """Coefficient of a string equals Tr[string . W] / total_dim."""
    space = bipartite_qubits()
    w = rand_operator(rng, space)
    coeffs = cc.hs_decompose(w)
    sigma = hermitian_basis(2)
    idx = (1, 0, 3, 2)  # X on A_in, Z on B_in, Y on B_out
    string = np.kron(np.kron(np.kron(sigma[1], sigma[0]), sigma[3]), sigma[2])
    assert coeffs[idx] == pytest.approx(
        float(np.trace(string @ w.matrix).real) / 16.0, abs=1e-12
    )


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=3))
def test_hs_round_trip_hypothesis(seed, d):
    rng = np.random.default_rng(seed)
    space = LabeledSpace([label("A", "in", dim=d), label("A", "out", dim=2)])
    w = rand_operator(rng, space)
    back = cc.hs_resynthesize(space, cc.hs_decompose(w))
    assert back.allclose(w, atol=1e-12)
