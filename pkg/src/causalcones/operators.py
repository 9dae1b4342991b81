"""Labeled Hermitian operator algebra.

Operators (process matrices, witnesses, Choi matrices of instruments, ancilla
states) are :class:`ProcessOperator` values: a dense complex matrix over a
:class:`~causalcones.spaces.LabeledSpace`, always stored in canonical system
order.  The module provides the tensor product, partial trace,
trace-and-replace maps, subsystem relabeling, Hilbert-Schmidt decomposition,
conditional matrices, and the generalized Born rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import prod, sqrt
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _basis
from .errors import (
    DimensionMismatch,
    NotNormalized,
    SpaceMismatch,
    UnknownSystem,
)
from .spaces import LabeledSpace, Role, SystemLabel

__all__ = [
    "ProcessOperator",
    "TraceReplaceExpr",
    "Factor",
    "Instrument",
    "tensor",
    "partial_trace",
    "trace_and_replace",
    "relabel_teleport",
    "conditional_matrix",
    "hs_decompose",
    "hs_resynthesize",
    "born_rule",
    "identity_operator",
    "white_noise",
]

#: Relative asymmetry above which construction warns before symmetrizing.
HERMITICITY_WARN = 1e-9


# ---------------------------------------------------------------------------
# Low-level ndarray helpers (all take matrices plus per-system dims)
# ---------------------------------------------------------------------------

def _permute_matrix(mat: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a matrix; ``perm[i]`` is the source position of
    the ``i``-th output factor."""
    n = len(dims)
    t = mat.reshape(tuple(dims) + tuple(dims))
    axes = list(perm) + [n + p for p in perm]
    out_dims = [dims[p] for p in perm]
    big = prod(dims)
    return np.ascontiguousarray(t.transpose(axes)).reshape(big, big)


def _partial_trace_matrix(
    mat: np.ndarray, dims: Sequence[int], traced: Sequence[int]
) -> np.ndarray:
    """Partial trace of a matrix over the factor positions in ``traced``."""
    n = len(dims)
    traced = sorted(traced)
    keep = [i for i in range(n) if i not in traced]
    t = mat.reshape(tuple(dims) + tuple(dims))
    axes = keep + traced + [n + i for i in keep] + [n + i for i in traced]
    dk = prod(dims[i] for i in keep) if keep else 1
    dt = prod(dims[i] for i in traced) if traced else 1
    t = t.transpose(axes).reshape(dk, dt, dk, dt)
    return np.einsum("atbt->ab", t)


# ---------------------------------------------------------------------------
# ProcessOperator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProcessOperator:
    """A Hermitian operator over a labeled tensor-product space.

    The matrix is stored dense, complex, and in the canonical system order of
    ``space``.  Construction symmetrizes to ``(M + M^dagger)/2`` and warns when
    the relative asymmetry exceeds ``1e-9``.
    """

    space: LabeledSpace
    matrix: np.ndarray

    def __init__(self, space: LabeledSpace, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=complex)
        d = space.total_dim
        if matrix.shape != (d, d):
            raise DimensionMismatch(
                f"matrix shape {matrix.shape} does not match space dimension {d}"
            )
        asym = np.abs(matrix - matrix.conj().T).max()
        scale = max(np.abs(matrix).max(), 1.0)
        if asym > HERMITICITY_WARN * scale:
            warnings.warn(
                f"operator symmetrized; relative asymmetry {asym / scale:.3e}",
                stacklevel=2,
            )
        matrix = (matrix + matrix.conj().T) / 2.0
        matrix.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_system_order(
        cls, systems: Sequence[SystemLabel], matrix: np.ndarray
    ) -> "ProcessOperator":
        """Build from a matrix given in an explicit (non-canonical) system order."""
        space = LabeledSpace(systems)
        perm = space.permutation_from(systems)
        dims = [s.dim for s in systems]
        return cls(space, _permute_matrix(np.asarray(matrix, dtype=complex), dims, perm))

    # -- basic queries ----------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return self.space.dims

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def hs_inner(self, other: "ProcessOperator") -> float:
        """Hilbert-Schmidt inner product ``Tr[self . other]`` (real for Hermitian pairs)."""
        _check_same_space(self, other)
        return float(np.vdot(self.matrix, other.matrix).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def coeffs(self) -> np.ndarray:
        """Real coefficient tensor in the orthonormal product basis."""
        return _basis.to_coeffs(self.matrix, self.dims)

    @classmethod
    def from_coeffs(cls, space: LabeledSpace, coeffs: np.ndarray) -> "ProcessOperator":
        return cls(space, _basis.from_coeffs(coeffs, space.dims))

    def __add__(self, other: "ProcessOperator") -> "ProcessOperator":
        _check_same_space(self, other)
        return ProcessOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "ProcessOperator") -> "ProcessOperator":
        _check_same_space(self, other)
        return ProcessOperator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar: float) -> "ProcessOperator":
        return ProcessOperator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def allclose(self, other: "ProcessOperator", atol: float = 1e-12) -> bool:
        _check_same_space(self, other)
        return bool(np.allclose(self.matrix, other.matrix, atol=atol, rtol=0.0))


def _check_same_space(a: ProcessOperator, b: ProcessOperator) -> None:
    if a.space != b.space:
        raise SpaceMismatch(f"spaces differ: {a.space} vs {b.space}")


def identity_operator(space: LabeledSpace, scale: float = 1.0) -> ProcessOperator:
    return ProcessOperator(space, np.eye(space.total_dim) * scale)


def white_noise(space: LabeledSpace) -> ProcessOperator:
    """The white-noise process: identity divided by the product of incoming dims.

    Its trace equals the product of outgoing dimensions, the normalization of
    a process matrix.
    """
    d_in = prod(
        s.dim for s in space.systems if s.role in (Role.IN, Role.ANCILLA_IN)
    )
    return identity_operator(space, 1.0 / d_in)


# ---------------------------------------------------------------------------
# Tensor product / partial trace
# ---------------------------------------------------------------------------

def tensor(a: ProcessOperator, b: ProcessOperator) -> ProcessOperator:
    """Tensor product on the union space, re-permuted to canonical order."""
    systems = list(a.space.systems) + list(b.space.systems)
    mat = np.kron(a.matrix, b.matrix)
    return ProcessOperator.from_system_order(systems, mat)


def partial_trace(w: ProcessOperator, subset: Iterable[SystemLabel]) -> ProcessOperator:
    """Trace out the given systems, returning an operator on the complement."""
    subset = list(subset)
    positions = [w.space.index(s) for s in subset]
    rest = w.space.without(subset)
    mat = _partial_trace_matrix(w.matrix, w.dims, positions)
    return ProcessOperator(rest, mat)


# ---------------------------------------------------------------------------
# Trace-and-replace maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Factor:
    """One factor of a trace-and-replace expression.

    ``mode == "replace"`` replaces the systems by the maximally mixed state;
    ``mode == "one_minus_replace"`` is identity minus that projector.  Both are
    idempotent, self-adjoint projectors w.r.t. the Hilbert-Schmidt inner
    product.
    """

    systems: tuple[SystemLabel, ...]
    mode: str

    def __init__(self, systems: Iterable[SystemLabel], mode: str):
        if mode not in ("replace", "one_minus_replace"):
            raise ValueError(f"unknown mode {mode!r}")
        object.__setattr__(
            self, "systems", tuple(sorted(systems, key=lambda s: s.key))
        )
        object.__setattr__(self, "mode", mode)

    @property
    def is_zero_map(self) -> bool:
        """True when the factor annihilates everything (``[1 - X]`` on all-trivial X)."""
        return self.mode == "one_minus_replace" and all(s.dim == 1 for s in self.systems)

    @property
    def is_identity_map(self) -> bool:
        """True when the factor acts as the identity (replace on trivial or empty X)."""
        return self.mode == "replace" and all(s.dim == 1 for s in self.systems)


@dataclass(frozen=True)
class TraceReplaceExpr:
    """A product of trace-and-replace factors acting on pairwise disjoint subsets."""

    factors: tuple[Factor, ...]

    def __init__(self, factors: Iterable[Factor]):
        factors = tuple(factors)
        seen: set[SystemLabel] = set()
        for f in factors:
            overlap = seen & set(f.systems)
            if overlap:
                raise ValueError(f"factors overlap on {sorted(overlap, key=lambda s: s.key)}")
            seen |= set(f.systems)
        object.__setattr__(self, "factors", factors)

    @staticmethod
    def build(
        one_minus: Iterable[Iterable[SystemLabel]] = (),
        replace: Iterable[SystemLabel] = (),
    ) -> "TraceReplaceExpr":
        """Convenience constructor: a list of ``[1 - X_i]`` factors (one per inner
        iterable) and a single replace factor over ``replace``."""
        factors = [Factor(x, "one_minus_replace") for x in one_minus]
        replace = tuple(replace)
        if replace:
            factors.append(Factor(replace, "replace"))
        return TraceReplaceExpr(factors)

    @property
    def is_zero_map(self) -> bool:
        return any(f.is_zero_map for f in self.factors)

    def systems(self) -> tuple[SystemLabel, ...]:
        return tuple(s for f in self.factors for s in f.systems)

    def keep_mask(self, space: LabeledSpace) -> np.ndarray:
        """Boolean coefficient-tensor mask of the basis strings this expression keeps.

        A replace factor keeps a product basis string iff the string is
        identity on every factor system; a one-minus-replace factor keeps it
        iff the string is non-identity on at least one factor system.  The
        expression keeps a string iff every factor does (and maps it to itself),
        so ``expr(W) = 0`` constrains exactly the kept coordinates to vanish.
        """
        shape = space.coeff_shape
        mask = np.ones(shape, dtype=bool)
        if self.is_zero_map:
            return np.zeros(shape, dtype=bool)
        for f in self.factors:
            axes = [space.index(s) for s in f.systems if s.dim > 1]
            ident = np.ones(shape, dtype=bool)
            for ax in axes:
                sel = np.zeros(shape[ax], dtype=bool)
                sel[0] = True
                ident &= sel.reshape([-1 if i == ax else 1 for i in range(len(shape))])
            if f.mode == "replace":
                mask &= ident
            else:
                mask &= ~ident
        return mask

    def to_json(self) -> list[dict]:
        return [
            {
                "mode": f.mode,
                "systems": [
                    {"party": s.party, "role": s.role.value, "tag": s.tag, "dim": s.dim}
                    for s in f.systems
                ],
            }
            for f in self.factors
        ]

    @staticmethod
    def from_json(data: list[dict]) -> "TraceReplaceExpr":
        return TraceReplaceExpr(
            Factor(
                [
                    SystemLabel(s["party"], Role(s["role"]), s["dim"], s.get("tag", ""))
                    for s in f["systems"]
                ],
                f["mode"],
            )
            for f in data
        )


def _replace_subset(w: ProcessOperator, subset: Sequence[SystemLabel]) -> ProcessOperator:
    """``Tr_X W otimes identity_X / d_X`` at the same system positions."""
    if not subset:
        return w
    d_x = prod(s.dim for s in subset)
    rest = partial_trace(w, subset)
    mixed = identity_operator(LabeledSpace(subset), 1.0 / d_x)
    return tensor(rest, mixed)


def trace_and_replace(w: ProcessOperator, expr: TraceReplaceExpr) -> ProcessOperator:
    """Apply a trace-and-replace expression to an operator."""
    for f in expr.factors:
        for s in f.systems:
            w.space.index(s)
    out = w
    for f in expr.factors:
        replaced = _replace_subset(out, f.systems)
        out = replaced if f.mode == "replace" else out - replaced
    return out


# ---------------------------------------------------------------------------
# Relabeling (teleportation bookkeeping)
# ---------------------------------------------------------------------------

def relabel_teleport(
    w: ProcessOperator,
    source: Iterable[SystemLabel],
    target: SystemLabel | Iterable[SystemLabel],
) -> ProcessOperator:
    """Re-attribute the ``source`` systems to the ``target`` system(s).

    The combined computational-basis index of the source systems (in canonical
    order) becomes the combined index of the target systems (in canonical
    order).  Although the defining formula sends the source block
    ``|i><j|`` to ``|j><i|`` on the target, composing it with the block
    extraction makes the whole map a pure tensor-factor rename: it preserves
    positive semidefiniteness and the Hilbert-Schmidt norm, and relabeling
    back is the identity.
    """
    source = list(source)
    targets = [target] if isinstance(target, SystemLabel) else list(target)
    d_from = prod(s.dim for s in source)
    d_to = prod(t.dim for t in targets)
    if d_from != d_to:
        raise DimensionMismatch(
            f"source dimension {d_from} differs from target dimension {d_to}"
        )
    for t in targets:
        if t in w.space:
            raise UnknownSystem(f"target {t} already present in space")
    for s in source:
        w.space.index(s)
    src_set = set(source)
    rest = [s for s in w.space.systems if s not in src_set]
    src_sorted = [s for s in w.space.systems if s in src_set]
    perm = [w.space.systems.index(s) for s in rest + src_sorted]
    mat = _permute_matrix(w.matrix, w.dims, perm)
    new_systems = rest + sorted(targets, key=lambda s: s.key)
    return ProcessOperator.from_system_order(new_systems, mat)


# ---------------------------------------------------------------------------
# Conditional matrices, Born rule, instruments
# ---------------------------------------------------------------------------

def conditional_matrix(w: ProcessOperator, m: ProcessOperator) -> ProcessOperator:
    """The conditional process ``Tr_k[(m otimes identity) . w]`` left for the
    other parties after the systems of ``m`` are acted upon."""
    for s in m.space.systems:
        if s not in w.space:
            raise SpaceMismatch(f"{s} of the map is not in the process space")
    rest = w.space.without(m.space.systems)
    embedded = tensor(m, identity_operator(rest)) if len(rest) else m
    prod_mat = embedded.matrix @ w.matrix
    positions = [w.space.index(s) for s in m.space.systems]
    out = _partial_trace_matrix(prod_mat, w.dims, positions)
    return ProcessOperator(rest, out)


@dataclass(frozen=True)
class Instrument:
    """A quantum instrument in Choi form: one PSD element per outcome.

    The elements live on one party's systems; completeness requires the sum of
    elements, traced over the outgoing systems, to equal the identity on the
    incoming systems.
    """

    space: LabeledSpace
    elements: tuple[ProcessOperator, ...]

    def __init__(self, elements: Iterable[ProcessOperator]):
        elements = tuple(elements)
        if not elements:
            raise ValueError("instrument needs at least one outcome")
        space = elements[0].space
        for e in elements:
            if e.space != space:
                raise SpaceMismatch("instrument elements live on different spaces")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "elements", elements)

    def completeness_defect(self) -> float:
        """Max deviation of ``Tr_out(sum of elements)`` from the incoming identity."""
        total = self.elements[0]
        for e in self.elements[1:]:
            total = total + e
        outs = self.space.select(role=Role.OUT)
        reduced = partial_trace(total, outs)
        return float(np.abs(reduced.matrix - np.eye(reduced.space.total_dim)).max())

    def psd_defect(self) -> float:
        return max(0.0, -min(e.min_eigenvalue() for e in self.elements))

    def is_complete(self, tol: float = 1e-9) -> bool:
        return self.completeness_defect() <= tol and self.psd_defect() <= tol


def born_rule(
    w: ProcessOperator, instruments: Sequence[Instrument], check_normalization: bool = True
) -> np.ndarray:
    """Outcome probability table ``P[a_1, ..., a_N]`` for one instrument per party.

    The instruments' spaces must tile the process space exactly.
    """
    tiled = [s for ins in instruments for s in ins.space.systems]
    if sorted(tiled, key=lambda s: s.key) != list(w.space.systems):
        raise SpaceMismatch("instrument spaces do not tile the process space")
    d_out = prod(s.dim for s in w.space.systems if s.role == Role.OUT)
    if check_normalization and abs(w.trace() - d_out) > 1e-6 * max(1.0, d_out):
        raise NotNormalized(
            f"trace {w.trace():.6g} differs from outgoing-dimension product {d_out}"
        )
    shape = tuple(len(ins.elements) for ins in instruments)
    table = np.zeros(shape)
    for idx in np.ndindex(*shape):
        op = instruments[0].elements[idx[0]]
        for k in range(1, len(instruments)):
            op = tensor(op, instruments[k].elements[idx[k]])
        table[idx] = op.hs_inner(w)
    return table


# ---------------------------------------------------------------------------
# Hilbert-Schmidt decomposition
# ---------------------------------------------------------------------------

def hs_decompose(
    w: ProcessOperator, cutoff: float = 0.0
) -> Mapping[tuple[int, ...], float]:
    """Coefficients of ``w`` over product basis strings.

    Convention: ``w = sum_s c_s * sigma_string(s)`` with per-system basis
    matrices normalized to ``Tr[sigma_mu sigma_nu] = d delta_{mu,nu}`` and
    index 0 the identity; entries with ``|c| <= cutoff`` are dropped.
    """
    coeffs = w.coeffs() / sqrt(w.space.total_dim)
    out: dict[tuple[int, ...], float] = {}
    for idx in np.ndindex(*coeffs.shape):
        c = float(coeffs[idx])
        if abs(c) > cutoff or cutoff == 0.0:
            out[idx] = c
    return out


def hs_resynthesize(
    space: LabeledSpace, coeffs: Mapping[tuple[int, ...], float]
) -> ProcessOperator:
    """Rebuild an operator from :func:`hs_decompose` output."""
    tensor_coeffs = np.zeros(space.coeff_shape)
    for idx, c in coeffs.items():
        tensor_coeffs[idx] = c
    return ProcessOperator.from_coeffs(space, tensor_coeffs * sqrt(space.total_dim))
