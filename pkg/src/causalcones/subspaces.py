"""Linear subspaces of causal-order compatibility.

Every subspace used in this package is a conjunction of trace-and-replace
constraints ``expr(W) = 0``.  Because each constraint kills an exact set of
product basis strings (see :meth:`TraceReplaceExpr.keep_mask`), each
:class:`SubspaceSpec` reduces to a boolean mask over the coefficient tensor:
membership, projection, and projector comparisons are all coordinate-wise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import OverlappingBlocks, SpaceMismatch, UnsupportedDimension
from .operators import ProcessOperator, TraceReplaceExpr, trace_and_replace
from .spaces import LabeledSpace, Role, SystemLabel

__all__ = [
    "SubspaceSpec",
    "CausalOrderSpec",
    "validity_subspace",
    "k_first_subspace",
    "order_subspace",
    "allowed_terms",
    "project",
]


@dataclass(frozen=True)
class SubspaceSpec:
    """A linear subspace given by trace-and-replace constraints ``expr_i(W) = 0``."""

    scenario: LabeledSpace
    constraints: tuple[TraceReplaceExpr, ...]
    name: str = ""
    _mask: list = field(default_factory=list, repr=False, compare=False, hash=False)

    def __init__(
        self,
        scenario: LabeledSpace,
        constraints: Iterable[TraceReplaceExpr],
        name: str = "",
    ):
        pruned = tuple(c for c in constraints if not c.is_zero_map)
        for c in pruned:
            for s in c.systems():
                scenario.index(s)
        object.__setattr__(self, "scenario", scenario)
        object.__setattr__(self, "constraints", pruned)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "_mask", [])

    # -- coefficient-space view -------------------------------------------

    def allowed_mask(self) -> np.ndarray:
        """Boolean coefficient-tensor mask of the subspace (True = coordinate free)."""
        if not self._mask:
            mask = np.ones(self.scenario.coeff_shape, dtype=bool)
            for c in self.constraints:
                mask &= ~c.keep_mask(self.scenario)
            mask.setflags(write=False)
            self._mask.append(mask)
        return self._mask[0]

    def dim(self) -> int:
        """Dimension of the subspace (number of free basis strings)."""
        return int(self.allowed_mask().sum())

    # -- membership and projection ----------------------------------------

    def residual(self, w: ProcessOperator) -> float:
        """Hilbert-Schmidt norm of the component of ``w`` outside the subspace."""
        if w.space != self.scenario:
            raise SpaceMismatch("operator space differs from subspace scenario")
        coeffs = w.coeffs()
        return float(np.linalg.norm(coeffs[~self.allowed_mask()]))

    def contains(self, w: ProcessOperator, tol: float = 1e-9) -> bool:
        return self.residual(w) <= tol * max(w.hs_norm(), 1e-300)

    def project(self, w: ProcessOperator) -> ProcessOperator:
        """Orthogonal (Hilbert-Schmidt nearest) projection onto the subspace."""
        if w.space != self.scenario:
            raise SpaceMismatch("operator space differs from subspace scenario")
        coeffs = w.coeffs() * self.allowed_mask()
        return ProcessOperator.from_coeffs(self.scenario, coeffs)

    def constraint_residuals(self, w: ProcessOperator) -> list[float]:
        """Per-constraint residual norms, evaluated by the dense maps (not masks)."""
        return [trace_and_replace(w, c).hs_norm() for c in self.constraints]

    # -- algebra -----------------------------------------------------------

    def intersect(self, other: "SubspaceSpec", name: str = "") -> "SubspaceSpec":
        if other.scenario != self.scenario:
            raise SpaceMismatch("subspaces live on different scenarios")
        return SubspaceSpec(
            self.scenario,
            self.constraints + other.constraints,
            name or f"({self.name})&({other.name})",
        )

    def same_subspace(self, other: "SubspaceSpec") -> bool:
        """Exact projector equality (mask equality)."""
        return bool(np.array_equal(self.allowed_mask(), other.allowed_mask()))

    def is_subspace_of(self, other: "SubspaceSpec") -> bool:
        return bool(np.all(other.allowed_mask() | ~self.allowed_mask()))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "constraints": [c.to_json() for c in self.constraints],
        }


def project(subspace: SubspaceSpec, w: ProcessOperator) -> ProcessOperator:
    return subspace.project(w)


@dataclass(frozen=True)
class CausalOrderSpec:
    """An ordered chain of disjoint nonempty party subsets over a scenario.

    Semantics: the parties in every prefix act before the parties after it;
    the induced relation between blocks is deliberately not transitively
    closed.
    """

    scenario: LabeledSpace
    blocks: tuple[tuple[str, ...], ...]

    def __init__(self, scenario: LabeledSpace, blocks: Sequence[Iterable[str]]):
        norm = tuple(tuple(sorted(set(b))) for b in blocks)
        flat = [p for b in norm for p in b]
        if len(set(flat)) != len(flat):
            raise OverlappingBlocks(f"blocks overlap: {blocks}")
        if any(not b for b in norm):
            raise OverlappingBlocks("empty block")
        known = set(scenario.parties)
        unknown = [p for p in flat if p not in known]
        if unknown:
            raise OverlappingBlocks(f"unknown parties {unknown}")
        object.__setattr__(self, "scenario", scenario)
        object.__setattr__(self, "blocks", norm)

    @property
    def covers_all(self) -> bool:
        return set(p for b in self.blocks for p in b) == set(self.scenario.parties)

    def name(self) -> str:
        return " < ".join("{" + ",".join(b) + "}" for b in self.blocks)


# ---------------------------------------------------------------------------
# Constraint family builders
# ---------------------------------------------------------------------------

def _validity_family(
    scenario: LabeledSpace, parties: Sequence[str], replace_extra: Iterable[SystemLabel] = ()
) -> list[TraceReplaceExpr]:
    """All constraints ``prod_{i in X}[1 - Out(i)] Replace(rest of parties + extra)``
    for nonempty ``X`` within the given party set."""
    out = []
    replace_extra = tuple(replace_extra)
    for r in range(1, len(parties) + 1):
        for x in itertools.combinations(parties, r):
            rest = [p for p in parties if p not in x]
            expr = TraceReplaceExpr.build(
                one_minus=[scenario.outgoing(p) for p in x],
                replace=[s for p in rest for s in scenario.party_systems(p)]
                + list(replace_extra),
            )
            out.append(expr)
    return out


def validity_subspace(scenario: LabeledSpace) -> SubspaceSpec:
    """The subspace of valid process matrices for the scenario.

    One constraint per nonempty party subset ``X``:
    ``prod_{i in X}[1 - Out(i)] Replace(all systems of the other parties)``
    applied to ``W`` vanishes.  Constraints that are identically zero because
    of trivial systems are pruned.
    """
    parties = scenario.parties
    return SubspaceSpec(
        scenario, _validity_family(scenario, parties), name="validity"
    )


def k_first_subspace(scenario: LabeledSpace, k: str) -> SubspaceSpec:
    """Processes compatible with party ``k`` acting first."""
    parties = [p for p in scenario.parties if p != k]
    if k not in scenario.parties:
        raise OverlappingBlocks(f"unknown party {k}")
    first = TraceReplaceExpr.build(
        one_minus=[scenario.outgoing(k)],
        replace=[s for p in parties for s in scenario.party_systems(p)],
    )
    rest = _validity_family(scenario, parties)
    return SubspaceSpec(scenario, [first] + rest, name=f"{k}-first")


def _full_partition_family(spec: CausalOrderSpec) -> list[TraceReplaceExpr]:
    """Constraints for a chain of blocks covering all parties.

    For each block position ``k`` and nonempty ``X`` inside block ``k``:
    ``prod_{i in X}[1 - Out(i)] Replace(block k minus X, and all later blocks)``.
    """
    scenario = spec.scenario
    out = []
    for k, block in enumerate(spec.blocks):
        later = [p for b in spec.blocks[k + 1 :] for p in b]
        for r in range(1, len(block) + 1):
            for x in itertools.combinations(block, r):
                rest = [p for p in block if p not in x]
                expr = TraceReplaceExpr.build(
                    one_minus=[scenario.outgoing(p) for p in x],
                    replace=[
                        s for p in rest + later for s in scenario.party_systems(p)
                    ],
                )
                out.append(expr)
    return out


def _two_subset_family(
    scenario: LabeledSpace, k1: Sequence[str], k2: Sequence[str]
) -> list[TraceReplaceExpr]:
    """Constraints for ``K1`` before ``K2`` with the two subsets not necessarily
    covering all parties.

    Family one is the validity family restricted to subsets avoiding ``K2``
    (the avoided ones being implied); family two ranges over subsets of the
    non-``K1`` parties that touch ``K2``, replacing everything outside
    ``K1 union X``.
    """
    parties = scenario.parties
    k1, k2 = set(k1), set(k2)
    out = []
    not_k2 = [p for p in parties if p not in k2]
    for r in range(1, len(not_k2) + 1):
        for x in itertools.combinations(not_k2, r):
            rest = [p for p in parties if p not in x]
            out.append(
                TraceReplaceExpr.build(
                    one_minus=[scenario.outgoing(p) for p in x],
                    replace=[s for p in rest for s in scenario.party_systems(p)],
                )
            )
    not_k1 = [p for p in parties if p not in k1]
    for r in range(1, len(not_k1) + 1):
        for x in itertools.combinations(not_k1, r):
            if not (set(x) & k2):
                continue
            rest = [p for p in not_k1 if p not in x]
            out.append(
                TraceReplaceExpr.build(
                    one_minus=[scenario.outgoing(p) for p in x],
                    replace=[s for p in rest for s in scenario.party_systems(p)],
                )
            )
    return out


def order_subspace(spec: CausalOrderSpec) -> SubspaceSpec:
    """Processes compatible with the given chain of party blocks.

    For chains whose blocks cover all parties the flat per-block constraint
    family is generated directly; otherwise the subspace is the intersection
    over every prefix split of the corresponding two-subset subspaces.
    """
    scenario = spec.scenario
    if spec.covers_all:
        constraints = _full_partition_family(spec)
    else:
        constraints = []
        for k in range(1, len(spec.blocks)):
            k1 = [p for b in spec.blocks[:k] for p in b]
            k2 = [p for b in spec.blocks[k:] for p in b]
            constraints.extend(_two_subset_family(scenario, k1, k2))
    return SubspaceSpec(scenario, constraints, name=spec.name())


# ---------------------------------------------------------------------------
# Allowed basis strings
# ---------------------------------------------------------------------------

def _party_axes(scenario: LabeledSpace, party: str, roles: tuple[Role, ...]) -> list[int]:
    return [
        scenario.index(s)
        for s in scenario.select(party=party, role=roles)
        if s.dim > 1
    ]


def allowed_terms(
    scenario: LabeledSpace,
    kind: str = "validity",
    blocks: Sequence[Iterable[str]] | None = None,
) -> Callable[[tuple[int, ...]], bool]:
    """Closed-form predicate deciding whether a basis string is allowed.

    ``kind="validity"``: a string is allowed iff it is the all-identity string
    or some party has a non-identity component on an incoming system and only
    identities on its outgoing systems.

    ``kind="order"`` with two covering ``blocks``: the restriction of the
    string to the second block must be allowed for the second block's
    scenario; when that restriction is all identities, the restriction to the
    first block must be allowed for the first block's scenario.
    """
    for d in scenario.dims:
        if d & (d - 1) and d not in (1,):
            # the predicate itself is basis-generic; keep the spec-mandated
            # guard for non-power-of-two dims anyway
            raise UnsupportedDimension(f"dimension {d} not supported here")

    in_axes = {
        p: _party_axes(scenario, p, (Role.IN, Role.ANCILLA_IN)) for p in scenario.parties
    }
    out_axes = {p: _party_axes(scenario, p, (Role.OUT,)) for p in scenario.parties}

    def validity_pred(parties: Sequence[str], idx: tuple[int, ...]) -> bool:
        if all(idx[a] == 0 for p in parties for a in in_axes[p] + out_axes[p]):
            return True
        return any(
            all(idx[a] == 0 for a in out_axes[p])
            and any(idx[a] != 0 for a in in_axes[p])
            for p in parties
        )

    if kind == "validity":
        return lambda idx: validity_pred(scenario.parties, idx)

    if kind == "order":
        if blocks is None or len(blocks) != 2:
            raise ValueError("kind='order' needs exactly two blocks")
        k1, k2 = (tuple(sorted(set(b))) for b in blocks)
        if set(k1) | set(k2) != set(scenario.parties) or set(k1) & set(k2):
            raise OverlappingBlocks("order blocks must partition the parties")

        def order_pred(idx: tuple[int, ...]) -> bool:
            k2_identity = all(
                idx[a] == 0 for p in k2 for a in in_axes[p] + out_axes[p]
            )
            if k2_identity:
                return validity_pred(k1, idx)
            return validity_pred(k2, idx)

        return order_pred

    raise ValueError(f"unknown kind {kind!r}")


def allowed_terms_mask(
    scenario: LabeledSpace,
    kind: str = "validity",
    blocks: Sequence[Iterable[str]] | None = None,
) -> np.ndarray:
    """Evaluate the :func:`allowed_terms` predicate on every basis string."""
    pred = allowed_terms(scenario, kind, blocks)
    shape = scenario.coeff_shape
    mask = np.zeros(shape, dtype=bool)
    for idx in np.ndindex(*shape):
        mask[idx] = pred(idx)
    return mask
