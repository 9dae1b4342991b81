"""Convex cones of causally (non)separable processes and their witness duals.

Two representations are used.  Tree cones (:class:`ConeSpec` subclasses) are
algebraic expressions over PSD cones, linear subspaces, intersections,
Minkowski sums, and duals; they cover the bipartite, tripartite, and
restricted-scenario characterizations and support a structural dual.  Flat
cones (:class:`FlatCone`) are the SDP normal form: named blocks (PSD or
free), each an operator on the scenario space, plus homogeneous linear rows
over block coefficients and the cone's input operator.  Tree cones flatten
into this normal form; the necessary/sufficient approximating cones for four
or more parties are built natively flat.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    FactorialBlowup,
    NoMatchingScenario,
    RecursionDepth,
    WrongPartyCount,
)
from .operators import ProcessOperator, TraceReplaceExpr
from .spaces import LabeledSpace, Role, SystemLabel
from .subspaces import CausalOrderSpec, SubspaceSpec, order_subspace

__all__ = [
    "ConeSpec",
    "PSD",
    "Subspace",
    "Intersect",
    "MinkowskiSum",
    "Dual",
    "FlatCone",
    "FlatBlock",
    "FlatRow",
    "SepDecomposition",
    "INPUT",
    "bipartite_sep_cone",
    "tripartite_sep_cone",
    "restricted_cones",
    "necessary_cone",
    "sufficient_cone",
    "dual_cone",
    "exact_cone",
]

#: Sentinel index standing for the cone's input operator in flat rows.
INPUT = -1


# ---------------------------------------------------------------------------
# Tree representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeSpec:
    """Base class of cone expression trees."""

    scenario: LabeledSpace
    name: str = ""

    def flatten(self) -> "FlatCone":
        builder = _Flattener(self.scenario, self.name)
        builder.add(self, ((INPUT, 1.0),))
        return builder.finish()

    def dual(self) -> "ConeSpec":
        return _structural_dual(self)


@dataclass(frozen=True)
class PSD(ConeSpec):
    """The cone of positive semidefinite operators on the scenario space."""


@dataclass(frozen=True)
class Subspace(ConeSpec):
    """A linear subspace, seen as a (non-pointed) convex cone."""

    subspace: SubspaceSpec = None  # type: ignore[assignment]

    def __init__(self, subspace: SubspaceSpec, name: str = ""):
        object.__setattr__(self, "scenario", subspace.scenario)
        object.__setattr__(self, "subspace", subspace)
        object.__setattr__(self, "name", name or subspace.name)


@dataclass(frozen=True)
class Intersect(ConeSpec):
    children: tuple[ConeSpec, ...] = ()

    def __init__(self, children: Iterable[ConeSpec], name: str = ""):
        children = tuple(children)
        object.__setattr__(self, "scenario", children[0].scenario)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "name", name)


@dataclass(frozen=True)
class MinkowskiSum(ConeSpec):
    children: tuple[ConeSpec, ...] = ()

    def __init__(self, children: Iterable[ConeSpec], name: str = ""):
        children = tuple(children)
        object.__setattr__(self, "scenario", children[0].scenario)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "name", name)


@dataclass(frozen=True)
class Dual(ConeSpec):
    child: ConeSpec = None  # type: ignore[assignment]

    def __init__(self, child: ConeSpec, name: str = ""):
        object.__setattr__(self, "scenario", child.scenario)
        object.__setattr__(self, "child", child)
        object.__setattr__(self, "name", name or f"dual({child.name})")


def _orthocomplement(s: SubspaceSpec) -> SubspaceSpec:
    comp = SubspaceSpec(s.scenario, (), name=f"perp({s.name})")
    mask = ~s.allowed_mask()
    mask.setflags(write=False)
    comp._mask.append(mask)
    return comp


def _structural_dual(cone: ConeSpec) -> ConeSpec:
    """Structural dual: swap intersections and Minkowski sums, keep PSD, send a
    subspace to its orthogonal complement."""
    if isinstance(cone, Dual):
        return cone.child
    if isinstance(cone, PSD):
        return cone
    if isinstance(cone, Subspace):
        return Subspace(_orthocomplement(cone.subspace))
    if isinstance(cone, Intersect):
        return MinkowskiSum(
            [_structural_dual(c) for c in cone.children], name=f"dual({cone.name})"
        )
    if isinstance(cone, MinkowskiSum):
        return Intersect(
            [_structural_dual(c) for c in cone.children], name=f"dual({cone.name})"
        )
    raise TypeError(f"cannot dualize {type(cone).__name__}")


def dual_cone(cone: ConeSpec) -> ConeSpec:
    """The dual (witness) cone of a tree cone."""
    return _structural_dual(cone)


# ---------------------------------------------------------------------------
# Flat normal form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlatBlock:
    name: str
    kind: str  # "psd" | "free"


@dataclass(frozen=True)
class FlatRow:
    """Homogeneous equation: sum of ``coeff * x_block`` over ``terms`` vanishes
    on the coordinates selected by ``mask`` (all coordinates when None).

    A term with block index :data:`INPUT` refers to the cone's input operator.
    """

    terms: tuple[tuple[int, float], ...]
    mask: np.ndarray | None
    name: str = ""


@dataclass(frozen=True)
class FlatCone:
    """SDP normal form of a cone over operators on ``scenario``."""

    scenario: LabeledSpace
    blocks: tuple[FlatBlock, ...]
    rows: tuple[FlatRow, ...]
    name: str = ""
    component_blocks: tuple[int, ...] = ()
    block_constraints: tuple[tuple[int, TraceReplaceExpr], ...] = ()

    def flatten(self) -> "FlatCone":
        return self

    @property
    def n_psd(self) -> int:
        return sum(1 for b in self.blocks if b.kind == "psd")


class _Flattener:
    """Recursive tree-to-flat conversion."""

    def __init__(self, scenario: LabeledSpace, name: str):
        self.scenario = scenario
        self.name = name
        self.blocks: list[FlatBlock] = []
        self.rows: list[FlatRow] = []
        self.component_blocks: list[int] = []
        self.block_constraints: list[tuple[int, TraceReplaceExpr]] = []

    def new_block(self, name: str, kind: str) -> int:
        self.blocks.append(FlatBlock(name, kind))
        return len(self.blocks) - 1

    def row(self, terms, mask, name: str = "") -> None:
        self.rows.append(FlatRow(tuple(terms), mask, name))

    def _subspace_rows(self, expr_terms, subspace: SubspaceSpec) -> None:
        mask = ~subspace.allowed_mask()
        if mask.any():
            self.row(expr_terms, mask, name=f"in:{subspace.name}")
        if len(expr_terms) == 1 and expr_terms[0][0] != INPUT:
            for c in subspace.constraints:
                self.block_constraints.append((expr_terms[0][0], c))

    def add(self, cone: ConeSpec, expr_terms, top: bool = True) -> None:
        """Constrain the linear expression ``expr_terms`` to lie in ``cone``."""
        if isinstance(cone, Dual):
            self.add(_structural_dual(cone.child), expr_terms, top=top)
        elif isinstance(cone, PSD):
            b = self.new_block(cone.name or "psd", "psd")
            self.row(tuple(expr_terms) + ((b, -1.0),), None, name="psd-split")
            if top:
                self.component_blocks.append(b)
        elif isinstance(cone, Subspace):
            self._subspace_rows(tuple(expr_terms), cone.subspace)
        elif isinstance(cone, Intersect):
            for child in cone.children:
                self.add(child, expr_terms, top=top)
        elif isinstance(cone, MinkowskiSum):
            values = []
            for child in cone.children:
                values.append(self.value_of(child, top=top))
            total = tuple(expr_terms) + tuple(
                (b, -c) for v in values for (b, c) in v
            )
            self.row(total, None, name=f"sum:{cone.name}")
        else:
            raise TypeError(f"cannot flatten {type(cone).__name__}")

    def value_of(self, cone: ConeSpec, top: bool = False):
        """Return a linear expression representing an arbitrary member of ``cone``,
        adding the blocks and rows that constrain it."""
        if isinstance(cone, Dual):
            return self.value_of(_structural_dual(cone.child), top=top)
        if isinstance(cone, PSD):
            b = self.new_block(cone.name or "psd", "psd")
            if top:
                self.component_blocks.append(b)
            return ((b, 1.0),)
        if isinstance(cone, MinkowskiSum):
            out = []
            for child in cone.children:
                out.extend(self.value_of(child, top=top))
            return tuple(out)
        if isinstance(cone, Intersect):
            subspaces = [c for c in cone.children if isinstance(c, Subspace)]
            others = [c for c in cone.children if not isinstance(c, Subspace)]
            if len(others) == 1 and isinstance(others[0], (PSD, MinkowskiSum)):
                expr = self.value_of(others[0], top=top)
                for s in subspaces:
                    self._subspace_rows(expr, s.subspace)
                return expr
            f = self.new_block(cone.name or "aux", "free")
            if top:
                self.component_blocks.append(f)
            self.add(cone, ((f, 1.0),), top=False)
            return ((f, 1.0),)
        if isinstance(cone, Subspace):
            f = self.new_block(cone.name or "subspace", "free")
            if top:
                self.component_blocks.append(f)
            self._subspace_rows(((f, 1.0),), cone.subspace)
            return ((f, 1.0),)
        raise TypeError(f"cannot take value of {type(cone).__name__}")

    def finish(self) -> FlatCone:
        return FlatCone(
            self.scenario,
            tuple(self.blocks),
            tuple(self.rows),
            self.name,
            tuple(self.component_blocks),
            tuple(self.block_constraints),
        )


# ---------------------------------------------------------------------------
# Decompositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SepDecomposition:
    """Named components of a separable decomposition, with the constraints each
    component is supposed to satisfy."""

    components: tuple[tuple[str, ProcessOperator], ...]
    constraints: tuple[tuple[str, TraceReplaceExpr], ...] = ()

    def total(self) -> ProcessOperator:
        ops = [op for _, op in self.components]
        out = ops[0]
        for op in ops[1:]:
            out = out + op
        return out

    def verify(self, w: ProcessOperator, tol: float = 1e-7) -> dict:
        """Independent re-check: components sum to ``w``, are PSD, and satisfy
        their recorded constraints (via the dense trace-and-replace maps)."""
        from .operators import trace_and_replace

        scale = max(w.hs_norm(), 1.0)
        sum_err = float(np.abs(self.total().matrix - w.matrix).max())
        eig_floor = min(
            (op.min_eigenvalue() for _, op in self.components), default=0.0
        )
        named = dict(self.components)
        constraint_err = 0.0
        for comp_name, expr in self.constraints:
            resid = trace_and_replace(named[comp_name], expr).hs_norm()
            constraint_err = max(constraint_err, resid)
        ok = (
            sum_err <= tol * scale
            and eig_floor >= -tol * scale
            and constraint_err <= tol * scale
        )
        return {
            "ok": bool(ok),
            "sum_error": sum_err,
            "eigenvalue_floor": eig_floor,
            "constraint_error": constraint_err,
        }


# ---------------------------------------------------------------------------
# Constraint helpers
# ---------------------------------------------------------------------------

def _step_expr(
    scenario: LabeledSpace, party: str, later: Sequence[str]
) -> TraceReplaceExpr:
    """``[1 - Out(party)] Replace(all systems of the later parties)``."""
    return TraceReplaceExpr.build(
        one_minus=[scenario.outgoing(party)],
        replace=[s for p in later for s in scenario.party_systems(p)],
    )


def _chain_constraints(
    scenario: LabeledSpace, chain: Sequence[str], start: int = 0
) -> list[TraceReplaceExpr]:
    """Per-position constraints of a full singleton chain, from ``start`` on."""
    out = []
    for i in range(start, len(chain)):
        expr = _step_expr(scenario, chain[i], chain[i + 1 :])
        if not expr.is_zero_map:
            out.append(expr)
    return out


def _chain_subspace(
    scenario: LabeledSpace, chain: Sequence[str], start: int = 0
) -> SubspaceSpec:
    return SubspaceSpec(
        scenario,
        _chain_constraints(scenario, chain, start),
        name="<".join(chain[start:]) if start else "<".join(chain),
    )


def _psd_in(scenario: LabeledSpace, subspace: SubspaceSpec, name: str) -> ConeSpec:
    return Intersect([PSD(scenario, name), Subspace(subspace)], name=name)


# ---------------------------------------------------------------------------
# Exact cones
# ---------------------------------------------------------------------------

def bipartite_sep_cone(scenario: LabeledSpace) -> ConeSpec:
    """Causally separable cone for two parties: sum over the two orders of
    PSD operators compatible with that fixed order."""
    parties = scenario.parties
    if len(parties) != 2:
        raise WrongPartyCount(f"need 2 parties, got {len(parties)}")
    a, b = parties
    return MinkowskiSum(
        [
            _psd_in(scenario, _chain_subspace(scenario, [a, b]), f"W({a},{b})"),
            _psd_in(scenario, _chain_subspace(scenario, [b, a]), f"W({b},{a})"),
        ],
        name="sep2",
    )


def tripartite_sep_cone(scenario: LabeledSpace) -> ConeSpec:
    """Causally separable cone for three parties.

    Sum over the first party X of: the subspace requiring X to be first on the
    grouped term, intersected with the sum over the two orders of the
    remaining parties of PSD components compatible with that tail order.
    """
    parties = scenario.parties
    if len(parties) != 3:
        raise WrongPartyCount(f"need 3 parties, got {len(parties)}")
    groups = []
    for x in parties:
        rest = [p for p in parties if p != x]
        first_expr = _step_expr(scenario, x, rest)
        first = SubspaceSpec(
            scenario,
            [first_expr] if not first_expr.is_zero_map else [],
            name=f"{x}-first-top",
        )
        tails = []
        for y, z in itertools.permutations(rest):
            chain = [x, y, z]
            tails.append(
                _psd_in(
                    scenario,
                    _chain_subspace(scenario, chain, start=1),
                    f"W({x},{y},{z})",
                )
            )
        groups.append(
            Intersect(
                [Subspace(first), MinkowskiSum(tails, name=f"W({x})-split")],
                name=f"W({x})",
            )
        )
    return MinkowskiSum(groups, name="sep3")


def _trivial_pattern(scenario: LabeledSpace) -> dict[str, tuple[bool, bool]]:
    """Per party: (has nontrivial incoming, has nontrivial outgoing)."""
    return {
        p: (scenario.in_dim(p) > 1, scenario.out_dim(p) > 1)
        for p in scenario.parties
    }


def restricted_cones(scenario: LabeledSpace) -> ConeSpec:
    """Exact cone for the restricted trivial-dimension scenarios.

    Dispatches on the pattern of trivial systems: three parties with one
    trivial outgoing space, three parties with one trivial incoming space,
    four parties with one trivial outgoing space, or four parties with a
    trivial incoming space for one party and a trivial outgoing space for
    another.
    """
    parties = scenario.parties
    pattern = _trivial_pattern(scenario)
    no_in = [p for p in parties if not pattern[p][0]]
    no_out = [p for p in parties if not pattern[p][1]]

    if len(parties) == 3 and len(no_out) == 1 and not no_in:
        (last,) = no_out
        rest = [p for p in parties if p != last]
        comps = []
        for x, y in itertools.permutations(rest):
            comps.append(
                _psd_in(
                    scenario,
                    _chain_subspace(scenario, [x, y, last]),
                    f"W({x},{y},{last})",
                )
            )
        return MinkowskiSum(comps, name="b1")

    if len(parties) == 3 and len(no_in) == 1 and not no_out:
        (first,) = no_in
        rest = [p for p in parties if p != first]
        top = SubspaceSpec(
            scenario, [_step_expr(scenario, first, rest)], name=f"{first}-first-top"
        )
        comps = []
        for y, z in itertools.permutations(rest):
            comps.append(
                _psd_in(
                    scenario,
                    _chain_subspace(scenario, [first, y, z], start=1),
                    f"W({first},{y},{z})",
                )
            )
        return Intersect(
            [Subspace(top), MinkowskiSum(comps, name="b2-split")], name="b2"
        )

    if len(parties) == 4 and len(no_out) == 1 and not no_in:
        (last,) = no_out
        rest = [p for p in parties if p != last]
        groups = []
        for x in rest:
            others = [p for p in rest if p != x]
            top = SubspaceSpec(
                scenario,
                [_step_expr(scenario, x, others + [last])],
                name=f"{x}-first-top",
            )
            tails = []
            for y, z in itertools.permutations(others):
                tails.append(
                    _psd_in(
                        scenario,
                        _chain_subspace(scenario, [x, y, z, last], start=1),
                        f"W({x},{y},{z},{last})",
                    )
                )
            groups.append(
                Intersect(
                    [Subspace(top), MinkowskiSum(tails, name=f"W({x})-split")],
                    name=f"W({x})",
                )
            )
        return MinkowskiSum(groups, name="b4")

    if (
        len(parties) == 4
        and len(no_in) == 1
        and len(no_out) == 1
        and no_in != no_out
    ):
        (first,) = no_in
        (last,) = no_out
        mids = [p for p in parties if p not in (first, last)]
        top = SubspaceSpec(
            scenario,
            [_step_expr(scenario, first, mids + [last])],
            name=f"{first}-first-top",
        )
        comps = []
        for y, z in itertools.permutations(mids):
            comps.append(
                _psd_in(
                    scenario,
                    _chain_subspace(scenario, [first, y, z, last], start=1),
                    f"W({first},{y},{z},{last})",
                )
            )
        return Intersect(
            [Subspace(top), MinkowskiSum(comps, name="b5-split")], name="b5"
        )

    raise NoMatchingScenario(
        f"no restricted characterization for trivial pattern {pattern}"
    )


def fixed_order_cone(scenario: LabeledSpace, chain: Sequence[str]) -> ConeSpec:
    """PSD operators compatible with one fixed total order of the parties."""
    if sorted(chain) != sorted(scenario.parties):
        raise NoMatchingScenario("chain must list every party exactly once")
    return _psd_in(
        scenario, _chain_subspace(scenario, list(chain)), "fixed:" + "<".join(chain)
    )


def exact_cone(scenario: LabeledSpace) -> ConeSpec:
    """The exact separable cone when a characterization is known for the
    scenario; raises otherwise."""
    n = len(scenario.parties)
    if n == 2:
        return bipartite_sep_cone(scenario)
    if n == 3:
        return tripartite_sep_cone(scenario)
    return restricted_cones(scenario)


# ---------------------------------------------------------------------------
# Sufficient (inner) cone
# ---------------------------------------------------------------------------

def sufficient_cone(scenario: LabeledSpace, max_parties: int = 5) -> FlatCone:
    """Inner approximation: one PSD block per total order of the parties, with
    a no-signalling constraint on the partial sum over every ordered prefix."""
    parties = scenario.parties
    n = len(parties)
    if n > max_parties:
        raise FactorialBlowup(f"{n} parties exceed the cap of {max_parties}")
    fl = _Flattener(scenario, "sufficient")
    perms = list(itertools.permutations(parties))
    blocks = {pi: fl.new_block("W(" + ",".join(pi) + ")", "psd") for pi in perms}
    fl.component_blocks = [blocks[pi] for pi in perms]
    fl.row(
        ((INPUT, 1.0),) + tuple((blocks[pi], -1.0) for pi in perms),
        None,
        name="sum:input",
    )
    for length in range(1, n + 1):
        for prefix in itertools.permutations(parties, length):
            later = [p for p in parties if p not in prefix]
            expr = TraceReplaceExpr.build(
                one_minus=[scenario.outgoing(prefix[-1])],
                replace=[s for p in later for s in scenario.party_systems(p)],
            )
            if expr.is_zero_map:
                continue
            mask = expr.keep_mask(scenario)
            if not mask.any():
                continue
            members = [
                blocks[pi] for pi in perms if pi[: length] == prefix
            ]
            fl.row(
                tuple((b, 1.0) for b in members),
                mask,
                name="prefix:" + ",".join(prefix),
            )
    return fl.finish()


# ---------------------------------------------------------------------------
# Necessary (outer) cone
# ---------------------------------------------------------------------------

def _teleport_scenario(
    scenario: LabeledSpace, k: str, kp: str
) -> tuple[LabeledSpace, list[int]]:
    """Scenario with party ``k`` removed and its systems re-attributed to party
    ``kp`` as ancillary incoming systems; also returns, per sub-scenario axis,
    the corresponding axis in the original scenario."""
    mapping: dict[SystemLabel, SystemLabel] = {}
    for s in scenario.systems:
        if s.party == k:
            mapping[s] = SystemLabel(
                kp, Role.ANCILLA_IN, s.dim, tag=f"tp:{k}.{s.role.value}.{s.tag}"
            )
        else:
            mapping[s] = s
    sub = LabeledSpace(mapping.values())
    reverse = {v: orig for orig, v in mapping.items()}
    axes = [scenario.index(reverse[s]) for s in sub.systems]
    return sub, axes


def _pullback_mask(mask: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Re-express a mask over sub-scenario axes in original-scenario axis order.

    ``axes[i]`` is the original axis matching sub axis ``i``."""
    inv = np.empty(len(axes), dtype=int)
    inv[np.asarray(axes)] = np.arange(len(axes))
    return np.ascontiguousarray(np.transpose(mask, inv))


def necessary_cone(
    scenario: LabeledSpace,
    max_parties: int = 5,
    teleport_targets: Sequence[str] | None = None,
) -> FlatCone:
    """Outer approximation via the teleportation recursion.

    Each first-party component is, for every other party, the pullback of a
    causally separable decomposition of the operator obtained by
    re-attributing the first party's systems to that other party; the
    recursion bottoms out at the exact tripartite (or bipartite)
    characterization.

    :param teleport_targets: when given, restrict the top-level recursion to
        re-attributions onto these parties only, yielding a strictly weaker
        (larger) cone; useful for probing which branch of the full condition
        an operator fails.
    """
    parties = scenario.parties
    n = len(parties)
    if n > max_parties:
        raise RecursionDepth(f"{n} parties exceed the cap of {max_parties}")
    if n <= 3:
        return exact_cone_for_necessary(scenario)
    targets = set(parties if teleport_targets is None else teleport_targets)
    fl = _Flattener(scenario, "necessary")
    wk_blocks = []
    for k in parties:
        wk = fl.new_block(f"W({k})", "free")
        wk_blocks.append(wk)
        fl.component_blocks.append(wk)
        first_expr = _step_expr(scenario, k, [p for p in parties if p != k])
        if not first_expr.is_zero_map:
            mask = first_expr.keep_mask(scenario)
            if mask.any():
                fl.row(((wk, 1.0),), mask, name=f"{k}-first-top")
                fl.block_constraints.append((wk, first_expr))
        branch_targets = targets - {k} or set(parties) - {k}
        for kp in parties:
            if kp == k or kp not in branch_targets:
                continue
            sub, axes = _teleport_scenario(scenario, k, kp)
            subcone = necessary_cone(sub, max_parties)
            _embed(fl, subcone, ((wk, 1.0),), axes, prefix=f"[{k}->{kp}]")
    fl.row(
        ((INPUT, 1.0),) + tuple((b, -1.0) for b in wk_blocks),
        None,
        name="sum:input",
    )
    return fl.finish()


def exact_cone_for_necessary(scenario: LabeledSpace) -> FlatCone:
    n = len(scenario.parties)
    if n == 3:
        return tripartite_sep_cone(scenario).flatten()
    if n == 2:
        return bipartite_sep_cone(scenario).flatten()
    raise WrongPartyCount(f"unsupported base case with {n} parties")


def _embed(
    fl: _Flattener,
    sub: FlatCone,
    input_terms,
    axes: Sequence[int],
    prefix: str,
) -> None:
    """Splice a sub-cone (over a relabeled scenario) into the builder, with its
    input replaced by ``input_terms`` and its masks pulled back to the
    original axis order."""
    offset = len(fl.blocks)
    for b in sub.blocks:
        fl.new_block(prefix + b.name, b.kind)
    for row in sub.rows:
        terms: list[tuple[int, float]] = []
        for idx, coeff in row.terms:
            if idx == INPUT:
                terms.extend((b, c * coeff) for b, c in input_terms)
            else:
                terms.append((idx + offset, coeff))
        mask = None if row.mask is None else _pullback_mask(row.mask, axes)
        fl.row(tuple(terms), mask, name=prefix + row.name)
