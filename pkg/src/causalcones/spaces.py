"""Labeled tensor-product spaces.

A scenario is described by a :class:`LabeledSpace`: an ordered collection of
:class:`SystemLabel` values, each naming one subsystem (a party's incoming,
ancillary-incoming, or outgoing space) together with its dimension.  All
operators in this package are stored in the canonical system order defined
here, so that equality of operators is entrywise equality of matrices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from math import prod
from typing import Iterable, Sequence

from .errors import LabelCollision, UnknownSystem

__all__ = ["Role", "SystemLabel", "LabeledSpace"]


class Role(str, Enum):
    """The role a subsystem plays for its party."""

    IN = "in"
    ANCILLA_IN = "ancilla_in"
    OUT = "out"


#: Sort order of roles within one party: incoming, then ancillary incoming,
#: then outgoing.
_ROLE_ORDER = {Role.IN: 0, Role.ANCILLA_IN: 1, Role.OUT: 2}


@dataclass(frozen=True, eq=True)
class SystemLabel:
    """One subsystem: a party identifier, a role, an optional tag, and a dimension.

    ``dim == 1`` encodes a trivial system; trivial systems are kept explicitly
    and never silently dropped.
    """

    party: str
    role: Role
    dim: int
    tag: str = ""

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")

    @property
    def key(self) -> tuple[str, int, str]:
        """Canonical sort key (identity of the system, dimension excluded)."""
        return (self.party, _ROLE_ORDER[self.role], self.tag)

    def __repr__(self) -> str:
        tag = f"/{self.tag}" if self.tag else ""
        return f"{self.party}.{self.role.value}{tag}({self.dim})"


@dataclass(frozen=True)
class LabeledSpace:
    """An ordered registry of subsystems defining a tensor-product operator space.

    The constructor normalizes the system order to the canonical one (sorted
    by party, then role with in < ancilla_in < out, then tag) and rejects
    duplicate ``(party, role, tag)`` identities.
    """

    systems: tuple[SystemLabel, ...]
    _index: dict[SystemLabel, int] = field(
        init=False, repr=False, compare=False, hash=False, default_factory=dict
    )

    def __init__(self, systems: Iterable[SystemLabel]):
        ordered = tuple(sorted(systems, key=lambda s: s.key))
        keys = [s.key for s in ordered]
        if len(set(keys)) != len(keys):
            dupes = {k for k in keys if keys.count(k) > 1}
            raise LabelCollision(f"duplicate system identities: {sorted(dupes)}")
        object.__setattr__(self, "systems", ordered)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(ordered)})

    # -- basic queries ----------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.systems)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    @property
    def coeff_shape(self) -> tuple[int, ...]:
        """Shape of the Hilbert-Schmidt coefficient tensor (one axis per system)."""
        return tuple(d * d for d in self.dims)

    @property
    def coeff_dim(self) -> int:
        return prod(self.coeff_shape)

    @property
    def parties(self) -> tuple[str, ...]:
        """Sorted distinct party identifiers."""
        seen: dict[str, None] = {}
        for s in self.systems:
            seen.setdefault(s.party, None)
        return tuple(sorted(seen))

    def __len__(self) -> int:
        return len(self.systems)

    def __iter__(self):
        return iter(self.systems)

    def __contains__(self, label: SystemLabel) -> bool:
        return label in self._index

    def index(self, label: SystemLabel) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownSystem(f"{label} not in space {self}") from None

    def indices(self, labels: Iterable[SystemLabel]) -> tuple[int, ...]:
        return tuple(sorted(self.index(s) for s in labels))

    # -- selections -------------------------------------------------------

    def select(
        self,
        party: str | Iterable[str] | None = None,
        role: Role | Iterable[Role] | None = None,
    ) -> tuple[SystemLabel, ...]:
        """All systems matching the given party/parties and role(s)."""
        parties = None if party is None else {party} if isinstance(party, str) else set(party)
        roles = None if role is None else {role} if isinstance(role, Role) else set(role)
        return tuple(
            s
            for s in self.systems
            if (parties is None or s.party in parties)
            and (roles is None or s.role in roles)
        )

    def incoming(self, party: str | Iterable[str]) -> tuple[SystemLabel, ...]:
        """The party's incoming systems, including ancillary incoming ones."""
        return self.select(party=party, role=(Role.IN, Role.ANCILLA_IN))

    def outgoing(self, party: str | Iterable[str]) -> tuple[SystemLabel, ...]:
        return self.select(party=party, role=Role.OUT)

    def party_systems(self, party: str | Iterable[str]) -> tuple[SystemLabel, ...]:
        return self.select(party=party)

    def in_dim(self, party: str) -> int:
        return prod((s.dim for s in self.incoming(party)), start=1)

    def out_dim(self, party: str) -> int:
        return prod((s.dim for s in self.outgoing(party)), start=1)

    # -- construction helpers --------------------------------------------

    @staticmethod
    def from_party_dims(party_dims: dict[str, tuple[int, int]]) -> "LabeledSpace":
        """Build a scenario from ``{party: (in_dim, out_dim)}``."""
        systems = []
        for party, (d_in, d_out) in party_dims.items():
            systems.append(SystemLabel(party, Role.IN, d_in))
            systems.append(SystemLabel(party, Role.OUT, d_out))
        return LabeledSpace(systems)

    def without(self, labels: Iterable[SystemLabel]) -> "LabeledSpace":
        drop = set(labels)
        for s in drop:
            self.index(s)  # raises UnknownSystem on foreign labels
        return LabeledSpace(s for s in self.systems if s not in drop)

    def union(self, other: "LabeledSpace") -> "LabeledSpace":
        overlap = set(self.systems) & set(other.systems)
        if overlap:
            raise LabelCollision(f"overlapping systems: {sorted(overlap, key=lambda s: s.key)}")
        return LabeledSpace(self.systems + other.systems)

    def restrict(self, labels: Iterable[SystemLabel]) -> "LabeledSpace":
        keep = set(labels)
        for s in keep:
            self.index(s)
        return LabeledSpace(s for s in self.systems if s in keep)

    def permutation_from(self, ordered_systems: Sequence[SystemLabel]) -> tuple[int, ...]:
        """Position of each canonical system inside the given ordering.

        ``ordered_systems`` must be a permutation of this space's systems; the
        returned tuple ``p`` satisfies ``ordered_systems[p[i]] == self.systems[i]``.
        """
        if sorted(ordered_systems, key=lambda s: s.key) != list(self.systems):
            raise UnknownSystem("given systems are not a permutation of the space")
        pos = {s: i for i, s in enumerate(ordered_systems)}
        return tuple(pos[s] for s in self.systems)

    def nonempty_party_subsets(self) -> Iterable[tuple[str, ...]]:
        """All nonempty subsets of the party set, in deterministic order."""
        parties = self.parties
        for r in range(1, len(parties) + 1):
            yield from itertools.combinations(parties, r)

    def __repr__(self) -> str:
        return "LabeledSpace[" + ", ".join(repr(s) for s in self.systems) + "]"
