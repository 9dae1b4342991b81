"""Self-contained first-order solver for the flat cone normal form.

Problems are of the shape ``min c'x  s.t.  Ax = b, x in K`` where ``K`` is a
product of PSD blocks (operators stored as real coefficient vectors over an
orthonormal Hermitian product basis) and free variables.  The solver is a
two-block consensus ADMM: alternating projection onto the affine set (through
one cached sparse factorization of ``A A'``) and onto the cone (batched
eigendecomposition clamping), with over-relaxation and residual-balancing
penalty updates.  Dual multipliers of the affine step provide certificates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _basis
from .errors import NumericalBreakdown, SolverFailure
from .operators import ProcessOperator
from .spaces import LabeledSpace

__all__ = [
    "SolverConfig",
    "SDPProblem",
    "SDPSolution",
    "solve",
    "min_t_problem",
    "slice_problem",
    "extract_dual_witness",
]


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 200_000
    rho: float = 1.0
    alpha: float = 1.6
    adaptive_rho: bool = True
    check_every: int = 25
    rho_every: int = 100
    ridge: float = 1e-12
    verbose: bool = False


@dataclass
class SDPProblem:
    """``min c'x`` subject to ``Ax = b`` and ``x`` in a product cone.

    Variable layout: one contiguous group per block spec, in order.  A block
    spec is ``("psd", dims)`` for a PSD operator over the tensor factors
    ``dims`` (group size ``prod(d*d)``), or ``("free", size)``.
    """

    blocks: list[tuple]
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    input_matrix: sp.csr_matrix | None = None
    scenario: LabeledSpace | None = None
    meta: dict = field(default_factory=dict)
    #: Optional (flat, input_coeffs, direction_coeffs) triple enabling the
    #: coordinate-decoupled affine projection; not serialized.
    fast_data: tuple | None = None

    def block_sizes(self) -> list[int]:
        out = []
        for kind, spec in self.blocks:
            if kind == "psd":
                out.append(prod(d * d for d in spec))
            else:
                out.append(int(spec))
        return out

    @property
    def n_vars(self) -> int:
        return sum(self.block_sizes())


@dataclass
class SDPSolution:
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    equality_residual: float
    gap: float
    iterations: int
    status: str

    def block_values(self, problem: SDPProblem) -> list[np.ndarray]:
        out = []
        off = 0
        for size in problem.block_sizes():
            out.append(self.z[off : off + size])
            off += size
        return out


# ---------------------------------------------------------------------------
# Cone projection
# ---------------------------------------------------------------------------

class _ConeProjector:
    """Projects the stacked variable vector onto the product cone, batching
    eigendecompositions of PSD blocks with identical factor dimensions."""

    def __init__(self, problem: SDPProblem):
        sizes = problem.block_sizes()
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.groups: dict[tuple, list[tuple[int, int]]] = {}
        for i, (kind, spec) in enumerate(problem.blocks):
            if kind == "psd":
                dims = tuple(spec)
                self.groups.setdefault(dims, []).append(
                    (int(offsets[i]), int(sizes[i]))
                )

    def __call__(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        for dims, slots in self.groups.items():
            m = slots[0][1]
            stack = np.stack([v[off : off + m] for off, _ in slots])
            mats = _basis.from_coeffs_batch(stack.reshape((len(slots),) + tuple(d * d for d in dims)), dims)
            evals, evecs = np.linalg.eigh(mats)
            np.clip(evals, 0.0, None, out=evals)
            mats = (evecs * evals[:, None, :]) @ np.conj(np.swapaxes(evecs, -1, -2))
            coeffs = _basis.to_coeffs_batch(mats, dims).real
            flat = coeffs.reshape(len(slots), m)
            for j, (off, _) in enumerate(slots):
                out[off : off + m] = flat[j]
        return out


# ---------------------------------------------------------------------------
# Coordinate-decoupled affine projection
# ---------------------------------------------------------------------------

class _FastAffine:
    """Affine projection exploiting coordinate decoupling of flat-cone rows.

    Every flat row constrains, per coefficient coordinate, only the values of
    the blocks at that same coordinate; the lone global variable is the noise
    weight ``t``, which enters each row through the direction operator.  The
    projection therefore splits into independent tiny dense systems (one per
    distinct pattern of active rows, batched over the coordinates sharing it)
    plus a scalar bordered update for ``t``.
    """

    def __init__(self, problem: SDPProblem):
        from .cones import INPUT

        flat, w_flat, d_flat = problem.fast_data
        m = flat.scenario.coeff_dim
        self.m = m
        self.n_blocks = len(flat.blocks)
        rows = [r for r in flat.rows if r.mask is None or r.mask.any()]
        self.rows = rows
        n_rows = len(rows)

        active = np.zeros((n_rows, m), dtype=bool)
        self.h = np.zeros(n_rows)
        self.block_terms: list[list[tuple[int, float]]] = []
        row_offsets = np.zeros(n_rows + 1, dtype=np.int64)
        self.row_coords: list[np.ndarray] = []
        for i, r in enumerate(rows):
            coords = (
                np.arange(m) if r.mask is None else np.flatnonzero(r.mask.ravel())
            )
            active[i, coords] = True
            self.row_coords.append(coords)
            row_offsets[i + 1] = row_offsets[i] + coords.size
            terms = []
            for idx, coeff in r.terms:
                if idx == INPUT:
                    self.h[i] += coeff
                else:
                    terms.append((idx, coeff))
            self.block_terms.append(terms)
        self.row_offsets = row_offsets
        self.n_eqs = int(row_offsets[-1])
        self.w = np.asarray(w_flat, dtype=float)
        self.d = np.asarray(d_flat, dtype=float)

        packed = np.packbits(active, axis=0)
        _, first, inverse = np.unique(
            packed.T.copy().view(
                np.dtype((np.void, packed.shape[0]))
            ).ravel(),
            return_index=True,
            return_inverse=True,
        )
        self.patterns = []
        self.alpha = 0.0
        for g, j0 in enumerate(first):
            J = np.flatnonzero(inverse == g)
            act_rows = np.flatnonzero(active[:, j0])
            if act_rows.size == 0:
                continue
            blocks_in = sorted(
                {idx for r in act_rows for idx, _ in self.block_terms[r]}
            )
            col_of = {b: i for i, b in enumerate(blocks_in)}
            Ag = np.zeros((act_rows.size, len(blocks_in)))
            for ri, r in enumerate(act_rows):
                for idx, coeff in self.block_terms[r]:
                    Ag[ri, col_of[idx]] += coeff
            hg = self.h[act_rows]
            Mg = np.linalg.pinv(Ag @ Ag.T, rcond=1e-12, hermitian=True)
            qg = Mg @ hg
            sg = float(hg @ qg)
            dJ = self.d[J]
            self.alpha += sg * float(dJ @ dJ)
            self.patterns.append(
                {
                    "J": J,
                    "rows": act_rows,
                    "blocks": np.array(blocks_in, dtype=int),
                    "A": Ag,
                    "M": Mg,
                    "h": hg,
                    "q": qg,
                    "s": sg,
                    "dJ": dJ,
                    "wJ": self.w[J],
                }
            )
        self._last_lams: list[np.ndarray] = []

    def project(self, v: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
        """Project ``(v, tau)`` onto the affine constraint set."""
        m = self.m
        v2 = v[: self.n_blocks * m].reshape(self.n_blocks, m)
        x2 = v2.copy()
        stage = []
        beta = 0.0
        for p in self.patterns:
            V = v2[np.ix_(p["blocks"], p["J"])]
            R = p["A"] @ V + np.outer(p["h"], p["wJ"])
            MR = p["M"] @ R
            beta += float(p["dJ"] @ (p["q"] @ R))
            stage.append((p, V, MR))
        t = (tau - beta) / (1.0 + self.alpha)
        self._last_lams = []
        for p, V, MR in stage:
            lam = MR + np.outer(p["q"], p["dJ"] * t)
            x2[np.ix_(p["blocks"], p["J"])] = V - p["A"].T @ lam
            self._last_lams.append(lam)
        out = np.empty_like(v)
        out[: self.n_blocks * m] = x2.ravel()
        out[-1] = t
        return out, t

    def scalar_y(self, rho: float) -> np.ndarray:
        """Multipliers in the scalar-equation indexing of the assembled system."""
        y = np.zeros(self.n_eqs)
        for p, lam in zip(self.patterns, self._last_lams):
            for ri, r in enumerate(p["rows"]):
                pos = self.row_offsets[r] + np.searchsorted(
                    self.row_coords[r], p["J"]
                )
                y[pos] = -rho * lam[ri]
        return y


# ---------------------------------------------------------------------------
# ADMM
# ---------------------------------------------------------------------------

def solve(problem: SDPProblem, cfg: SolverConfig = SolverConfig()) -> SDPSolution:
    """Run the operator-splitting iteration; deterministic for fixed inputs."""
    A = problem.A.tocsr()
    b = np.asarray(problem.b, dtype=float)
    c = np.asarray(problem.c, dtype=float)
    n = problem.n_vars
    n_rows = A.shape[0]

    fast = _FastAffine(problem) if problem.fast_data is not None else None
    if fast is None:
        # row equilibration
        row_norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
        row_norms[row_norms == 0] = 1.0
        D = sp.diags(1.0 / row_norms)
        As = (D @ A).tocsr()
        bs = b / row_norms

        AAt = (As @ As.T).tocsc()
        AAt = AAt + cfg.ridge * sp.identity(n_rows, format="csc")
        try:
            lu = spla.splu(AAt)
        except RuntimeError as exc:  # pragma: no cover - defensive
            raise NumericalBreakdown(f"factorization failed: {exc}") from exc

        AsT = As.T.tocsr()

        def affine(v: np.ndarray):
            rhs = As @ v - bs
            lam = lu.solve(rhs)
            lam += lu.solve(rhs - AAt @ lam)
            return v - AsT @ lam, lam

    else:
        row_norms = np.ones(n_rows)
        As = A
        bs = b

        def affine(v: np.ndarray):
            out, _ = fast.project(v, v[-1])
            return out, None

    proj = _ConeProjector(problem)

    rho = cfg.rho
    x = np.zeros(n)
    z = np.zeros(n)
    u = np.zeros(n)
    lam = np.zeros(n_rows)
    status = "MaxIter"
    it = 0
    pri = dua = gap = eq = np.inf
    for it in range(1, cfg.max_iter + 1):
        x, lam = affine(z - u - c / rho)
        xh = cfg.alpha * x + (1.0 - cfg.alpha) * z
        z_prev = z
        z = proj(xh + u)
        u = u + xh - z

        if it % cfg.check_every == 0 or it == cfg.max_iter:
            obj = float(c @ z)
            y = fast.scalar_y(rho) if fast is not None else -rho * lam
            dual_obj = float(bs @ y)
            pri = np.linalg.norm(x - z) / max(
                1.0, np.linalg.norm(x), np.linalg.norm(z)
            )
            dua = rho * np.linalg.norm(z - z_prev) / max(
                1.0, rho * np.linalg.norm(u)
            )
            eq = np.linalg.norm(As @ z - bs) / max(1.0, np.linalg.norm(bs))
            gap = abs(obj - dual_obj) / max(1.0, abs(obj))
            if cfg.verbose and it % (cfg.check_every * 40) == 0:
                print(
                    f"  iter {it:>7d}  pri {pri:.2e}  dua {dua:.2e}"
                    f"  eq {eq:.2e}  gap {gap:.2e}  obj {obj:.8f}"
                )
            if pri <= cfg.tol and dua <= cfg.tol and eq <= cfg.tol and gap <= 10 * cfg.tol:
                status = "Optimal"
                break

        if cfg.adaptive_rho and it % cfg.rho_every == 0:
            r_norm = np.linalg.norm(x - z)
            s_norm = rho * np.linalg.norm(z - z_prev)
            if r_norm > 10.0 * s_norm and rho < 1e4:
                rho *= 2.0
                u /= 2.0
            elif s_norm > 10.0 * r_norm and rho > 1e-4:
                rho /= 2.0
                u *= 2.0

    if fast is not None:
        y = fast.scalar_y(rho)
    else:
        y = -rho * lam / row_norms  # undo row equilibration
    obj = float(c @ z)
    return SDPSolution(
        x=x,
        z=z,
        y=y,
        objective=obj,
        dual_objective=float(b @ y),
        primal_residual=float(pri),
        dual_residual=float(dua),
        equality_residual=float(eq),
        gap=float(gap),
        iterations=it,
        status=status,
    )


# ---------------------------------------------------------------------------
# Problem assembly from flat cones
# ---------------------------------------------------------------------------

def _assemble(flat, input_coeff_flat, direction_flat, extra_rows=()):
    """Shared assembly of sparse equations from flat-cone rows.

    Returns (blocks, A, b, input_matrix, sizes).  ``input_coeff_flat`` is the
    known part substituted for the INPUT sentinel (moved to the right-hand
    side); ``direction_flat``, when given, adds one trailing scalar variable t
    entering through INPUT as ``t * direction``.
    """
    from .cones import INPUT

    scenario = flat.scenario
    m = scenario.coeff_dim
    blocks = [
        ("psd", scenario.dims) if blk.kind == "psd" else ("free", m)
        for blk in flat.blocks
    ]
    offsets = np.concatenate([[0], np.cumsum([m] * len(blocks))]).astype(int)
    has_t = direction_flat is not None
    n = len(blocks) * m + (1 if has_t else 0)

    rows_i: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    b_parts: list[np.ndarray] = []
    in_rows: list[np.ndarray] = []
    in_cols: list[np.ndarray] = []
    in_vals: list[np.ndarray] = []
    row_count = 0

    for row in flat.rows:
        coords = (
            np.arange(m)
            if row.mask is None
            else np.flatnonzero(row.mask.ravel())
        )
        k = coords.size
        if k == 0:
            continue
        eq_idx = np.arange(row_count, row_count + k)
        b_row = np.zeros(k)
        for idx, coeff in row.terms:
            if idx == INPUT:
                b_row -= coeff * input_coeff_flat[coords]
                in_rows.append(eq_idx)
                in_cols.append(coords)
                in_vals.append(np.full(k, coeff))
                if has_t:
                    rows_i.append(eq_idx)
                    cols.append(np.full(k, len(blocks) * m))
                    vals.append(coeff * direction_flat[coords])
            else:
                rows_i.append(eq_idx)
                cols.append(offsets[idx] + coords)
                vals.append(np.full(k, coeff))
        b_parts.append(b_row)
        row_count += k

    for coeffs_by_col, rhs in extra_rows:
        cols_arr = np.concatenate([np.asarray(ci, dtype=int) for ci, _ in coeffs_by_col])
        vals_arr = np.concatenate([np.asarray(vi, dtype=float) for _, vi in coeffs_by_col])
        rows_i.append(np.full(cols_arr.size, row_count))
        cols.append(cols_arr)
        vals.append(vals_arr)
        b_parts.append(np.array([rhs]))
        row_count += 1

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows_i), np.concatenate(cols))),
        shape=(row_count, n),
    )
    b = np.concatenate(b_parts)
    input_matrix = sp.csr_matrix(
        (
            np.concatenate(in_vals) if in_vals else np.zeros(0),
            (
                np.concatenate(in_rows) if in_rows else np.zeros(0, dtype=int),
                np.concatenate(in_cols) if in_cols else np.zeros(0, dtype=int),
            ),
        ),
        shape=(row_count, m),
    )
    if has_t:
        blocks = blocks + [("free", 1)]
    return blocks, A, b, input_matrix


def min_t_problem(flat, w: ProcessOperator, direction: ProcessOperator) -> SDPProblem:
    """``min t  s.t.  w + t * direction`` is a member of the flat cone."""
    w_flat = w.coeffs().ravel()
    d_flat = direction.coeffs().ravel()
    blocks, A, b, input_matrix = _assemble(flat, w_flat, d_flat)
    c = np.zeros(A.shape[1])
    c[-1] = 1.0
    return SDPProblem(
        blocks=blocks,
        A=A,
        b=b,
        c=c,
        input_matrix=input_matrix,
        scenario=flat.scenario,
        meta={"kind": "min_t", "cone": flat.name},
        fast_data=(flat, w_flat, d_flat),
    )


def slice_problem(
    flat, objective: ProcessOperator, normalization: ProcessOperator
) -> SDPProblem:
    """``min <objective, V>`` over members ``V`` of the flat cone with
    ``<normalization, V> = 1``; the member becomes an explicit free block."""
    from .cones import INPUT, FlatBlock, FlatCone, FlatRow

    m = flat.scenario.coeff_dim
    v_idx = len(flat.blocks)
    rewritten_rows = []
    for row in flat.rows:
        terms = tuple(
            (v_idx if idx == INPUT else idx, coeff) for idx, coeff in row.terms
        )
        rewritten_rows.append(FlatRow(terms, row.mask, row.name))
    aug = FlatCone(
        flat.scenario,
        flat.blocks + (FlatBlock("member", "free"),),
        tuple(rewritten_rows),
        flat.name,
    )
    norm_flat = normalization.coeffs().ravel()
    extra = [(((v_idx * m + np.arange(m), norm_flat),), 1.0)]
    blocks, A, b, _ = _assemble(aug, np.zeros(m), None, extra_rows=extra)
    c = np.zeros(A.shape[1])
    c[v_idx * m : (v_idx + 1) * m] = objective.coeffs().ravel()
    return SDPProblem(
        blocks=blocks,
        A=A,
        b=b,
        c=c,
        input_matrix=None,
        scenario=flat.scenario,
        meta={"kind": "slice", "cone": flat.name},
    )


def extract_dual_witness(problem: SDPProblem, sol: SDPSolution) -> ProcessOperator:
    """Map equality multipliers back to a witness operator.

    For a min-t problem the witness coefficients are the input-matrix image of
    the multipliers; its pairing with the noise direction is one by dual
    feasibility of the t column.
    """
    if problem.input_matrix is None or problem.scenario is None:
        raise SolverFailure("problem carries no input rows to extract a witness from")
    s_flat = problem.input_matrix.T @ sol.y
    coeffs = s_flat.reshape(problem.scenario.coeff_shape)
    return ProcessOperator.from_coeffs(problem.scenario, coeffs)
