"""Robustness workflows: membership, witnesses, decompositions, verdicts.

The central quantity is the random robustness of a process ``W`` with respect
to a cone ``C``: the least ``t`` such that ``W + t * noise`` lies in ``C``,
where ``noise`` is the white-noise process.  A strictly positive robustness
certifies non-membership (via a dual witness); a non-positive one certifies
membership (via an explicit conic decomposition).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cones import (
    ConeSpec,
    FlatCone,
    SepDecomposition,
    dual_cone,
    exact_cone,
    necessary_cone,
    sufficient_cone,
)
from .errors import BadParams, InvalidProcess
from .operators import ProcessOperator, identity_operator, white_noise
from .solver import (
    SDPSolution,
    SolverConfig,
    extract_dual_witness,
    min_t_problem,
    slice_problem,
    solve,
)
from .spaces import LabeledSpace, Role
from .subspaces import validity_subspace

__all__ = [
    "RobustnessResult",
    "WitnessReport",
    "check_process",
    "resolve_cone",
    "random_robustness",
    "find_witness",
    "verify_witness",
    "duality_gap_report",
    "membership",
    "gap_search",
]

#: A robustness above this threshold, backed by a verified witness, yields the
#: "nonseparable" verdict.
NONSEP_THRESHOLD = 1e-6

#: Extra white-noise weight granted when certifying a separable decomposition.
SEP_SLACK = 1e-9


@dataclass
class WitnessReport:
    verified: bool
    margin: float
    method: str
    tolerance: float


@dataclass
class RobustnessResult:
    r_star: float
    verdict: str
    cone: str
    status: str
    iterations: int
    cone_membership: str = "undecided"
    witness: ProcessOperator | None = None
    witness_pairing: float | None = None
    witness_report: WitnessReport | None = None
    decomposition: SepDecomposition | None = None
    decomposition_report: dict | None = None
    residuals: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def check_process(w: ProcessOperator, tol: float = 1e-7) -> None:
    """Raise :class:`~causalcones.errors.InvalidProcess` unless ``w`` is a
    positive, normalized, valid process matrix."""
    scale = max(w.hs_norm(), 1.0)
    floor = w.min_eigenvalue()
    if floor < -tol * scale:
        raise InvalidProcess(f"operator is not positive (eigenvalue floor {floor:g})")
    d_out = 1
    for s in w.space.systems:
        if s.role is Role.OUT:
            d_out *= s.dim
    if abs(w.trace() - d_out) > tol * max(d_out, 1.0):
        raise InvalidProcess(
            f"trace {w.trace():g} differs from the required {d_out}"
        )
    resid = validity_subspace(w.space).residual(w)
    if resid > tol * scale:
        raise InvalidProcess(f"validity residual {resid:g} exceeds tolerance")


def resolve_cone(
    scenario: LabeledSpace, cone: str | ConeSpec | FlatCone = "auto"
) -> ConeSpec | FlatCone:
    """Turn a cone selector into a cone object.

    ``"auto"`` picks the exact characterization and refuses scenarios without
    one; ``"necessary"`` / ``"sufficient"`` pick the outer / inner
    approximations; ``"bipartite"``, ``"tripartite"``, ``"b1"`` ... ``"b5"``
    force a specific exact construction; ``"fixed-order:A<B<..."`` selects the
    fixed-order cone of one chain; cone objects pass through.
    """
    from .cones import (
        bipartite_sep_cone,
        fixed_order_cone,
        restricted_cones,
        tripartite_sep_cone,
    )

    if isinstance(cone, (ConeSpec, FlatCone)):
        return cone
    if cone == "auto":
        return exact_cone(scenario)
    if cone == "necessary":
        return necessary_cone(scenario)
    if cone == "sufficient":
        return sufficient_cone(scenario)
    if cone == "bipartite":
        return bipartite_sep_cone(scenario)
    if cone == "tripartite":
        return tripartite_sep_cone(scenario)
    if cone in ("b1", "b2", "b4", "b5"):
        built = restricted_cones(scenario)
        if built.name != cone:
            raise BadParams(
                f"scenario's trivial-dimension pattern gives {built.name!r}, "
                f"not {cone!r}"
            )
        return built
    if cone.startswith("fixed-order:"):
        chain = cone.split(":", 1)[1].split("<")
        return fixed_order_cone(scenario, chain)
    raise BadParams(f"unknown cone selector {cone!r}")


def _cone_kind(name: str) -> str:
    """Classify a cone by its name: exact, outer (necessary), or inner."""
    if name == "necessary":
        return "outer"
    if name == "sufficient" or name.startswith("fixed:"):
        return "inner"
    return "exact"


def _decomposition_from_solution(
    flat: FlatCone, sol: SDPSolution, problem
) -> SepDecomposition:
    values = sol.block_values(problem)
    comps = []
    for idx in flat.component_blocks:
        op = ProcessOperator.from_coeffs(
            flat.scenario, values[idx].reshape(flat.scenario.coeff_shape)
        )
        comps.append((flat.blocks[idx].name, op))
    by_block = {i: name for i, name in ((i, flat.blocks[i].name) for i in flat.component_blocks)}
    constraints = tuple(
        (by_block[i], expr)
        for i, expr in flat.block_constraints
        if i in by_block
    )
    return SepDecomposition(tuple(comps), constraints)


def random_robustness(
    w: ProcessOperator,
    cone: str | ConeSpec | FlatCone = "auto",
    config: SolverConfig = SolverConfig(),
    certify: bool = True,
    precheck: bool = True,
) -> RobustnessResult:
    """Compute the random robustness of ``w`` in ``cone`` and certify the
    resulting verdict.

    With ``certify`` enabled, a positive robustness is backed by an
    independently re-verified dual witness, and a non-positive one by an
    explicit decomposition re-checked against ``w`` plus a whisker of noise.
    """
    if precheck:
        check_process(w)
    cone_obj = resolve_cone(w.space, cone)
    flat = cone_obj.flatten()
    noise = white_noise(w.space)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    problem = min_t_problem(flat, w, noise)
    timings["assemble"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sol = solve(problem, config)
    timings["solve"] = time.perf_counter() - t0

    r_star = sol.objective
    result = RobustnessResult(
        r_star=r_star,
        verdict="undecided",
        cone=flat.name,
        status=sol.status,
        iterations=sol.iterations,
        residuals={
            "primal": sol.primal_residual,
            "dual": sol.dual_residual,
            "equality": sol.equality_residual,
            "gap": sol.gap,
        },
        timings=timings,
    )
    if sol.status != "Optimal":
        return result

    witness = extract_dual_witness(problem, sol)
    result.witness = witness
    result.witness_pairing = witness.hs_inner(w)
    kind = _cone_kind(flat.name)

    if r_star > NONSEP_THRESHOLD:
        if certify:
            t0 = time.perf_counter()
            result.witness_report = verify_witness(
                witness, cone_obj, config=config
            )
            timings["verify_witness"] = time.perf_counter() - t0
            if result.witness_report.verified:
                result.cone_membership = "not_member"
        else:
            result.cone_membership = "not_member"
        if result.cone_membership == "not_member" and kind in ("exact", "outer"):
            result.verdict = "nonseparable"
        return result

    # Non-positive robustness: certify membership of w plus a whisker of noise.
    t_cert = max(r_star, 0.0) + SEP_SLACK
    decomp = _decomposition_from_solution(flat, sol, problem)
    t_sol = sol.z[-1]
    comps = list(decomp.components)
    name0, op0 = comps[0]
    comps[0] = (name0, op0 + noise * (t_cert - t_sol))
    decomp = SepDecomposition(tuple(comps), decomp.constraints)
    result.decomposition = decomp
    if certify:
        target = w + noise * t_cert
        tol = max(10.0 * config.tol, 1e-7)
        report = decomp.verify(target, tol=tol)
        result.decomposition_report = report
        if report["ok"]:
            result.cone_membership = "member"
    else:
        result.cone_membership = "member"
    if result.cone_membership == "member" and kind in ("exact", "inner"):
        result.verdict = "separable"
    return result


def find_witness(
    w: ProcessOperator,
    cone: str | ConeSpec | FlatCone = "auto",
    config: SolverConfig = SolverConfig(),
) -> tuple[ProcessOperator, float]:
    """Return the optimal witness for ``w`` and its pairing ``<S, w>``.

    The witness is normalized against white noise (``<S, noise> = 1``) and
    pairs with ``w`` to minus the robustness.
    """
    res = random_robustness(w, cone, config, certify=False, precheck=False)
    if res.witness is None:
        raise BadParams("solver did not converge; no witness available")
    return res.witness, res.witness_pairing


def verify_witness(
    s: ProcessOperator,
    cone: str | ConeSpec | FlatCone = "auto",
    config: SolverConfig = SolverConfig(),
    tol: float = 1e-6,
) -> WitnessReport:
    """Independently verify that ``s`` is a valid witness for ``cone``, i.e.
    that it pairs non-negatively with every member.

    Tree cones are checked by membership of ``s`` in the structural dual cone;
    natively flat cones by minimizing ``<s, V>`` over normalized members ``V``.
    """
    cone_obj = resolve_cone(s.space, cone)
    if isinstance(cone_obj, ConeSpec):
        dual_flat = dual_cone(cone_obj).flatten()
        ident = identity_operator(s.space)
        direction = ident * (1.0 / ident.trace())
        problem = min_t_problem(dual_flat, s, direction)
        sol = solve(problem, config)
        margin = -sol.objective
        return WitnessReport(
            verified=bool(sol.status == "Optimal" and sol.objective <= tol),
            margin=float(margin),
            method="dual-membership",
            tolerance=tol,
        )
    flat = cone_obj.flatten()
    problem = slice_problem(flat, s, white_noise(s.space))
    sol = solve(problem, config)
    return WitnessReport(
        verified=bool(sol.status == "Optimal" and sol.objective >= -tol),
        margin=float(sol.objective),
        method="primal-slice",
        tolerance=tol,
    )


def duality_gap_report(
    w: ProcessOperator,
    cone: str | ConeSpec | FlatCone = "auto",
    config: SolverConfig = SolverConfig(),
) -> dict:
    """Solve the robustness problem and report the strong-duality defect
    ``|r* + <S, w>|`` relative to ``1 + |r*|``."""
    res = random_robustness(w, cone, config, certify=False, precheck=False)
    defect = abs(res.r_star + (res.witness_pairing or np.nan))
    return {
        "r_star": res.r_star,
        "witness_pairing": res.witness_pairing,
        "defect": defect,
        "relative_defect": defect / (1.0 + abs(res.r_star)),
        "status": res.status,
        "iterations": res.iterations,
    }


def membership(
    w: ProcessOperator,
    cone: str | ConeSpec | FlatCone = "auto",
    config: SolverConfig = SolverConfig(),
) -> tuple[str, object]:
    """Convenience wrapper: ``("member", decomposition)``,
    ``("not_member", witness)``, or ``("undecided", result)``."""
    res = random_robustness(w, cone, config)
    if res.cone_membership == "member":
        return "member", res.decomposition
    if res.cone_membership == "not_member":
        return "not_member", res.witness
    return "undecided", res


def gap_search(
    scenario: LabeledSpace,
    n_samples: int,
    seed: int = 0,
    symmetrize: tuple[str, ...] = (),
    config: SolverConfig = SolverConfig(tol=1e-7),
    gap_threshold: float = 1e-4,
    progress: bool = False,
) -> list[dict]:
    """Compare inner and outer robustness on random processes.

    For each sample the robustness is computed in the outer (necessary) cone,
    giving ``r_plus``, and in the inner (sufficient) cone, giving ``r_minus``;
    ``r_plus <= r_minus`` always, and any sample where they differ by more
    than ``gap_threshold`` is a candidate for lying strictly between the
    cones.  Returns one record per sample with keys ``seed``, ``r_plus``,
    ``r_minus``, ``gap``, ``status``, ``candidate``, and the sampled operator.
    """
    from .models import sample_random_process

    outer = necessary_cone(scenario)
    inner = sufficient_cone(scenario)
    records: list[dict] = []
    for i in range(n_samples):
        sample_seed = seed + i
        rng = np.random.default_rng(sample_seed)
        w = sample_random_process(scenario, rng, symmetrize=symmetrize)
        res_out = random_robustness(
            w, outer, config, certify=False, precheck=False
        )
        res_in = random_robustness(
            w, inner, config, certify=False, precheck=False
        )
        ok = res_out.status == "Optimal" and res_in.status == "Optimal"
        gap = res_in.r_star - res_out.r_star
        records.append(
            {
                "seed": sample_seed,
                "r_plus": res_out.r_star,
                "r_minus": res_in.r_star,
                "gap": gap,
                "status": "ok" if ok else "non-optimal",
                "candidate": bool(ok and abs(gap) > gap_threshold),
                "operator": w,
            }
        )
        if progress:
            print(
                f"sample {sample_seed}: r+ {res_out.r_star:.6f} "
                f"r- {res_in.r_star:.6f} gap {gap:.2e}",
                flush=True,
            )
    return records
