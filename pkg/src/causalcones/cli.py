"""Command-line interface.

Subcommands: ``validate``, ``robustness``, ``witness``, ``verify-witness``,
``decompose``, ``evaluate``, ``examples``, ``sample-search``.  Exit status is
0 for definitive verdicts, 2 for undecided ones, and 1 for errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from . import models
from .errors import CausalConesError
from .operators import ProcessOperator, born_rule, hs_decompose, white_noise
from .robustness import (
    RobustnessResult,
    SolverConfig,
    check_process,
    random_robustness,
    resolve_cone,
    verify_witness,
    gap_search,
)
from .spaces import LabeledSpace
from .subspaces import validity_subspace

EXAMPLES = {
    "wact": models.activation_process,
    "sact": models.activation_witness,
    "switch4": models.switch_process,
    "trd-switch": models.traced_switch,
    "wgap": models.gap_process,
    "sgap": models.gap_witness,
}


def _apply_thread_cap() -> None:
    cap = os.environ.get("CAUSALCONES_THREADS")
    if cap:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, cap)


def _parse_scenario(text: str) -> LabeledSpace:
    """Parse ``A:2x2,B:2x2,C:2x1`` into a scenario."""
    dims = {}
    for chunk in text.split(","):
        party, _, spec = chunk.partition(":")
        d_in, _, d_out = spec.partition("x")
        dims[party.strip()] = (int(d_in), int(d_out))
    return LabeledSpace.from_party_dims(dims)


def _load_input(args: argparse.Namespace) -> ProcessOperator:
    if getattr(args, "example", None):
        if args.example not in EXAMPLES:
            raise CausalConesError(
                f"unknown example {args.example!r}; choose from {sorted(EXAMPLES)}"
            )
        return EXAMPLES[args.example]()
    if getattr(args, "input", None):
        return cio.load_operator(args.input)
    raise CausalConesError("provide --input FILE or --example NAME")


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(tol=args.tol, max_iter=args.max_iter)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(getattr(args, "out_dir", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(payload: dict, args: argparse.Namespace, name: str) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    out = _out_dir(args)
    (out / f"{name}.json").write_text(text)


def _verdict_exit(verdict: str) -> int:
    return 0 if verdict in ("separable", "nonseparable", "member", "not_member") else 2


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    w = _load_input(args)
    try:
        check_process(w, tol=args.tol * 10)
        valid = True
        message = "valid, normalized"
    except CausalConesError as exc:
        valid = False
        message = str(exc)
    payload = {
        "valid": valid,
        "message": message,
        "trace": w.trace(),
        "eigenvalue_floor": w.min_eigenvalue(),
        "validity_residual": validity_subspace(w.space).residual(w),
    }
    _emit(payload, args, "validate")
    return 0 if valid else 2


def _robustness_common(args: argparse.Namespace) -> tuple[ProcessOperator, RobustnessResult]:
    w = _load_input(args)
    res = random_robustness(w, args.cone, _solver_config(args))
    return w, res


def cmd_robustness(args: argparse.Namespace) -> int:
    _, res = _robustness_common(args)
    out = _out_dir(args)
    cio.save_result(res, out / "robustness.json", out)
    print(json.dumps({"r_star": res.r_star, "verdict": res.verdict, "cone": res.cone}, indent=2))
    return _verdict_exit(res.verdict)


def cmd_witness(args: argparse.Namespace) -> int:
    _, res = _robustness_common(args)
    out = _out_dir(args)
    if res.witness is None:
        print("solver did not produce a witness", file=sys.stderr)
        return 2
    wf = cio.save_operator(res.witness, out / "witness.json")
    payload = {
        "witness_file": str(wf),
        "pairing": res.witness_pairing,
        "r_star": res.r_star,
        "verdict": res.verdict,
    }
    _emit(payload, args, "witness-report")
    return _verdict_exit(res.verdict)


def cmd_verify_witness(args: argparse.Namespace) -> int:
    s = cio.load_operator(args.input)
    report = verify_witness(s, args.cone, _solver_config(args))
    payload = {
        "verified": report.verified,
        "margin": report.margin,
        "method": report.method,
        "tolerance": report.tolerance,
    }
    _emit(payload, args, "verify-witness")
    return 0 if report.verified else 2


def cmd_decompose(args: argparse.Namespace) -> int:
    _, res = _robustness_common(args)
    out = _out_dir(args)
    if res.decomposition is None:
        print("no decomposition: operator is outside the cone", file=sys.stderr)
        return 2
    files = []
    for i, (name, op) in enumerate(res.decomposition.components):
        f = cio.save_operator(op, out / f"component{i}.json")
        files.append({"name": name, "file": str(f), "hs_norm": op.hs_norm()})
    payload = {
        "r_star": res.r_star,
        "verdict": res.verdict,
        "components": files,
        "report": res.decomposition_report,
    }
    _emit(payload, args, "decompose")
    return _verdict_exit(res.verdict)


def cmd_evaluate(args: argparse.Namespace) -> int:
    w = _load_input(args)
    payload: dict = {"trace": w.trace(), "hs_norm": w.hs_norm()}
    if args.pair_with:
        other = cio.load_operator(args.pair_with)
        payload["pairing"] = w.hs_inner(other)
    if args.coefficients:
        payload["coefficients"] = {
            ",".join(map(str, k)): v for k, v in hs_decompose(w).items()
        }
    _emit(payload, args, "evaluate")
    return 0


def cmd_examples(args: argparse.Namespace) -> int:
    if args.list:
        print("\n".join(sorted(EXAMPLES)))
        return 0
    w = EXAMPLES[args.id]()
    path = args.out or f"{args.id}.json"
    cio.save_operator(w, path)
    print(path)
    return 0


def cmd_sample_search(args: argparse.Namespace) -> int:
    scenario = _parse_scenario(args.scenario)
    records = gap_search(
        scenario,
        n_samples=args.samples,
        seed=args.seed,
        symmetrize=tuple(args.symmetrize.split(",")) if args.symmetrize else (),
        config=_solver_config(args),
        progress=True,
    )
    out = _out_dir(args)
    cio.save_gap_csv(records, out / "gap-search.csv")
    n_candidates = 0
    for rec in records:
        if rec["candidate"]:
            cio.save_operator(rec["operator"], out / f"candidate-{rec['seed']}.json")
            n_candidates += 1
    print(f"{len(records)} samples, {n_candidates} gap candidates")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalcones",
        description="Decide and certify multipartite causal (non)separability.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser, with_input: bool = True) -> None:
        if with_input:
            p.add_argument("--input", help="operator JSON file")
            p.add_argument("--example", help="named example operator")
        p.add_argument("--cone", default="auto")
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iter", type=int, default=200_000)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("validate", help="check positivity/normalization/validity")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("robustness", help="random robustness and verdict")
    common(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("witness", help="extract the optimal witness")
    common(p)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("verify-witness", help="re-verify a stored witness")
    common(p)
    p.set_defaults(func=cmd_verify_witness)

    p = sub.add_parser("decompose", help="explicit separable decomposition")
    common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("evaluate", help="pairings and basis coefficients")
    common(p)
    p.add_argument("--pair-with", help="second operator JSON file")
    p.add_argument("--coefficients", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("examples", help="build named example operators")
    p.add_argument("id", nargs="?", help="example identifier")
    p.add_argument("--out", default=None)
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_examples)

    p = sub.add_parser("sample-search", help="inner-vs-outer gap search")
    common(p, with_input=False)
    p.add_argument("--scenario", required=True, help="e.g. A:1x2,B:2x2,C:2x2,D:2x2")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--symmetrize", default="")
    p.set_defaults(func=cmd_sample_search)

    return parser


def main(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CausalConesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
