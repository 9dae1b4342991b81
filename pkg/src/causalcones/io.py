"""Serialization: operators, subspaces, results, problems, and CSV reports.

Operators are stored as JSON with an explicit system list and row-major real
and imaginary parts at 17 significant digits, which round-trips IEEE doubles
exactly.  Solver problems export as sparse triplets so they can be re-solved
by any external conic solver.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import BadParams, DimensionMismatch, NotNormalized
from .operators import ProcessOperator
from .spaces import LabeledSpace, Role, SystemLabel

__all__ = [
    "operator_to_json",
    "operator_from_json",
    "save_operator",
    "load_operator",
    "save_result",
    "save_gap_csv",
    "save_problem_triplets",
    "load_problem_triplets",
]

_DIGITS = 17


def _fmt(x: float) -> float:
    # json round-trips doubles exactly via repr; keep plain floats.
    return float(x)


def operator_to_json(w: ProcessOperator) -> dict[str, Any]:
    """JSON-serializable form of an operator: labeled systems plus row-major
    real and imaginary entries."""
    return {
        "systems": [
            {"party": s.party, "role": s.role.value, "tag": s.tag, "dim": s.dim}
            for s in w.space.systems
        ],
        "re": [[_fmt(v) for v in row] for row in w.matrix.real],
        "im": [[_fmt(v) for v in row] for row in w.matrix.imag],
    }


def operator_from_json(data: dict[str, Any]) -> ProcessOperator:
    """Rebuild an operator; enforces canonical system ordering and Hermiticity
    (reporting the largest asymmetry on failure)."""
    try:
        systems = [
            SystemLabel(d["party"], Role(d["role"]), int(d["dim"]), d.get("tag", ""))
            for d in data["systems"]
        ]
        mat = np.array(data["re"], dtype=float) + 1j * np.array(
            data["im"], dtype=float
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadParams(f"malformed operator JSON: {exc}") from exc
    dim = int(np.prod([s.dim for s in systems]))
    if mat.shape != (dim, dim):
        raise DimensionMismatch(
            f"matrix shape {mat.shape} does not match system dims (total {dim})"
        )
    asym = float(np.abs(mat - mat.conj().T).max())
    if asym > 1e-9 * max(1.0, float(np.abs(mat).max())):
        raise NotNormalized(f"matrix is not Hermitian (max asymmetry {asym:g})")
    return ProcessOperator.from_system_order(systems, mat)


def save_operator(w: ProcessOperator, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(operator_to_json(w)))
    return path


def load_operator(path: str | Path) -> ProcessOperator:
    return operator_from_json(json.loads(Path(path).read_text()))


def save_result(result, path: str | Path, out_dir: str | Path | None = None) -> Path:
    """Write a robustness result as JSON, spilling the witness and the
    decomposition components to sibling operator files."""
    path = Path(path)
    out_dir = Path(out_dir) if out_dir is not None else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    witness_file = None
    if result.witness is not None:
        witness_file = str(save_operator(result.witness, out_dir / f"{path.stem}.witness.json"))
    decomposition_files = []
    if result.decomposition is not None:
        for i, (name, op) in enumerate(result.decomposition.components):
            f = out_dir / f"{path.stem}.component{i}.json"
            save_operator(op, f)
            decomposition_files.append({"name": name, "file": str(f)})
    payload = {
        "r_star": _fmt(result.r_star),
        "verdict": result.verdict,
        "cone_membership": result.cone_membership,
        "witness_file": witness_file,
        "witness_pairing": result.witness_pairing,
        "decomposition_files": decomposition_files,
        "residuals": {k: _fmt(v) for k, v in result.residuals.items()},
        "cone": result.cone,
        "status": result.status,
        "iterations": result.iterations,
        "timings": {k: _fmt(v) for k, v in result.timings.items()},
    }
    path.write_text(json.dumps(payload, indent=2))
    return path


def save_gap_csv(records: Sequence[dict], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "r_plus", "r_minus", "gap", "status"])
        for rec in records:
            writer.writerow(
                [
                    rec["seed"],
                    repr(rec["r_plus"]),
                    repr(rec["r_minus"]),
                    repr(rec["gap"]),
                    rec["status"],
                ]
            )
    return path


def save_problem_triplets(problem, path: str | Path) -> Path:
    """Export a conic problem as JSON sparse triplets: block structure, the
    equality system ``A x = b`` in COO form, and the objective ``c``."""
    path = Path(path)
    coo = problem.A.tocoo()
    payload = {
        "blocks": [
            {"kind": kind, "spec": list(spec) if kind == "psd" else int(spec)}
            for kind, spec in problem.blocks
        ],
        "A": {
            "shape": list(coo.shape),
            "rows": coo.row.tolist(),
            "cols": coo.col.tolist(),
            "vals": [_fmt(v) for v in coo.data],
        },
        "b": [_fmt(v) for v in problem.b],
        "c": [_fmt(v) for v in problem.c],
        "meta": problem.meta,
    }
    path.write_text(json.dumps(payload))
    return path


def load_problem_triplets(path: str | Path):
    """Rebuild a solvable problem from exported triplets."""
    import scipy.sparse as sp

    from .solver import SDPProblem

    data = json.loads(Path(path).read_text())
    shape = tuple(data["A"]["shape"])
    A = sp.csr_matrix(
        (data["A"]["vals"], (data["A"]["rows"], data["A"]["cols"])), shape=shape
    )
    blocks = [
        (d["kind"], tuple(d["spec"]) if d["kind"] == "psd" else int(d["spec"]))
        for d in data["blocks"]
    ]
    return SDPProblem(
        blocks=blocks,
        A=A,
        b=np.array(data["b"], dtype=float),
        c=np.array(data["c"], dtype=float),
        meta=data.get("meta", {}),
    )
