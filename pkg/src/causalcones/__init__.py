"""causalcones: deciding and certifying multipartite causal (non)separability.

The package provides a labeled Hermitian operator algebra, the linear
subspaces of causal-order compatibility, convex-cone characterizations of
causal separability together with their dual witness cones, a self-contained
first-order conic solver, robustness/witness workflows, a zoo of named
process matrices, and a command-line interface.
"""

from .spaces import LabeledSpace, Role, SystemLabel
from .operators import (
    Factor,
    Instrument,
    ProcessOperator,
    TraceReplaceExpr,
    born_rule,
    conditional_matrix,
    hs_decompose,
    hs_resynthesize,
    identity_operator,
    partial_trace,
    relabel_teleport,
    tensor,
    trace_and_replace,
    white_noise,
)

__all__ = [
    "LabeledSpace",
    "Role",
    "SystemLabel",
    "Factor",
    "Instrument",
    "ProcessOperator",
    "TraceReplaceExpr",
    "born_rule",
    "conditional_matrix",
    "hs_decompose",
    "hs_resynthesize",
    "identity_operator",
    "partial_trace",
    "relabel_teleport",
    "tensor",
    "trace_and_replace",
    "white_noise",
]

__version__ = "0.1.0"
