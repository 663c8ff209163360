"""Douglas-Rachford splitting with primal-dual bookkeeping, cone feasibility
support identification, the ADMM-equivalent constrained form and
error-bound diagnostics."""

from . import conic, constrained, diagnostics, dr_core, prox_catalog
from .dr_core import DRState, DRTrace, StopRule, dr_operator, dual_swap_run, run

__version__ = "0.1.0"

__all__ = [
    "conic",
    "constrained",
    "diagnostics",
    "dr_core",
    "prox_catalog",
    "DRState",
    "DRTrace",
    "StopRule",
    "dr_operator",
    "dual_swap_run",
    "run",
]
