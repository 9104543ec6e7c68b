"""Extinction probabilities and fixed points of shift-invariant infinite-type branching processes."""

from .construct import (
    Candidate,
    FamilyReport,
    ScanParams,
    TailSeed,
    build_ladder,
    construct_fixed_point,
    crossing_scan,
    detect_ladder_start,
    family,
    pinned_tail_picard,
)
from .errors import (
    BracketError,
    NoConvergence,
    NoRootInRegime,
    NotFound,
    ParseError,
    QuadratureError,
    RegimeError,
    ShiftBPError,
    ValidationError,
)
from .genfun import (
    UVector,
    eval_pgf,
    eval_survival_map,
    ratio_diag,
    remainder_coeff,
    remainder_identity_check,
    residuals,
)
from .law import OffspringLaw, a1_oracle, check_assumptions, load_law, make_law, moments
from .roots import solve_decay_rate, solve_extinction, solve_prepend
from .simulate import SimConfig, estimate_extinction, merge_estimates, parse_typeset, run_trial

__version__ = "0.1.0"
