"""Potential-based gas network flows.

Stationary flows obey the arc law beta * x * |x| = pi_tail - pi_head and
are computed by a Newton solver on the concave dual of the resistance-cost
problem.  Multi-stage flows (sequences of stationary flows whose balances
accumulate to a target) are verified exactly and searched heuristically.
The reduction subpackage builds two-stage balance instances that encode
exact-cover questions.
"""

from ._kernels import NUMBA_ENABLED
from .errors import (
    DecodeError,
    DomainError,
    GasnetError,
    NoFeasiblePoint,
    NonConvergence,
    SchemaError,
    SizeLimit,
    ValidationError,
    ZeroFlow,
)
from .gallery import (
    Example3Params,
    gen_example1,
    gen_example2,
    gen_example2_instationary,
    gen_example3,
    gen_serial,
    serial_instationary_stages,
)
from .kstage import (
    KStageFlow,
    KStageReport,
    SearchConfig,
    average_potential_construction,
    build_kstage,
    grid_oracle_kstage,
    search_kstage_b_feasible,
    search_kstage_max_st,
    stationary_repetition,
    verify_kstage,
)
from .maxflow import MaxFlowResult, max_stationary_st_flow, st_potential_gap
from .network import (
    Arc,
    GasNetwork,
    PotentialInterval,
    build_network,
    parse_network,
    serialize_network,
)
from .reduction import (
    ReducedInstance,
    X3CInstance,
    attach_binary_decision,
    attach_fixed_potential,
    decode_cover,
    encode_cover,
    make_x3c,
    reduce_x3c,
    solve_x3c_bruteforce,
)
from .stationary import (
    SolverConfig,
    StationarySolution,
    check_feasibility,
    dual_objective,
    primal_objective,
    solve_b_flow,
    translate_potentials,
)
from .weymouth import (
    arc_flow,
    induced_flow,
    induced_imbalance,
    potential_drop,
    signed_sqrt,
)

__version__ = "0.1.0"
