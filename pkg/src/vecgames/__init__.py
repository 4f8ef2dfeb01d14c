"""Repeated games with vector payoffs and adaptive linear scalarization.

The library models preference cones and their dual-cone scalarizations,
normal-form games with vector payoffs, bandit learners built from IX loss
estimates and entropy mirror steps, the two-timescale block protocol that
selects a deployed scalarization while learning actions under it, offline
regret audits against finite-time bounds, and a seeded experiment harness
with a CLI.
"""

from .bandit_core import (
    LearnerState,
    SimplexPoint,
    expix_step,
    ix_estimate,
    omd_entropy_step,
    sample,
)
from .bilevel import (
    BilevelState,
    BlockSchedule,
    ExpIXOpponentEnv,
    FixedOpponentEnv,
    RunHistory,
    block_indices,
    env_step,
    inner_alg,
    outer_alg,
    simulate_run,
)
from .cones import (
    PolyhedralCone,
    WeightVector,
    check_dual_membership,
    cone_contains,
    cone_order_leq,
    cone_order_strict,
    dual_contains,
    normalize_weight,
    orthant,
    scalarize,
    weight_grid,
)
from .config import ExperimentConfig, build_config, default_config, load_config
from .games import (
    ScalarGame,
    VectorGame,
    average_payoff,
    bos4d,
    certify_prop1_inclusion,
    is_weak_nash,
    payoff,
    pure_nash,
    scalarized_game,
)
from .harness import (
    OutcomeHistogram,
    RunRecord,
    classify_outcome,
    derive_run_seed,
    emit_report,
    moving_average,
    run_scenario,
)
from .regret_audit import (
    BoundViolation,
    RegretReport,
    audit_run,
    bilevel_regret,
    inner_block_regret,
    inner_hindsight,
    outer_regret,
    verify_omd_lemma,
)

__version__ = "0.1.0"
