"""kgravity: a deterministic epistemic knowledge-graph engine.

Typed knowledge objects with class-specific importance dynamics, signed
contradiction propagation, fixed-point convergence analysis, memory-zone
allocation, and hybrid epistemic retrieval.
"""

from .model import (
    CLASS_PROFILES,
    EDGE_COEFFICIENTS,
    SIMULATION_LAMBDAS,
    ClassProfile,
    DecayKind,
    Edge,
    EdgeType,
    EpistemicClass,
    GraphSnapshot,
    KnowledgeObject,
    Koc,
    MemoryZone,
    ModelError,
    PairAdequacy,
    ScoreVector,
    class_profile,
    edge_coefficient,
    koc_similarity,
    simulation_profile,
    taxonomy_adequacy_report,
    zone_for,
)
from .engine import (
    EngineError,
    EngineParams,
    ForceBreakdown,
    contradiction_penalty,
    evidence_force,
    fixed_point,
    gravity_force,
    kge_step,
    kge_update,
    question_urgency,
    run_cycle,
    usage_force,
)
from .dynamics import (
    ConvergenceReport,
    T2Report,
    TrajectoryPoint,
    conservatism_sweep,
    diagonal_range,
    empirical_convergence,
    gershgorin_check,
    random_graph,
    simulate_trajectory,
    sufficient_condition_sweep,
    verify_t2,
)
from .retrieval import (
    Query,
    RankedResult,
    RetrievalError,
    RetrievalWeights,
    contextual_attention,
    hybrid_score,
    k_eff,
    rank,
    semantic_sim,
    structural_sim,
    topological_sim,
)
from .store import (
    CorpusStore,
    EventKind,
    EventRecord,
    ReplayError,
    ValidationError,
    append_events,
    load_corpus,
    read_corpus,
    read_events,
    write_corpus,
)

__version__ = "0.1.0"
