"""Core domain model: knowledge objects, the epistemic taxonomy, coordinates,
typed edges, score vectors, and memory zones.

Everything here is an immutable value. Score updates happen in the engine,
which produces fresh objects rather than mutating existing ones, so snapshots
can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Sequence


class ModelError(ValueError):
    """A domain-model contract violation (bad class, bad coordinate, bad edge)."""


class EpistemicClass(Enum):
    """The closed nine-class taxonomy. No user-defined classes exist."""

    DECISION = "DECISION"
    CONSTRAINT = "CONSTRAINT"
    EVIDENCE = "EVIDENCE"
    NARRATIVE = "NARRATIVE"
    PLAN = "PLAN"
    EVALUATION = "EVALUATION"
    OBSERVATION = "OBSERVATION"
    HYPOTHESIS = "HYPOTHESIS"
    QUESTION = "QUESTION"


class DecayKind(Enum):
    NONE = "NONE"
    EXPONENTIAL = "EXPONENTIAL"
    INVERSE = "INVERSE"


@dataclass(frozen=True)
class ClassProfile:
    """Per-class scoring constants.

    ``lambda_per_day`` is the authoritative decay rate used by the engine;
    ``half_life_days`` is documentation only and is never used in computation
    (the two are not mutually consistent for every class, and the stored rate
    wins).

    ``role`` is a short semantic-role tag; it exists so that taxonomy
    adequacy ("every class pair differs on at least two features") is
    mechanically checkable.
    """

    cls: EpistemicClass
    seed_k: float
    decay_kind: DecayKind
    lambda_per_day: float
    half_life_days: float | None
    role: str


def _exp_lambda(half_life_days: float) -> float:
    return math.log(2.0) / half_life_days


#: Operational profiles. Seeds and half-lives are working heuristics; for the
#: exponential classes the decay rate is derived once from the nominal
#: half-life and then stored as the authoritative value.
CLASS_PROFILES: dict[EpistemicClass, ClassProfile] = {
    p.cls: p
    for p in (
        ClassProfile(EpistemicClass.DECISION, 1.00, DecayKind.NONE, 0.0, None,
                     "revocable binding choice"),
        ClassProfile(EpistemicClass.CONSTRAINT, 0.90, DecayKind.NONE, 0.0, None,
                     "structural boundary"),
        ClassProfile(EpistemicClass.EVIDENCE, 0.80, DecayKind.EXPONENTIAL,
                     _exp_lambda(365.0), 365.0, "verifiable supporting data"),
        ClassProfile(EpistemicClass.NARRATIVE, 0.70, DecayKind.NONE, 0.0, None,
                     "persistent contextual anchor"),
        ClassProfile(EpistemicClass.PLAN, 0.65, DecayKind.EXPONENTIAL,
                     _exp_lambda(69.0), 69.0, "timed structured intention"),
        ClassProfile(EpistemicClass.EVALUATION, 0.55, DecayKind.EXPONENTIAL,
                     _exp_lambda(198.0), 198.0, "qualitative assessment"),
        ClassProfile(EpistemicClass.OBSERVATION, 0.40, DecayKind.EXPONENTIAL,
                     _exp_lambda(90.0), 90.0, "uninterpreted signal"),
        ClassProfile(EpistemicClass.HYPOTHESIS, 0.30, DecayKind.EXPONENTIAL,
                     _exp_lambda(50.0), 50.0, "unverified testable claim"),
        ClassProfile(EpistemicClass.QUESTION, 0.30, DecayKind.INVERSE,
                     -0.010, None, "open unknown requiring resolution"),
    )
}

#: Decay rates for the simulation preset. Five classes carry the reference
#: trajectory rates; the remaining four fall back to their operational rates (only the extremes matter for the contraction-diagonal
#: range, and those are OBSERVATION and QUESTION).
SIMULATION_LAMBDAS: dict[EpistemicClass, float] = {
    EpistemicClass.QUESTION: -0.010,
    EpistemicClass.OBSERVATION: 0.015,
    EpistemicClass.EVIDENCE: 0.005,
    EpistemicClass.HYPOTHESIS: 0.008,
    EpistemicClass.DECISION: 0.002,
    EpistemicClass.CONSTRAINT: 0.0,
    EpistemicClass.NARRATIVE: 0.0,
    EpistemicClass.PLAN: _exp_lambda(69.0),
    EpistemicClass.EVALUATION: _exp_lambda(198.0),
}


def class_profile(cls: EpistemicClass) -> ClassProfile:
    """Total lookup: every class has exactly one profile."""
    return CLASS_PROFILES[cls]


def simulation_profile(cls: EpistemicClass) -> ClassProfile:
    """The class profile with its decay rate replaced by the simulation value."""
    base = CLASS_PROFILES[cls]
    return ClassProfile(base.cls, base.seed_k, base.decay_kind,
                        SIMULATION_LAMBDAS[cls], base.half_life_days, base.role)


# ---------------------------------------------------------------------------
# Coordinates
# ---------------------------------------------------------------------------

KOC_AXES = ("entity", "domain", "cls", "epoch", "depth", "author", "variant")


@dataclass(frozen=True)
class Koc:
    """Seven-axis structural coordinate, assigned at ingestion and immutable.

    Axis values are opaque case-sensitive tokens compared by exact match;
    the class axis is the knowledge object's epistemic class.
    """

    entity: str
    domain: str
    cls: EpistemicClass
    epoch: str
    depth: str
    author: str
    variant: str

    def __post_init__(self) -> None:
        for axis in KOC_AXES:
            value = getattr(self, axis)
            if axis == "cls":
                if not isinstance(value, EpistemicClass):
                    raise ModelError(f"koc class axis must be an EpistemicClass, got {value!r}")
            elif not isinstance(value, str) or not value:
                raise ModelError(f"koc axis {axis!r} must be a non-empty token")

    def axes(self) -> tuple[str, ...]:
        """Axis values in canonical order, class rendered by name."""
        return (self.entity, self.domain, self.cls.value,
                self.epoch, self.depth, self.author, self.variant)


def koc_similarity(a: Koc, b: Koc, weights: Sequence[float] | None = None) -> float:
    """Weighted sum of exact axis matches, normalized to [0, 1].

    Uniform weights (1/7 each) by default. O(1): no store access, symmetric,
    and exactly 1.0 for identical coordinates (the matched weight is divided
    by the total weight, sidestepping float drift in the weight sum).
    """
    if weights is None:
        weights = UNIFORM_KOC_WEIGHTS
    elif len(weights) != 7:
        raise ModelError(f"expected 7 axis weights, got {len(weights)}")
    total = math.fsum(weights)
    if total <= 0:
        raise ModelError("axis weights must have a positive sum")
    matched = math.fsum(w for w, x, y in zip(weights, a.axes(), b.axes()) if x == y)
    return matched / total


UNIFORM_KOC_WEIGHTS: tuple[float, ...] = (1.0 / 7.0,) * 7


# ---------------------------------------------------------------------------
# Edges
# ---------------------------------------------------------------------------

class EdgeType(Enum):
    SUPPORTS = "SUPPORTS"
    BASED_ON = "BASED_ON"
    IMPLEMENTS = "IMPLEMENTS"
    SUPERSEDES = "SUPERSEDES"
    REFINES = "REFINES"
    DERIVES_FROM = "DERIVES_FROM"
    ENABLES = "ENABLES"
    PRECEDES = "PRECEDES"
    BLOCKS = "BLOCKS"
    CONTRADICTS = "CONTRADICTS"


#: Closed vocabulary with fixed signed coefficients. Positive edges propagate
#: importance; negative edges suppress it. CONTRADICTS is deliberately -0.6
#: rather than -1.0: contradicted knowledge is demoted, not erased.
EDGE_COEFFICIENTS: dict[EdgeType, float] = {
    EdgeType.SUPPORTS: 1.0,
    EdgeType.BASED_ON: 0.8,
    EdgeType.IMPLEMENTS: 0.7,
    EdgeType.SUPERSEDES: 0.6,
    EdgeType.REFINES: 0.5,
    EdgeType.DERIVES_FROM: 0.5,
    EdgeType.ENABLES: 0.4,
    EdgeType.PRECEDES: 0.3,
    EdgeType.BLOCKS: -0.4,
    EdgeType.CONTRADICTS: -0.6,
}

NEGATIVE_EDGE_TYPES = frozenset({EdgeType.BLOCKS, EdgeType.CONTRADICTS})


def edge_coefficient(edge_type: EdgeType) -> float:
    return EDGE_COEFFICIENTS[edge_type]


@dataclass(frozen=True)
class Edge:
    """Directed typed relationship: source acts on target.

    ``created_at`` (integer UTC seconds) drives the per-cycle "new inbound
    support" counting window.
    """

    source_id: str
    target_id: str
    edge_type: EdgeType
    created_at: int

    def __post_init__(self) -> None:
        if self.source_id == self.target_id:
            raise ModelError(f"self-loop edge on {self.source_id!r}")

    @property
    def coefficient(self) -> float:
        return EDGE_COEFFICIENTS[self.edge_type]


# ---------------------------------------------------------------------------
# Scores and zones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreVector:
    """Five-component score state, each component in [0, 1].

    Only ``k`` and ``urgency`` have update dynamics; confidence, freshness,
    and contradiction are stored at ingestion and carried through unchanged.
    """

    k: float
    confidence: float = 1.0
    freshness: float = 1.0
    urgency: float = 0.0
    contradiction: float = 0.0

    def __post_init__(self) -> None:
        for name in ("k", "confidence", "freshness", "urgency", "contradiction"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ModelError(f"score component {name}={v!r} outside [0, 1]")


class MemoryZone(IntEnum):
    """Retrieval-eligibility bands over the k-score, ordered by importance."""

    DORMANT = 0
    PERIPHERAL = 1
    WORKING = 2
    CORE = 3


def zone_for(k: float) -> MemoryZone:
    """Allocate a k-score to its memory zone.

    Bands are lower-inclusive: CORE k >= 0.40, WORKING [0.10, 0.40),
    PERIPHERAL [0.05, 0.10), DORMANT below 0.05.
    """
    if not (0.0 <= k <= 1.0):
        raise ModelError(f"k={k!r} outside [0, 1]; scores are clamped upstream")
    if k >= 0.40:
        return MemoryZone.CORE
    if k >= 0.10:
        return MemoryZone.WORKING
    if k >= 0.05:
        return MemoryZone.PERIPHERAL
    return MemoryZone.DORMANT


# ---------------------------------------------------------------------------
# Knowledge objects and snapshots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnowledgeObject:
    """A typed epistemic unit. Never deleted; it only moves between zones.

    ``retrieved_at`` holds the retrieval timestamps feeding the usage force.
    ``stakes`` and ``resolved`` are only meaningful for QUESTION objects.
    ``embedding`` and ``anchors`` are supplied at ingestion; the engine never
    computes embeddings.
    """

    id: str
    koc: Koc
    cls: EpistemicClass
    content: str
    scores: ScoreVector
    created_at: int
    retrieved_at: tuple[int, ...] = ()
    resolved: bool = False
    stakes: float = 0.0
    anchors: frozenset[str] = frozenset()
    embedding: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.cls is not self.koc.cls:
            raise ModelError(
                f"ko {self.id!r}: class {self.cls.value} does not match "
                f"coordinate class {self.koc.cls.value}")
        if not (0.0 <= self.stakes <= 1.0):
            raise ModelError(f"ko {self.id!r}: stakes {self.stakes!r} outside [0, 1]")
        if self.resolved and self.cls is not EpistemicClass.QUESTION:
            raise ModelError(f"ko {self.id!r}: only QUESTION objects can be resolved")
        if self.scores.urgency > 0 and self.cls is not EpistemicClass.QUESTION:
            raise ModelError(f"ko {self.id!r}: urgency is a QUESTION-only score")

    @property
    def zone(self) -> MemoryZone:
        return zone_for(self.scores.k)

    @property
    def dormant(self) -> bool:
        return self.zone is MemoryZone.DORMANT


@dataclass(frozen=True)
class GraphSnapshot:
    """Immutable view of all knowledge objects and edges at a cycle boundary.

    ``cycle_at`` is the timestamp of the cycle that produced this snapshot
    (None before the first cycle); it is the lower bound of the next cycle's
    "new edge" window.
    """

    kos: dict[str, KnowledgeObject] = field(default_factory=dict)
    edges: tuple[Edge, ...] = ()
    cycle_at: int | None = None

    def validate(self) -> None:
        """Raise if any edge endpoint is missing (store corruption)."""
        for e in self.edges:
            if e.source_id not in self.kos or e.target_id not in self.kos:
                raise ModelError(
                    f"dangling edge {e.source_id!r} -> {e.target_id!r}")


# ---------------------------------------------------------------------------
# Taxonomy adequacy
# ---------------------------------------------------------------------------

ADEQUACY_FEATURES = ("decay_kind", "seed_k", "rate_or_half_life", "role")


@dataclass(frozen=True)
class PairAdequacy:
    """Distinguishing features for one unordered class pair."""

    pair: tuple[EpistemicClass, EpistemicClass]
    differing: tuple[str, ...]

    @property
    def adequate(self) -> bool:
        return len(self.differing) >= 2


def taxonomy_adequacy_report() -> list[PairAdequacy]:
    """Enumerate all 36 unordered class pairs with their differing features.

    A pair is adequate when at least two of {decay kind, seed, decay
    rate/half-life, semantic role} differ. Inadequate pairs are flagged in
    the result rather than raised, so the report doubles as a test oracle.
    """
    classes = list(EpistemicClass)
    report: list[PairAdequacy] = []
    for i, a in enumerate(classes):
        for b in classes[i + 1:]:
            pa, pb = CLASS_PROFILES[a], CLASS_PROFILES[b]
            differing: list[str] = []
            if pa.decay_kind is not pb.decay_kind:
                differing.append("decay_kind")
            if pa.seed_k != pb.seed_k:
                differing.append("seed_k")
            if pa.lambda_per_day != pb.lambda_per_day or pa.half_life_days != pb.half_life_days:
                differing.append("rate_or_half_life")
            if pa.role != pb.role:
                differing.append("role")
            report.append(PairAdequacy((a, b), tuple(differing)))
    return report
