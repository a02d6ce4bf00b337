"""Hybrid retrieval: structural + semantic + topological similarity, modulated
by contextual importance.

The final rank score is R = H * K_eff, where H blends the three similarity
layers and K_eff multiplies the object's global k-score by floored contextual
attention. Everything is read-only over a snapshot, so concurrent queries are
safe.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .model import (
    GraphSnapshot,
    KnowledgeObject,
    Koc,
    MemoryZone,
    koc_similarity,
)


class RetrievalError(ValueError):
    """Retrieval contract violation (bad weights, embedding mismatch)."""


@dataclass(frozen=True)
class RetrievalWeights:
    """Blend weights for the hybrid score and contextual attention.

    The similarity weights (alpha, beta, gamma) and the attention weights
    (w_e, w_d, w_a) must each sum to 1; this is enforced at construction so
    a bad configuration is rejected at load time.
    """

    alpha: float = 0.30
    beta: float = 0.50
    gamma: float = 0.20
    w_e: float = 0.40
    w_d: float = 0.35
    w_a: float = 0.25
    k_eff_floor: float = 0.10

    def __post_init__(self) -> None:
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise RetrievalError(
                f"similarity weights sum to {self.alpha + self.beta + self.gamma}, not 1")
        if abs(self.w_e + self.w_d + self.w_a - 1.0) > 1e-9:
            raise RetrievalError(
                f"attention weights sum to {self.w_e + self.w_d + self.w_a}, not 1")
        if not 0.0 <= self.k_eff_floor <= 1.0:
            raise RetrievalError(f"k_eff_floor {self.k_eff_floor} outside [0, 1]")


@dataclass(frozen=True)
class Query:
    """A retrieval request with a precomputed embedding.

    The engine never calls an embedding service; a query without an embedding
    degrades to structural + topological scoring. ``anchor_koc`` gives the
    structural reference point; without one, structural similarity falls back
    to the entity and domain axes.
    """

    text: str = ""
    embedding: tuple[float, ...] | None = None
    primary_entity: str = ""
    domain: str = ""
    active_anchors: frozenset[str] = frozenset()
    anchor_koc: Koc | None = None
    top_k: int = 10
    include_dormant: bool = False
    exclude_peripheral: bool = False

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise RetrievalError(f"top_k must be >= 1, got {self.top_k}")
        if self.embedding is not None and not all(map(math.isfinite, self.embedding)):
            raise RetrievalError("query embedding contains non-finite values")


@dataclass(frozen=True)
class RankedResult:
    """One ranked object with its full score breakdown for auditability."""

    ko_id: str
    hybrid: float
    k_eff: float
    rank_score: float
    s_struct: float
    s_sem: float
    s_topo: float
    phi_ctx: float
    k_global: float
    urgency: float
    zone: MemoryZone
    degraded: bool


def structural_sim(q: Query, ko: KnowledgeObject,
                   koc_weights: Sequence[float] | None = None) -> float:
    """Coordinate alignment in O(1).

    With an anchor coordinate this is the full seven-axis similarity;
    otherwise only the entity and domain axes are compared, uniformly.
    """
    if q.anchor_koc is not None:
        return koc_similarity(q.anchor_koc, ko.koc, koc_weights)
    matches = (q.primary_entity == ko.koc.entity) + (q.domain == ko.koc.domain)
    return matches / 2.0


def semantic_available(q: Query, ko: KnowledgeObject) -> bool:
    return q.embedding is not None and ko.embedding is not None


def semantic_sim(q: Query, ko: KnowledgeObject) -> float:
    """Cosine similarity rescaled to [0, 1]; 0 when either embedding is
    missing (the caller flags the result degraded)."""
    if not semantic_available(q, ko):
        return 0.0
    a, b = q.embedding, ko.embedding
    if len(a) != len(b):
        raise RetrievalError(
            f"embedding dimension mismatch: query {len(a)} vs ko {ko.id!r} {len(b)}")
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        cosine = 0.0
    else:
        cosine = sum(x * y for x, y in zip(a, b)) / (na * nb)
    return (cosine + 1.0) / 2.0


def resolve_focus(q: Query, snapshot: GraphSnapshot,
                  koc_weights: Sequence[float] | None = None) -> str | None:
    """The node topological distances are measured from.

    An exact match on the anchor coordinate wins; otherwise the highest
    structural similarity, ties broken by id.
    """
    if not snapshot.kos:
        return None
    if q.anchor_koc is not None:
        for ko_id in sorted(snapshot.kos):
            if snapshot.kos[ko_id].koc == q.anchor_koc:
                return ko_id
    best_id, best_sim = None, -1.0
    for ko_id in sorted(snapshot.kos):
        sim = structural_sim(q, snapshot.kos[ko_id], koc_weights)
        if sim > best_sim:
            best_id, best_sim = ko_id, sim
    return best_id


def hop_distances(snapshot: GraphSnapshot, focus_id: str) -> dict[str, int]:
    """Undirected BFS hop distances from the focus node."""
    adjacency: dict[str, set[str]] = {}
    for e in snapshot.edges:
        adjacency.setdefault(e.source_id, set()).add(e.target_id)
        adjacency.setdefault(e.target_id, set()).add(e.source_id)
    distances = {focus_id: 0}
    queue = deque([focus_id])
    while queue:
        node = queue.popleft()
        for neighbor in sorted(adjacency.get(node, ())):
            if neighbor not in distances:
                distances[neighbor] = distances[node] + 1
                queue.append(neighbor)
    return distances


def topological_sim(q: Query, ko: KnowledgeObject, snapshot: GraphSnapshot) -> float:
    """Inverse hop distance from the query's focus node: 1 / (1 + h).

    Unreachable objects score 0; the focus itself scores 1.
    """
    focus = resolve_focus(q, snapshot)
    if focus is None:
        return 0.0
    h = hop_distances(snapshot, focus).get(ko.id)
    return 0.0 if h is None else 1.0 / (1.0 + h)


def hybrid_score(q: Query, ko: KnowledgeObject, snapshot: GraphSnapshot,
                 w: RetrievalWeights) -> float:
    """alpha * S_struct + beta * S_sem + gamma * S_topo."""
    return (w.alpha * structural_sim(q, ko)
            + w.beta * semantic_sim(q, ko)
            + w.gamma * topological_sim(q, ko, snapshot))


def contextual_attention(q: Query, ko: KnowledgeObject, w: RetrievalWeights) -> float:
    """Query-local relevance: entity match, domain match, anchor overlap."""
    entity = 1.0 if ko.koc.entity == q.primary_entity else 0.0
    domain = 1.0 if ko.koc.domain == q.domain else 0.0
    overlap = len(ko.anchors & q.active_anchors) / max(len(q.active_anchors), 1)
    return w.w_e * entity + w.w_d * domain + w.w_a * overlap


def k_eff(ko: KnowledgeObject, phi: float, w: RetrievalWeights) -> float:
    """Global importance modulated by floored attention; the floor keeps
    globally important objects from collapsing out of off-context queries."""
    return ko.scores.k * max(w.k_eff_floor, phi)


def rank(q: Query, snapshot: GraphSnapshot,
         w: RetrievalWeights | None = None,
         koc_weights: Sequence[float] | None = None) -> list[RankedResult]:
    """Score and order the eligible corpus for a query.

    Dormant objects are skipped unless the query opts in; peripheral objects
    are eligible by default (their low k buries them) with an opt-out. Sorted
    by rank score descending, ties by id ascending, truncated to top_k.
    """
    if w is None:
        w = RetrievalWeights()
    if not snapshot.kos:
        return []
    focus = resolve_focus(q, snapshot, koc_weights)
    distances = hop_distances(snapshot, focus) if focus is not None else {}

    results: list[RankedResult] = []
    for ko_id in sorted(snapshot.kos):
        ko = snapshot.kos[ko_id]
        if ko.zone is MemoryZone.DORMANT and not q.include_dormant:
            continue
        if ko.zone is MemoryZone.PERIPHERAL and q.exclude_peripheral:
            continue
        s_struct = structural_sim(q, ko, koc_weights)
        s_sem = semantic_sim(q, ko)
        h = distances.get(ko_id)
        s_topo = 0.0 if h is None else 1.0 / (1.0 + h)
        hybrid = w.alpha * s_struct + w.beta * s_sem + w.gamma * s_topo
        phi = contextual_attention(q, ko, w)
        eff = k_eff(ko, phi, w)
        results.append(RankedResult(
            ko_id=ko_id, hybrid=hybrid, k_eff=eff, rank_score=hybrid * eff,
            s_struct=s_struct, s_sem=s_sem, s_topo=s_topo, phi_ctx=phi,
            k_global=ko.scores.k, urgency=ko.scores.urgency, zone=ko.zone,
            degraded=not semantic_available(q, ko)))
    results.sort(key=lambda r: (-r.rank_score, r.ko_id))
    return results[:q.top_k]
