"""Corpus persistence: ingestion, edge management, the append-only event log,
and deterministic replay.

The store is event-sourced: every state change is validated, applied, and
appended to the log as an EventRecord. Replaying the log from empty rebuilds
the exact state, so the log is simultaneously the audit trail and the
canonical persistence medium. Knowledge objects are never deleted.

Two file formats (both line-delimited JSON, documented in the README):

* corpus file - a header line followed by one record per knowledge object
  and per edge; scores are serialized as fixed 9-digit decimal strings so a
  save/load/save round trip is byte-identical.
* event log file - one EventRecord per line in seq order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .engine import (
    EngineParams,
    ForceBreakdown,
    question_urgency,
    run_cycle,
)
from .model import (
    Edge,
    EdgeType,
    EpistemicClass,
    GraphSnapshot,
    KnowledgeObject,
    Koc,
    ScoreVector,
    class_profile,
)

CORPUS_FORMAT_VERSION = 1


class ValidationError(ValueError):
    """A record rejected at the store boundary (closed-world rule)."""


class ReplayError(ValueError):
    """Event log corruption: gap, bad seq, or unparseable record."""


def ts_to_iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def iso_to_ts(text: str) -> int:
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _fmt_score(x: float) -> str:
    return f"{x:.9f}"


def _q9(x: float) -> float:
    return round(x, 9)


class EventKind(Enum):
    KO_CREATED = "KO_CREATED"
    EDGE_CREATED = "EDGE_CREATED"
    CYCLE_APPLIED = "CYCLE_APPLIED"
    KO_SUPERSEDED = "KO_SUPERSEDED"
    QUESTION_RESOLVED = "QUESTION_RESOLVED"
    KO_RETRIEVED = "KO_RETRIEVED"
    PARAMS_CHANGED = "PARAMS_CHANGED"


@dataclass(frozen=True)
class EventRecord:
    """One entry in the append-only log. seq is gap-free from 1."""

    seq: int
    at: int
    kind: EventKind
    payload: dict


def _parse_class(name: str) -> EpistemicClass:
    try:
        return EpistemicClass(name)
    except ValueError:
        raise ValidationError(f"unknown epistemic class {name!r}") from None


def _parse_edge_type(name: str) -> EdgeType:
    try:
        return EdgeType(name)
    except ValueError:
        raise ValidationError(f"unknown edge type {name!r}") from None


def _parse_koc(data: dict) -> Koc:
    try:
        return Koc(entity=data["entity"], domain=data["domain"],
                   cls=_parse_class(data["class"]), epoch=data["epoch"],
                   depth=data["depth"], author=data["author"],
                   variant=data["variant"])
    except KeyError as missing:
        raise ValidationError(f"koc missing axis {missing}") from None


def _koc_to_dict(koc: Koc) -> dict:
    return {"entity": koc.entity, "domain": koc.domain, "class": koc.cls.value,
            "epoch": koc.epoch, "depth": koc.depth, "author": koc.author,
            "variant": koc.variant}


class CorpusStore:
    """Single-writer store over knowledge objects, edges, and the event log.

    Readers work on immutable snapshots from :meth:`snapshot`; all mutation
    goes through the public operations below, each of which appends exactly
    one event. There is no delete or in-place-update path.
    """

    def __init__(self, params: EngineParams | None = None) -> None:
        self._params = params if params is not None else EngineParams.production()
        self._kos: dict[str, KnowledgeObject] = {}
        self._edges: list[Edge] = []
        self._edge_keys: set[tuple[str, str, EdgeType]] = set()
        self._events: list[EventRecord] = []
        self._last_cycle_at: int | None = None
        self._last_breakdowns: list[ForceBreakdown] = []

    # -- read side ----------------------------------------------------------

    @property
    def params(self) -> EngineParams:
        return self._params

    @property
    def events(self) -> tuple[EventRecord, ...]:
        return tuple(self._events)

    @property
    def last_cycle_at(self) -> int | None:
        return self._last_cycle_at

    def snapshot(self) -> GraphSnapshot:
        return GraphSnapshot(kos=dict(self._kos), edges=tuple(self._edges),
                             cycle_at=self._last_cycle_at)

    def latest_event_at(self) -> int:
        return self._events[-1].at if self._events else 0

    # -- operations ---------------------------------------------------------

    def ingest_ko(self, *, cls: EpistemicClass | str, koc: Koc | dict,
                  content: str, ko_id: str | None = None, created_at: int = 0,
                  stakes: float = 0.0, anchors: Iterable[str] = (),
                  embedding: Sequence[float] | None = None,
                  confidence: float = 1.0, freshness: float = 1.0) -> str:
        """Ingest one pre-classified knowledge object.

        Classification happens upstream; the store only accepts the closed
        taxonomy and rejects class/coordinate mismatches. The object starts
        at its class seed score, with urgency computed for questions.
        """
        cls_ = _parse_class(cls) if isinstance(cls, str) else cls
        koc_ = _parse_koc(koc) if isinstance(koc, dict) else koc
        anchors = tuple(anchors)
        if koc_.cls is not cls_:
            raise ValidationError(
                f"class {cls_.value} does not match coordinate class {koc_.cls.value}")
        if ko_id is None:
            ko_id = f"ko{len(self._kos) + 1:06d}"
        if ko_id in self._kos:
            raise ValidationError(f"duplicate knowledge object id {ko_id!r}")
        if not 0.0 <= stakes <= 1.0:
            raise ValidationError(f"stakes {stakes} outside [0, 1]")
        if embedding is not None and not all(
                isinstance(x, (int, float)) and math.isfinite(x) for x in embedding):
            raise ValidationError(f"embedding for {ko_id!r} has non-finite values")
        if not all(isinstance(a, str) and a for a in anchors):
            raise ValidationError(f"anchors for {ko_id!r} must be non-empty strings")
        payload = {
            "id": ko_id,
            "class": cls_.value,
            "koc": _koc_to_dict(koc_),
            "content": content,
            "created_at": created_at,
            "stakes": _q9(stakes),
            "anchors": sorted(set(anchors)),
            "embedding": list(embedding) if embedding is not None else None,
            "confidence": _q9(confidence),
            "freshness": _q9(freshness),
        }
        self._append(EventKind.KO_CREATED, payload, at=created_at)
        return ko_id

    def ingest_record(self, record: dict) -> str:
        """Ingest a parsed corpus-file record (see README for the schema)."""
        if record.get("kind") != "ko":
            raise ValidationError(f"not a ko record: kind={record.get('kind')!r}")
        scores = record.get("scores", {})
        return self.ingest_ko(
            cls=record.get("class", ""),
            koc=record.get("koc", {}),
            content=record.get("content", ""),
            ko_id=record.get("id"),
            created_at=iso_to_ts(record["created_at"]) if "created_at" in record else 0,
            stakes=float(record.get("stakes", 0.0)),
            anchors=record.get("anchors", ()),
            embedding=record.get("embedding"),
            confidence=float(scores.get("confidence", 1.0)),
            freshness=float(scores.get("freshness", 1.0)))

    def add_edge(self, source: str, target: str, edge_type: EdgeType | str,
                 at: int) -> Edge:
        """Create a typed edge; duplicates, self-loops, and dangling
        endpoints are rejected so per-cycle edge counts stay well-defined."""
        edge_type_ = (_parse_edge_type(edge_type) if isinstance(edge_type, str)
                      else edge_type)
        self._check_edge(source, target, edge_type_)
        payload = {"source": source, "target": target,
                   "type": edge_type_.value, "at": at}
        return self._append(EventKind.EDGE_CREATED, payload, at=at)

    def supersede(self, new_ko: str, old_ko: str, at: int) -> Edge:
        """Record that one object replaces another.

        The old object is demoted (SUPERSEDES edge), never deleted: it keeps
        cycling and remains retrievable until its score decays away.
        """
        self._check_edge(new_ko, old_ko, EdgeType.SUPERSEDES)
        payload = {"new": new_ko, "old": old_ko, "at": at}
        return self._append(EventKind.KO_SUPERSEDED, payload, at=at)

    def resolve_question(self, question: str, resolver: str, at: int) -> KnowledgeObject:
        """Mark a question answered by a resolver (typically a DECISION).

        Adds an IMPLEMENTS edge from the resolver and flags the question
        resolved; from the next cycle on its urgency is zero and its score
        decays instead of rising.
        """
        ko = self._kos.get(question)
        if ko is None:
            raise ValidationError(f"unknown knowledge object {question!r}")
        if ko.cls is not EpistemicClass.QUESTION:
            raise ValidationError(f"{question!r} is {ko.cls.value}, not QUESTION")
        if ko.resolved:
            raise ValidationError(f"question {question!r} already resolved")
        self._check_edge(resolver, question, EdgeType.IMPLEMENTS)
        payload = {"question": question, "resolver": resolver, "at": at}
        self._append(EventKind.QUESTION_RESOLVED, payload, at=at)
        return self._kos[question]

    def record_retrieval(self, ko_id: str, at: int) -> None:
        """Log a retrieval; the timestamp feeds the next cycle's usage force
        (and can revive a dormant object)."""
        if ko_id not in self._kos:
            raise ValidationError(f"unknown knowledge object {ko_id!r}")
        self._append(EventKind.KO_RETRIEVED, {"id": ko_id, "at": at}, at=at)

    def set_params(self, params: EngineParams) -> None:
        at = self.latest_event_at()
        self._append(EventKind.PARAMS_CHANGED, {"params": params.to_dict()}, at=at)

    def apply_cycle(self, now: int | None = None) -> tuple[GraphSnapshot, list[ForceBreakdown]]:
        """Run one engine cycle and log it.

        Without an explicit timestamp the cycle time advances from the last
        cycle (or the latest event) by the configured period, keeping
        repeated invocations deterministic.
        """
        if now is None:
            base = self._last_cycle_at if self._last_cycle_at is not None \
                else self.latest_event_at()
            now = base + self._params.cycle_period_s
        self._append(EventKind.CYCLE_APPLIED, {"at": now}, at=now)
        return self.snapshot(), list(self._last_breakdowns)

    # -- event machinery ----------------------------------------------------

    def _check_edge(self, source: str, target: str, edge_type: EdgeType) -> None:
        if source == target:
            raise ValidationError(f"self-loop edge on {source!r}")
        for endpoint in (source, target):
            if endpoint not in self._kos:
                raise ValidationError(f"unknown knowledge object {endpoint!r}")
        if (source, target, edge_type) in self._edge_keys:
            raise ValidationError(
                f"duplicate edge {source!r} -{edge_type.value}-> {target!r}")

    def _append(self, kind: EventKind, payload: dict, at: int):
        event = EventRecord(seq=len(self._events) + 1, at=at, kind=kind,
                            payload=payload)
        result = self._apply(event)
        self._events.append(event)
        return result

    def _apply(self, event: EventRecord):
        # State transitions only; validation happened in the public op (or is
        # re-run during replay, where the same errors indicate corruption).
        kind, payload = event.kind, event.payload
        if kind is EventKind.KO_CREATED:
            cls = _parse_class(payload["class"])
            profile = class_profile(cls)
            stakes = float(payload["stakes"])
            urgency = (question_urgency(0.0, 0, stakes)
                       if cls is EpistemicClass.QUESTION else 0.0)
            scores = ScoreVector(k=_q9(profile.seed_k),
                                 confidence=float(payload["confidence"]),
                                 freshness=float(payload["freshness"]),
                                 urgency=urgency,
                                 contradiction=0.0)
            embedding = payload["embedding"]
            ko = KnowledgeObject(
                id=payload["id"], koc=_parse_koc(payload["koc"]), cls=cls,
                content=payload["content"], scores=scores,
                created_at=int(payload["created_at"]),
                stakes=stakes, anchors=frozenset(payload["anchors"]),
                embedding=tuple(embedding) if embedding is not None else None)
            self._kos[ko.id] = ko
            return ko.id
        if kind is EventKind.EDGE_CREATED:
            return self._add_edge_state(payload["source"], payload["target"],
                                        _parse_edge_type(payload["type"]),
                                        int(payload["at"]))
        if kind is EventKind.KO_SUPERSEDED:
            return self._add_edge_state(payload["new"], payload["old"],
                                        EdgeType.SUPERSEDES, int(payload["at"]))
        if kind is EventKind.QUESTION_RESOLVED:
            edge = self._add_edge_state(payload["resolver"], payload["question"],
                                        EdgeType.IMPLEMENTS, int(payload["at"]))
            question = self._kos[payload["question"]]
            self._kos[question.id] = replace(question, resolved=True)
            return edge
        if kind is EventKind.KO_RETRIEVED:
            ko = self._kos[payload["id"]]
            self._kos[ko.id] = replace(
                ko, retrieved_at=ko.retrieved_at + (int(payload["at"]),))
            return None
        if kind is EventKind.CYCLE_APPLIED:
            now = int(payload["at"])
            new_snapshot, breakdowns = run_cycle(self.snapshot(), now, self._params)
            self._kos = dict(new_snapshot.kos)
            self._last_cycle_at = now
            self._last_breakdowns = breakdowns
            return breakdowns
        if kind is EventKind.PARAMS_CHANGED:
            self._params = EngineParams.from_dict(payload["params"])
            return None
        raise ReplayError(f"unknown event kind {kind!r}")

    def _add_edge_state(self, source: str, target: str, edge_type: EdgeType,
                        at: int) -> Edge:
        for endpoint in (source, target):
            if endpoint not in self._kos:
                raise ValidationError(f"unknown knowledge object {endpoint!r}")
        key = (source, target, edge_type)
        if key in self._edge_keys:
            raise ValidationError(
                f"duplicate edge {source!r} -{edge_type.value}-> {target!r}")
        edge = Edge(source, target, edge_type, at)
        self._edges.append(edge)
        self._edge_keys.add(key)
        return edge

    # -- replay -------------------------------------------------------------

    @classmethod
    def replay(cls, events: Iterable[EventRecord],
               params: EngineParams | None = None) -> "CorpusStore":
        """Rebuild a store from its log. Deterministic: replaying the same
        log twice yields bit-identical state. Halts with the offending
        position on any gap or corrupt record."""
        store = cls(params=params)
        for i, event in enumerate(events, start=1):
            if event.seq != i:
                raise ReplayError(f"seq gap at position {i}: got seq {event.seq}")
            try:
                store._apply(event)
            except (ValidationError, ValueError, KeyError, TypeError) as exc:
                raise ReplayError(f"corrupt event at position {i}: {exc!r}") from exc
            store._events.append(event)
        return store


# ---------------------------------------------------------------------------
# Corpus file format
# ---------------------------------------------------------------------------

def _ko_record(ko: KnowledgeObject) -> dict:
    return {
        "kind": "ko",
        "id": ko.id,
        "class": ko.cls.value,
        "koc": _koc_to_dict(ko.koc),
        "content": ko.content,
        "scores": {
            "k": _fmt_score(ko.scores.k),
            "confidence": _fmt_score(ko.scores.confidence),
            "freshness": _fmt_score(ko.scores.freshness),
            "urgency": _fmt_score(ko.scores.urgency),
            "contradiction": _fmt_score(ko.scores.contradiction),
        },
        "created_at": ts_to_iso(ko.created_at),
        "retrieved_at": [ts_to_iso(t) for t in ko.retrieved_at],
        "resolved": ko.resolved,
        "stakes": _fmt_score(ko.stakes),
        "anchors": sorted(ko.anchors),
        "embedding": list(ko.embedding) if ko.embedding is not None else None,
        "zone": ko.zone.name,
    }


def _edge_record(edge: Edge) -> dict:
    return {"kind": "edge", "source": edge.source_id, "target": edge.target_id,
            "type": edge.edge_type.value, "created_at": ts_to_iso(edge.created_at)}


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def corpus_lines(store: CorpusStore) -> list[str]:
    dims = {len(ko.embedding) for ko in store._kos.values()
            if ko.embedding is not None}
    if len(dims) > 1:
        raise ValidationError(f"inconsistent embedding dimensions {sorted(dims)}")
    header = {
        "kind": "header",
        "format_version": CORPUS_FORMAT_VERSION,
        "embedding_dim": dims.pop() if dims else None,
        "params_fingerprint": store.params.fingerprint(),
        "last_cycle_at": (ts_to_iso(store.last_cycle_at)
                          if store.last_cycle_at is not None else None),
    }
    lines = [_dump_line(header)]
    lines += [_dump_line(_ko_record(store._kos[i])) for i in sorted(store._kos)]
    lines += [_dump_line(_edge_record(e)) for e in store._edges]
    return lines


def write_corpus(store: CorpusStore, path: str | Path) -> None:
    Path(path).write_text("\n".join(corpus_lines(store)) + "\n", encoding="utf-8")


def read_corpus(path: str | Path) -> tuple[dict, list[tuple[int, dict]], list[tuple[int, str]]]:
    """Parse a corpus file into (header, numbered records, per-line errors).

    Unparseable lines are collected as (line number, message) so ingestion
    can proceed with the valid remainder.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        return {"kind": "header", "format_version": CORPUS_FORMAT_VERSION,
                "embedding_dim": None}, [], []
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line 1: corpus header is not valid JSON: {exc}")
    if header.get("kind") != "header":
        raise ValidationError("line 1: corpus file must start with a header record")
    if header.get("format_version") != CORPUS_FORMAT_VERSION:
        raise ValidationError(
            f"unsupported corpus format version {header.get('format_version')!r}")
    records: list[tuple[int, dict]] = []
    errors: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append((lineno, f"invalid JSON: {exc}"))
            continue
        if record.get("kind") not in ("ko", "edge"):
            errors.append((lineno, f"unknown record kind {record.get('kind')!r}"))
            continue
        records.append((lineno, record))
    return header, records, errors


def load_corpus(path: str | Path, params: EngineParams | None = None) -> CorpusStore:
    """Restore exact store state from a corpus file (scores included).

    This is the snapshot-restore path: the returned store has the saved
    state but an empty event log. Strict: any bad record raises.
    """
    header, records, errors = read_corpus(path)
    if errors:
        lineno, message = errors[0]
        raise ValidationError(f"line {lineno}: {message}")
    store = CorpusStore(params=params)
    if header.get("last_cycle_at"):
        store._last_cycle_at = iso_to_ts(header["last_cycle_at"])
    for _, record in records:
        if record["kind"] == "ko":
            scores = record["scores"]
            embedding = record.get("embedding")
            ko = KnowledgeObject(
                id=record["id"],
                koc=_parse_koc(record["koc"]),
                cls=_parse_class(record["class"]),
                content=record["content"],
                scores=ScoreVector(
                    k=float(scores["k"]),
                    confidence=float(scores["confidence"]),
                    freshness=float(scores["freshness"]),
                    urgency=float(scores["urgency"]),
                    contradiction=float(scores["contradiction"])),
                created_at=iso_to_ts(record["created_at"]),
                retrieved_at=tuple(iso_to_ts(t) for t in record["retrieved_at"]),
                resolved=bool(record["resolved"]),
                stakes=float(record["stakes"]),
                anchors=frozenset(record["anchors"]),
                embedding=tuple(embedding) if embedding is not None else None)
            if ko.id in store._kos:
                raise ValidationError(f"duplicate knowledge object id {ko.id!r}")
            store._kos[ko.id] = ko
        else:
            store._add_edge_state(record["source"], record["target"],
                                  _parse_edge_type(record["type"]),
                                  iso_to_ts(record["created_at"]))
    return store


# ---------------------------------------------------------------------------
# Event log file format
# ---------------------------------------------------------------------------

def _event_to_dict(event: EventRecord) -> dict:
    return {"seq": event.seq, "at": ts_to_iso(event.at),
            "kind": event.kind.value, "payload": event.payload}


def _event_from_dict(data: dict) -> EventRecord:
    return EventRecord(seq=int(data["seq"]), at=iso_to_ts(data["at"]),
                       kind=EventKind(data["kind"]), payload=data["payload"])


def append_events(path: str | Path, events: Iterable[EventRecord]) -> None:
    """Append events to the log file; existing lines are never rewritten."""
    with open(path, "a", encoding="utf-8") as f:
        for event in events:
            f.write(_dump_line(_event_to_dict(event)) + "\n")


def read_events(path: str | Path) -> list[EventRecord]:
    events: list[EventRecord] = []
    for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            events.append(_event_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ReplayError(f"corrupt event log line {lineno}: {exc}") from exc
    return events
