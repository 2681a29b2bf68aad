"""In-process network of fog nodes running the assessment/recovery cascade.

Each node keeps everything it has learned so far: malicious transactions
from IDS alerts, damaged remote items from damage tables, and corrected
remote values from valid-items tables. On every delivery the node reruns
assessment over its whole log with that knowledge, sends only damage rows
it has not sent before, then repairs its table as far as the corrected
values it holds allow. Once every row is repaired the node patches its
database and unblocks.

Knowledge only grows and damage rows are keyed by (transaction, item), so
every run reaches quiescence, and the final state does not depend on the
order in which messages are delivered.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union

from .assessment import AssessmentOutput, DamageItemTable, MaliciousList, assess
from .errors import PreconditionError, ProtocolError
from .logmodel import Read, RemoteRef, TransactionLog, TxnId, committed_value_before
from .recovery import RecomputeSpec, RecoveryOutput, ValidItemsTable, recover


class NodeKind(str, Enum):
    PUBLIC = "public"
    UTILITY = "utility"


@dataclass
class Topology:
    """Node kinds plus the directed (reader, source) pairs allowed to read.

    Without explicit edges, public and utility nodes may read each other
    and nodes of the same kind may not.
    """

    kinds: dict[str, NodeKind]
    edges: set[tuple[str, str]] | None = None

    def __post_init__(self) -> None:
        self.kinds = {k: NodeKind(v) for k, v in self.kinds.items()}
        if self.edges is not None:
            self.edges = {tuple(e) for e in self.edges}
            for reader, source in self.edges:
                if reader not in self.kinds or source not in self.kinds:
                    raise PreconditionError(f"edge {reader}->{source} names an unknown node")

    @property
    def nodes(self) -> list[str]:
        return list(self.kinds)

    def allows(self, reader: str, source: str) -> bool:
        if reader == source or reader not in self.kinds or source not in self.kinds:
            return False
        if self.edges is not None:
            return (reader, source) in self.edges
        return self.kinds[reader] != self.kinds[source]

    def sources_for(self, reader: str) -> list[str]:
        return [n for n in self.kinds if self.allows(reader, n)]

    def check_log(self, log: TransactionLog) -> list[str]:
        """Cross-fog reads in ``log`` that the topology forbids."""
        bad = []
        for rec in log.records:
            if rec.origin is not None and not self.allows(rec.origin, log.node):
                bad.append(f"{rec.origin} may not read from {log.node}")
            if isinstance(rec.op, Read) and isinstance(rec.op.item, RemoteRef):
                if not self.allows(log.node, rec.op.item.source_fog):
                    bad.append(f"{log.node} may not read from {rec.op.item.source_fog}")
        return bad


@dataclass(frozen=True)
class Alert:
    mt_l: MaliciousList


@dataclass(frozen=True)
class Damage:
    table: DamageItemTable


@dataclass(frozen=True)
class Valid:
    table: ValidItemsTable


Payload = Union[Alert, Damage, Valid]


@dataclass(frozen=True)
class Message:
    payload: Payload
    sender: str | None  # None for the IDS
    target: str
    delivery_seq: int

    @property
    def kind(self) -> str:
        return type(self.payload).__name__.lower()


@dataclass
class TraceEvent:
    step: int
    node: str
    kind: str
    sender: str | None
    delivery_seq: int
    assessed: bool
    damaged_history: list[tuple[TxnId, frozenset[str]]]
    damage_sent: dict[str, list[tuple[TxnId, str]]]
    valid_sent: dict[str, list[tuple[TxnId, str, int]]]
    patches: dict[str, int]
    blocked: frozenset[str]
    damaged: frozenset[str]  # damaged local items not yet restored
    complete: bool
    blocked_after_assessment: frozenset[str] | None = None

    def describe(self) -> str:
        head = f"#{self.step} {self.node} <- {self.kind}"
        if self.sender:
            head += f" from {self.sender}"
        parts = [head]
        if self.assessed:
            parts.append("assessed, blocked {" + ",".join(sorted(self.blocked_after_assessment)) + "}")
        for fog, rows in self.damage_sent.items():
            parts.append(f"damage->{fog} " + ",".join(f"{t}:{i}" for t, i in rows))
        for fog, rows in self.valid_sent.items():
            parts.append(f"valid->{fog} " + ",".join(f"{t}:{i}={v}" for t, i, v in rows))
        if self.patches:
            parts.append("patched " + ",".join(f"{k}={v}" for k, v in sorted(self.patches.items())))
        parts.append("blocked {" + ",".join(sorted(self.blocked)) + "}")
        return " | ".join(parts)


@dataclass
class CascadeTrace:
    events: list[TraceEvent] = field(default_factory=list)
    start: int = 0

    def __len__(self) -> int:
        return len(self.events)

    def to_text(self) -> str:
        return "\n".join(e.describe() for e in self.events)

    def for_node(self, node: str) -> list[TraceEvent]:
        return [e for e in self.events if e.node == node]


@dataclass
class FogNode:
    id: str
    kind: NodeKind
    db: dict[str, int]
    log: TransactionLog
    spec: RecomputeSpec = field(default_factory=RecomputeSpec)
    initial: dict[str, int] = field(default_factory=dict)
    blocked: set[str] = field(default_factory=set)
    inbox: deque = field(default_factory=deque)
    malicious: list[TxnId] = field(default_factory=list)
    remote_damage: dict[RemoteRef, None] = field(default_factory=dict)
    valid_values: dict[RemoteRef, int] = field(default_factory=dict)
    assessment: AssessmentOutput | None = None
    recovery: RecoveryOutput | None = None
    sent_damage: dict[str, set[tuple[TxnId, str]]] = field(default_factory=dict)
    sent_valid: dict[str, dict[tuple[TxnId, str], int]] = field(default_factory=dict)
    patched: dict[str, int] = field(default_factory=dict)


POLICIES = ("fifo", "round_robin", "random")


class FogNetwork:
    def __init__(self, nodes: Iterable[FogNode], topology: Topology | None = None) -> None:
        self.nodes: dict[str, FogNode] = {}
        for n in nodes:
            if n.id in self.nodes:
                raise PreconditionError(f"duplicate fog id {n.id}")
            self.nodes[n.id] = n
        if topology is None:
            topology = Topology({n.id: n.kind for n in self.nodes.values()})
        self.topology = topology
        for n in self.nodes.values():
            bad = topology.check_log(n.log)
            if bad:
                raise PreconditionError(f"{n.id}: {bad[0]}")
        self._seq = 0
        self._steps = 0

    @classmethod
    def from_logs(
        cls,
        logs: Mapping[str, TransactionLog],
        kinds: Mapping[str, NodeKind | str] | None = None,
        initial: Mapping[str, Mapping[str, int]] | None = None,
        spec: RecomputeSpec | None = None,
        topology: Topology | None = None,
    ) -> FogNetwork:
        """Network over verbatim logs; databases hold each log's final state."""
        kinds = dict(kinds or {})
        initial = initial or {}
        nodes = []
        for name, log in logs.items():
            init = dict(initial.get(name, {}))
            nodes.append(
                FogNode(
                    id=name,
                    kind=NodeKind(kinds.get(name, NodeKind.PUBLIC)),
                    db=log.final_state(init),
                    log=log,
                    spec=spec or RecomputeSpec(),
                    initial=init,
                )
            )
        if topology is None and not kinds:
            names = list(logs)
            topology = Topology(
                {n: NodeKind.PUBLIC for n in names},
                {(a, b) for a in names for b in names if a != b},
            )
        return cls(nodes, topology)

    # -- public operations ------------------------------------------------

    def node(self, node: str) -> FogNode:
        try:
            return self.nodes[node]
        except KeyError:
            raise PreconditionError(f"unknown fog node {node!r}") from None

    def inject_alert(self, node: str, mt_l: MaliciousList | Iterable[TxnId]) -> FogNetwork:
        """Queue an IDS alert; nothing is processed until the cascade runs."""
        target = self.node(node)
        if not isinstance(mt_l, MaliciousList):
            mt_l = MaliciousList(node, tuple(mt_l))
        if mt_l.target_fog != node:
            raise PreconditionError(f"alert for {mt_l.target_fog} injected at {node}")
        for txn in mt_l.txns:
            info = target.log.transaction(txn)
            if info is None:
                raise PreconditionError(f"{txn} does not appear in the log of {node}")
            if not info.committed:
                raise PreconditionError(f"{txn} never committed in {node}")
        self._send(None, node, Alert(mt_l))
        return self

    def pending(self) -> int:
        return sum(len(n.inbox) for n in self.nodes.values())

    def blocked_items(self, node: str) -> set[str]:
        return set(self.node(node).blocked)

    def final_state(self, node: str) -> dict[str, int]:
        n = self.node(node)
        if self.pending() or any(x.blocked for x in self.nodes.values()):
            raise PreconditionError("the cascade has not reached quiescence")
        return dict(n.db)

    def states(self) -> dict[str, dict[str, int]]:
        return {name: self.final_state(name) for name in self.nodes}

    def run_to_quiescence(self, policy: str = "fifo", seed: int | None = None) -> CascadeTrace:
        """Deliver queued messages under ``policy`` until every inbox is empty.

        ``fifo`` follows global send order, ``round_robin`` cycles over the
        nodes, ``random`` picks a non-empty inbox with a seeded generator.
        Each inbox is always drained from its head.
        """
        if policy not in POLICIES:
            raise PreconditionError(f"unknown delivery policy {policy!r}")
        if not self.pending():
            raise PreconditionError("no queued messages to deliver")
        rng = random.Random(seed)
        order = list(self.nodes)
        cursor = 0
        trace = CascadeTrace(start=self._steps)
        while self.pending():
            ready = [n for n in order if self.nodes[n].inbox]
            if policy == "fifo":
                name = min(ready, key=lambda n: self.nodes[n].inbox[0].delivery_seq)
            elif policy == "round_robin":
                while not self.nodes[order[cursor % len(order)]].inbox:
                    cursor += 1
                name = order[cursor % len(order)]
                cursor += 1
            else:
                name = rng.choice(ready)
            msg = self.nodes[name].inbox.popleft()
            trace.events.append(self._deliver(msg))
        return trace

    def step(self) -> TraceEvent:
        """Deliver only the oldest queued message."""
        ready = [n for n in self.nodes.values() if n.inbox]
        if not ready:
            raise PreconditionError("no queued messages to deliver")
        node = min(ready, key=lambda n: n.inbox[0].delivery_seq)
        return self._deliver(node.inbox.popleft())

    # -- internals --------------------------------------------------------

    def _send(self, sender: str | None, target: str, payload: Payload) -> None:
        node = self.node(target)
        node.inbox.append(Message(payload, sender, target, self._seq))
        self._seq += 1

    def _deliver(self, msg: Message) -> TraceEvent:
        step = self._steps
        self._steps += 1
        node = self.nodes[msg.target]
        payload = msg.payload
        changed = False
        if isinstance(payload, Alert):
            for txn in payload.mt_l.txns:
                if txn not in node.malicious:
                    node.malicious.append(txn)
                    changed = True
        elif isinstance(payload, Damage):
            if payload.table.target_fog != node.id:
                raise ProtocolError(f"damage table for {payload.table.target_fog} delivered to {node.id}")
            for row in payload.table.rows:
                if row.ref not in node.remote_damage:
                    node.remote_damage[row.ref] = None
                    changed = True
        else:
            if payload.table.target_fog != node.id:
                raise ProtocolError(f"valid table for {payload.table.target_fog} delivered to {node.id}")
            for ref, value in payload.table.as_mapping().items():
                if ref not in node.remote_damage:
                    raise ProtocolError(f"{node.id} got a corrected value for {ref} it never saw as damaged")
                node.valid_values[ref] = value

        history: list = []
        damage_sent: dict[str, list] = {}
        after_assessment = None
        if changed or node.assessment is None:
            history, damage_sent = self._assess(node)
            after_assessment = frozenset(node.blocked)
        valid_sent, patches = self._recover(node)
        damaged = frozenset() if node.recovery.complete else frozenset(node.assessment.damaged_items)
        return TraceEvent(
            step=step,
            node=node.id,
            kind=msg.kind,
            sender=msg.sender,
            delivery_seq=msg.delivery_seq,
            assessed=after_assessment is not None,
            damaged_history=history,
            damage_sent=damage_sent,
            valid_sent=valid_sent,
            patches=patches,
            blocked=frozenset(node.blocked),
            damaged=damaged,
            complete=node.recovery.complete,
            blocked_after_assessment=after_assessment,
        )

    def _assess(self, node: FogNode):
        incoming = None
        if node.remote_damage:
            incoming = DamageItemTable(node.id)
            for ref in node.remote_damage:
                incoming.add(ref.via, ref.item)
        out = assess(node.log, node.malicious, incoming)
        node.assessment = out
        node.blocked = out.damaged_items
        sent: dict[str, list] = {}
        for fog, table in out.outgoing.items():
            already = node.sent_damage.setdefault(fog, set())
            fresh = DamageItemTable(fog)
            for txn, item in table.pairs():
                if (txn, item) not in already:
                    fresh.add(txn, item)
                    already.add((txn, item))
            if fresh.rows:
                self._send(node.id, fog, Damage(fresh))
                sent[fog] = fresh.pairs()
        return out.history, sent

    def _recover(self, node: FogNode):
        out = recover(
            node.assessment.da_table,
            node.assessment.damaged_items,
            node.valid_values,
            spec=node.spec,
            fallback=_PreAttackValues(node),
            partial=True,
        )
        node.recovery = out
        sent: dict[str, list] = {}
        for fog, table in out.outgoing.items():
            already = node.sent_valid.setdefault(fog, {})
            fresh = ValidItemsTable(fog)
            for row in table.rows:
                key = (row.txn, row.item)
                if already.get(key) != row.value:
                    fresh.add(row.txn, row.item, row.value)
                    already[key] = row.value
            if fresh.rows:
                self._send(node.id, fog, Valid(fresh))
                sent[fog] = [(r.txn, r.item, r.value) for r in fresh.rows]
        patches: dict[str, int] = {}
        if out.complete:
            for item, value in out.patches.items():
                if node.db.get(item) != value or node.patched.get(item) != value:
                    patches[item] = value
            node.db.update(out.patches)
            node.patched.update(out.patches)
            node.blocked = set()
        else:
            node.blocked = set(node.assessment.damaged_items)
        return sent, patches


class _PreAttackValues(Mapping):
    """Committed value of an item just before the node's first damaging transaction."""

    def __init__(self, node: FogNode) -> None:
        self._node = node

    def _start(self) -> int:
        rows = self._node.assessment.da_table if self._node.assessment else []
        if not rows:
            return 0
        info = self._node.log.transaction(rows[0].txn)
        return info.ops[0].seq if info.ops else info.end_seq

    def __getitem__(self, item: str) -> int:
        try:
            return committed_value_before(self._node.log, item, self._start(), self._node.initial)
        except PreconditionError:
            raise KeyError(item) from None

    def __contains__(self, item: object) -> bool:
        try:
            self[item]
        except KeyError:
            return False
        return True

    def __iter__(self):
        return iter(self._node.initial)

    def __len__(self) -> int:
        return len(self._node.initial)
