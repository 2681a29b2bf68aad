"""Damage assessment on the victim node and on secondary affected nodes.

Both entry points share one scan. Transactions are visited in commit
order, and each transaction's operations in log order:

* a malicious transaction records the *before* image of each item it
  wrote and marks the item damaged;
* a read issued by another fog's transaction against a damaged item is
  exported to that fog in a :class:`DamageItemTable`;
* an ordinary transaction becomes tainted at its first read of a damaged
  item; every later write is damaged. A write of a damaged item by a
  transaction that has not yet read anything damaged refreshes the item.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import PreconditionError
from .logmodel import ItemRef, Read, RemoteRef, TransactionLog, TxnId, Write, item_sort_key


class RowKind(str, Enum):
    MALICIOUS = "malicious"
    REMOTE_READ = "remote_read"
    UPDATING = "updating"
    AFFECTED = "affected"


@dataclass
class Step:
    """One read or write of a row's transaction, kept for recomputation."""

    op: str  # "r" or "w"
    ref: ItemRef
    value: int  # read value or after-image
    tainted: bool = False


@dataclass
class DamageAuditRow:
    txn: TxnId
    kind: RowKind
    data_written: list[tuple[str, int]] = field(default_factory=list)
    valid_read: list[tuple[ItemRef, int]] = field(default_factory=list)
    invalid_read: list[ItemRef] = field(default_factory=list)
    fog_ids: list[str] = field(default_factory=list)
    steps: list[Step] = field(default_factory=list)
    # malicious rows: items whose before-image was itself already damaged
    stale: list[str] = field(default_factory=list)

    def written_value(self, item: str) -> int | None:
        for name, value in reversed(self.data_written):
            if name == item:
                return value
        return None

    def tainted_items(self) -> set[str]:
        return {s.ref for s in self.steps if s.op == "w" and s.tainted}


@dataclass(frozen=True)
class DamageEntry:
    txn: TxnId
    item: str
    marked_affected: bool = True

    @property
    def ref(self) -> RemoteRef:
        return RemoteRef(self.txn, self.item)


@dataclass
class DamageItemTable:
    """Damaged (transaction, item) pairs known to, or sent to, ``target_fog``.

    Rows whose transaction belongs to another fog name remote items that
    ``target_fog`` read while they were damaged. Rows numbered by
    ``target_fog`` itself name its own damaged local items.
    """

    target_fog: str
    rows: list[DamageEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def pairs(self) -> list[tuple[TxnId, str]]:
        return [(r.txn, r.item) for r in self.rows]

    def add(self, txn: TxnId, item: str, marked_affected: bool = True) -> bool:
        if any(r.txn == txn and r.item == item for r in self.rows):
            return False
        self.rows.append(DamageEntry(txn, item, marked_affected))
        return True

    def remote_refs(self) -> set[RemoteRef]:
        return {r.ref for r in self.rows if r.txn.fog != self.target_fog}

    def local_items(self) -> set[str]:
        return {r.item for r in self.rows if r.txn.fog == self.target_fog}

    def _add_local(self, txn: TxnId, item: str) -> None:
        if item not in self.local_items():
            self.rows.append(DamageEntry(txn, item, False))

    def _discard_local(self, item: str) -> None:
        self.rows = [r for r in self.rows if not (r.txn.fog == self.target_fog and r.item == item)]


@dataclass(frozen=True)
class MaliciousList:
    target_fog: str
    txns: tuple[TxnId, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "txns", tuple(self.txns))
        if not self.txns:
            raise PreconditionError("a malicious-transaction list cannot be empty")
        for t in self.txns:
            if t.fog != self.target_fog:
                raise PreconditionError(f"{t} is not a transaction of {self.target_fog}")


DamagedItemSet = set  # set of local item names


@dataclass
class AssessmentOutput:
    node: str
    da_table: list[DamageAuditRow]
    damaged: DamagedItemSet | DamageItemTable
    outgoing: dict[str, DamageItemTable]
    # damaged local items after each visited transaction
    history: list[tuple[TxnId, frozenset[str]]] = field(default_factory=list)

    @property
    def damaged_items(self) -> set[str]:
        if isinstance(self.damaged, DamageItemTable):
            return self.damaged.local_items()
        return set(self.damaged)

    def row(self, txn: TxnId) -> DamageAuditRow | None:
        for r in self.da_table:
            if r.txn == txn:
                return r
        return None


def assess(
    log: TransactionLog,
    malicious: Iterable[TxnId] = (),
    incoming: DamageItemTable | None = None,
) -> AssessmentOutput:
    """Assess ``log`` given local malicious transactions and imported damage.

    With only ``malicious`` this is the victim-node assessment; with only
    ``incoming`` it is the secondary-node assessment. A node that is both
    attacked and downstream of damage passes both.
    """
    node = log.node
    malicious = list(dict.fromkeys(malicious))
    for txn in malicious:
        info = log.transaction(txn)
        if info is None:
            raise PreconditionError(f"malicious {txn} does not appear in the log of {node}")
        if not info.committed:
            raise PreconditionError(f"malicious {txn} never committed in {node}")
    mal_set = set(malicious)

    table: DamageItemTable | None = None
    remote_bad: set[RemoteRef] = set()
    if incoming is not None:
        if incoming.target_fog != node:
            raise PreconditionError(f"damage table for {incoming.target_fog} delivered to {node}")
        table = DamageItemTable(node, list(incoming.rows))
        remote_bad = table.remote_refs()
        read_refs = {
            rec.op.item
            for rec in log.records
            if isinstance(rec.op, Read) and isinstance(rec.op.item, RemoteRef)
        }
        missing = sorted(remote_bad - read_refs)
        if missing:
            raise PreconditionError(f"{node} never read {missing[0]} listed in its damage table")

    damaged: dict[str, None] = {}  # insertion-ordered set of local items
    if table is not None:
        damaged.update(dict.fromkeys(table.local_items()))
    outgoing: dict[str, DamageItemTable] = {}
    rows: list[DamageAuditRow] = []
    history: list[tuple[TxnId, frozenset[str]]] = []

    def is_bad(ref: ItemRef) -> bool:
        if isinstance(ref, RemoteRef):
            return ref in remote_bad
        return ref in damaged

    def mark(txn: TxnId, item: str) -> None:
        damaged[item] = None
        if table is not None:
            table._add_local(txn, item)

    def refresh(item: str) -> None:
        damaged.pop(item, None)
        if table is not None:
            table._discard_local(item)

    order = log.terminated()
    start = len(order)
    for i, info in enumerate(order):
        if info.txn in mal_set or any(
            isinstance(r.item, RemoteRef) and r.item in remote_bad for r in info.reads()
        ):
            start = i
            break

    for info in order[start:]:
        if not info.committed:
            continue
        txn = info.txn
        if txn in mal_set:
            row = DamageAuditRow(txn, RowKind.MALICIOUS)
            for w in info.writes():
                if any(name == w.item for name, _ in row.data_written):
                    continue
                row.data_written.append((w.item, w.before))
                if w.item in damaged:
                    row.stale.append(w.item)
                mark(txn, w.item)
            rows.append(row)
        elif info.is_foreign:
            row = DamageAuditRow(txn, RowKind.REMOTE_READ)
            for rec in info.ops:
                op = rec.op
                if not isinstance(op, Read):
                    continue
                row.steps.append(Step("r", op.item, op.value))
                if is_bad(op.item) and op.item not in row.invalid_read:
                    row.invalid_read.append(op.item)
                    outgoing.setdefault(info.origin, DamageItemTable(info.origin)).add(txn, op.item)
            if row.invalid_read:
                row.fog_ids.append(info.origin)
                row.invalid_read.sort(key=item_sort_key)
                rows.append(row)
        else:
            row = _scan_updating(info, is_bad, mark, refresh, damaged)
            if row.data_written:
                rows.append(row)
        history.append((txn, frozenset(damaged)))

    result: DamagedItemSet | DamageItemTable = table if table is not None else set(damaged)
    return AssessmentOutput(node, rows, result, outgoing, history)


def _scan_updating(info, is_bad, mark, refresh, damaged) -> DamageAuditRow:
    row = DamageAuditRow(info.txn, RowKind.UPDATING)
    seen: set = set()
    tainted = False
    for rec in info.ops:
        op = rec.op
        if isinstance(op, Read):
            bad = is_bad(op.item)
            row.steps.append(Step("r", op.item, op.value))
            if op.item not in seen:
                seen.add(op.item)
                if bad:
                    row.invalid_read.append(op.item)
                else:
                    row.valid_read.append((op.item, op.value))
            tainted = tainted or bad
        elif isinstance(op, Write):
            row.steps.append(Step("w", op.item, op.after, tainted))
            if tainted:
                row.data_written.append((op.item, op.after))
                mark(info.txn, op.item)
            elif op.item in damaged:
                row.data_written.append((op.item, op.after))
                refresh(op.item)
    if any(isinstance(ref, RemoteRef) for ref in row.invalid_read):
        row.kind = RowKind.AFFECTED
    row.invalid_read.sort(key=item_sort_key)
    return row


def assess_primary(log: TransactionLog, mt_l: MaliciousList | Sequence[TxnId]) -> AssessmentOutput:
    """Damage assessment on the node the IDS reported as attacked."""
    if isinstance(mt_l, MaliciousList):
        if mt_l.target_fog != log.node:
            raise PreconditionError(f"alert for {mt_l.target_fog} delivered to {log.node}")
        txns = mt_l.txns
    else:
        txns = MaliciousList(log.node, tuple(mt_l)).txns
    return assess(log, malicious=txns)


def assess_secondary(log: TransactionLog, incoming: DamageItemTable) -> AssessmentOutput:
    """Damage assessment on a node that read damaged items of another node.

    The returned ``damaged`` is ``incoming`` extended with the local items
    found damaged here.
    """
    return assess(log, incoming=incoming)
