"""Transaction logs of a single fog node.

A log is an append-only sequence of read, write, commit and abort records.
Logs are written and read in the compact schedule notation::

    r1(A, 5) w1(C, 11, 9) c1 fogx.r3(G, 9) c3 r9(fog1.T3.G, 9)

``fogx.r3(...)`` is a read issued by a transaction of ``fogx`` against this
node's data; ``fog1.T3.G`` is item ``G`` of ``fog1`` as read through that
node's transaction ``T3``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Union

from .errors import PreconditionError, ScheduleSyntaxError

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

_NAME = r"[^\s.,()]+"
_FOG = r"fog[A-Za-z0-9_]+"
_NAME_RE = re.compile(_NAME)
_FOG_RE = re.compile(_FOG)
_TXN_RE = re.compile(rf"({_FOG})\.T(\d+)")
_REMOTE_RE = re.compile(rf"({_FOG})\.T(\d+)\.({_NAME})")
_INT_RE = re.compile(r"[+-]?\d+")
_ENTRY_RE = re.compile(
    rf"""
    (?:(?P<origin>{_FOG})\s*\.\s*)?
    (?P<kind>[rwca])\s*(?P<num>\d+)
    (?:\s*\((?P<args>[^()]*)\))?
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, order=True)
class TxnId:
    """A transaction, qualified by the fog node whose log numbers it."""

    fog: str
    number: int

    def __str__(self) -> str:
        return f"{self.fog}.T{self.number}"

    @classmethod
    def parse(cls, text: str, default_fog: str | None = None) -> TxnId:
        """Parse ``fog1.T3``; a bare ``T3`` needs ``default_fog``."""
        text = text.strip()
        m = _TXN_RE.fullmatch(text)
        if m:
            return cls(m.group(1), int(m.group(2)))
        m = re.fullmatch(r"T(\d+)", text)
        if m and default_fog is not None:
            return cls(default_fog, int(m.group(1)))
        raise ValueError(f"not a transaction id: {text!r}")


@dataclass(frozen=True, order=True)
class RemoteRef:
    """Item ``item`` of another fog, as read through transaction ``via``."""

    via: TxnId
    item: str

    @property
    def source_fog(self) -> str:
        return self.via.fog

    def __str__(self) -> str:
        return f"{self.via}.{self.item}"


ItemRef = Union[str, RemoteRef]


def parse_item_ref(text: str) -> ItemRef:
    text = text.strip()
    m = _REMOTE_RE.fullmatch(text)
    if m:
        return RemoteRef(TxnId(m.group(1), int(m.group(2))), m.group(3))
    if not _NAME_RE.fullmatch(text):
        raise ValueError(f"invalid item name: {text!r}")
    return text


def item_sort_key(ref: ItemRef) -> tuple:
    return (isinstance(ref, RemoteRef), str(ref))


@dataclass(frozen=True)
class Read:
    item: ItemRef
    value: int


@dataclass(frozen=True)
class Write:
    item: str
    before: int
    after: int


@dataclass(frozen=True)
class Commit:
    pass


@dataclass(frozen=True)
class Abort:
    pass


Operation = Union[Read, Write, Commit, Abort]


@dataclass(frozen=True)
class LogRecord:
    seq: int
    txn: TxnId
    op: Operation
    origin: str | None = None

    @property
    def is_terminator(self) -> bool:
        return isinstance(self.op, (Commit, Abort))


@dataclass(frozen=True)
class TxnInfo:
    """All records of one transaction, grouped."""

    txn: TxnId
    ops: tuple[LogRecord, ...]
    outcome: str | None  # "commit", "abort" or None while in flight
    end_seq: int | None
    origin: str | None

    @property
    def committed(self) -> bool:
        return self.outcome == "commit"

    @property
    def is_foreign(self) -> bool:
        return self.origin is not None

    def reads(self) -> list[Read]:
        return [r.op for r in self.ops if isinstance(r.op, Read)]

    def writes(self) -> list[Write]:
        return [r.op for r in self.ops if isinstance(r.op, Write)]


@dataclass(frozen=True)
class TransactionLog:
    node: str
    records: tuple[LogRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @cached_property
    def _txn_index(self) -> dict[TxnId, TxnInfo]:
        ops: dict[TxnId, list[LogRecord]] = {}
        ends: dict[TxnId, LogRecord] = {}
        origins: dict[TxnId, str] = {}
        for rec in self.records:
            ops.setdefault(rec.txn, [])
            if rec.is_terminator:
                ends.setdefault(rec.txn, rec)
            else:
                ops[rec.txn].append(rec)
            if rec.origin is not None and rec.origin != self.node:
                origins.setdefault(rec.txn, rec.origin)
        out = {}
        for txn, recs in ops.items():
            end = ends.get(txn)
            outcome = None
            if end is not None:
                outcome = "commit" if isinstance(end.op, Commit) else "abort"
            out[txn] = TxnInfo(
                txn=txn,
                ops=tuple(recs),
                outcome=outcome,
                end_seq=end.seq if end is not None else None,
                origin=origins.get(txn),
            )
        return out

    def transactions(self) -> list[TxnInfo]:
        """Transactions in order of their first record."""
        return list(self._txn_index.values())

    def transaction(self, txn: TxnId) -> TxnInfo | None:
        return self._txn_index.get(txn)

    def terminated(self) -> list[TxnInfo]:
        """Committed and aborted transactions in terminator order."""
        done = [t for t in self._txn_index.values() if t.end_seq is not None]
        return sorted(done, key=lambda t: t.end_seq)

    def local_items(self) -> set[str]:
        items = set()
        for rec in self.records:
            if isinstance(rec.op, (Read, Write)) and isinstance(rec.op.item, str):
                items.add(rec.op.item)
        return items

    def final_state(self, initial: Mapping[str, int] | None = None) -> dict[str, int]:
        """Committed value of every local item at the end of the log."""
        state = dict(initial or {})
        for rec in self.records:
            op = rec.op
            if isinstance(op, (Read, Write)) and isinstance(op.item, str) and op.item not in state:
                state[op.item] = op.value if isinstance(op, Read) else op.before
        for info in self.terminated():
            if info.committed:
                for w in info.writes():
                    state[w.item] = w.after
        return state


# -- parsing and printing --------------------------------------------------


def _parse_int(text: str, pos: int) -> int:
    text = text.strip()
    if not _INT_RE.fullmatch(text):
        raise ScheduleSyntaxError(f"expected an integer, got {text!r}", pos)
    value = int(text)
    if not INT64_MIN <= value <= INT64_MAX:
        raise ScheduleSyntaxError(f"value {value} outside the 64-bit range", pos)
    return value


def parse_schedule(text: str, node: str) -> TransactionLog:
    """Parse schedule notation into the log of fog ``node``."""
    records: list[LogRecord] = []
    ended: set[int] = set()
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _ENTRY_RE.match(text, pos)
        if not m:
            raise ScheduleSyntaxError(f"unexpected input {text[pos:pos + 12]!r}", pos)
        kind, num, args, origin = m.group("kind", "num", "args", "origin")
        number = int(num)
        txn = TxnId(node, number)
        if number in ended:
            raise ScheduleSyntaxError(f"T{number} has an operation after its terminator", pos)
        if origin is not None and kind != "r":
            raise ScheduleSyntaxError("only reads may carry an origin fog", pos)
        parts = [] if args is None else args.split(",")
        if kind in "ca":
            if args is not None:
                raise ScheduleSyntaxError(f"{kind}{num} takes no arguments", pos)
            op: Operation = Commit() if kind == "c" else Abort()
            ended.add(number)
        elif kind == "r":
            if len(parts) != 2:
                raise ScheduleSyntaxError("a read needs (item, value)", pos)
            try:
                item = parse_item_ref(parts[0])
            except ValueError as exc:
                raise ScheduleSyntaxError(str(exc), pos) from None
            if origin is not None and isinstance(item, RemoteRef):
                raise ScheduleSyntaxError("an origin-tagged read must name a local item", pos)
            op = Read(item, _parse_int(parts[1], pos))
        else:
            if len(parts) != 3:
                raise ScheduleSyntaxError("a write needs (item, before, after)", pos)
            try:
                item = parse_item_ref(parts[0])
            except ValueError as exc:
                raise ScheduleSyntaxError(str(exc), pos) from None
            if isinstance(item, RemoteRef):
                raise ScheduleSyntaxError("writes must target local items", pos)
            op = Write(item, _parse_int(parts[1], pos), _parse_int(parts[2], pos))
        records.append(LogRecord(len(records), txn, op, origin))
        pos = m.end()
    return TransactionLog(node, tuple(records))


def format_record(rec: LogRecord) -> str:
    n = rec.txn.number
    op = rec.op
    if isinstance(op, Read):
        prefix = f"{rec.origin}." if rec.origin else ""
        return f"{prefix}r{n}({op.item}, {op.value})"
    if isinstance(op, Write):
        return f"w{n}({op.item}, {op.before}, {op.after})"
    if isinstance(op, Commit):
        return f"c{n}"
    return f"a{n}"


def format_schedule(log: TransactionLog | Iterable[LogRecord]) -> str:
    return " ".join(format_record(r) for r in log)


# -- validation ------------------------------------------------------------


@dataclass
class ValidationReport:
    errors: list[str]
    warnings: list[str]

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_schedule(log: TransactionLog) -> ValidationReport:
    """Check structural invariants and value chains of ``log``.

    Structural problems are errors. Reads or before-images that disagree
    with the latest committed value are only warnings.
    """
    errors: list[str] = []
    warnings: list[str] = []

    last_seq = None
    ended: dict[TxnId, int] = {}
    for rec in log.records:
        label = format_record(rec)
        if last_seq is not None and rec.seq <= last_seq:
            errors.append(f"seq {rec.seq} does not increase ({label})")
        last_seq = rec.seq
        if rec.txn.fog != log.node:
            errors.append(f"{label}: transaction {rec.txn} is not numbered by {log.node}")
        if rec.txn in ended:
            if rec.is_terminator:
                errors.append(f"{label}: duplicate terminator for {rec.txn}")
            else:
                errors.append(f"{label}: operation after terminator of {rec.txn}")
            continue
        if rec.is_terminator:
            ended[rec.txn] = rec.seq
        if isinstance(rec.op, Write) and not isinstance(rec.op.item, str):
            errors.append(f"{label}: write of a remote item")
        if rec.origin is not None and not isinstance(rec.op, Read):
            errors.append(f"{label}: origin set on a non-read record")

    for info in log.transactions():
        if info.outcome is None:
            errors.append(f"{info.txn} has no commit or abort")
        if info.is_foreign and info.writes():
            errors.append(f"{info.txn} is a read from {info.origin} but writes")

    errors.extend(_commit_order_violations(log))
    warnings.extend(_value_chain_warnings(log))
    return ValidationReport(errors, warnings)


def _commit_order_violations(log: TransactionLog) -> list[str]:
    """Conflicting operations must be ordered like their commits."""
    commit_pos = {t.txn: t.end_seq for t in log.transactions() if t.committed}
    by_item: dict[str, list[LogRecord]] = {}
    for rec in log.records:
        if rec.txn in commit_pos and isinstance(rec.op, (Read, Write)) and isinstance(rec.op.item, str):
            by_item.setdefault(rec.op.item, []).append(rec)
    out = []
    for item, recs in by_item.items():
        for i, p in enumerate(recs):
            for q in recs[i + 1:]:
                if p.txn == q.txn:
                    continue
                if not (isinstance(p.op, Write) or isinstance(q.op, Write)):
                    continue
                if commit_pos[p.txn] > commit_pos[q.txn]:
                    out.append(
                        f"{format_record(p)} precedes conflicting {format_record(q)} "
                        f"but {p.txn} commits after {q.txn}"
                    )
    return out


def _value_chain_warnings(log: TransactionLog) -> list[str]:
    committed: dict[str, int] = {}
    pending: dict[TxnId, dict[str, int]] = {}
    out = []
    for rec in log.records:
        op = rec.op
        mine = pending.setdefault(rec.txn, {})
        if isinstance(op, Commit):
            committed.update(mine)
            pending.pop(rec.txn)
            continue
        if isinstance(op, Abort):
            pending.pop(rec.txn)
            continue
        if not isinstance(op.item, str):
            continue
        seen = op.value if isinstance(op, Read) else op.before
        expected = mine.get(op.item, committed.get(op.item))
        if expected is None:
            committed[op.item] = seen
        elif expected != seen:
            what = "read" if isinstance(op, Read) else "before-image"
            out.append(f"{format_record(rec)}: {what} {seen} but {op.item} = {expected}")
        if isinstance(op, Write):
            mine[op.item] = op.after
    return out


def committed_value_before(
    log: TransactionLog,
    item: str,
    seq: int,
    initial: Mapping[str, int] | None = None,
) -> int:
    """Value of local ``item`` as seen by a transaction starting at ``seq``.

    Prefers the after-image of the last write by a transaction committed
    before ``seq``, then the earliest read logged before ``seq``, then
    ``initial``.
    """
    last_write = None
    for info in log.terminated():
        if info.end_seq >= seq:
            break
        if info.committed:
            for w in info.writes():
                if w.item == item:
                    last_write = w.after
    if last_write is not None:
        return last_write
    for rec in log.records:
        if rec.seq >= seq:
            break
        if isinstance(rec.op, Read) and rec.op.item == item:
            return rec.op.value
    if initial is not None and item in initial:
        return initial[item]
    raise PreconditionError(f"no known value for {item!r} before seq {seq} in {log.node}")
