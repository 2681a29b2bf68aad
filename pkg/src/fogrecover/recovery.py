"""Data recovery from a damage audit table.

Rows are repaired strictly in table order, so when a row looks upward for
the last good value of an item, every earlier row already holds corrected
values. Damaged writes are recomputed from the corrected reads that
preceded them in the original transaction.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .assessment import DamageAuditRow, DamageItemTable, RowKind
from .errors import PreconditionError, UpstreamIncomplete
from .logmodel import ItemRef, RemoteRef, TransactionLog, TxnId

# -- recompute rules -------------------------------------------------------


@dataclass(frozen=True)
class SumOfReads:
    """New value is the sum of every value read so far."""

    def apply(self, reads: Sequence[tuple[ItemRef, int]]) -> int:
        return sum(v for _, v in reads)


@dataclass(frozen=True)
class Constant:
    value: int

    def apply(self, reads: Sequence[tuple[ItemRef, int]]) -> int:
        return self.value


@dataclass(frozen=True)
class LastRead:
    def apply(self, reads: Sequence[tuple[ItemRef, int]]) -> int:
        if not reads:
            raise PreconditionError("last_read rule applied before any read")
        return reads[-1][1]


@dataclass(frozen=True)
class IdentityOf:
    item: str

    def apply(self, reads: Sequence[tuple[ItemRef, int]]) -> int:
        for ref, value in reversed(reads):
            if ref == self.item:
                return value
        raise PreconditionError(f"identity_of({self.item}) applied but {self.item} was not read")


Rule = SumOfReads | Constant | LastRead | IdentityOf
_RULE_TYPES = (SumOfReads, Constant, LastRead, IdentityOf)


def rule_to_dict(rule: Rule) -> dict:
    if isinstance(rule, SumOfReads):
        return {"kind": "sum"}
    if isinstance(rule, Constant):
        return {"kind": "constant", "value": rule.value}
    if isinstance(rule, LastRead):
        return {"kind": "last_read"}
    if isinstance(rule, IdentityOf):
        return {"kind": "identity", "item": rule.item}
    raise PreconditionError(f"unknown recompute rule {rule!r}")


def rule_from_dict(data: Mapping) -> Rule:
    kind = data.get("kind", "sum")
    if kind == "sum":
        return SumOfReads()
    if kind == "constant":
        return Constant(int(data["value"]))
    if kind == "last_read":
        return LastRead()
    if kind == "identity":
        return IdentityOf(str(data["item"]))
    raise PreconditionError(f"unknown recompute rule {kind!r}")


class RecomputeSpec:
    """Per-write recompute rules, keyed by (transaction, written item).

    Writes without an explicit rule use ``default``; verbatim logs rely on
    the default sum-of-reads rule.
    """

    def __init__(self, rules: Mapping[tuple[TxnId, str], Rule] | None = None, default: Rule | None = None):
        self.rules = dict(rules or {})
        self.default = default if default is not None else SumOfReads()
        for rule in [self.default, *self.rules.values()]:
            if not isinstance(rule, _RULE_TYPES):
                raise PreconditionError(f"unknown recompute rule {rule!r}")

    def rule(self, txn: TxnId, item: str) -> Rule:
        return self.rules.get((txn, item), self.default)


def recompute_row(
    reads: Sequence[tuple[int, ItemRef, int]],
    writes: Sequence[tuple[int, str]],
    rule: Rule | Mapping[str, Rule] = SumOfReads(),
) -> list[tuple[str, int]]:
    """Recompute ``writes`` from ``reads``; entries carry their log position.

    Each write sees only the reads positioned before it.
    """
    ordered = sorted(reads, key=lambda r: r[0])
    out = []
    for pos, item in writes:
        r = rule[item] if isinstance(rule, Mapping) else rule
        if not isinstance(r, _RULE_TYPES):
            raise PreconditionError(f"unknown recompute rule {r!r}")
        seen = [(ref, v) for p, ref, v in ordered if p < pos]
        out.append((item, r.apply(seen)))
    return out


# -- tables ----------------------------------------------------------------


@dataclass(frozen=True)
class ValidEntry:
    txn: TxnId
    item: str
    value: int


@dataclass
class ValidItemsTable:
    target_fog: str
    rows: list[ValidEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def add(self, txn: TxnId, item: str, value: int) -> None:
        for i, r in enumerate(self.rows):
            if r.txn == txn and r.item == item:
                self.rows[i] = ValidEntry(txn, item, value)
                return
        self.rows.append(ValidEntry(txn, item, value))

    def as_mapping(self) -> dict[RemoteRef, int]:
        return {RemoteRef(r.txn, r.item): r.value for r in self.rows}


@dataclass
class RecoveryOutput:
    recovered_table: list[DamageAuditRow]
    outgoing: dict[str, ValidItemsTable]
    patches: dict[str, int]
    still_blocked: set[str]
    complete: bool = True
    # rows fully repaired, in table order (== len(table) when complete)
    recovered_rows: int = 0


def last_valid_before(
    da_table: Sequence[DamageAuditRow],
    row_index: int,
    item: str,
    fallback: Mapping[str, int] | None = None,
) -> tuple[str, int]:
    """Nearest earlier ``(item, value)`` in any row's data-written column."""
    for row in reversed(da_table[:row_index]):
        value = row.written_value(item)
        if value is not None:
            return item, value
    if fallback is not None and item in fallback:
        return item, fallback[item]
    raise PreconditionError(f"no earlier value recorded for {item!r} and no fallback")


def _modified_items(post_log: TransactionLog | None) -> set[str]:
    if post_log is None:
        return set()
    out = set()
    for info in post_log.terminated():
        if info.committed:
            out.update(w.item for w in info.writes())
    return out


def recover(
    da_table: Sequence[DamageAuditRow],
    damaged_items: Iterable[str],
    valid_values: Mapping[RemoteRef, int] | None = None,
    post_log: TransactionLog | None = None,
    spec: RecomputeSpec | None = None,
    fallback: Mapping[str, int] | None = None,
    partial: bool = False,
) -> RecoveryOutput:
    """Repair ``da_table`` and compute database patches.

    ``valid_values`` supplies corrected values of remote items. When a row
    needs a remote value that is missing, :class:`UpstreamIncomplete` is
    raised, or with ``partial=True`` recovery stops before that row and
    reports ``complete=False``.
    """
    spec = spec or RecomputeSpec()
    valid_values = valid_values or {}
    rows = copy.deepcopy(list(da_table))
    damaged_items = set(damaged_items)
    outgoing: dict[str, ValidItemsTable] = {}
    done = 0
    for i, row in enumerate(rows):
        if row.kind is RowKind.MALICIOUS:
            for item in row.stale:
                _, value = last_valid_before(rows, i, item, fallback)
                row.data_written = [(n, value if n == item else v) for n, v in row.data_written]
            row.stale = []
            done += 1
            continue
        if not row.invalid_read:
            done += 1
            continue
        missing = [
            ref for ref in row.invalid_read
            if isinstance(ref, RemoteRef) and ref not in valid_values
        ]
        if missing:
            if partial:
                break
            raise UpstreamIncomplete(f"no corrected value received for {missing[0]} (row {row.txn})")
        exported = set(row.invalid_read)
        _repair_row(rows, i, valid_values, spec, fallback)
        for fog in row.fog_ids:
            table = outgoing.setdefault(fog, ValidItemsTable(fog))
            for ref, value in row.valid_read:
                if ref in exported:
                    table.add(row.txn, ref, value)
        done += 1

    complete = done == len(rows)
    patches: dict[str, int] = {}
    still_blocked: set[str] = set()
    if complete:
        modified = _modified_items(post_log)
        for item in sorted(damaged_items):
            if item in modified:
                continue
            _, value = last_valid_before(rows, len(rows), item, fallback)
            patches[item] = value
    else:
        still_blocked = damaged_items
    return RecoveryOutput(rows, outgoing, patches, still_blocked, complete, done)


def _repair_row(
    rows: list[DamageAuditRow],
    i: int,
    valid_values: Mapping[RemoteRef, int],
    spec: RecomputeSpec,
    fallback: Mapping[str, int] | None,
) -> None:
    row = rows[i]
    invalid = set(row.invalid_read)
    tainted = row.tainted_items()
    resolved: dict[ItemRef, int] = {}
    own: dict[str, int] = {}
    reads: list[tuple[ItemRef, int]] = []
    new_values: dict[str, int] = {}
    for step in row.steps:
        if step.op == "r":
            ref = step.ref
            if ref in own:
                value = own[ref]
            elif ref in invalid:
                if ref not in resolved:
                    if isinstance(ref, RemoteRef):
                        resolved[ref] = valid_values[ref]
                    else:
                        resolved[ref] = last_valid_before(rows, i, ref, fallback)[1]
                value = resolved[ref]
            else:
                value = step.value
            if ref in invalid and ref not in resolved:
                resolved[ref] = value
            reads.append((ref, value))
        else:
            if step.tainted:
                value = spec.rule(row.txn, step.ref).apply(reads)
                new_values[step.ref] = value
            else:
                value = step.value
            own[step.ref] = value
    row.valid_read = row.valid_read + [(ref, resolved[ref]) for ref in row.invalid_read]
    row.invalid_read = []
    row.data_written = [
        (name, new_values[name] if name in tainted and name in new_values else v)
        for name, v in row.data_written
    ]
    for step in row.steps:
        if step.op == "w" and step.tainted:
            step.value = new_values[step.ref]


def recover_primary(
    da_table: Sequence[DamageAuditRow],
    di_l: Iterable[str],
    post_log: TransactionLog | None = None,
    spec: RecomputeSpec | None = None,
    fallback: Mapping[str, int] | None = None,
) -> RecoveryOutput:
    """Recovery on the attacked node from its own assessment."""
    return recover(da_table, di_l, None, post_log, spec, fallback)


def recover_secondary(
    da_table: Sequence[DamageAuditRow],
    dit: DamageItemTable,
    incoming: ValidItemsTable | Iterable[ValidItemsTable],
    post_log: TransactionLog | None = None,
    spec: RecomputeSpec | None = None,
    fallback: Mapping[str, int] | None = None,
) -> RecoveryOutput:
    """Recovery on an affected node once upstream corrected values arrive."""
    tables = [incoming] if isinstance(incoming, ValidItemsTable) else list(incoming)
    values: dict[RemoteRef, int] = {}
    for t in tables:
        if t.target_fog != dit.target_fog:
            raise PreconditionError(f"valid-items table for {t.target_fog} delivered to {dit.target_fog}")
        values.update(t.as_mapping())
    return recover(da_table, dit.local_items(), values, post_log, spec, fallback)


def apply_patches(db: dict[str, int], patches: Mapping[str, int]) -> dict[str, int]:
    db.update(patches)
    return db

