"""Text and JSON forms of the audit, damage and valid-items tables.

Text tables use the five-column layout ``T Id | Data written | Valid read |
Invalid | Fog ID`` with tab-separated columns, one row per line.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from .assessment import (
    AssessmentOutput,
    DamageAuditRow,
    DamageEntry,
    DamageItemTable,
    RowKind,
    Step,
)
from .fognet import CascadeTrace, FogNetwork
from .logmodel import ItemRef, TxnId, format_schedule, parse_item_ref
from .recovery import RecoveryOutput, ValidEntry, ValidItemsTable

DA_HEADER = "T Id\tData written\tValid read\tInvalid\tFog ID"
DIT_HEADER = "Transaction Id\tDamaged Data Items"
VIT_HEADER = "Transaction Id\tValid Data Items"


def _pairs(pairs: Iterable[tuple[ItemRef, int]]) -> str:
    return ", ".join(f"({ref}, {value})" for ref, value in pairs)


def format_da_row(row: DamageAuditRow) -> str:
    return "\t".join(
        [
            f"T{row.txn.number}",
            _pairs(row.data_written),
            _pairs(row.valid_read),
            ", ".join(str(r) for r in row.invalid_read),
            ", ".join(row.fog_ids),
        ]
    )


def format_da_table(rows: Sequence[DamageAuditRow]) -> str:
    return "\n".join([DA_HEADER, *(format_da_row(r) for r in rows)])


def format_damage_table(table: DamageItemTable) -> str:
    return "\n".join([DIT_HEADER, *(f"{r.txn}\t{r.item}" for r in table.rows)])


def format_valid_table(table: ValidItemsTable) -> str:
    return "\n".join([VIT_HEADER, *(f"{r.txn}\t({r.item}, {r.value})" for r in table.rows)])


def format_patches(patches: Mapping[str, int]) -> str:
    return "\n".join(f"{item} = {value}" for item, value in patches.items())


# -- JSON ------------------------------------------------------------------


def row_to_dict(row: DamageAuditRow) -> dict:
    return {
        "txn": str(row.txn),
        "kind": row.kind.value,
        "data_written": [[item, v] for item, v in row.data_written],
        "valid_read": [[str(ref), v] for ref, v in row.valid_read],
        "invalid_read": [str(ref) for ref in row.invalid_read],
        "fog_ids": list(row.fog_ids),
        "steps": [[s.op, str(s.ref), s.value, s.tainted] for s in row.steps],
        "stale": list(row.stale),
    }


def row_from_dict(d: Mapping) -> DamageAuditRow:
    return DamageAuditRow(
        txn=TxnId.parse(d["txn"]),
        kind=RowKind(d["kind"]),
        data_written=[(item, int(v)) for item, v in d.get("data_written", [])],
        valid_read=[(parse_item_ref(ref), int(v)) for ref, v in d.get("valid_read", [])],
        invalid_read=[parse_item_ref(ref) for ref in d.get("invalid_read", [])],
        fog_ids=list(d.get("fog_ids", [])),
        steps=[Step(op, parse_item_ref(ref), int(v), bool(t)) for op, ref, v, t in d.get("steps", [])],
        stale=list(d.get("stale", [])),
    )


def damage_table_to_dict(table: DamageItemTable) -> dict:
    return {
        "target_fog": table.target_fog,
        "rows": [
            {"txn": str(r.txn), "item": r.item, "marked_affected": r.marked_affected}
            for r in table.rows
        ],
    }


def damage_table_from_dict(d: Mapping) -> DamageItemTable:
    return DamageItemTable(
        d["target_fog"],
        [
            DamageEntry(TxnId.parse(r["txn"]), r["item"], bool(r.get("marked_affected", True)))
            for r in d.get("rows", [])
        ],
    )


def valid_table_to_dict(table: ValidItemsTable) -> dict:
    return {
        "target_fog": table.target_fog,
        "rows": [{"txn": str(r.txn), "item": r.item, "value": r.value} for r in table.rows],
    }


def valid_table_from_dict(d: Mapping) -> ValidItemsTable:
    return ValidItemsTable(
        d["target_fog"],
        [ValidEntry(TxnId.parse(r["txn"]), r["item"], int(r["value"])) for r in d.get("rows", [])],
    )


def assessment_to_dict(out: AssessmentOutput) -> dict:
    if isinstance(out.damaged, DamageItemTable):
        damaged = damage_table_to_dict(out.damaged)
    else:
        damaged = sorted(out.damaged)
    return {
        "node": out.node,
        "da_table": [row_to_dict(r) for r in out.da_table],
        "damaged": damaged,
        "outgoing": {fog: damage_table_to_dict(t) for fog, t in out.outgoing.items()},
    }


def assessment_from_dict(d: Mapping) -> AssessmentOutput:
    damaged = d.get("damaged", [])
    if isinstance(damaged, Mapping):
        damaged = damage_table_from_dict(damaged)
    else:
        damaged = set(damaged)
    return AssessmentOutput(
        node=d["node"],
        da_table=[row_from_dict(r) for r in d.get("da_table", [])],
        damaged=damaged,
        outgoing={fog: damage_table_from_dict(t) for fog, t in d.get("outgoing", {}).items()},
    )


def recovery_to_dict(out: RecoveryOutput) -> dict:
    return {
        "recovered_table": [row_to_dict(r) for r in out.recovered_table],
        "outgoing": {fog: valid_table_to_dict(t) for fog, t in out.outgoing.items()},
        "patches": dict(out.patches),
        "still_blocked": sorted(out.still_blocked),
        "complete": out.complete,
    }


def trace_to_dict(trace: CascadeTrace) -> list[dict]:
    return [
        {
            "step": e.step,
            "node": e.node,
            "kind": e.kind,
            "sender": e.sender,
            "delivery_seq": e.delivery_seq,
            "assessed": e.assessed,
            "blocked_after_assessment": (
                sorted(e.blocked_after_assessment) if e.blocked_after_assessment is not None else None
            ),
            "damaged_history": [[str(t), sorted(items)] for t, items in e.damaged_history],
            "damage_sent": {f: [[str(t), i] for t, i in rows] for f, rows in e.damage_sent.items()},
            "valid_sent": {f: [[str(t), i, v] for t, i, v in rows] for f, rows in e.valid_sent.items()},
            "patches": dict(e.patches),
            "blocked": sorted(e.blocked),
            "complete": e.complete,
        }
        for e in trace.events
    ]


def network_snapshot(net: FogNetwork) -> dict:
    return {
        name: {
            "kind": n.kind.value,
            "db": dict(sorted(n.db.items())),
            "blocked": sorted(n.blocked),
            "inbox": [m.kind for m in n.inbox],
            "log": format_schedule(n.log),
        }
        for name, n in net.nodes.items()
    }
