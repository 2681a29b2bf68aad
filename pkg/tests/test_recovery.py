from __future__ import annotations

import pytest

from fogrecover import (
    Constant,
    DamageItemTable,
    IdentityOf,
    LastRead,
    PreconditionError,
    RecomputeSpec,
    SumOfReads,
    TxnId,
    UpstreamIncomplete,
    ValidItemsTable,
    assess_primary,
    assess_secondary,
    last_valid_before,
    parse_schedule,
    recompute_row,
    recover,
    recover_primary,
    recover_secondary,
)
from fogrecover.recovery import apply_patches, rule_from_dict, rule_to_dict

from conftest import row_tuple


class TestRecomputeRow:
    def test_sum_of_both_reads(self):
        out = recompute_row([(0, "B", 4), (1, "G", 3)], [(2, "A"), (3, "D")])
        assert out == [("A", 7), ("D", 7)]

    def test_constant_without_reads(self):
        assert recompute_row([], [(0, "X")], Constant(5)) == [("X", 5)]

    def test_reads_so_far(self):
        reads = [(0, "B", 4), (2, "D", 23), (4, "A", 5)]
        assert recompute_row(reads, [(3, "D"), (5, "A")]) == [("D", 27), ("A", 32)]

    def test_per_item_rules(self):
        reads = [(0, "B", 4), (1, "C", 6)]
        rules = {"X": LastRead(), "Y": IdentityOf("B")}
        assert recompute_row(reads, [(2, "X"), (3, "Y")], rules) == [("X", 6), ("Y", 4)]

    def test_rule_preconditions(self):
        with pytest.raises(PreconditionError):
            recompute_row([], [(0, "X")], LastRead())
        with pytest.raises(PreconditionError):
            recompute_row([(0, "A", 1)], [(1, "X")], IdentityOf("B"))
        with pytest.raises(PreconditionError):
            recompute_row([], [(0, "X")], "sum")

    @pytest.mark.parametrize("rule", [SumOfReads(), Constant(-4), LastRead(), IdentityOf("Q")])
    def test_rule_dict_round_trip(self, rule):
        assert rule_from_dict(rule_to_dict(rule)) == rule

    def test_unknown_rule_kind(self):
        with pytest.raises(PreconditionError):
            rule_from_dict({"kind": "product"})

    def test_spec_default_and_override(self):
        t = TxnId("fog1", 4)
        spec = RecomputeSpec({(t, "A"): Constant(5)})
        assert spec.rule(t, "A") == Constant(5)
        assert spec.rule(t, "G") == SumOfReads()


class TestLastValidBefore:
    def test_before_image(self, fog1_assessment):
        assert last_valid_before(fog1_assessment.da_table, 1, "G") == ("G", 3)

    def test_recomputed_value(self, fog1_recovery):
        assert last_valid_before(fog1_recovery.recovered_table, 4, "D") == ("D", 7)

    def test_fallback(self, fog1_assessment):
        assert last_valid_before(fog1_assessment.da_table, 5, "Q", {"Q": 9}) == ("Q", 9)

    def test_nothing_found(self, fog1_assessment):
        with pytest.raises(PreconditionError):
            last_valid_before(fog1_assessment.da_table, 5, "Q")


class TestRecoverPrimary:
    def test_patches(self, fog1_recovery):
        assert fog1_recovery.complete
        assert fog1_recovery.still_blocked == set()
        assert fog1_recovery.recovered_rows == 10

    def test_input_not_mutated(self, fog1_assessment):
        before = [row_tuple(r) for r in fog1_assessment.da_table]
        recover_primary(fog1_assessment.da_table, fog1_assessment.damaged)
        assert [row_tuple(r) for r in fog1_assessment.da_table] == before

    def test_nothing_to_recover(self):
        log = parse_schedule("r1(A, 1) c1 w2(B, 0, 5) c2", "fog1")
        out = assess_primary(log, [TxnId("fog1", 1)])
        rec = recover_primary(out.da_table, out.damaged)
        assert rec.recovered_table == out.da_table
        assert rec.outgoing == {} and rec.patches == {}

    def test_post_log_skips_modified(self, fog1_assessment):
        post = parse_schedule("w20(A, 32, 1) c20 w21(D, 27, 2) a21", "fog1")
        rec = recover_primary(fog1_assessment.da_table, fog1_assessment.damaged, post)
        assert rec.patches == {"D": 27, "E": 43}

    def test_stale_before_image_resolved(self):
        log = parse_schedule("r1(B, 2) w1(A, 0, 9) c1 r2(A, 9) w2(A, 9, 8) c2", "fog1")
        out = assess_primary(log, [TxnId("fog1", 1), TxnId("fog1", 2)])
        assert out.row(TxnId("fog1", 2)).data_written == [("A", 9)]
        rec = recover_primary(out.da_table, out.damaged)
        assert rec.recovered_table[1].data_written == [("A", 0)]
        assert rec.patches == {"A": 0}

    def test_own_write_read_back(self):
        log = parse_schedule(
            "w1(G, 3, 9) c1 r2(G, 9) w2(A, 0, 9) r2(A, 9) w2(D, 0, 18) c2", "fog1"
        )
        out = assess_primary(log, [TxnId("fog1", 1)])
        rec = recover_primary(out.da_table, out.damaged)
        assert rec.patches == {"A": 3, "D": 6, "G": 3}

    def test_custom_spec(self):
        log = parse_schedule("w1(G, 3, 9) c1 r2(G, 9) w2(A, 0, 90) c2", "fog1")
        out = assess_primary(log, [TxnId("fog1", 1)])
        t2 = TxnId("fog1", 2)
        rec = recover_primary(out.da_table, out.damaged, spec=RecomputeSpec({(t2, "A"): IdentityOf("G")}))
        assert rec.patches == {"A": 3, "G": 3}


class TestRecoverSecondary:
    def test_missing_value_raises(self, fogx_assessment, fog1_recovery):
        vit = fog1_recovery.outgoing["fogx"]
        partial = ValidItemsTable("fogx", vit.rows[:1])
        with pytest.raises(UpstreamIncomplete):
            recover_secondary(fogx_assessment.da_table, fogx_assessment.damaged, partial)

    def test_partial_mode(self, fogx_assessment, fog1_recovery):
        vit = ValidItemsTable("fogx", fog1_recovery.outgoing["fogx"].rows[:1])
        out = recover(fogx_assessment.da_table, fogx_assessment.damaged_items, vit.as_mapping(), partial=True)
        assert not out.complete
        assert out.recovered_rows == 2
        assert out.patches == {}
        assert out.still_blocked == {"K", "M", "N", "P"}

    def test_table_for_other_node(self, fogx_assessment, fog1_recovery):
        wrong = ValidItemsTable("fog7", fog1_recovery.outgoing["fogx"].rows)
        with pytest.raises(PreconditionError):
            recover_secondary(fogx_assessment.da_table, fogx_assessment.damaged, wrong)

    def test_several_tables(self, fogx_assessment, fog1_recovery):
        rows = fog1_recovery.outgoing["fogx"].rows
        tables = [ValidItemsTable("fogx", rows[:1]), ValidItemsTable("fogx", rows[1:])]
        out = recover_secondary(fogx_assessment.da_table, fogx_assessment.damaged, tables)
        assert out.patches == {"K": 6, "M": 16, "N": 31, "P": 43}

    def test_empty_inputs(self):
        out = recover_secondary([], DamageItemTable("fogx"), ValidItemsTable("fogx"))
        assert out.recovered_table == [] and out.outgoing == {} and out.patches == {}

    def test_chain_forwarding(self):
        foga = parse_schedule("w1(X, 0, 9) c1 fogb.r2(X, 9) c2", "foga")
        fogb = parse_schedule("r1(foga.T2.X, 9) w1(Y, 0, 9) c1 fogc.r2(Y, 9) c2", "fogb")
        a = assess_primary(foga, [TxnId("foga", 1)])
        ra = recover_primary(a.da_table, a.damaged, fallback={"X": 0})
        assert [(r.item, r.value) for r in ra.outgoing["fogb"].rows] == [("X", 0)]
        b = assess_secondary(fogb, a.outgoing["fogb"])
        rb = recover_secondary(b.da_table, b.damaged, ra.outgoing["fogb"])
        assert rb.patches == {"Y": 0}
        assert [(str(r.txn), r.item, r.value) for r in rb.outgoing["fogc"].rows] == [("fogb.T2", "Y", 0)]


def test_valid_table_add_replaces():
    table = ValidItemsTable("fogx")
    t = TxnId("fog1", 3)
    table.add(t, "G", 1)
    table.add(t, "G", 3)
    assert len(table) == 1 and table.rows[0].value == 3


def test_apply_patches():
    db = {"A": 25, "B": 4}
    assert apply_patches(db, {"A": 32}) == {"A": 32, "B": 4}
