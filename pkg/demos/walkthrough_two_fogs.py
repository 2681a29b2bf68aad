"""
Assessing and repairing two fog logs by hand
============================================

fog1 was attacked by T1, which forged C and G. fogx later read G, D and E
from fog1 through proxy transactions. We run the four steps one at a time
on the bundled schedules and print every intermediate table.
"""

from __future__ import annotations

from importlib import resources

from fogrecover import (
    MaliciousList,
    TxnId,
    assess_primary,
    assess_secondary,
    parse_schedule,
    recover_primary,
    recover_secondary,
    validate_schedule,
)
from fogrecover.serialize import format_da_table, format_damage_table, format_patches, format_valid_table

data = resources.files("fogrecover") / "data"
fog1 = parse_schedule((data / "fog1.sched").read_text(), "fog1")
fogx = parse_schedule((data / "fogx.sched").read_text(), "fogx")

# %%
# The hand-written fog1 log has a few values that do not chain. They are
# warnings, not errors, so the log is still usable.
for warning in validate_schedule(fog1).warnings:
    print("warning:", warning)

# %%
# Step 1: assessment on the attacked node. Malicious rows keep
# before-images; every other row keeps after-images.
a1 = assess_primary(fog1, MaliciousList("fog1", (TxnId("fog1", 1),)))
print(format_da_table(a1.da_table))
print("damaged:", sorted(a1.damaged))
print(format_damage_table(a1.outgoing["fogx"]))

# %%
# How the damaged set moved while scanning. G drops out at T4 because T4
# overwrote it without reading anything damaged.
for txn, items in a1.history:
    print(f"after {txn}: {sorted(items)}")

# %%
# Step 2: fogx assesses its own log against the table it received.
ax = assess_secondary(fogx, a1.outgoing["fogx"])
print(format_da_table(ax.da_table))
print(format_damage_table(ax.damaged))

# %%
# Step 3: fog1 repairs its table top to bottom and produces the corrected
# values fogx needs.
r1 = recover_primary(a1.da_table, a1.damaged)
print(format_da_table(r1.recovered_table))
print(format_valid_table(r1.outgoing["fogx"]))
print(format_patches(r1.patches))

# %%
# Step 4: fogx repairs with those values.
rx = recover_secondary(ax.da_table, ax.damaged, r1.outgoing["fogx"])
print(format_da_table(rx.recovered_table))
print(format_patches(rx.patches))
