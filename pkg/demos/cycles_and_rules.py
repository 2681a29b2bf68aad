"""
Custom recompute rules and returning damage
===========================================

Transactions are opaque, so each write declares how to recompute its
value from what the transaction read before it. Here damage leaves foga,
passes through fogb and comes back to foga.
"""

from __future__ import annotations

from fogrecover import Constant, IdentityOf, Topology, TxnId, compare_states, oracle_replay, run_engine
from fogrecover.scenario import ReadLocal, ReadRemote, Scenario, TransactionProgram, WriteStep


def prog(fog, n, *steps, forged=None):
    return TransactionProgram(TxnId(fog, n), list(steps), "commit", dict(forged or {}))


scenario = Scenario(
    topology=Topology({"foga": "public", "fogb": "utility"}),
    initial={"foga": {"X": 1, "Z": 0, "Q": 4}, "fogb": {"Y": 2}},
    programs=[
        prog("foga", 1, WriteStep("X", Constant(1)), forged={"X": 40}),
        prog("fogb", 1, ReadRemote("foga", "X"), ReadLocal("Y"), WriteStep("Y")),
        prog("foga", 2, ReadLocal("Q"), ReadRemote("fogb", "Y"), WriteStep("Z", IdentityOf("Q"))),
        prog("foga", 3, ReadRemote("fogb", "Y"), WriteStep("Q")),
    ],
    malicious=[TxnId("foga", 1)],
)

# %%
# Z copies Q, so it is recomputed to the same value even though the
# transaction also read a damaged item.
net, trace = run_engine(scenario)
print(trace.to_text())
print(net.states())
print("diff:", compare_states(oracle_replay(scenario), net.states()))
