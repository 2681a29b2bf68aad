"""
Random scenarios against the replay oracle
==========================================

Generate seeded workloads, attack them, run the cascade under each
delivery policy, and compare with a replay that suppresses every
malicious write.
"""

from __future__ import annotations

import argparse
import time
from collections import Counter

from fogrecover import compare_states, generate_random, oracle_replay, run_engine

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--count", type=int, default=200)
parser.add_argument("--nodes", type=int, default=4)
parser.add_argument("--txns", type=int, default=120)
args = parser.parse_args()

# %%
started = time.perf_counter()
mismatches = 0
lengths = Counter()
for seed in range(args.count):
    scenario = generate_random(
        seed, nodes=args.nodes, items=15, txns=args.txns, cross_prob=0.25, malicious=4
    )
    expected = oracle_replay(scenario)
    finals = []
    for policy in ("fifo", "round_robin", "random"):
        net, trace = run_engine(scenario, policy=policy, seed=seed)
        finals.append(net.states())
        lengths[len(trace) if trace else 0] += 1
    if any(compare_states(expected, f) for f in finals):
        mismatches += 1

# %%
elapsed = time.perf_counter() - started
print(f"{args.count} scenarios x 3 policies in {elapsed:.1f} s, {mismatches} mismatches")
print("trace lengths:", dict(sorted(lengths.items())))
