"""
Watching the cascade across the network
=======================================

The same example, driven by messages instead of direct calls. An IDS
alert enters fog1; damage tables and valid-items tables flow to fogx
until every inbox is empty. Blocked items are printed after each step.
"""

from __future__ import annotations

from fogrecover import compare_states, oracle_replay
from fogrecover.scenario import build_logs, two_fog_scenario
from fogrecover.logmodel import format_schedule

scenario = two_fog_scenario()

# %%
# The scenario executes transaction programs, so its logs chain values
# consistently. They differ from the hand-written logs only where those
# disagree with themselves.
for node, log in build_logs(scenario).items():
    print(node, format_schedule(log))

# %%
# Deliver one message at a time.
net = scenario.network()
for node, alert in scenario.alerts().items():
    net.inject_alert(node, alert)

while net.pending():
    event = net.step()
    print(event.describe())
    for name in net.nodes:
        print(f"    {name} blocked: {sorted(net.blocked_items(name))}")

# %%
# The repaired state is what the programs would have produced had T1
# never written anything.
print(net.states())
print("diff:", compare_states(oracle_replay(scenario), net.states()))
