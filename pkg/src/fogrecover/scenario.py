"""Declarative multi-node workloads and the attack-free replay oracle.

A scenario is a globally ordered list of transaction programs. Executing
the programs against live per-node state yields the logs the engine
works on. Executing them again with every malicious transaction's writes
suppressed yields the ground truth the engine must restore.
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Union

import jsonschema

from .assessment import MaliciousList
from .errors import ScenarioError
from .fognet import FogNetwork, FogNode, NodeKind, Topology
from .logmodel import Abort, Commit, LogRecord, Read, RemoteRef, TransactionLog, TxnId, Write
from .recovery import (
    Constant,
    IdentityOf,
    LastRead,
    RecomputeSpec,
    Rule,
    SumOfReads,
    rule_from_dict,
    rule_to_dict,
)


@dataclass(frozen=True)
class ReadLocal:
    item: str


@dataclass(frozen=True)
class ReadRemote:
    fog: str
    item: str
    # number of the read transaction in the source node's log
    proxy_txn: int | None = None


@dataclass(frozen=True)
class WriteStep:
    item: str
    rule: Rule = SumOfReads()


ProgramStep = Union[ReadLocal, ReadRemote, WriteStep]


@dataclass
class TransactionProgram:
    txn: TxnId
    steps: list[ProgramStep]
    outcome: str = "commit"
    forged: dict[str, int] = field(default_factory=dict)

    @property
    def home(self) -> str:
        return self.txn.fog


GroundTruth = dict[str, dict[str, int]]


@dataclass
class Scenario:
    topology: Topology
    initial: dict[str, dict[str, int]]
    programs: list[TransactionProgram]
    malicious: list[TxnId] = field(default_factory=list)
    policy: str = "fifo"
    seed: int = 0

    @property
    def nodes(self) -> list[str]:
        return self.topology.nodes

    def validate(self) -> None:
        seen: set[TxnId] = set()
        for node in self.initial:
            if node not in self.topology.kinds:
                raise ScenarioError(f"initial state for unknown node {node}")
        for p in self.programs:
            if p.home not in self.topology.kinds:
                raise ScenarioError(f"{p.txn} runs on unknown node {p.home}")
            if p.txn in seen:
                raise ScenarioError(f"duplicate program {p.txn}")
            seen.add(p.txn)
            if p.outcome not in ("commit", "abort"):
                raise ScenarioError(f"{p.txn}: outcome must be commit or abort")
            for step in p.steps:
                if isinstance(step, ReadRemote) and not self.topology.allows(p.home, step.fog):
                    raise ScenarioError(f"{p.txn}: {p.home} may not read from {step.fog}")
        for txn in self.malicious:
            if txn not in seen:
                raise ScenarioError(f"malicious {txn} is not a program")
        by_txn = {p.txn: p for p in self.programs}
        for txn in self.malicious:
            if by_txn[txn].outcome != "commit":
                raise ScenarioError(f"malicious {txn} must commit")

    def recompute_spec(self, node: str | None = None) -> RecomputeSpec:
        rules = {}
        for p in self.programs:
            if node is not None and p.home != node:
                continue
            for step in p.steps:
                if isinstance(step, WriteStep):
                    rules[(p.txn, step.item)] = step.rule
        return RecomputeSpec(rules)

    def alerts(self) -> dict[str, MaliciousList]:
        """IDS alerts: one list per node that ran malicious transactions."""
        grouped: dict[str, list[TxnId]] = {}
        for txn in self.malicious:
            grouped.setdefault(txn.fog, []).append(txn)
        return {node: MaliciousList(node, tuple(txns)) for node, txns in grouped.items()}

    def network(self) -> FogNetwork:
        """A network holding the attacked logs and post-attack databases."""
        logs, state = _execute(self, nullify=False)
        nodes = [
            FogNode(
                id=name,
                kind=self.topology.kinds[name],
                db=dict(state[name]),
                log=logs[name],
                spec=self.recompute_spec(name),
                initial=dict(self.initial.get(name, {})),
            )
            for name in self.nodes
        ]
        return FogNetwork(nodes, self.topology)

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "nodes": [{"id": n, "kind": k.value} for n, k in self.topology.kinds.items()],
            "initial": {n: dict(v) for n, v in self.initial.items()},
            "programs": [_program_to_dict(p) for p in self.programs],
            "malicious": [str(t) for t in self.malicious],
            "policy": self.policy,
            "seed": self.seed,
        }
        if self.topology.edges is not None:
            out["edges"] = sorted([list(e) for e in self.topology.edges])
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> Scenario:
        try:
            jsonschema.validate(data, SCENARIO_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ScenarioError(f"invalid scenario: {exc.message}") from None
        kinds = {n["id"]: NodeKind(n["kind"]) for n in data["nodes"]}
        edges = None
        if "edges" in data:
            edges = {(a, b) for a, b in data["edges"]}
        try:
            topology = Topology(kinds, edges)
            programs = [_program_from_dict(p) for p in data["programs"]]
            malicious = [TxnId.parse(t) for t in data.get("malicious", [])]
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        scenario = cls(
            topology=topology,
            initial={n: dict(v) for n, v in data.get("initial", {}).items()},
            programs=programs,
            malicious=malicious,
            policy=data.get("policy", "fifo"),
            seed=data.get("seed", 0),
        )
        scenario.validate()
        return scenario

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> Scenario:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        return cls.loads(Path(path).read_text())


_RULE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["sum", "constant", "last_read", "identity"]},
        "value": {"type": "integer"},
        "item": {"type": "string"},
    },
    "required": ["kind"],
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["nodes", "initial", "programs"],
    "properties": {
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "properties": {
                    "id": {"type": "string", "pattern": "^fog[A-Za-z0-9_]+$"},
                    "kind": {"enum": ["public", "utility"]},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
        "initial": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": {"type": "integer"}},
        },
        "programs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["txn", "steps"],
                "properties": {
                    "txn": {"type": "string"},
                    "outcome": {"enum": ["commit", "abort"]},
                    "forged": {"type": "object", "additionalProperties": {"type": "integer"}},
                    "steps": {
                        "type": "array",
                        "items": {
                            "oneOf": [
                                {
                                    "type": "object",
                                    "required": ["op", "item"],
                                    "properties": {"op": {"const": "read"}, "item": {"type": "string"}},
                                },
                                {
                                    "type": "object",
                                    "required": ["op", "fog", "item"],
                                    "properties": {
                                        "op": {"const": "read_remote"},
                                        "fog": {"type": "string"},
                                        "item": {"type": "string"},
                                        "proxy_txn": {"type": "integer", "minimum": 1},
                                    },
                                },
                                {
                                    "type": "object",
                                    "required": ["op", "item"],
                                    "properties": {
                                        "op": {"const": "write"},
                                        "item": {"type": "string"},
                                        "rule": _RULE_SCHEMA,
                                    },
                                },
                            ]
                        },
                    },
                },
            },
        },
        "malicious": {"type": "array", "items": {"type": "string"}},
        "policy": {"enum": ["fifo", "round_robin", "random"]},
        "seed": {"type": "integer"},
    },
}


def _program_to_dict(p: TransactionProgram) -> dict:
    steps = []
    for s in p.steps:
        if isinstance(s, ReadLocal):
            steps.append({"op": "read", "item": s.item})
        elif isinstance(s, ReadRemote):
            d = {"op": "read_remote", "fog": s.fog, "item": s.item}
            if s.proxy_txn is not None:
                d["proxy_txn"] = s.proxy_txn
            steps.append(d)
        else:
            steps.append({"op": "write", "item": s.item, "rule": rule_to_dict(s.rule)})
    out = {"txn": str(p.txn), "outcome": p.outcome, "steps": steps}
    if p.forged:
        out["forged"] = dict(p.forged)
    return out


def _program_from_dict(d: Mapping) -> TransactionProgram:
    steps: list[ProgramStep] = []
    for s in d["steps"]:
        if s["op"] == "read":
            steps.append(ReadLocal(s["item"]))
        elif s["op"] == "read_remote":
            steps.append(ReadRemote(s["fog"], s["item"], s.get("proxy_txn")))
        else:
            steps.append(WriteStep(s["item"], rule_from_dict(s.get("rule", {"kind": "sum"}))))
    return TransactionProgram(
        txn=TxnId.parse(d["txn"]),
        steps=steps,
        outcome=d.get("outcome", "commit"),
        forged=dict(d.get("forged", {})),
    )


# -- execution -------------------------------------------------------------


def _execute(scenario: Scenario, nullify: bool) -> tuple[dict[str, TransactionLog], GroundTruth]:
    """Run every program in order; ``nullify`` suppresses malicious writes."""
    topo = scenario.topology
    state: GroundTruth = {n: dict(scenario.initial.get(n, {})) for n in topo.nodes}
    records: dict[str, list[LogRecord]] = {n: [] for n in topo.nodes}
    used: dict[str, set[int]] = {n: set() for n in topo.nodes}
    for p in scenario.programs:
        if p.home not in used:
            raise ScenarioError(f"{p.txn} runs on unknown node {p.home}")
        used[p.home].add(p.txn.number)
        for s in p.steps:
            if isinstance(s, ReadRemote) and s.proxy_txn is not None and s.fog in used:
                used[s.fog].add(s.proxy_txn)
    next_free = {n: max(nums, default=0) + 1 for n, nums in used.items()}
    malicious = set(scenario.malicious)

    def emit(node: str, txn: TxnId, op, origin: str | None = None) -> None:
        records[node].append(LogRecord(len(records[node]), txn, op, origin))

    for p in scenario.programs:
        home = p.home
        suppressed = nullify and p.txn in malicious
        pending: dict[str, int] = {}
        reads: list[tuple] = []
        for s in p.steps:
            if isinstance(s, ReadLocal):
                if s.item not in state[home]:
                    raise ScenarioError(f"{p.txn} reads undefined item {home}.{s.item}")
                value = pending.get(s.item, state[home][s.item])
                emit(home, p.txn, Read(s.item, value))
                reads.append((s.item, value))
            elif isinstance(s, ReadRemote):
                if not topo.allows(home, s.fog):
                    raise ScenarioError(f"{p.txn}: {home} may not read from {s.fog}")
                if s.item not in state[s.fog]:
                    raise ScenarioError(f"{p.txn} reads undefined item {s.fog}.{s.item}")
                number = s.proxy_txn
                if number is None:
                    number = next_free[s.fog]
                    next_free[s.fog] += 1
                proxy = TxnId(s.fog, number)
                value = state[s.fog][s.item]
                emit(s.fog, proxy, Read(s.item, value), origin=home)
                emit(s.fog, proxy, Commit())
                ref = RemoteRef(proxy, s.item)
                emit(home, p.txn, Read(ref, value))
                reads.append((ref, value))
            else:
                if s.item not in state[home]:
                    raise ScenarioError(f"{p.txn} writes undefined item {home}.{s.item}")
                if suppressed:
                    continue
                before = pending.get(s.item, state[home][s.item])
                if p.txn in malicious and s.item in p.forged:
                    after = p.forged[s.item]
                else:
                    after = s.rule.apply(reads)
                pending[s.item] = after
                emit(home, p.txn, Write(s.item, before, after))
        if p.outcome == "commit":
            state[home].update(pending)
            emit(home, p.txn, Commit())
        else:
            emit(home, p.txn, Abort())
    logs = {n: TransactionLog(n, tuple(recs)) for n, recs in records.items()}
    return logs, state


def build_logs(scenario: Scenario) -> dict[str, TransactionLog]:
    """Per-node logs of the attacked execution."""
    scenario.validate()
    return _execute(scenario, nullify=False)[0]


def attacked_state(scenario: Scenario) -> GroundTruth:
    scenario.validate()
    return _execute(scenario, nullify=False)[1]


def oracle_replay(scenario: Scenario) -> GroundTruth:
    """Final per-node state had the malicious transactions never written."""
    scenario.validate()
    return _execute(scenario, nullify=True)[1]


@dataclass(frozen=True)
class StateDiff:
    node: str
    item: str
    expected: int
    actual: int

    def __str__(self) -> str:
        return f"{self.node}.{self.item}: expected {self.expected}, got {self.actual}"


def compare_states(expected: GroundTruth, actual: GroundTruth) -> list[StateDiff]:
    """Items whose values differ; empty means exact agreement."""
    if set(expected) != set(actual):
        raise ScenarioError(f"node sets differ: {sorted(expected)} vs {sorted(actual)}")
    diffs = []
    for node in sorted(expected):
        if set(expected[node]) != set(actual[node]):
            raise ScenarioError(f"item sets differ on {node}")
        for item in sorted(expected[node]):
            if expected[node][item] != actual[node][item]:
                diffs.append(StateDiff(node, item, expected[node][item], actual[node][item]))
    return diffs


def run_engine(scenario: Scenario, policy: str | None = None, seed: int | None = None):
    """Build the network, raise every alert and cascade to quiescence.

    Returns ``(network, trace)``; ``trace`` is None when nothing was malicious.
    """
    net = scenario.network()
    for node, mt_l in scenario.alerts().items():
        net.inject_alert(node, mt_l)
    if not net.pending():
        return net, None
    policy = policy or scenario.policy
    trace = net.run_to_quiescence(policy, scenario.seed if seed is None else seed)
    return net, trace


# -- random generation -----------------------------------------------------


def _item_names(count: int) -> list[str]:
    letters = string.ascii_uppercase
    names = list(letters)
    k = 0
    while len(names) < count:
        names.append(f"{letters[k % 26]}{k // 26 + 1}")
        k += 1
    return names[:count]


def generate_random(
    seed: int,
    nodes: int = 3,
    items: int = 10,
    txns: int = 40,
    cross_prob: float = 0.2,
    malicious: int = 2,
    abort_prob: float = 0.05,
    max_steps: int = 6,
) -> Scenario:
    """A random scenario that is fully determined by ``seed``.

    Programs read and write distinct items and never read an item after
    writing it. Malicious programs always commit and forge every write.
    """
    if nodes < 1 or items < 1 or txns < 1 or max_steps < 1:
        raise ScenarioError("nodes, items, txns and max_steps must be positive")
    if not 0 <= cross_prob <= 1 or not 0 <= abort_prob <= 1:
        raise ScenarioError("probabilities must lie in [0, 1]")
    if malicious < 0 or malicious > txns:
        raise ScenarioError("malicious count must be between 0 and the transaction count")
    if nodes == 1 and cross_prob > 0:
        raise ScenarioError("cross-fog reads need at least two nodes")

    rng = random.Random(seed)
    names = [f"fog{i + 1}" for i in range(nodes)]
    n_utility = max(1, nodes // 3) if nodes > 1 else 0
    kinds = {
        n: (NodeKind.UTILITY if i < n_utility else NodeKind.PUBLIC) for i, n in enumerate(names)
    }
    topology = Topology(kinds)
    item_names = _item_names(items)
    initial = {n: {it: rng.randint(0, 20) for it in item_names} for n in names}
    counters = {n: 1 for n in names}

    programs: list[TransactionProgram] = []
    for _ in range(txns):
        home = rng.choice(names)
        txn = TxnId(home, counters[home])
        counters[home] += 1
        read_set: set = set()
        written: set[str] = set()
        steps: list[ProgramStep] = []
        local_reads: list[str] = []
        for _ in range(rng.randint(1, max_steps)):
            sources = topology.sources_for(home)
            if rng.random() < 0.5:
                if sources and rng.random() < cross_prob:
                    src = rng.choice(sources)
                    item = rng.choice(item_names)
                    if (src, item) in read_set:
                        continue
                    read_set.add((src, item))
                    steps.append(ReadRemote(src, item, counters[src]))
                    counters[src] += 1
                else:
                    options = [it for it in item_names if (home, it) not in read_set and it not in written]
                    if not options:
                        continue
                    item = rng.choice(options)
                    read_set.add((home, item))
                    local_reads.append(item)
                    steps.append(ReadLocal(item))
            else:
                options = [it for it in item_names if it not in written]
                if not options:
                    continue
                item = rng.choice(options)
                written.add(item)
                steps.append(WriteStep(item, _random_rule(rng, steps, local_reads)))
        outcome = "abort" if rng.random() < abort_prob else "commit"
        programs.append(TransactionProgram(txn, steps, outcome))

    chosen = sorted(rng.sample(range(txns), malicious))
    for idx in chosen:
        p = programs[idx]
        p.outcome = "commit"
        p.forged = {s.item: rng.randint(50, 99) for s in p.steps if isinstance(s, WriteStep)}
    policy = rng.choice(["fifo", "round_robin", "random"])
    return Scenario(
        topology=topology,
        initial=initial,
        programs=programs,
        malicious=[programs[i].txn for i in chosen],
        policy=policy,
        seed=seed,
    )


def _random_rule(rng: random.Random, steps: list, local_reads: list[str]) -> Rule:
    n_reads = sum(1 for s in steps if isinstance(s, (ReadLocal, ReadRemote)))
    roll = rng.random()
    if n_reads == 0 or roll < 0.2:
        return Constant(rng.randint(0, 20))
    if roll < 0.55 and n_reads <= 2:
        return SumOfReads()
    if roll < 0.8 or not local_reads:
        return LastRead()
    return IdentityOf(rng.choice(local_reads))


# -- the worked two-fog example --------------------------------------------


def two_fog_scenario() -> Scenario:
    """The two-fog example: fog1 is attacked by T1, fogx reads from fog1."""
    f1, fx = "fog1", "fogx"
    S = SumOfReads()

    def prog(fog, n, *steps, forged=None):
        return TransactionProgram(TxnId(fog, n), list(steps), "commit", dict(forged or {}))

    programs = [
        prog(f1, 1, ReadLocal("A"), ReadLocal("B"), WriteStep("C", S), WriteStep("G", S),
             forged={"C": 9, "G": 9}),
        prog(f1, 2, ReadLocal("B"), ReadLocal("G"), WriteStep("A", S), WriteStep("D", S)),
        prog(fx, 9, ReadLocal("K"), ReadRemote(f1, "G", 3), WriteStep("K", S)),
        prog(fx, 10, ReadLocal("M"), ReadLocal("K"), WriteStep("M", S)),
        prog(f1, 4, WriteStep("A", Constant(5)), WriteStep("G", Constant(3))),
        prog(f1, 5, ReadLocal("D"), ReadLocal("A"), ReadLocal("C"), WriteStep("D", S)),
        prog(f1, 6, ReadLocal("B"), WriteStep("B", S), ReadLocal("D"), WriteStep("D", S),
             ReadLocal("A"), WriteStep("A", S)),
        prog(fx, 14, ReadRemote(f1, "D", 7), ReadLocal("L"), WriteStep("N", S)),
        prog(f1, 8, ReadLocal("C")),
        prog(f1, 9, WriteStep("C", Constant(11))),
        prog(f1, 10, ReadLocal("A"), ReadLocal("C"), WriteStep("E", S)),
        prog(fx, 16, ReadRemote(f1, "E", 11), WriteStep("P", S)),
    ]
    return Scenario(
        topology=Topology({f1: NodeKind.PUBLIC, fx: NodeKind.UTILITY}),
        initial={
            f1: {"A": 5, "B": 4, "C": 11, "D": 0, "E": 10, "G": 3},
            fx: {"K": 3, "L": 4, "M": 10, "N": 17, "P": 4},
        },
        programs=programs,
        malicious=[TxnId(f1, 1)],
    )
