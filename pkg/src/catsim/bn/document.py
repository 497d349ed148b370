"""Declarative network documents (YAML/JSON-compatible dicts).

Explicit form::

    nodes:
      - {name: S, kind: skill, states: 3}
      - {name: Q1, kind: question}
    edges: [[S, Q1]]
    distributions:
      S: {type: table, values: [0.3, 0.4, 0.3]}
      Q1: {type: noisy-or, q: [0.8], leak: 0.05}
    fixed: [S]

Catalog shortcut::

    model: expert_new
    skill_map: {S1: [Q1, Q2], ...}     # optional, round-robin default
    question_cpd: table                # or noisy-or

``distributions`` entries may omit parameter values; such nodes are learned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import ConfigError
from .catalog import EXPERT_SKILLS, build_catalog, default_skill_map
from .learning import NOISY_OR, TABLE
from .network import QUESTION, BnNetwork, BnNode, BnStructure, NoisyOrCPD, TableCPD


@dataclass
class NetworkSpec:
    structure: BnStructure
    kinds: dict[str, str] = field(default_factory=dict)
    cpds: dict[str, TableCPD | NoisyOrCPD] = field(default_factory=dict)
    fixed: set[str] = field(default_factory=set)

    def network(self) -> BnNetwork:
        """The fully parameterized network; fails if any node lacks values."""
        return BnNetwork(self.structure, self.cpds)

    @property
    def complete(self) -> bool:
        return set(self.cpds) == set(self.structure.names)


def _cpd_from_doc(doc: Mapping[str, Any]) -> tuple[str, TableCPD | NoisyOrCPD | None]:
    kind = doc.get("type", TABLE)
    if kind == TABLE:
        values = doc.get("values")
        return kind, None if values is None else TableCPD(np.array(values, dtype=float))
    if kind == NOISY_OR:
        q = doc.get("q")
        return kind, None if q is None else NoisyOrCPD(q, doc.get("leak"))
    raise ConfigError(f"unknown distribution type {kind!r}")


def network_from_dict(doc: Mapping[str, Any], pool: Sequence[str] | None = None) -> NetworkSpec:
    if "model" in doc:
        if pool is None:
            raise ConfigError("catalog networks need the question pool")
        skill_map = doc.get("skill_map")
        if skill_map is None and doc["model"].startswith("expert"):
            skill_map = default_skill_map(pool, EXPERT_SKILLS)
        structure = build_catalog(doc["model"], pool, skill_map)
        qkind = doc.get("question_cpd", TABLE)
        if qkind not in (TABLE, NOISY_OR):
            raise ConfigError(f"unknown question_cpd {qkind!r}")
        kinds = {q: qkind for q in structure.questions()}
        return NetworkSpec(structure, kinds)

    try:
        nodes = tuple(
            BnNode(str(n["name"]), n.get("kind", "skill"), int(n.get("states", 2))) for n in doc["nodes"]
        )
        edges = tuple((str(a), str(b)) for a, b in doc.get("edges", ()))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed network document: {exc}") from exc
    structure = BnStructure(nodes, edges)
    kinds, cpds = {}, {}
    for name, dist in (doc.get("distributions") or {}).items():
        if name not in structure.names:
            raise ConfigError(f"distribution for unknown node {name!r}")
        kinds[name], cpd = _cpd_from_doc(dist)
        if cpd is not None:
            cpds[name] = cpd
    fixed = set(doc.get("fixed", ()))
    if not fixed <= set(cpds):
        raise ConfigError(f"fixed nodes without values: {sorted(fixed - set(cpds))}")
    return NetworkSpec(structure, kinds, cpds, fixed)


def network_to_dict(net: BnNetwork) -> dict[str, Any]:
    s = net.structure
    nodes = []
    for n in s.nodes:
        entry = {"name": n.name, "kind": n.kind}
        if n.kind != QUESTION:
            entry["states"] = n.states
        nodes.append(entry)
    dists = {}
    for name in s.names:
        cpd = net.cpds[name]
        if isinstance(cpd, NoisyOrCPD):
            dists[name] = {"type": NOISY_OR, "q": cpd.q.tolist(), "leak": cpd.leak}
        else:
            dists[name] = {"type": TABLE, "values": cpd.values.tolist()}
    return {"nodes": nodes, "edges": [list(e) for e in s.edges], "distributions": dists}
