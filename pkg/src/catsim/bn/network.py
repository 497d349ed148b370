"""Discrete Bayesian networks: structure, conditional distributions, sampling."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, ShapeError, SizeError

SKILL = "skill"
QUESTION = "question"

# Largest parent count a noisy-OR may be expanded to a full table for.
MAX_EXPAND_PARENTS = 20


@dataclass(frozen=True)
class BnNode:
    name: str
    kind: str = SKILL
    states: int = 2

    def __post_init__(self):
        if self.kind not in (SKILL, QUESTION):
            raise ConfigError(f"node {self.name!r}: unknown kind {self.kind!r}")
        if self.states < 2:
            raise ConfigError(f"node {self.name!r}: needs at least 2 states")
        if self.kind == QUESTION and self.states != 2:
            raise ConfigError(f"question node {self.name!r} must be Boolean")


@dataclass(frozen=True)
class BnStructure:
    """Nodes plus directed edges. Parent order follows edge order."""

    nodes: tuple[BnNode, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate node names")
        known = set(names)
        if len(set(self.edges)) != len(self.edges):
            raise ConfigError("duplicate edges")
        kinds = {n.name: n.kind for n in self.nodes}
        for parent, child in self.edges:
            if parent not in known or child not in known:
                raise ConfigError(f"edge {parent}->{child} refers to an unknown node")
            if parent == child:
                raise ConfigError(f"self-loop on {parent}")
            if kinds[parent] == QUESTION:
                raise ConfigError(f"question node {parent!r} cannot have children")
        self.topological_order()

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def node(self, name: str) -> BnNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def cards(self) -> dict[str, int]:
        return {n.name: n.states for n in self.nodes}

    def parents(self, name: str) -> tuple[str, ...]:
        return tuple(p for p, c in self.edges if c == name)

    def children(self, name: str) -> tuple[str, ...]:
        return tuple(c for p, c in self.edges if p == name)

    def skills(self) -> list[str]:
        return [n.name for n in self.nodes if n.kind == SKILL]

    def questions(self) -> list[str]:
        return [n.name for n in self.nodes if n.kind == QUESTION]

    def topological_order(self) -> list[str]:
        indegree = {n: 0 for n in self.names}
        for _, c in self.edges:
            indegree[c] += 1
        ready = [n for n in self.names if indegree[n] == 0]
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in self.children(n):
                indegree[c] -= 1
                if indegree[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            raise ConfigError("network structure contains a cycle")
        return order


@dataclass(frozen=True, eq=False)
class TableCPD:
    """Full conditional table; ``values[parent states..., child state]``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim < 1:
            raise ShapeError("table needs at least the child axis")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigError("table entries must be finite and non-negative")
        if not np.allclose(values.sum(axis=-1), 1.0, atol=1e-9, rtol=0):
            raise ConfigError("table rows must sum to 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def table(self) -> np.ndarray:
        return self.values

    def free_parameters(self) -> int:
        return int(np.prod(self.values.shape[:-1], dtype=int)) * (self.values.shape[-1] - 1)


@dataclass(frozen=True, eq=False)
class NoisyOrCPD:
    """Noisy-OR for a Boolean child with Boolean parents.

    ``q[i]`` is the probability that an active parent i alone turns the child
    on; ``leak`` (if not None) is the probability the child is on with no
    active parent.
    """

    q: np.ndarray
    leak: float | None = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        if np.any(q < 0) or np.any(q > 1) or not np.all(np.isfinite(q)):
            raise ConfigError("noisy-OR parameters must lie in [0, 1]")
        if self.leak is not None and not 0.0 <= float(self.leak) <= 1.0:
            raise ConfigError("noisy-OR leak must lie in [0, 1]")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        if self.leak is not None:
            object.__setattr__(self, "leak", float(self.leak))

    @property
    def n_parents(self) -> int:
        return self.q.size

    def table(self) -> np.ndarray:
        return expand_noisy_or(self, self.n_parents).values

    def free_parameters(self) -> int:
        return self.n_parents + (self.leak is not None)


def noisy_or_probability(params: NoisyOrCPD, parent_states: Sequence[bool]) -> float:
    """P(child = 1 | parents) = 1 - (1 - leak) * prod over active parents of (1 - q_i)."""
    active = np.asarray(parent_states, dtype=bool).reshape(-1)
    if active.size != params.n_parents:
        raise ShapeError(f"expected {params.n_parents} parent states, got {active.size}")
    leak = params.leak or 0.0
    return 1.0 - (1.0 - leak) * float(np.prod(1.0 - params.q[active]))


def expand_noisy_or(params: NoisyOrCPD, n_parents: int | None = None) -> TableCPD:
    """Full 2^n-row table equivalent to a noisy-OR."""
    n = params.n_parents if n_parents is None else n_parents
    if n != params.n_parents:
        raise ShapeError(f"noisy-OR has {params.n_parents} parents, asked to expand {n}")
    if n > MAX_EXPAND_PARENTS:
        raise SizeError(f"refusing to expand a noisy-OR with {n} > {MAX_EXPAND_PARENTS} parents")
    on = np.empty((2,) * n)
    for states in itertools.product((0, 1), repeat=n):
        on[states] = noisy_or_probability(params, states)
    values = np.stack([1.0 - on, on], axis=-1)
    return TableCPD(values)


def parameter_counts(n_parents: int, leak: bool = False) -> dict[str, int]:
    """Parameter bookkeeping for a Boolean child with n Boolean parents.

    ``table_rows`` is the number of rows (= free parameters) of the full CPT.
    ``noisy_or_free`` counts the q_i (plus leak). ``noisy_or_specified``
    counts both entries of every P(Z_i | X_i) noise table, i.e. 2n or 2(n+1).
    """
    extra = 1 if leak else 0
    return {
        "table_rows": 2**n_parents,
        "noisy_or_free": n_parents + extra,
        "noisy_or_specified": 2 * (n_parents + extra),
    }


def free_parameter_count(structure: BnStructure, question_cpd: str = "table") -> int:
    """Free parameters of a structure with table skills and the given question CPD type.

    For ``noisy-or`` questions over multi-state parents the graded
    generalization is counted: sum of (parent states - 1) per parent.
    """
    cards = structure.cards()
    total = 0
    for node in structure.nodes:
        parents = structure.parents(node.name)
        if node.kind == QUESTION and question_cpd == "noisy-or" and parents:
            total += sum(cards[p] - 1 for p in parents)
        else:
            total += int(np.prod([cards[p] for p in parents], dtype=int)) * (node.states - 1)
    return total


@dataclass(frozen=True, eq=False)
class BnNetwork:
    structure: BnStructure
    cpds: Mapping[str, TableCPD | NoisyOrCPD]
    _tables: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        cards = self.structure.cards()
        missing = set(cards) - set(self.cpds)
        if missing:
            raise ConfigError(f"no distribution for nodes {sorted(missing)}")
        extra = set(self.cpds) - set(cards)
        if extra:
            raise ConfigError(f"distributions for unknown nodes {sorted(extra)}")
        for name in self.structure.names:
            cpd = self.cpds[name]
            parents = self.structure.parents(name)
            if isinstance(cpd, NoisyOrCPD):
                if cards[name] != 2 or any(cards[p] != 2 for p in parents):
                    raise ConfigError(f"noisy-OR node {name!r} needs Boolean child and parents")
                if cpd.n_parents != len(parents):
                    raise ShapeError(f"noisy-OR node {name!r}: {cpd.n_parents} params for {len(parents)} parents")
            expected = tuple(cards[p] for p in parents) + (cards[name],)
            table = cpd.table()
            if table.shape != expected:
                raise ShapeError(f"node {name!r}: table shape {table.shape}, expected {expected}")
            self._tables[name] = table
        object.__setattr__(self, "cpds", dict(self.cpds))

    @property
    def names(self) -> list[str]:
        return self.structure.names

    def cards(self) -> dict[str, int]:
        return self.structure.cards()

    def parents(self, name: str) -> tuple[str, ...]:
        return self.structure.parents(name)

    def table(self, name: str) -> np.ndarray:
        return self._tables[name]

    def factor(self, name: str) -> tuple[tuple[str, ...], np.ndarray]:
        return self.parents(name) + (name,), self._tables[name]

    def free_parameters(self) -> int:
        return sum(cpd.free_parameters() for cpd in self.cpds.values())


def sample_network(net: BnNetwork, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Ancestral sampling of ``n`` joint configurations."""
    out: dict[str, np.ndarray] = {}
    for name in net.structure.topological_order():
        table = net.table(name)
        parents = net.parents(name)
        probs = table[tuple(out[p] for p in parents)] if parents else np.broadcast_to(table, (n, table.shape[-1]))
        cum = np.cumsum(probs, axis=-1)
        u = rng.random(n)[:, None]
        state = np.minimum((u >= cum).sum(axis=-1), table.shape[-1] - 1)
        out[name] = state.astype(np.int64)
    return out
