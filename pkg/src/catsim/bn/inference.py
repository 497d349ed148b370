"""Exact inference by variable elimination with a min-degree ordering."""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from ..errors import ConfigError, ImpossibleEvidenceError
from .network import BnNetwork

Factor = tuple[tuple[str, ...], np.ndarray]


def _check_evidence(net: BnNetwork, evidence: Mapping[str, int]) -> dict[str, int]:
    cards = net.cards()
    checked = {}
    for name, state in evidence.items():
        if name not in cards:
            raise ConfigError(f"evidence on unknown node {name!r}")
        state = int(state)
        if not 0 <= state < cards[name]:
            raise ConfigError(f"state {state} invalid for node {name!r} with {cards[name]} states")
        checked[name] = state
    return checked


def _relevant_nodes(net: BnNetwork, keep: Iterable[str]) -> list[str]:
    """Ancestral closure of ``keep``; all other nodes are barren and sum out to 1."""
    needed = set()
    stack = list(keep)
    while stack:
        n = stack.pop()
        if n in needed:
            continue
        needed.add(n)
        stack.extend(net.parents(n))
    return [n for n in net.names if n in needed]


def _reduce(factor: Factor, evidence: Mapping[str, int]) -> Factor:
    scope, table = factor
    index = tuple(evidence[v] if v in evidence else slice(None) for v in scope)
    return tuple(v for v in scope if v not in evidence), table[index]


def _einsum(factors: list[Factor], out: tuple[str, ...]) -> np.ndarray:
    symbols: dict[str, int] = {}
    operands: list = []
    for scope, table in factors:
        operands.append(table)
        operands.append([symbols.setdefault(v, len(symbols)) for v in scope])
    for v in out:
        symbols.setdefault(v, len(symbols))
    operands.append([symbols[v] for v in out])
    return np.einsum(*operands, optimize=len(factors) > 2)


def _min_degree_order(factors: list[Factor], eliminate: list[str], rank: dict[str, int]) -> list[str]:
    graph: dict[str, set[str]] = {v: set() for v in eliminate}
    for scope, _ in factors:
        for v in scope:
            graph.setdefault(v, set()).update(u for u in scope if u != v)
    remaining = set(eliminate)
    order = []
    while remaining:
        v = min(remaining, key=lambda u: (len(graph[u]), rank[u]))
        nbrs = graph.pop(v)
        for a in nbrs:
            graph[a].discard(v)
            graph[a].update(nbrs - {a})
        remaining.discard(v)
        order.append(v)
    return order


def _eliminate(factors: list[Factor], order: list[str]) -> list[Factor]:
    factors = list(factors)
    for var in order:
        touching = [f for f in factors if var in f[0]]
        if not touching:
            continue
        rest = [f for f in factors if var not in f[0]]
        scope = []
        for s, _ in touching:
            scope.extend(v for v in s if v != var and v not in scope)
        rest.append((tuple(scope), _einsum(touching, tuple(scope))))
        factors = rest
    return factors


def unnormalized_joint(net: BnNetwork, evidence: Mapping[str, int], targets: Iterable[str]) -> Factor:
    """P(targets, evidence) as a table over ``targets`` (in the given order)."""
    evidence = _check_evidence(net, evidence)
    targets = tuple(targets)
    overlap = set(targets) & set(evidence)
    if overlap:
        raise ConfigError(f"targets {sorted(overlap)} are also observed")
    if len(set(targets)) != len(targets):
        raise ConfigError("duplicate targets")
    relevant = _relevant_nodes(net, list(targets) + list(evidence))
    factors = [_reduce(net.factor(n), evidence) for n in relevant]
    hidden = [n for n in relevant if n not in evidence and n not in targets]
    rank = {n: i for i, n in enumerate(net.names)}
    order = _min_degree_order(factors, hidden, rank)
    factors = _eliminate(factors, order)
    return targets, _einsum(factors, targets) if factors else np.ones(())


def probability_of_evidence(net: BnNetwork, evidence: Mapping[str, int]) -> float:
    return float(unnormalized_joint(net, evidence, ())[1])


def exact_joint(net: BnNetwork, evidence: Mapping[str, int], targets: Iterable[str]) -> Factor:
    """Normalized posterior joint over ``targets`` given ``evidence``."""
    scope, table = unnormalized_joint(net, evidence, targets)
    total = table.sum()
    if not total > 0:
        raise ImpossibleEvidenceError(f"evidence {dict(evidence)} has probability zero")
    return scope, table / total


def exact_marginals(net: BnNetwork, evidence: Mapping[str, int], targets: Iterable[str]) -> dict[str, np.ndarray]:
    """Posterior marginal distribution of each target node given the evidence."""
    return {t: exact_joint(net, evidence, (t,))[1] for t in targets}
