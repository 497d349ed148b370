"""The five student-network shapes compared in the experiments.

======================  ===========  =============
name                    skill nodes  skill states
======================  ===========  =============
simple_3s               1            3
simple_4s               1            4
simple_9s               1            9
expert_old              7            2
expert_new              7 + 1        3
======================  ===========  =============

Expert models need a mapping from each of the seven skills to the questions
it governs; the overall node of ``expert_new`` parents all seven skills.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, CoverageError
from .network import QUESTION, SKILL, BnNetwork, BnNode, BnStructure, NoisyOrCPD, TableCPD

CATALOG = {
    "simple_3s": (1, 3),
    "simple_4s": (1, 4),
    "simple_9s": (1, 9),
    "expert_old": (7, 2),
    "expert_new": (7, 3),
}

SIMPLE_SKILL = "skill"
OVERALL_SKILL = "overall"
EXPERT_SKILLS = 7


def default_skill_map(pool: Sequence[str], n_skills: int = EXPERT_SKILLS) -> dict[str, list[str]]:
    """Round-robin assignment of questions to skills ``S1..Sn``."""
    mapping: dict[str, list[str]] = {f"S{j + 1}": [] for j in range(n_skills)}
    for i, q in enumerate(pool):
        mapping[f"S{i % n_skills + 1}"].append(q)
    return mapping


def build_catalog(
    name: str,
    pool: Sequence[str],
    skill_map: Mapping[str, Sequence[str]] | None = None,
) -> BnStructure:
    if name not in CATALOG:
        raise ConfigError(f"unknown catalog model {name!r}; choose from {sorted(CATALOG)}")
    pool = [str(q) for q in pool]
    n_skills, states = CATALOG[name]
    questions = [BnNode(q, QUESTION, 2) for q in pool]

    if name.startswith("simple_"):
        skill = BnNode(SIMPLE_SKILL, SKILL, states)
        return BnStructure((skill, *questions), tuple((SIMPLE_SKILL, q) for q in pool))

    if skill_map is None or len(skill_map) != n_skills:
        raise CoverageError(f"{name} needs a map with exactly {n_skills} skills")
    if OVERALL_SKILL in skill_map:
        raise ConfigError(f"skill name {OVERALL_SKILL!r} is reserved")
    known = set(pool)
    covered = set()
    for skill, qs in skill_map.items():
        unknown = set(qs) - known
        if unknown:
            raise CoverageError(f"skill {skill!r} maps unknown questions {sorted(unknown)}")
        covered.update(qs)
    if covered != known:
        raise CoverageError(f"questions without a parent skill: {sorted(known - covered)}")

    skills = [BnNode(s, SKILL, states) for s in skill_map]
    edges = []
    nodes = list(skills)
    if name == "expert_new":
        nodes.insert(0, BnNode(OVERALL_SKILL, SKILL, states))
        edges.extend((OVERALL_SKILL, s) for s in skill_map)
    # Edge order fixes parent order: skills in map order.
    for q in pool:
        edges.extend((s, q) for s, qs in skill_map.items() if q in qs)
    return BnStructure((*nodes, *questions), tuple(edges))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def planted_network(
    structure: BnStructure,
    rng: np.random.Generator,
    question_cpd: str = "table",
    slope: tuple[float, float] = (1.5, 3.0),
    offset: tuple[float, float] = (-1.5, 1.5),
) -> BnNetwork:
    """Random but interpretable parameters: higher skill states answer more questions.

    Root skills get Dirichlet(5) priors; a skill with a skill parent
    concentrates around the parent's relative level; a question is correct
    with probability sigmoid(a * (4 * level - 2 - b)) where ``level`` is the
    mean relative state of its parents.
    """
    cards = structure.cards()
    cpds = {}
    for node in structure.nodes:
        parents = structure.parents(node.name)
        if node.kind == SKILL:
            if not parents:
                cpds[node.name] = TableCPD(rng.dirichlet(np.full(node.states, 5.0)))
                continue
            grids = np.meshgrid(*[np.arange(cards[p]) / (cards[p] - 1) for p in parents], indexing="ij")
            level = np.mean(grids, axis=0)[..., None]
            child = np.arange(node.states) / (node.states - 1)
            weights = np.exp(-8.0 * (child - level) ** 2)
            cpds[node.name] = TableCPD(weights / weights.sum(axis=-1, keepdims=True))
            continue
        a = rng.uniform(*slope)
        b = rng.uniform(*offset)
        if question_cpd == "noisy-or":
            q = rng.uniform(0.5, 0.95, size=len(parents))
            cpds[node.name] = NoisyOrCPD(q, float(rng.uniform(0.05, 0.2)))
            continue
        if not parents:
            p = float(_sigmoid(-a * b))
            cpds[node.name] = TableCPD([1.0 - p, p])
            continue
        grids = np.meshgrid(*[np.arange(cards[p]) / (cards[p] - 1) for p in parents], indexing="ij")
        level = np.mean(grids, axis=0)
        p = _sigmoid(a * (4.0 * level - 2.0 - b))
        cpds[node.name] = TableCPD(np.stack([1.0 - p, p], axis=-1))
    return BnNetwork(structure, cpds)
