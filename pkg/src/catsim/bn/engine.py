"""Exact posterior over the joint skill configuration of a student network.

Question nodes are Boolean leaves whose parents are skills, so given a
posterior weight vector over joint skill configurations every quantity the
adaptive test needs (answer predictions, skill marginals, expected entropy
after a hypothetical answer) is a small dense linear-algebra operation.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..core import AdaptiveSession, QuestionId, argbest
from ..errors import ConfigError, ImpossibleEvidenceError, SizeError
from .inference import exact_joint, exact_marginals
from .network import QUESTION, BnNetwork

# Largest joint skill space the dense engine will allocate.
MAX_JOINT_STATES = 2**18


def entropy(dist: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    dist = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(dist > 0, dist * np.log(dist), 0.0)
    return -terms.sum(axis=axis)


def _broadcast_parent_table(table: np.ndarray, parents: Sequence[str], skills: list[str], cards: dict) -> np.ndarray:
    """Lay a CPT over the full skill-joint axes (child axis kept last)."""
    positions = [skills.index(p) for p in parents]
    order = np.argsort(positions)
    table = np.transpose(table, list(order) + [table.ndim - 1])
    shape = [1] * len(skills) + [table.shape[-1]]
    for idx in order:
        shape[positions[idx]] = cards[parents[idx]]
    full = [cards[s] for s in skills] + [table.shape[-1]]
    return np.broadcast_to(table.reshape(shape), full)


class SkillJoint:
    """Dense exact-inference engine for networks whose questions are leaves."""

    def __init__(self, net: BnNetwork, pool: Sequence[str] | None = None):
        structure = net.structure
        self.net = net
        self.skills = structure.skills()
        self.cards = net.cards()
        self.shape = tuple(self.cards[s] for s in self.skills)
        self.size = int(np.prod(self.shape, dtype=np.int64))
        if self.size > MAX_JOINT_STATES:
            raise SizeError(f"joint skill space of {self.size} states exceeds {MAX_JOINT_STATES}")
        self.pool = list(pool) if pool is not None else structure.questions()
        if sorted(self.pool) != sorted(structure.questions()):
            raise ConfigError("pool does not match the network's question nodes")
        for q in self.pool:
            if any(p not in self.skills for p in structure.parents(q)):
                raise ConfigError(f"question {q!r} has a non-skill parent")

        prior = np.ones(self.shape)
        for s in self.skills:
            prior = prior * self._skill_factor(s)
        self.prior = prior.reshape(-1)
        p_correct = np.empty((len(self.pool), self.size))
        for i, q in enumerate(self.pool):
            t = _broadcast_parent_table(net.table(q), net.parents(q), self.skills, self.cards)
            p_correct[i] = t[..., 1].reshape(-1)
        self.p_correct = p_correct

    def _skill_factor(self, skill: str) -> np.ndarray:
        """CPT of a skill node broadcast over the joint skill axes."""
        parents = self.net.parents(skill)
        scope = list(parents) + [skill]
        table = self.net.table(skill)
        positions = [self.skills.index(v) for v in scope]
        order = np.argsort(positions)
        table = np.transpose(table, order)
        shape = [1] * len(self.skills)
        for idx in order:
            shape[positions[idx]] = self.cards[scope[idx]]
        return table.reshape(shape)

    @property
    def n_questions(self) -> int:
        return len(self.pool)

    def likelihood(self, question: QuestionId, answer: bool) -> np.ndarray:
        return self.p_correct[question] if answer else 1.0 - self.p_correct[question]

    def posterior(self, evidence: Mapping[QuestionId, bool]) -> np.ndarray:
        w = self.prior.copy()
        for q in sorted(evidence):
            w = w * self.likelihood(q, evidence[q])
            total = w.sum()
            if not total > 0:
                raise ImpossibleEvidenceError(f"answers {dict(evidence)} have probability zero")
            w = w / total
        return w

    def skill_marginals(self, weights: np.ndarray) -> dict[str, np.ndarray]:
        """Per-skill marginals; ``weights`` may carry leading batch axes."""
        batch = weights.shape[:-1]
        grid = weights.reshape(batch + self.shape)
        nb = len(batch)
        out = {}
        for j, s in enumerate(self.skills):
            axes = tuple(nb + k for k in range(len(self.skills)) if k != j)
            out[s] = grid.sum(axis=axes)
        return out

    def predictive(self, weights: np.ndarray) -> np.ndarray:
        """P(X_i = correct) for every pool question, mediated by the skill posterior."""
        return self.p_correct @ weights

    def expected_entropy(self, weights: np.ndarray, candidates: Sequence[QuestionId]) -> np.ndarray:
        """Answer-weighted sum of posterior skill-marginal entropies for each candidate."""
        pc = self.p_correct[list(candidates)]
        joint_on = weights * pc
        joint_off = weights * (1.0 - pc)
        p_on = joint_on.sum(axis=1)
        p_off = joint_off.sum(axis=1)
        result = np.zeros(len(candidates))
        for p_x, joint in ((p_on, joint_on), (p_off, joint_off)):
            safe = np.where(p_x > 0, p_x, 1.0)
            post = joint / safe[:, None]
            h = sum(entropy(m) for m in self.skill_marginals(post).values()) if self.skills else 0.0
            result += np.where(p_x > 0, p_x * h, 0.0)
        return result


def predict_from_probabilities(p_correct: np.ndarray) -> np.ndarray:
    # Exact ties predict "correct".
    return np.asarray(p_correct) >= 0.5


class BnModel:
    """A learned network bound to a question pool, usable as a CAT student model."""

    def __init__(self, net: BnNetwork, pool: Sequence[str] | None = None):
        self.net = net
        self.pool = list(pool) if pool is not None else net.structure.questions()
        try:
            self.engine: SkillJoint | None = SkillJoint(net, self.pool)
        except SizeError:
            self.engine = None
        self.n_questions = len(self.pool)

    def new_session(self) -> AdaptiveSession:
        if self.engine is not None:
            return BnSession(self.engine)
        return VeBnSession(self.net, self.pool)


class BnSession(AdaptiveSession):
    def __init__(self, engine: SkillJoint):
        super().__init__(engine.n_questions)
        self.engine = engine
        self.weights = engine.prior / engine.prior.sum()

    def _update(self, question, answer):
        w = self.weights * self.engine.likelihood(question, answer)
        total = w.sum()
        if not total > 0:
            raise ImpossibleEvidenceError(f"answer {answer} to question {question} has probability zero")
        self.weights = w / total

    def _select(self, available):
        return argbest(self.engine.expected_entropy(self.weights, available), available, maximize=False)

    def predict(self):
        return predict_from_probabilities(self.engine.predictive(self.weights))

    def skill_estimate(self):
        return self.engine.skill_marginals(self.weights)


class VeBnSession(AdaptiveSession):
    """Session backed by variable elimination, for skill spaces too large to enumerate."""

    def __init__(self, net: BnNetwork, pool: Sequence[str]):
        super().__init__(len(pool))
        self.net = net
        self.pool = list(pool)
        self.skills = net.structure.skills()

    def _node_evidence(self, extra: Mapping[QuestionId, bool] | None = None) -> dict[str, int]:
        ev = {self.pool[q]: int(a) for q, a in self.evidence.items()}
        for q, a in (extra or {}).items():
            ev[self.pool[q]] = int(a)
        return ev

    def _update(self, question, answer):
        pass

    def _select(self, available):
        ev = self._node_evidence()
        scores = []
        for q in available:
            name = self.pool[q]
            p_on = exact_marginals(self.net, ev, [name])[name][1]
            total = 0.0
            for answer, p_x in ((True, p_on), (False, 1.0 - p_on)):
                if p_x <= 0:
                    continue
                marg = exact_marginals(self.net, self._node_evidence({q: answer}), self.skills)
                total += p_x * sum(float(entropy(m)) for m in marg.values())
            scores.append(total)
        return argbest(scores, available, maximize=False)

    def predict(self):
        ev = self._node_evidence()
        out = np.empty(len(self.pool))
        for i, name in enumerate(self.pool):
            parents = self.net.parents(name)
            table = self.net.table(name)[..., 1]
            if not parents:
                out[i] = float(table)
                continue
            scope, joint = exact_joint(self.net, ev, parents)
            out[i] = float((joint * table).sum())
        return predict_from_probabilities(out)

    def skill_estimate(self):
        return exact_marginals(self.net, self._node_evidence(), self.skills)


def select_question_entropy(
    net: BnNetwork,
    evidence: Mapping[QuestionId, bool],
    available: Sequence[QuestionId],
    pool: Sequence[str] | None = None,
) -> QuestionId:
    """Question minimizing the expected summed entropy of the skill marginals."""
    session = BnModel(net, pool).new_session()
    for q, a in evidence.items():
        session.absorb(q, a)
    return session.select_next(available)


def predict_answers_bn(
    net: BnNetwork, evidence: Mapping[QuestionId, bool], pool: Sequence[str] | None = None
) -> np.ndarray:
    session = BnModel(net, pool).new_session()
    for q, a in evidence.items():
        session.absorb(q, a)
    return session.predict()
