"""Shared domain types, success-ratio arithmetic and the adaptive-session loop.

Questions are addressed by their integer position in the pool (``QuestionId``).
Human-readable question labels live on :class:`ResponseDataset` and are only
needed for I/O and for binding Bayesian-network nodes to columns.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import (
    BudgetError,
    ContractViolationError,
    EmptyDatasetError,
    EmptyInputError,
    PoolMismatchError,
    SelectionError,
    ShapeError,
)

QuestionId = int

# Relative tolerance used to decide that two selection criteria are tied.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    answers: tuple[bool, ...]

    @property
    def n_questions(self) -> int:
        return len(self.answers)


@dataclass(frozen=True, eq=False)
class ResponseDataset:
    """Students x questions table of Boolean answers (True = correct)."""

    question_ids: tuple[str, ...]
    student_ids: tuple[str, ...]
    answers: np.ndarray

    def __post_init__(self):
        answers = np.array(self.answers, dtype=bool)
        if answers.ndim != 2:
            raise ShapeError("answers must be a 2-d students x questions array")
        if answers.shape[0] == 0:
            raise EmptyDatasetError("dataset has no student records")
        if answers.shape[1] == 0:
            raise EmptyDatasetError("dataset has no questions")
        if answers.shape != (len(self.student_ids), len(self.question_ids)):
            raise ShapeError(
                f"answers shape {answers.shape} does not match "
                f"{len(self.student_ids)} students x {len(self.question_ids)} questions"
            )
        answers.setflags(write=False)
        object.__setattr__(self, "answers", answers)
        object.__setattr__(self, "question_ids", tuple(self.question_ids))
        object.__setattr__(self, "student_ids", tuple(self.student_ids))

    @property
    def n_students(self) -> int:
        return self.answers.shape[0]

    @property
    def n_questions(self) -> int:
        return self.answers.shape[1]

    def record(self, index: int) -> StudentRecord:
        return StudentRecord(self.student_ids[index], tuple(bool(v) for v in self.answers[index]))

    @property
    def records(self) -> list[StudentRecord]:
        return [self.record(i) for i in range(self.n_students)]

    def subset(self, indices: Sequence[int]) -> "ResponseDataset":
        indices = list(indices)
        return ResponseDataset(
            self.question_ids,
            tuple(self.student_ids[i] for i in indices),
            self.answers[indices],
        )

    def scores(self) -> np.ndarray:
        """Normalized test score (fraction correct) per student."""
        return self.answers.mean(axis=1)

    def __eq__(self, other):
        if not isinstance(other, ResponseDataset):
            return NotImplemented
        return (
            self.question_ids == other.question_ids
            and self.student_ids == other.student_ids
            and np.array_equal(self.answers, other.answers)
        )


@dataclass(frozen=True)
class TraceStep:
    step: int
    asked: QuestionId | None
    answer: bool | None
    predictions: tuple[bool, ...]
    sr: float


def _as_answer_vector(obj) -> np.ndarray:
    if isinstance(obj, StudentRecord):
        obj = obj.answers
    return np.asarray(obj, dtype=bool)


def success_ratio_step(predictions, truth) -> float:
    """Fraction of the whole pool whose predicted answer equals the true answer.

    The denominator is always the full pool size, whatever step the session is in.
    """
    pred = _as_answer_vector(predictions)
    true = _as_answer_vector(truth)
    if pred.shape != true.shape or pred.ndim != 1:
        raise PoolMismatchError(
            f"prediction covers {pred.shape} questions, record covers {true.shape}"
        )
    if pred.size == 0:
        raise PoolMismatchError("empty question pool")
    return int(np.count_nonzero(pred == true)) / pred.size


def success_ratio_total(per_student: Iterable[float]) -> float:
    values = [float(v) for v in per_student]
    if not values:
        raise EmptyInputError("cannot average an empty sequence of success ratios")
    return sum(values) / len(values)


def argbest(scores: Sequence[float], candidates: Sequence[QuestionId], maximize: bool) -> QuestionId:
    """Pick the candidate with the best score; near-ties go to the lowest id."""
    if len(candidates) == 0:
        raise SelectionError("no question available for selection")
    values = np.asarray(scores, dtype=float)
    best = values.max() if maximize else values.min()
    tol = TIE_RTOL * max(1.0, abs(best))
    close = np.abs(values - best) <= tol
    return min(int(c) for c, ok in zip(candidates, close) if ok)


def logistic(z):
    """1 / (1 + e^-z) without overflow, accurate in both tails, exactly 0.5 at z = 0."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class AdaptiveSession(abc.ABC):
    """Per-student mutable state of one adaptive test.

    Subclasses implement ``_update`` (fold a new answer into the skill
    estimate), ``_select`` and ``predict``. Evidence bookkeeping and the
    no-repetition contract are enforced here.
    """

    def __init__(self, n_questions: int):
        self.n_questions = n_questions
        self.evidence: dict[QuestionId, bool] = {}

    def available(self) -> list[QuestionId]:
        return [q for q in range(self.n_questions) if q not in self.evidence]

    def absorb(self, question: QuestionId, answer: bool) -> None:
        if not 0 <= question < self.n_questions:
            raise PoolMismatchError(f"question {question} is not in the pool")
        if question in self.evidence:
            raise ContractViolationError(f"question {question} absorbed twice")
        self.evidence[question] = bool(answer)
        self._update(question, bool(answer))

    def select_next(self, available: Sequence[QuestionId] | None = None) -> QuestionId:
        if available is None:
            available = self.available()
        available = sorted(available)
        if not available:
            raise SelectionError("no question available for selection")
        return self._select(available)

    @abc.abstractmethod
    def _update(self, question: QuestionId, answer: bool) -> None: ...

    @abc.abstractmethod
    def _select(self, available: list[QuestionId]) -> QuestionId: ...

    @abc.abstractmethod
    def predict(self) -> np.ndarray:
        """Most probable answer (True = correct) for every pool question."""

    def skill_estimate(self):
        return None


class LearnedModel(Protocol):
    n_questions: int

    def new_session(self) -> AdaptiveSession: ...


def run_cat_session(
    model: LearnedModel,
    student: StudentRecord,
    budget: int | None = None,
    rng: np.random.Generator | None = None,
) -> list[TraceStep]:
    """Simulate one adaptive test of ``student`` against ``model``.

    Returns ``budget + 1`` steps; step 0 holds the prior prediction. With
    ``rng`` given, questions are drawn uniformly at random instead of by the
    model's own selection rule (used as a non-adaptive baseline).
    """
    p = model.n_questions
    if student.n_questions != p:
        raise PoolMismatchError(
            f"model has {p} questions, record {student.student_id!r} has {student.n_questions}"
        )
    if budget is None:
        budget = p
    if not 0 <= budget <= p:
        raise BudgetError(f"budget must lie in [0, {p}], got {budget}")

    truth = np.asarray(student.answers, dtype=bool)
    session = model.new_session()
    prediction = session.predict()
    trace = [TraceStep(0, None, None, tuple(bool(v) for v in prediction), success_ratio_step(prediction, truth))]
    for s in range(1, budget + 1):
        available = session.available()
        if rng is not None:
            question = int(available[rng.integers(len(available))])
        else:
            question = session.select_next(available)
        if question in session.evidence or question not in available:
            raise ContractViolationError(f"selection returned unavailable question {question}")
        answer = bool(truth[question])
        session.absorb(question, answer)
        prediction = session.predict()
        trace.append(
            TraceStep(s, question, answer, tuple(bool(v) for v in prediction), success_ratio_step(prediction, truth))
        )
    return trace


def replay_predictions(model: LearnedModel, trace: Sequence[TraceStep]) -> list[tuple[bool, ...]]:
    """Feed a trace's answers into a fresh session and collect predictions per step."""
    session = model.new_session()
    out = [tuple(bool(v) for v in session.predict())]
    for step in trace[1:]:
        session.absorb(step.asked, step.answer)
        out.append(tuple(bool(v) for v in session.predict()))
    return out

