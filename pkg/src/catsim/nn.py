"""One-hidden-layer score predictor and variance-based question selection.

The network maps a ternary answer encoding (+1 correct, -1 incorrect,
0 not yet asked) to the student's normalized test score in (0, 1). It is
trained on complete answer records with mean squared error. Answers are
predicted back from the score by per-question thresholds fitted on the
training fold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TextIO

import numpy as np

from .core import AdaptiveSession, QuestionId, ResponseDataset, argbest, logistic
from .errors import ConfigError, ParseError, ShapeError, StateError

DEFAULT_HIDDEN = (3, 5, 7)


def sigmoid(z):
    return logistic(z)


@dataclass(frozen=True, eq=False)
class MlpParams:
    hidden_weights: np.ndarray  # (p, h)
    hidden_bias: np.ndarray  # (h,)
    output_weights: np.ndarray  # (h,)
    output_bias: float

    def __post_init__(self):
        w1 = np.array(self.hidden_weights, dtype=float)
        b1 = np.array(self.hidden_bias, dtype=float).reshape(-1)
        w2 = np.array(self.output_weights, dtype=float).reshape(-1)
        if w1.ndim != 2 or w1.shape[1] != b1.size or b1.size != w2.size:
            raise ShapeError(f"inconsistent layer shapes {w1.shape}, {b1.shape}, {w2.shape}")
        for arr in (w1, b1, w2):
            if not np.all(np.isfinite(arr)):
                raise ConfigError("weights must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "hidden_weights", w1)
        object.__setattr__(self, "hidden_bias", b1)
        object.__setattr__(self, "output_weights", w2)
        object.__setattr__(self, "output_bias", float(self.output_bias))

    @property
    def n_inputs(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.hidden_weights.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.hidden_weights.ravel(), self.hidden_bias, self.output_weights, [self.output_bias]]
        )

    @classmethod
    def from_flat(cls, flat: np.ndarray, p: int, h: int) -> "MlpParams":
        flat = np.asarray(flat, dtype=float)
        i = p * h
        return cls(flat[:i].reshape(p, h), flat[i : i + h], flat[i + h : i + 2 * h], flat[i + 2 * h])


def encode(evidence: Mapping[QuestionId, bool], n_questions: int) -> np.ndarray:
    x = np.zeros(n_questions)
    for q, answer in evidence.items():
        x[q] = 1.0 if answer else -1.0
    return x


def encode_records(answers: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(answers, dtype=bool), 1.0, -1.0)


def forward(params: MlpParams, x: np.ndarray):
    """Predicted score for one encoding (shape ``(p,)``) or a batch ``(n, p)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.n_inputs:
        raise ShapeError(f"input has {x.shape[-1]} entries, network expects {params.n_inputs}")
    hidden = sigmoid(x @ params.hidden_weights + params.hidden_bias)
    return sigmoid(hidden @ params.output_weights + params.output_bias)


def loss_and_gradient(params: MlpParams, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient, flattened in ``MlpParams.flat`` order."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = x.shape[0]
    hidden = sigmoid(x @ params.hidden_weights + params.hidden_bias)
    out = sigmoid(hidden @ params.output_weights + params.output_bias)
    err = out - y
    loss = float(np.mean(err**2))
    d_out = 2.0 * err / n * out * (1.0 - out)
    g_w2 = hidden.T @ d_out
    g_b2 = d_out.sum()
    d_hidden = np.outer(d_out, params.output_weights) * hidden * (1.0 - hidden)
    g_w1 = x.T @ d_hidden
    g_b1 = d_hidden.sum(axis=0)
    return loss, np.concatenate([g_w1.ravel(), g_b1, g_w2, [g_b2]])


def init_params(p: int, h: int, rng: np.random.Generator) -> MlpParams:
    return MlpParams(
        rng.normal(0.0, 1.0 / np.sqrt(p), size=(p, h)),
        np.zeros(h),
        rng.normal(0.0, 1.0 / np.sqrt(h), size=h),
        0.0,
    )


@dataclass
class TrainResult:
    params: MlpParams
    loss: list[float] = field(default_factory=list)


def train(
    trainset: ResponseDataset,
    hidden: int = 5,
    *,
    learning_rate: float = 0.5,
    epochs: int = 500,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
) -> TrainResult:
    """Gradient descent on MSE between predicted and true normalized score.

    ``batch_size=None`` means full-batch updates. ``loss`` holds the
    full-data loss before training and after every epoch.
    """
    if hidden < 1 or epochs < 0 or not learning_rate > 0:
        raise ConfigError("hidden >= 1, epochs >= 0 and learning_rate > 0 required")
    if batch_size is not None and batch_size < 1:
        raise ConfigError("batch_size must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    x = encode_records(trainset.answers)
    y = trainset.scores()
    n, p = x.shape
    flat = init_params(p, hidden, rng).flat()
    params = MlpParams.from_flat(flat, p, hidden)
    history = [loss_and_gradient(params, x, y)[0]]
    full = batch_size is None or batch_size >= n
    for _ in range(epochs):
        if full:
            batches = [slice(None)]
        else:
            order = rng.permutation(n)
            batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
        for idx in batches:
            _, grad = loss_and_gradient(params, x[idx], y[idx])
            flat = flat - learning_rate * grad
            params = MlpParams.from_flat(flat, p, hidden)
        history.append(loss_and_gradient(params, x, y)[0])
    return TrainResult(params, history)


def score_variance(p_correct: float, score_if_correct: float, score_if_incorrect: float) -> float:
    mean = p_correct * score_if_correct + (1.0 - p_correct) * score_if_incorrect
    return p_correct * (score_if_correct - mean) ** 2 + (1.0 - p_correct) * (score_if_incorrect - mean) ** 2


def candidate_variances(params: MlpParams, x: np.ndarray, freqs: np.ndarray, candidates: Sequence[QuestionId]) -> np.ndarray:
    candidates = list(candidates)
    k = len(candidates)
    batch = np.repeat(np.asarray(x, dtype=float)[None, :], 2 * k, axis=0)
    batch[np.arange(k), candidates] = 1.0
    batch[np.arange(k, 2 * k), candidates] = -1.0
    scores = forward(params, batch)
    return np.array([score_variance(freqs[q], scores[j], scores[k + j]) for j, q in enumerate(candidates)])


def select_question_variance(
    params: MlpParams, x: np.ndarray, freqs: np.ndarray, available: Sequence[QuestionId]
) -> QuestionId:
    """Candidate whose answer would spread the predicted score the most."""
    available = sorted(available)
    absorbed = [q for q in available if x[q] != 0]
    if absorbed:
        raise ConfigError(f"questions {absorbed} are already answered")
    return argbest(candidate_variances(params, x, freqs, available), available, maximize=True)


def fit_thresholds(scores: np.ndarray, answers: np.ndarray) -> np.ndarray:
    """Per-question score cut-off minimizing 0/1 error of ``correct iff score >= t``.

    Candidates are 0, the midpoints between consecutive distinct training
    scores, and +inf; the smallest minimizer wins.
    """
    scores = np.asarray(scores, dtype=float)
    answers = np.asarray(answers, dtype=bool)
    distinct = np.unique(scores)
    candidates = np.concatenate([[0.0], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]])
    above = scores[None, :] >= candidates[:, None]  # (c, n)
    out = np.empty(answers.shape[1])
    for i in range(answers.shape[1]):
        errors = np.count_nonzero(above != answers[None, :, i], axis=1)
        out[i] = candidates[int(np.argmin(errors))]
    return out


def predict_answers_nn(params: MlpParams, x: np.ndarray, thresholds: np.ndarray | None) -> np.ndarray:
    if thresholds is None:
        raise StateError("answer thresholds have not been fitted")
    return float(forward(params, x)) >= np.asarray(thresholds)


@dataclass(frozen=True, eq=False)
class NnModel:
    params: MlpParams
    freqs: np.ndarray
    thresholds: np.ndarray
    question_ids: tuple[str, ...] = ()
    loss: tuple[float, ...] = ()

    @property
    def n_questions(self) -> int:
        return self.params.n_inputs

    def new_session(self) -> "NnSession":
        return NnSession(self)


def fit_nn(
    trainset: ResponseDataset,
    hidden: int = 5,
    *,
    learning_rate: float = 0.5,
    epochs: int = 500,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
) -> NnModel:
    result = train(trainset, hidden, learning_rate=learning_rate, epochs=epochs, batch_size=batch_size, rng=rng)
    return NnModel(
        result.params,
        trainset.answers.mean(axis=0),
        fit_thresholds(trainset.scores(), trainset.answers),
        tuple(trainset.question_ids),
        tuple(result.loss),
    )


class NnSession(AdaptiveSession):
    def __init__(self, model: NnModel):
        super().__init__(model.n_questions)
        self.model = model
        self.x = np.zeros(model.n_questions)

    def _update(self, question, answer):
        self.x[question] = 1.0 if answer else -1.0

    def _select(self, available):
        return select_question_variance(self.model.params, self.x, self.model.freqs, available)

    def predict(self):
        return predict_answers_nn(self.model.params, self.x, self.model.thresholds)

    def skill_estimate(self):
        return float(forward(self.model.params, self.x))


# -- parameter table --------------------------------------------------------------

_BLOCKS = ("hidden_weights", "hidden_bias", "output_weights", "output_bias", "answer_frequencies", "thresholds")


def write_params(model: NnModel, stream: TextIO) -> None:
    """One row per named block: ``block,shape,values`` (space separated, 17 digits)."""
    p = model.params
    blocks = {
        "hidden_weights": p.hidden_weights,
        "hidden_bias": p.hidden_bias,
        "output_weights": p.output_weights,
        "output_bias": np.array([p.output_bias]),
        "answer_frequencies": np.asarray(model.freqs, dtype=float),
        "thresholds": np.asarray(model.thresholds, dtype=float),
    }
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["block", "shape", "values"])
    writer.writerow(["question_ids", str(len(model.question_ids)), " ".join(model.question_ids)])
    for name in _BLOCKS:
        arr = blocks[name]
        writer.writerow([name, "x".join(str(s) for s in arr.shape), " ".join(format(v, ".17g") for v in arr.ravel())])


def read_params(stream: TextIO) -> NnModel:
    reader = csv.reader(stream)
    if next(reader, None) != ["block", "shape", "values"]:
        raise ParseError("expected header block,shape,values")
    blocks = {}
    qids: tuple[str, ...] = ()
    for row in reader:
        if not row:
            continue
        name, shape, values = row
        if name == "question_ids":
            qids = tuple(values.split())
            continue
        dims = tuple(int(s) for s in shape.split("x"))
        blocks[name] = np.array([float(v) for v in values.split()]).reshape(dims)
    missing = set(_BLOCKS) - set(blocks)
    if missing:
        raise ParseError(f"missing parameter blocks {sorted(missing)}")
    params = MlpParams(blocks["hidden_weights"], blocks["hidden_bias"], blocks["output_weights"], blocks["output_bias"][0])
    return NnModel(params, blocks["answer_frequencies"], blocks["thresholds"], qids)
