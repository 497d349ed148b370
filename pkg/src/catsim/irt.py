"""Two-parameter logistic IRT student model.

Calibration is marginal maximum likelihood by EM on a fixed 41-node grid over
[-5, 5] with a standard-normal prior. During a test the ability is the MLE
when the answers so far contain both a correct and an incorrect response,
and the EAP under the prior otherwise (the MLE is infinite then).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TextIO

import numpy as np

from .core import AdaptiveSession, QuestionId, ResponseDataset, argbest, logistic
from .errors import CalibrationError, ConfigError, DomainError, ParseError, PoolMismatchError

GRID_NODES = 41
GRID_LIMIT = 5.0
A_BOUNDS = (0.05, 10.0)
B_BOUNDS = (-6.0, 6.0)


def quadrature_grid(n_nodes: int = GRID_NODES, limit: float = GRID_LIMIT) -> tuple[np.ndarray, np.ndarray]:
    """Equally spaced nodes on [-limit, limit] with normalized N(0, 1) weights."""
    half = (n_nodes - 1) // 2
    nodes = (np.arange(n_nodes) - half) * (limit / half)
    weights = np.exp(-0.5 * nodes**2)
    return nodes, weights / weights.sum()


@dataclass(frozen=True)
class IrtItem:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise DomainError(f"item parameters must be finite, got a={self.a}, b={self.b}")
        if self.a <= 0:
            raise DomainError(f"discrimination must be positive, got a={self.a}")


def _p(a, b, theta):
    return logistic(np.asarray(a) * (np.asarray(theta) - np.asarray(b)))


def irf(item: IrtItem, theta):
    """Probability of a correct answer, 1 / (1 + exp(-a (theta - b)))."""
    return _p(item.a, item.b, theta)


def item_information(item: IrtItem, theta):
    """Fisher information a^2 p (1 - p) of a 2PL item at ``theta``."""
    z = item.a * (np.asarray(theta) - item.b)
    return item.a**2 * logistic(z) * logistic(-z)


def standard_error(information: float) -> float:
    if not information > 0:
        raise DomainError(f"information must be positive, got {information}")
    return 1.0 / math.sqrt(information)


def cumulative_standard_error(items: Sequence[IrtItem], theta: float) -> float:
    """Cumulative standard error 1 / sqrt(sum of item informations)."""
    return standard_error(float(sum(item_information(it, theta) for it in items)))


@dataclass(frozen=True)
class ThetaEstimate:
    theta: float
    method: str
    sd: float


@dataclass(frozen=True, eq=False)
class IrtModel:
    items: tuple[IrtItem, ...]
    question_ids: tuple[str, ...] = ()
    converged: bool = True
    loglik: tuple[float, ...] = ()
    nodes: np.ndarray = field(default_factory=lambda: quadrature_grid()[0])
    weights: np.ndarray = field(default_factory=lambda: quadrature_grid()[1])

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.question_ids:
            object.__setattr__(self, "question_ids", tuple(f"Q{i + 1}" for i in range(len(self.items))))
        if len(self.question_ids) != len(self.items):
            raise PoolMismatchError("one item per question id required")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-9:
            raise ConfigError("quadrature weights must sum to 1")

    @property
    def n_questions(self) -> int:
        return len(self.items)

    @property
    def a(self) -> np.ndarray:
        return np.array([it.a for it in self.items])

    @property
    def b(self) -> np.ndarray:
        return np.array([it.b for it in self.items])

    def new_session(self) -> "IrtSession":
        return IrtSession(self)


# -- calibration ------------------------------------------------------------


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def _expected_loglik(a, d, nodes, r, n):
    z = a[:, None] * nodes[None, :] + d[:, None]
    return (r * _log_sigmoid(z) + (n[None, :] - r) * _log_sigmoid(-z)).sum(axis=1)


def _to_ab(a, d):
    return a, -d / a


def _project(a, d):
    a = np.clip(a, *A_BOUNDS)
    b = np.clip(-d / a, *B_BOUNDS)
    return a, -a * b


def _m_step(a, d, nodes, r, n, newton_steps: int):
    """Ascend each item's expected complete-data log-likelihood; never descends."""
    q_old = _expected_loglik(a, d, nodes, r, n)
    for _ in range(newton_steps):
        z = a[:, None] * nodes + d[:, None]
        p = 1.0 / (1.0 + np.exp(-z))
        resid = r - n * p
        g_a = (resid * nodes).sum(axis=1)
        g_d = resid.sum(axis=1)
        w = n * p * (1.0 - p)
        h_aa = -(w * nodes**2).sum(axis=1)
        h_ad = -(w * nodes).sum(axis=1)
        h_dd = -w.sum(axis=1)
        det = h_aa * h_dd - h_ad**2
        det = np.where(det > 0, det, np.inf)
        step_a = -(h_dd * g_a - h_ad * g_d) / det
        step_d = -(-h_ad * g_a + h_aa * g_d) / det
        scale = np.ones_like(a)
        accepted = np.zeros(a.shape, dtype=bool)
        new_a, new_d = a.copy(), d.copy()
        for _ in range(40):
            cand_a, cand_d = _project(a + scale * step_a, d + scale * step_d)
            q_new = _expected_loglik(cand_a, cand_d, nodes, r, n)
            ok = (q_new >= q_old) & ~accepted
            new_a[ok], new_d[ok] = cand_a[ok], cand_d[ok]
            q_old = np.where(ok, q_new, q_old)
            accepted |= ok
            if accepted.all():
                break
            scale = np.where(accepted, scale, scale / 2)
        a, d = new_a, new_d
    return a, d


def _marginal_loglik(a, d, nodes, log_w, x):
    z = a[:, None] * nodes[None, :] + d[:, None]
    log_p, log_q = _log_sigmoid(z), _log_sigmoid(-z)
    logl = x @ log_p + (1.0 - x) @ log_q + log_w[None, :]
    top = logl.max(axis=1, keepdims=True)
    norm = top[:, 0] + np.log(np.exp(logl - top).sum(axis=1))
    return math.fsum(norm), np.exp(logl - norm[:, None])


def calibrate_2pl(
    train: ResponseDataset,
    *,
    max_iter: int = 500,
    tol: float = 1e-7,
    newton_steps: int = 4,
) -> IrtModel:
    """Marginal maximum-likelihood 2PL calibration by EM.

    Raises :class:`CalibrationError` for items answered all-correct or
    all-incorrect. If the log-likelihood gain is still above ``tol`` after
    ``max_iter`` iterations, the last iterate is returned with
    ``converged=False`` and a warning.
    """
    x = train.answers.astype(float)
    p_bar = x.mean(axis=0)
    degenerate = [train.question_ids[i] for i in np.flatnonzero((p_bar == 0) | (p_bar == 1))]
    if degenerate:
        raise CalibrationError(f"items with no response variation cannot be calibrated: {degenerate}")

    nodes, weights = quadrature_grid()
    log_w = np.log(weights)
    a = np.ones(x.shape[1])
    d = 1.7 * np.log(p_bar / (1.0 - p_bar))
    a, d = _project(a, d)

    trace = []
    converged = False
    for _ in range(max_iter):
        ll, post = _marginal_loglik(a, d, nodes, log_w, x)
        if trace and ll - trace[-1] < tol:
            trace.append(ll)
            converged = True
            break
        trace.append(ll)
        r = x.T @ post
        n = post.sum(axis=0)
        a, d = _m_step(a, d, nodes, r, n, newton_steps)
    else:
        trace.append(_marginal_loglik(a, d, nodes, log_w, x)[0])
    if not converged:
        warnings.warn(f"2PL calibration did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    a, b = _to_ab(a, d)
    items = tuple(IrtItem(float(ai), float(bi)) for ai, bi in zip(a, b))
    return IrtModel(items, tuple(train.question_ids), converged, tuple(trace), nodes, weights)


# -- ability estimation -------------------------------------------------------


def _score(theta, a, b, x):
    p = _p(a, b, theta)
    return float(np.sum(a * (x - p))), float(np.sum(a * a * p * (1.0 - p)))


def _mle(a, b, x, tol=1e-12, max_iter=200) -> float:
    """Root of the (strictly decreasing) score function, Newton with a bisection guard."""
    lo, hi = -1.0, 1.0
    while _score(lo, a, b, x)[0] <= 0:
        lo *= 2
    while _score(hi, a, b, x)[0] >= 0:
        hi *= 2
    theta = 0.5 * (lo + hi)
    for _ in range(max_iter):
        s, info = _score(theta, a, b, x)
        if s > 0:
            lo = theta
        else:
            hi = theta
        step = s / info if info > 0 else np.inf
        nxt = theta + step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - theta) < tol:
            return nxt
        theta = nxt
    return theta


def estimate_theta(model: IrtModel, evidence: Mapping[QuestionId, bool]) -> ThetaEstimate:
    qs = sorted(evidence)
    for q in qs:
        if not 0 <= q < model.n_questions:
            raise PoolMismatchError(f"question {q} is not in the model")
    a, b = model.a[qs], model.b[qs]
    x = np.array([1.0 if evidence[q] else 0.0 for q in qs])
    if 0 < x.sum() < len(x):
        theta = _mle(a, b, x)
        info = float(np.sum(a * a * _p(a, b, theta) * (1.0 - _p(a, b, theta))))
        return ThetaEstimate(theta, "mle", 1.0 / math.sqrt(info))
    nodes, post = model.nodes, model.weights.copy()
    if len(qs):
        p = _p(a[:, None], b[:, None], nodes[None, :])
        like = np.prod(np.where(x[:, None] > 0, p, 1.0 - p), axis=0)
        post = post * like
    post = post / post.sum()
    mean = float(post @ nodes)
    sd = math.sqrt(max(float(post @ (nodes - mean) ** 2), 0.0))
    return ThetaEstimate(mean, "eap", sd)


def select_item_irt(model: IrtModel, theta: float, available: Sequence[QuestionId]) -> QuestionId:
    available = sorted(available)
    info = [float(item_information(model.items[q], theta)) for q in available]
    return argbest(info, available, maximize=True)


def predict_answers_irt(model: IrtModel, theta: float) -> np.ndarray:
    # irf >= 0.5 exactly when theta >= b; comparing directly keeps ties exact.
    return theta >= model.b


class IrtSession(AdaptiveSession):
    def __init__(self, model: IrtModel):
        super().__init__(model.n_questions)
        self.model = model
        self.estimate = estimate_theta(model, {})

    def _update(self, question, answer):
        self.estimate = estimate_theta(self.model, self.evidence)

    def _select(self, available):
        return select_item_irt(self.model, self.estimate.theta, available)

    def predict(self):
        return predict_answers_irt(self.model, self.estimate.theta)

    def skill_estimate(self):
        return self.estimate


# -- parameter table ------------------------------------------------------------


def write_item_table(model: IrtModel, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["qid", "a", "b"])
    for qid, it in zip(model.question_ids, model.items):
        writer.writerow([qid, format(it.a, ".17g"), format(it.b, ".17g")])


def read_item_table(stream: TextIO) -> IrtModel:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != ["qid", "a", "b"]:
        raise ParseError(f"expected header qid,a,b, got {header}")
    qids, items = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            items.append(IrtItem(float(row[1]), float(row[2])))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        qids.append(row[0])
    return IrtModel(tuple(items), tuple(qids))
