"""EM estimation of conditional distributions with latent skill nodes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from ..core import ResponseDataset
from ..errors import ConfigError, ShapeError
from .engine import SkillJoint
from .network import QUESTION, BnNetwork, BnStructure, NoisyOrCPD, TableCPD

log = logging.getLogger(__name__)

TABLE = "table"
NOISY_OR = "noisy-or"

_TINY = np.finfo(float).tiny


@dataclass
class EmFit:
    """Result of :func:`em_learn`.

    ``loglik`` is the observed-data log-likelihood per iteration; ``objective``
    adds the Dirichlet log-prior when pseudocounts are used (it equals
    ``loglik`` otherwise) and is the quantity EM never decreases.
    """

    network: BnNetwork
    loglik: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.loglik) - 1, 0)


def initial_network(
    structure: BnStructure,
    kinds: Mapping[str, str] | None = None,
    rng: np.random.Generator | None = None,
    jitter: float = 0.1,
    leak: bool = True,
) -> BnNetwork:
    """Uniform distributions perturbed by up to +/-``jitter`` (relative), seeded.

    With ``jitter=0`` the result is exactly uniform, which is a fixed point of EM.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    kinds = dict(kinds or {})
    cards = structure.cards()
    cpds = {}
    for node in structure.nodes:
        parents = structure.parents(node.name)
        if kinds.get(node.name, TABLE) == NOISY_OR:
            q = 0.5 * (1.0 + rng.uniform(-jitter, jitter, size=len(parents)))
            lk = 0.1 * (1.0 + rng.uniform(-jitter, jitter)) if leak else None
            cpds[node.name] = NoisyOrCPD(q, lk)
        else:
            shape = tuple(cards[p] for p in parents) + (node.states,)
            values = 1.0 + rng.uniform(-jitter, jitter, size=shape)
            cpds[node.name] = TableCPD(values / values.sum(axis=-1, keepdims=True))
    return BnNetwork(structure, cpds)


def _safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, _TINY))


def _e_step(engine: SkillJoint, answers: np.ndarray):
    x = answers.astype(float)
    log_on = _safe_log(engine.p_correct)
    log_off = _safe_log(1.0 - engine.p_correct)
    logw = x @ (log_on - log_off)
    logw += _safe_log(engine.prior) + log_off.sum(axis=0)
    top = logw.max(axis=1, keepdims=True)
    resp = np.exp(logw - top)
    total = resp.sum(axis=1)
    resp /= total[:, None]
    loglik = math.fsum(top[:, 0] + np.log(total))
    return loglik, resp.sum(axis=0), x.T @ resp


def log_likelihood(net: BnNetwork, data: ResponseDataset) -> float:
    """Observed-data log-likelihood of the answer table (skills marginalized)."""
    return _e_step(SkillJoint(net, data.question_ids), data.answers)[0]


def _family_counts(engine: SkillJoint, weights: np.ndarray, scope: tuple[str, ...]) -> np.ndarray:
    """Sum joint-skill weights down to the skills in ``scope``, axes in scope order."""
    grid = weights.reshape(engine.shape)
    keep = [engine.skills.index(v) for v in scope]
    drop = tuple(k for k in range(len(engine.skills)) if k not in keep)
    reduced = grid.sum(axis=drop) if drop else grid
    ordered = sorted(keep)
    return np.transpose(reduced, [ordered.index(k) for k in keep]) if keep else reduced


def _normalize(counts: np.ndarray, previous: np.ndarray, pseudocount: float = 0.0) -> np.ndarray:
    counts = counts + pseudocount
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), previous)
    return values


def _noisy_or_update(cpd: NoisyOrCPD, counts: np.ndarray, pseudocount: float = 0.0) -> NoisyOrCPD:
    """Exact EM step for a noisy-OR, via its auxiliary per-parent noise variables."""
    n = cpd.n_parents
    p_on = cpd.table()[..., 1]
    n_off, n_on = counts[..., 0], counts[..., 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(p_on > 0, n_on / np.where(p_on > 0, p_on, 1.0), 0.0)
    q = cpd.q.copy()
    for i in range(n):
        active = [slice(None)] * n
        active[i] = 1
        active = tuple(active)
        denom = n_off[active].sum() + n_on[active].sum() + 2 * pseudocount
        if denom > 0:
            q[i] = min(1.0, (cpd.q[i] * ratio[active].sum() + pseudocount) / denom)
    leak = cpd.leak
    if leak is not None:
        total = n_off.sum() + n_on.sum() + 2 * pseudocount
        if total > 0:
            leak = min(1.0, (leak * ratio.sum() + pseudocount) / total)
    return NoisyOrCPD(q, leak)


def _log_prior(net: BnNetwork, fixed: set[str], pseudocount: float) -> float:
    """Dirichlet/Beta log-density (up to a constant) of the free parameters."""
    if pseudocount == 0:
        return 0.0
    total = 0.0
    for name, cpd in net.cpds.items():
        if name in fixed:
            continue
        if isinstance(cpd, NoisyOrCPD):
            params = [*cpd.q, *([cpd.leak] if cpd.leak is not None else [])]
            total += sum(float(_safe_log(np.array([v, 1.0 - v])).sum()) for v in params)
        else:
            total += float(_safe_log(cpd.table()).sum())
    return pseudocount * total


def _m_step(
    net: BnNetwork, engine: SkillJoint, r_total: np.ndarray, r_correct: np.ndarray, fixed: set[str], pseudocount: float
) -> BnNetwork:
    cpds = dict(net.cpds)
    structure = net.structure
    for name in structure.names:
        if name in fixed:
            continue
        node = structure.node(name)
        parents = structure.parents(name)
        if node.kind == QUESTION:
            i = engine.pool.index(name)
            on = _family_counts(engine, r_correct[i], parents)
            off = _family_counts(engine, r_total, parents) - on
            counts = np.stack([off, on], axis=-1)
        else:
            counts = _family_counts(engine, r_total, parents + (name,))
        cpd = net.cpds[name]
        if isinstance(cpd, NoisyOrCPD):
            cpds[name] = _noisy_or_update(cpd, counts, pseudocount)
        else:
            cpds[name] = TableCPD(_normalize(counts, cpd.table(), pseudocount))
    return BnNetwork(structure, cpds)


def em_learn(
    structure: BnStructure,
    train: ResponseDataset,
    *,
    kinds: Mapping[str, str] | None = None,
    init: BnNetwork | None = None,
    fixed: Iterable[str] = (),
    tol: float = 1e-9,
    max_iter: int = 500,
    pseudocount: float = 0.0,
    rng: np.random.Generator | None = None,
) -> EmFit:
    """Fit all non-fixed distributions of ``structure`` to ``train`` by EM.

    Question nodes bind to dataset columns by name; skill nodes are latent.
    The E-step is exact (enumeration over the joint skill space). Iteration
    stops when the log-likelihood gain drops below ``tol`` or after
    ``max_iter`` M-steps.

    ``pseudocount > 0`` adds that many virtual observations to every cell of
    every learned distribution (MAP estimation); it keeps small training folds
    from producing exact zeros. The default 0 is plain maximum likelihood.
    """
    if pseudocount < 0:
        raise ConfigError("pseudocount must be non-negative")
    if sorted(train.question_ids) != sorted(structure.questions()):
        raise ShapeError("network question nodes do not match the dataset's question columns")
    if init is None:
        net = initial_network(structure, kinds, rng)
    else:
        if init.structure != structure:
            raise ConfigError("initial network has a different structure")
        net = init
    fixed = set(fixed)
    fit = EmFit(net)
    converged = False
    for _ in range(max_iter):
        engine = SkillJoint(net, train.question_ids)
        ll, r_total, r_correct = _e_step(engine, train.answers)
        obj = ll + _log_prior(net, fixed, pseudocount)
        done = bool(fit.objective) and obj - fit.objective[-1] < tol
        fit.loglik.append(ll)
        fit.objective.append(obj)
        if done:
            converged = True
            break
        net = _m_step(net, engine, r_total, r_correct, fixed, pseudocount)
    else:
        ll = log_likelihood(net, train)
        fit.loglik.append(ll)
        fit.objective.append(ll + _log_prior(net, fixed, pseudocount))
    if not converged:
        log.info("EM stopped after %d iterations without reaching tol=%g", max_iter, tol)
    fit.network = net
    fit.converged = converged
    return fit
