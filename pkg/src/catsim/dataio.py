"""Response-table I/O, cross-validation folds and synthetic data generation.

Randomness
----------
All random streams are numpy ``PCG64`` generators. A stream is identified by
a root seed plus a sequence of string labels; :func:`derive_rng` feeds the
root seed as entropy and the CRC-32 of each label as the spawn key of a
``numpy.random.SeedSequence``. The same (seed, labels) therefore yields the
same stream on every platform.
"""

from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, TextIO

import numpy as np

from .core import ResponseDataset, logistic
from .errors import (
    DuplicateIdError,
    EmptyDatasetError,
    InfeasibleSplitError,
    ParseError,
    ShapeError,
    SpecError,
)

IRT_2PL = "irt-2pl"
BAYES_NET = "bayes-net"


def derive_rng(seed: int, *labels: str) -> np.random.Generator:
    key = tuple(zlib.crc32(label.encode("utf-8")) for label in labels)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


# -- CSV -----------------------------------------------------------------------


def load_responses(source: str | Path | TextIO, delimiter: str = ",") -> ResponseDataset:
    """Read ``id,<qid>,...`` rows of 0/1 cells.

    ``source`` may be a path or an open text stream.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_responses(fh, delimiter)
    reader = csv.reader(source, delimiter=delimiter)
    header = next(reader, None)
    if not header or len(header) < 2:
        raise ParseError("header must name an id column and at least one question column")
    qids = [h.strip() for h in header[1:]]
    if len(set(qids)) != len(qids):
        raise DuplicateIdError("duplicate question columns in header")
    ids, rows = [], []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ShapeError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        sid = row[0].strip()
        if sid in seen:
            raise DuplicateIdError(f"line {lineno}: duplicate student id {sid!r}")
        seen.add(sid)
        values = []
        for col, cell in zip(qids, row[1:]):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise ParseError(f"line {lineno}, column {col!r}: expected 0 or 1, got {cell!r}")
            values.append(cell == "1")
        ids.append(sid)
        rows.append(values)
    if not rows:
        raise EmptyDatasetError("response table has no data rows")
    return ResponseDataset(tuple(qids), tuple(ids), np.array(rows, dtype=bool))


def dump_responses(data: ResponseDataset, stream: TextIO | None = None) -> str | None:
    """Write the dataset in the canonical CSV form; returns the text if no stream is given."""
    out = stream if stream is not None else io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", *data.question_ids])
    for sid, row in zip(data.student_ids, data.answers):
        writer.writerow([sid, *("1" if v else "0" for v in row)])
    return out.getvalue() if stream is None else None


# -- folds -----------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: tuple[int, ...]

    def test_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignments) if f == fold]

    def train_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignments) if f != fold]

    def sizes(self) -> list[int]:
        return [self.assignments.count(f) for f in range(self.k)]


def kfold_split(data: ResponseDataset | int, k: int = 10, seed: int = 0) -> FoldPlan:
    """Seeded shuffle of record indices, then round-robin fold assignment."""
    n = data if isinstance(data, int) else data.n_students
    if k < 2:
        raise InfeasibleSplitError(f"need at least 2 folds, got {k}")
    if n < k:
        raise InfeasibleSplitError(f"cannot split {n} records into {k} folds")
    order = derive_rng(seed, "folds").permutation(n)
    assignments = [0] * n
    for position, index in enumerate(order):
        assignments[int(index)] = position % k
    return FoldPlan(k, tuple(assignments))


# -- synthetic data ----------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Declarative description of a synthetic response table.

    For ``irt-2pl`` the item parameters ``a``/``b`` may be given explicitly;
    otherwise they are drawn uniformly from ``a_range``/``b_range``. Abilities
    are N(theta_mean, theta_sd) (``theta_sd = 0`` gives a constant ability).
    For ``bayes-net`` a network document (or a ready ``BnNetwork``) describes
    the generator; catalog documents without parameters get planted ones.
    """

    kind: str = IRT_2PL
    students: int = 280
    questions: int = 20
    seed: int = 0
    a: Sequence[float] | None = None
    b: Sequence[float] | None = None
    a_range: tuple[float, float] = (0.8, 2.0)
    b_range: tuple[float, float] = (-2.0, 2.0)
    theta_mean: float = 0.0
    theta_sd: float = 1.0
    network: Any = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SyntheticSpec":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        unknown = set(doc) - known
        if unknown:
            raise SpecError(f"unknown synthetic-spec keys: {sorted(unknown)}")
        kwargs = dict(doc)
        for key in ("a_range", "b_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def validate(self) -> None:
        if self.kind not in (IRT_2PL, BAYES_NET):
            raise SpecError(f"unknown generator kind {self.kind!r}")
        if self.students < 1 or self.questions < 1:
            raise SpecError("student and question counts must be at least 1")
        if self.kind == IRT_2PL:
            for name, values in (("a", self.a), ("b", self.b)):
                if values is not None and len(values) != self.questions:
                    raise SpecError(f"{name} has {len(values)} entries for {self.questions} questions")
            if self.a is not None and any(not np.isfinite(v) or v <= 0 for v in self.a):
                raise SpecError("discriminations must be positive and finite")
            if self.a is None and not 0 < self.a_range[0] <= self.a_range[1]:
                raise SpecError("a_range must be positive and ordered")
            if self.theta_sd < 0:
                raise SpecError("theta_sd must be non-negative")
        elif self.network is None:
            raise SpecError("bayes-net generator needs a network")


def question_labels(n: int) -> tuple[str, ...]:
    return tuple(f"Q{i + 1}" for i in range(n))


def student_labels(n: int) -> tuple[str, ...]:
    width = max(4, len(str(n)))
    return tuple(f"s{i + 1:0{width}d}" for i in range(n))


def generate_synthetic(spec: SyntheticSpec) -> ResponseDataset:
    spec.validate()
    if spec.kind == IRT_2PL:
        return _generate_irt(spec)
    return _generate_bn(spec)


def _generate_irt(spec: SyntheticSpec) -> ResponseDataset:
    rng = derive_rng(spec.seed, "synthetic", IRT_2PL)
    p = spec.questions
    a = np.asarray(spec.a, dtype=float) if spec.a is not None else rng.uniform(*spec.a_range, size=p)
    b = np.asarray(spec.b, dtype=float) if spec.b is not None else rng.uniform(*spec.b_range, size=p)
    theta = spec.theta_mean + spec.theta_sd * rng.standard_normal(spec.students)
    prob = logistic(a[None, :] * (theta[:, None] - b[None, :]))
    answers = rng.random(prob.shape) < prob
    return ResponseDataset(question_labels(p), student_labels(spec.students), answers)


def generating_network(spec: SyntheticSpec):
    """The ``BnNetwork`` a bayes-net spec samples from (planted if unparameterized)."""
    from .bn import BnNetwork, network_from_dict, planted_network

    if isinstance(spec.network, BnNetwork):
        return spec.network
    pool = question_labels(spec.questions)
    net_spec = network_from_dict(spec.network, pool)
    if net_spec.complete:
        return net_spec.network()
    qkind = spec.network.get("question_cpd", "table") if isinstance(spec.network, Mapping) else "table"
    return planted_network(net_spec.structure, derive_rng(spec.seed, "synthetic", "planted"), qkind)


def _generate_bn(spec: SyntheticSpec) -> ResponseDataset:
    from .bn import sample_network

    net = generating_network(spec)
    pool = net.structure.questions()
    if len(pool) != spec.questions:
        raise SpecError(f"network has {len(pool)} question nodes, spec asks for {spec.questions}")
    draws = sample_network(net, spec.students, derive_rng(spec.seed, "synthetic", BAYES_NET))
    answers = np.stack([draws[q] == 1 for q in pool], axis=1)
    return ResponseDataset(tuple(pool), student_labels(spec.students), answers)
