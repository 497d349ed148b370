"""Cross-validated CAT simulation across model families.

For each fold every roster model is fitted on the training part, one adaptive
session is simulated per test student, and SR_s is averaged over all test
students of all folds. Fitting failures are recorded per model label and do
not stop the other models.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, TextIO

import numpy as np

from .bn import BnModel, em_learn, initial_network, network_from_dict
from .config import ExperimentConfig, ModelSpec
from .core import ResponseDataset, run_cat_session, success_ratio_step, success_ratio_total
from .dataio import FoldPlan, derive_rng, generate_synthetic, kfold_split, load_responses
from .errors import CatError, ShapeError
from .irt import calibrate_2pl
from .nn import fit_nn

log = logging.getLogger(__name__)

# MAP smoothing for EM inside experiments; small folds otherwise yield exact 0/1 CPT entries.
DEFAULT_PSEUDOCOUNT = 0.5


@dataclass
class SimulationCurve:
    label: str
    values: tuple[float, ...]
    n_students: int
    per_fold: list[tuple[float, ...]] = field(default_factory=list)
    fold_sizes: list[int] = field(default_factory=list)

    @property
    def budget(self) -> int:
        return len(self.values) - 1


@dataclass
class ExperimentResult:
    curves: dict[str, SimulationCurve]
    errors: dict[str, str]
    folds: FoldPlan
    dataset: ResponseDataset


def load_dataset(config: ExperimentConfig) -> ResponseDataset:
    if config.data_file is not None:
        return load_responses(config.data_file)
    return generate_synthetic(config.synthetic)


def fit_model(spec: ModelSpec, train: ResponseDataset, seed: int, fold: int | str = "all"):
    """Fit one roster model on ``train``; randomness derives from (seed, fit key, fold)."""
    opts = dict(spec.options)
    key = spec.fit_key()
    if spec.family == "irt":
        return calibrate_2pl(train, **opts)
    if spec.family == "nn":
        return fit_nn(
            train,
            int(opts.get("hidden", 5)),
            learning_rate=float(opts.get("learning_rate", 0.5)),
            epochs=int(opts.get("epochs", 500)),
            batch_size=opts.get("batch_size"),
            rng=derive_rng(seed, "nn", key, str(fold)),
        )
    if "network" in opts:
        net_doc = opts["network"]
    else:
        net_doc = {k: opts[k] for k in ("model", "skill_map", "question_cpd") if k in opts}
    net_spec = network_from_dict(net_doc, train.question_ids)
    rng = derive_rng(seed, "em", key, str(fold))
    init = None
    if net_spec.cpds:
        start = initial_network(net_spec.structure, net_spec.kinds, rng)
        init = type(start)(net_spec.structure, {**start.cpds, **net_spec.cpds})
    fit = em_learn(
        net_spec.structure,
        train,
        kinds=net_spec.kinds,
        init=init,
        fixed=net_spec.fixed,
        tol=float(opts.get("tol", 1e-4)),
        max_iter=int(opts.get("max_iter", 300)),
        pseudocount=float(opts.get("pseudocount", DEFAULT_PSEUDOCOUNT)),
        rng=rng,
    )
    return BnModel(fit.network, train.question_ids)


def _fold_task(args):
    """Fit every fit-key once on a fold and simulate all test students for each model."""
    config, dataset, plan, fold, budget = args
    train = dataset.subset(plan.train_indices(fold))
    test_idx = plan.test_indices(fold)
    fitted: dict[str, object] = {}
    out: dict[str, np.ndarray | str] = {}
    for spec in config.models:
        key = spec.fit_key()
        try:
            if key not in fitted:
                fitted[key] = fit_model(spec, train, config.seed, fold)
            model = fitted[key]
            if isinstance(model, CatError):
                raise model
            srs = np.empty((len(test_idx), budget + 1))
            for row, i in enumerate(test_idx):
                record = dataset.record(i)
                rng = None
                if spec.selection == "random":
                    rng = derive_rng(config.seed, "selection", spec.label, str(fold), record.student_id)
                trace = run_cat_session(model, record, budget, rng)
                srs[row] = [t.sr for t in trace]
            out[spec.label] = srs
        except CatError as exc:
            fitted.setdefault(key, exc)
            out[spec.label] = f"fold {fold}: {type(exc).__name__}: {exc}"
    return out


def run_experiment(
    config: ExperimentConfig,
    dataset: ResponseDataset | None = None,
    jobs: int = 1,
) -> ExperimentResult:
    if dataset is None:
        dataset = load_dataset(config)
    budget = dataset.n_questions if config.budget is None else int(config.budget)
    if not 0 <= budget <= dataset.n_questions:
        raise ShapeError(f"budget {budget} outside [0, {dataset.n_questions}]")
    plan = kfold_split(dataset, config.k, config.seed)
    tasks = [(config, dataset, plan, fold, budget) for fold in range(config.k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_fold = list(pool.map(_fold_task, tasks))
    else:
        per_fold = [_fold_task(t) for t in tasks]

    curves: dict[str, SimulationCurve] = {}
    errors: dict[str, str] = {}
    for spec in config.models:
        results = [r[spec.label] for r in per_fold]
        failed = [r for r in results if isinstance(r, str)]
        if failed:
            errors[spec.label] = "; ".join(failed)
            log.warning("model %s failed: %s", spec.label, errors[spec.label])
            continue
        stacked = np.concatenate(results, axis=0)
        values = tuple(success_ratio_total(stacked[:, s]) for s in range(budget + 1))
        per = [tuple(success_ratio_total(r[:, s]) for s in range(budget + 1)) for r in results]
        curves[spec.label] = SimulationCurve(spec.label, values, stacked.shape[0], per, [len(r) for r in results])
    return ExperimentResult(curves, errors, plan, dataset)


# -- output ---------------------------------------------------------------------

CSV_HEADER = ("model", "step", "sr", "n_students")


def _rows(curves: Mapping[str, SimulationCurve]):
    for label in sorted(curves):
        c = curves[label]
        for step, sr in enumerate(c.values):
            yield label, step, sr, c.n_students


def emit_results(
    curves: Mapping[str, SimulationCurve],
    fmt: str = "csv",
    destination: str | Path | TextIO | None = None,
) -> str:
    """Serialize curves as ``model,step,sr,n_students`` rows (CSV) or a JSON list of the same rows.

    Returns the emitted text; also writes it to ``destination`` if given.
    """
    if not curves:
        raise ShapeError("no curves to emit")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for label, step, sr, n in _rows(curves):
            writer.writerow([label, step, repr(float(sr)), n])
        text = buf.getvalue()
    elif fmt == "json":
        rows = [dict(zip(CSV_HEADER, (label, step, float(sr), n))) for label, step, sr, n in _rows(curves)]
        text = json.dumps(rows, indent=1) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if destination is not None:
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            Path(destination).write_text(text, encoding="utf-8")
    return text


def read_results(source: str | Path | TextIO, fmt: str = "csv") -> dict[str, SimulationCurve]:
    """Inverse of :func:`emit_results` (per-fold detail is not serialized)."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_results(fh, fmt)
    if fmt == "json":
        rows = [(r["model"], int(r["step"]), float(r["sr"]), int(r["n_students"])) for r in json.load(source)]
    else:
        reader = csv.reader(source)
        if tuple(next(reader, ())) != CSV_HEADER:
            raise ShapeError(f"results need header {','.join(CSV_HEADER)}")
        rows = [(r[0], int(r[1]), float(r[2]), int(r[3])) for r in reader if r]
    grouped: dict[str, list] = {}
    for label, step, sr, n in rows:
        grouped.setdefault(label, []).append((step, sr, n))
    curves = {}
    for label, items in grouped.items():
        items.sort()
        if [s for s, _, _ in items] != list(range(len(items))):
            raise ShapeError(f"model {label!r}: steps are not 0..{len(items) - 1}")
        curves[label] = SimulationCurve(label, tuple(sr for _, sr, _ in items), items[0][2])
    return curves


# -- comparison -------------------------------------------------------------------


def majority_predictions(train: ResponseDataset) -> np.ndarray:
    # Ties predict "correct".
    return train.answers.mean(axis=0) >= 0.5


def majority_baseline(dataset: ResponseDataset, folds: FoldPlan | None = None) -> float:
    """Mean SR of predicting each question's training-fold majority answer."""
    if folds is None:
        pred = majority_predictions(dataset)
        return success_ratio_total(success_ratio_step(pred, row) for row in dataset.answers)
    srs = []
    for f in range(folds.k):
        pred = majority_predictions(dataset.subset(folds.train_indices(f)))
        srs.extend(success_ratio_step(pred, dataset.answers[i]) for i in folds.test_indices(f))
    return success_ratio_total(srs)


@dataclass
class ComparisonReport:
    steps: list[int]
    rows: dict[str, list[float]]
    baseline: float

    def to_text(self) -> str:
        width = max([len("majority_baseline")] + [len(k) for k in self.rows])
        head = f"{'model':<{width}}" + "".join(f"  SR_{s:<5d}" for s in self.steps)
        lines = [head]
        for label, vals in self.rows.items():
            lines.append(f"{label:<{width}}" + "".join(f"  {v:<8.4f}" for v in vals))
        lines.append(f"{'majority_baseline':<{width}}" + "".join(f"  {self.baseline:<8.4f}" for _ in self.steps))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", *(f"sr_{s}" for s in self.steps)])
        for label, vals in self.rows.items():
            writer.writerow([label, *(repr(float(v)) for v in vals)])
        writer.writerow(["majority_baseline", *(repr(float(self.baseline)) for _ in self.steps)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"steps": self.steps, "rows": self.rows, "majority_baseline": self.baseline}, indent=1) + "\n"


def compare_baselines(
    dataset: ResponseDataset,
    curves: Mapping[str, SimulationCurve],
    folds: FoldPlan | None = None,
) -> ComparisonReport:
    """SR at steps 0, 1, 2, mid and final per model, next to the majority baseline."""
    if not curves:
        raise ShapeError("no curves to compare")
    budgets = {c.budget for c in curves.values()}
    if len(budgets) != 1:
        raise ShapeError(f"curves have different budgets {sorted(budgets)}")
    budget = budgets.pop()
    steps = sorted({s for s in (0, 1, 2, budget // 2, budget) if s <= budget})
    rows = {label: [curves[label].values[s] for s in steps] for label in sorted(curves)}
    return ComparisonReport(steps, rows, majority_baseline(dataset, folds))


def curve_area(values: Sequence[float]) -> float:
    """Trapezoidal area under an SR curve over steps 0..budget."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.sum())
    return float(np.sum((v[1:] + v[:-1]) / 2.0))


def sign_test_pvalue(wins: int, trials: int) -> float:
    """One-sided binomial sign test: P(X >= wins) for X ~ Bin(trials, 1/2)."""
    return sum(math.comb(trials, j) for j in range(wins, trials + 1)) / 2**trials
