"""Command-line entry point: ``catsim generate|calibrate|simulate|report``."""

from __future__ import annotations

import io
import logging
import sys
from pathlib import Path

import click
import yaml

from . import irt, nn
from .bn import BnModel, network_to_dict
from .config import ExperimentConfig, read_document
from .dataio import SyntheticSpec, dump_responses, generate_synthetic, kfold_split, load_responses
from .errors import CatError
from .harness import compare_baselines, emit_results, fit_model, load_dataset, read_results, run_experiment


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _experiment(config_path: str, seed: int | None) -> ExperimentConfig:
    doc = read_document(config_path)
    if seed is not None:
        doc["seed"] = seed
    return ExperimentConfig.from_dict(doc, base_dir=Path(config_path).parent)


config_option = click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
seed_option = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Override the root seed.")
out_option = click.option("--out", default=None, help="Output path (default: stdout).")


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool):
    """Simulate computerized adaptive tests with IRT, Bayesian-network and neural-network student models."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@config_option
@seed_option
@out_option
def generate(config_path, seed, out):
    """Write a synthetic response table as CSV.

    The config is either a synthetic spec or an experiment config with a
    ``dataset.synthetic`` section.
    """
    doc = read_document(config_path)
    if "dataset" in doc:
        root_seed = doc.get("seed", 0)
        doc = dict(doc["dataset"].get("synthetic") or {})
        if not doc:
            raise click.UsageError("experiment config has no dataset.synthetic section")
        # Same inheritance rule as the simulate command.
        doc.setdefault("seed", root_seed)
    if seed is not None:
        doc["seed"] = seed
    try:
        data = generate_synthetic(SyntheticSpec.from_dict(doc))
    except CatError as exc:
        raise click.ClickException(str(exc)) from exc
    _write(dump_responses(data), out)


@main.command()
@config_option
@seed_option
@out_option
@click.option("--model", "label", default=None, help="Roster label to fit (default: first model).")
@click.option("--data", "data_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Response CSV overriding the config dataset.")
def calibrate(config_path, seed, out, label, data_path):
    """Fit one roster model on the whole dataset and export its parameters.

    IRT exports a ``qid,a,b`` table, networks a YAML network document, neural
    networks a ``block,shape,values`` table.
    """
    config = _experiment(config_path, seed)
    spec = config.model(label) if label else config.models[0]
    try:
        data = load_responses(data_path) if data_path else load_dataset(config)
        model = fit_model(spec, data, config.seed)
    except CatError as exc:
        raise click.ClickException(f"{spec.label}: {exc}") from exc
    buf = io.StringIO()
    if isinstance(model, irt.IrtModel):
        irt.write_item_table(model, buf)
    elif isinstance(model, nn.NnModel):
        nn.write_params(model, buf)
    elif isinstance(model, BnModel):
        yaml.safe_dump(network_to_dict(model.net), buf, sort_keys=False)
    _write(buf.getvalue(), out)


@main.command()
@config_option
@seed_option
@out_option
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--jobs", type=click.IntRange(1), default=1, help="Worker processes (one fold per task).")
def simulate(config_path, seed, out, fmt, jobs):
    """Run the cross-validated CAT simulation and emit SR curves."""
    config = _experiment(config_path, seed)
    try:
        result = run_experiment(config, jobs=jobs)
    except CatError as exc:
        raise click.ClickException(str(exc)) from exc
    for lab, err in result.errors.items():
        click.echo(f"model {lab} failed: {err}", err=True)
    if not result.curves:
        raise click.ClickException("every model failed")
    _write(emit_results(result.curves, fmt), out)


@main.command()
@config_option
@seed_option
@out_option
@click.option("--results", "results_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "csv", "json"]), default="text")
def report(config_path, seed, out, results_path, fmt):
    """Tabulate SR at steps 0, 1, 2, mid and final next to the majority baseline."""
    config = _experiment(config_path, seed)
    in_fmt = "json" if results_path.endswith(".json") else "csv"
    try:
        curves = read_results(results_path, in_fmt)
        data = load_dataset(config)
        table = compare_baselines(data, curves, kfold_split(data, config.k, config.seed))
    except CatError as exc:
        raise click.ClickException(str(exc)) from exc
    text = {"text": table.to_text, "csv": table.to_csv, "json": table.to_json}[fmt]()
    _write(text, out)


if __name__ == "__main__":
    sys.exit(main())
