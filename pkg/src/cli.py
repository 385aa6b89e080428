"""
Batch command line: fit, diagnose, compare, predict, verify.

    python src/cli.py fit --data bank-additional-full.csv --link logit --seed 1
    python src/cli.py diagnose runs/logit-seed1/chains.csv
    python src/cli.py compare runs/logit-seed1/chains.csv runs/probit-seed1/chains.csv
    python src/cli.py predict runs/logit-seed1/chains.csv --data runs/logit-seed1/holdout.csv
    python src/cli.py verify --seed 1

Exit codes: 0 success (possibly with warnings), 2 usage, 3 data, 4 numerical, 5 mismatch.
"""
import os
import sys
import logging
from enum import Enum
from functools import wraps
from typing import List

import typer
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError
from rich.console import Console

module_dir = os.path.dirname(os.path.abspath(__file__))
if module_dir not in sys.path:
    sys.path.append(module_dir)

import directories
from chain_store import read_chain_file, write_chain_file, dumps
from data_pipeline import BalanceOrder, parse_dataset, prepare_training_table, split_for_holdout, encode
from diagnostics import summarize, convergence_warnings
from errors import DepositBayesError, UsageError, DatasetMismatch, DataError, UnseenLevel
from model_core import LinkKind, ModelSpec, PriorSpec, default_priors
from model_eval import psis_loo_model, compare as compare_loo
from prediction import PredictionScale, design_for, posterior_predict
from reports import (summary_text, summary_json, comparison_text, comparison_json, prediction_text, prediction_json,
                     verification_text, verification_json)
from sampler import SamplerConfig, sample
from verification import run_verification_suite

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, help="Bayesian logit/probit regression for term-deposit marketing data.")
err_console = Console(stderr=True, color_system=None, soft_wrap=True, markup=False, highlight=False)


class OutputFormat(str, Enum):
    TEXT = 'text'
    JSON = 'json'
    BOTH = 'both'


class RunConfig(BaseModel):
    """
    Every setting of a fit. Only ``data`` is needed; all other fields have defaults.

    Attributes:
        data (str | None): Input file in the bank-marketing schema.
        delimiter (str): Field separator.
        subsample (int): Training rows; 0 keeps every row.
        balance (BalanceOrder): Oversampling order ('after', 'before', 'off').
        holdout (int): Records held out before training for prediction.
        link (LinkKind): Link function.
        intercept_mean, intercept_sd, slope_mean, slope_sd (float | None): Prior overrides.
        chains, warmup, draws, seed, target_accept, max_tree_depth, init_radius: Sampler settings.
        workers (int): Threads for chains; never serialized because it never changes results.
        standardize (bool): Scale design columns to mean 0, sd 1.
        scale (PredictionScale): Scale of holdout predictions.
        format (OutputFormat): Console and summary formats.
        out (str | None): Run directory; defaults to runs/<link>-seed<seed>.
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    data: str | None = None
    delimiter: str = ';'
    subsample: int = Field(10000, ge=0)
    balance: BalanceOrder = BalanceOrder.AFTER
    holdout: int = Field(3, ge=0)
    link: LinkKind = LinkKind.LOGIT
    intercept_mean: float | None = None
    intercept_sd: PositiveFloat | None = None
    slope_mean: float | None = None
    slope_sd: PositiveFloat | None = None
    chains: int = Field(4, ge=1)
    warmup: int = Field(1000, ge=0)
    draws: int = Field(1000, ge=1)
    seed: int = 1
    target_accept: float = Field(0.8, gt=0.0, lt=1.0)
    max_tree_depth: int = Field(10, ge=1, le=15)
    init_radius: float = Field(2.0, ge=0.0)
    workers: int = Field(1, ge=1, exclude=True)
    standardize: bool = True
    scale: PredictionScale = PredictionScale.OUTCOME
    format: OutputFormat = OutputFormat.BOTH
    out: str | None = None

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(n_chains=self.chains, n_warmup=self.warmup, n_draws=self.draws, seed=self.seed,
                             target_accept=self.target_accept, max_tree_depth=self.max_tree_depth,
                             init_radius=self.init_radius)

    def prior(self) -> PriorSpec:
        overrides = {k: getattr(self, k) for k in ('intercept_mean', 'intercept_sd', 'slope_mean', 'slope_sd')
                     if getattr(self, k) is not None}
        return default_priors(self.link).model_copy(update=overrides)

    def run_dir(self) -> str:
        return self.out or directories.default_run_dir(self.link.value, self.seed)

    def to_json(self) -> str:
        return dumps(self.model_dump(mode='json'))


def _guard(command):
    """Maps package errors to one diagnostic line on stderr and the family's exit code."""
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except DepositBayesError as e:
            err_console.print(f"error: {type(e).__name__}: {e}")
            raise typer.Exit(code=e.exit_code)
        except FileNotFoundError as e:
            err_console.print(f"error: file not found: {e.filename or e}")
            raise typer.Exit(code=DataError.exit_code)
        except ValidationError as e:
            err_console.print(f"error: invalid configuration: {e.errors()[0]['msg']}")
            raise typer.Exit(code=UsageError.exit_code)
    return wrapper


def _write(path: str, text: str) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(text if text.endswith('\n') else text + '\n')


def _emit(text: str, json_text: str, fmt: OutputFormat) -> None:
    typer.echo(json_text if fmt is OutputFormat.JSON else text, nl=fmt is OutputFormat.JSON)


def build_training_model(config: RunConfig):
    """
    Rebuilds the training observations of a run from its configuration alone.

    Args:
        config (RunConfig): Run configuration with ``data`` set.

    Returns:
        tuple: (ModelSpec, DesignMatrix, BalanceReport | None, holdout RecordTable | None).
    """
    if not config.data:
        raise UsageError("No input data given (--data)")
    if not os.path.exists(config.data):
        raise FileNotFoundError(2, 'No such file', config.data)
    table = parse_dataset(config.data, config.delimiter)
    pool, holdout = split_for_holdout(table, config.holdout, config.seed)
    training, report = prepare_training_table(pool, config.subsample or None, config.balance, config.seed)
    design, target = encode(training, standardize=config.standardize)
    model = ModelSpec(config.link, config.prior(), design.values, target, design.column_names)
    return model, design, report, holdout


@app.command()
@_guard
def fit(
    data: str = typer.Option(..., '--data', help="Input CSV in the bank-marketing schema."),
    delimiter: str = typer.Option(';', '--delimiter'),
    subsample: int = typer.Option(10000, '--subsample', help="Training rows; 0 keeps every row."),
    balance: BalanceOrder = typer.Option(BalanceOrder.AFTER, '--balance'),
    holdout: int = typer.Option(3, '--holdout', help="Records held out for prediction."),
    link: LinkKind = typer.Option(LinkKind.LOGIT, '--link'),
    intercept_mean: float = typer.Option(None, '--intercept-mean'),
    intercept_sd: float = typer.Option(None, '--intercept-sd'),
    slope_mean: float = typer.Option(None, '--slope-mean'),
    slope_sd: float = typer.Option(None, '--slope-sd'),
    chains: int = typer.Option(4, '--chains'),
    warmup: int = typer.Option(1000, '--warmup'),
    draws: int = typer.Option(1000, '--draws'),
    seed: int = typer.Option(1, '--seed'),
    target_accept: float = typer.Option(0.8, '--target-accept'),
    max_tree_depth: int = typer.Option(10, '--max-tree-depth'),
    init_radius: float = typer.Option(2.0, '--init-radius'),
    workers: int = typer.Option(1, '--workers', help="Threads for chains; results do not depend on it."),
    standardize: bool = typer.Option(True, '--standardize/--no-standardize'),
    scale: PredictionScale = typer.Option(PredictionScale.OUTCOME, '--scale'),
    fmt: OutputFormat = typer.Option(OutputFormat.BOTH, '--format'),
    out: str = typer.Option(None, '--out', help="Run directory (default runs/<link>-seed<seed>)."),
):
    """Fit a model and write the run directory."""
    config = RunConfig(
        data=data, delimiter=delimiter, subsample=subsample, balance=balance, holdout=holdout, link=link,
        intercept_mean=intercept_mean, intercept_sd=intercept_sd, slope_mean=slope_mean, slope_sd=slope_sd,
        chains=chains, warmup=warmup, draws=draws, seed=seed, target_accept=target_accept,
        max_tree_depth=max_tree_depth, init_radius=init_radius, workers=workers, standardize=standardize,
        scale=scale, format=fmt, out=out)
    run_fit(config)


def _write_holdout_predictions(run_dir: str, draws, holdout, config: RunConfig) -> None:
    try:
        rows = posterior_predict(draws, design_for(draws, holdout), config.scale, config.seed)
    except UnseenLevel as e:
        logger.warning(f"Held-out records not scored: {e}")
        return
    scale = config.scale.value
    if config.format in (OutputFormat.TEXT, OutputFormat.BOTH):
        _write(directories.run_file(run_dir, directories.PREDICTIONS_TXT), prediction_text(rows, scale))
    if config.format in (OutputFormat.JSON, OutputFormat.BOTH):
        _write(directories.run_file(run_dir, directories.PREDICTIONS_JSON), prediction_json(rows, scale))


def run_fit(config: RunConfig) -> list[str]:
    """
    Runs the whole fit pipeline for a configuration and writes every artifact.

    Args:
        config (RunConfig): Run configuration.

    Returns:
        list[str]: Convergence warnings (empty for a healthy run).
    """
    if not config.data or not os.path.exists(config.data):
        raise FileNotFoundError(2, 'No such file', config.data)
    run_dir = config.run_dir()
    directories.create_directory(run_dir)
    handler = directories.attach_run_log(run_dir)
    try:
        model, design, report, holdout = build_training_model(config)
        draws = sample(model, config.sampler_config(), config.workers)
        draws.encoding = design.encoding.to_dict()
        draws.run_config = config.model_dump(mode='json')

        _write(directories.run_file(run_dir, directories.CONFIG_FILE), config.to_json())
        write_chain_file(directories.run_file(run_dir, directories.CHAIN_FILE), draws)
        _write(directories.run_file(run_dir, directories.ENCODING_FILE), dumps(draws.encoding))
        _write(directories.run_file(run_dir, directories.BALANCE_FILE), dumps(report.to_dict() if report else None))
        if holdout is not None:
            holdout.to_csv(directories.run_file(run_dir, directories.HOLDOUT_FILE), config.delimiter)

        summaries = summarize(draws)
        warnings = convergence_warnings(summaries, draws)
        text = summary_text(summaries)
        json_text = summary_json(summaries, {'model': draws.model_name, 'warnings': warnings})
        if config.format in (OutputFormat.TEXT, OutputFormat.BOTH):
            _write(directories.run_file(run_dir, directories.SUMMARY_TXT), text)
        if config.format in (OutputFormat.JSON, OutputFormat.BOTH):
            _write(directories.run_file(run_dir, directories.SUMMARY_JSON), json_text)
        if holdout is not None:
            _write_holdout_predictions(run_dir, draws, holdout, config)
        _emit(text, json_text, config.format)
        if warnings:
            err_console.print("WARNING: the fit may not have converged")
            for warning in warnings:
                err_console.print(f"  - {warning}")
        logger.info(f"Run written to {run_dir}")
        return warnings
    finally:
        directories.detach_run_log(handler)


@app.command()
@_guard
def diagnose(
    chain_file: str = typer.Argument(..., help="Chain file written by fit."),
    fmt: OutputFormat = typer.Option(OutputFormat.TEXT, '--format'),
):
    """Re-emit the summary and diagnostics of a stored chain file."""
    draws = read_chain_file(chain_file)
    summaries = summarize(draws)
    warnings = convergence_warnings(summaries, draws)
    _emit(summary_text(summaries), summary_json(summaries, {'model': draws.model_name, 'warnings': warnings}), fmt)
    for warning in warnings:
        err_console.print(f"WARNING: {warning}")


@app.command()
@_guard
def compare(
    chain_files: List[str] = typer.Argument(..., help="Two or more chain files fit on the same data."),
    data: str = typer.Option(None, '--data', help="Input CSV; defaults to the path recorded in each run."),
    chunk: int = typer.Option(1000, '--chunk', help="Observations per LOO block."),
    fmt: OutputFormat = typer.Option(OutputFormat.TEXT, '--format'),
):
    """Rank models by PSIS-LOO elpd."""
    if len(chain_files) < 2:
        raise UsageError("compare needs at least two chain files")
    results, cache = {}, {}
    for path in chain_files:
        draws = read_chain_file(path)
        if draws.run_config is None or draws.link is None or draws.prior is None:
            raise UsageError(f"{path} does not record the run it came from")
        stored = dict(draws.run_config)
        if data is not None:
            stored['data'] = data
        config = RunConfig.model_validate(stored)
        key = config.model_dump_json(include={'data', 'delimiter', 'subsample', 'balance', 'holdout', 'seed',
                                              'standardize'})
        if key not in cache:
            cache[key] = build_training_model(config)
        base, design, _, _ = cache[key]
        model = ModelSpec(draws.link, PriorSpec(**draws.prior), design.values, base.target, design.column_names)
        if draws.fingerprint is not None and model.fingerprint() != draws.fingerprint:
            raise DatasetMismatch(f"Data rebuilt for {path} differs from the data its chains were fit on")
        name = draws.model_name or os.path.splitext(os.path.basename(path))[0]
        while name in results:
            name = f"{name}_{len(results)}"
        results[name] = psis_loo_model(draws, model, chunk)
    comparison = compare_loo(results)
    _emit(comparison_text(comparison), comparison_json(comparison, results), fmt)


@app.command()
@_guard
def predict(
    chain_file: str = typer.Argument(..., help="Chain file written by fit."),
    data: str = typer.Option(..., '--data', help="New records; the 'y' column is optional."),
    delimiter: str = typer.Option(None, '--delimiter', help="Defaults to the delimiter of the run."),
    scale: PredictionScale = typer.Option(PredictionScale.OUTCOME, '--scale'),
    seed: int = typer.Option(None, '--seed', help="Seed of the outcome draws; defaults to the run seed."),
    fmt: OutputFormat = typer.Option(OutputFormat.TEXT, '--format'),
):
    """Posterior-predictive summaries for new records."""
    draws = read_chain_file(chain_file)
    if delimiter is None:
        delimiter = (draws.run_config or {}).get('delimiter', ';')
    if not os.path.exists(data):
        raise FileNotFoundError(2, 'No such file', data)
    table = parse_dataset(data, delimiter, require_target=False)
    rows = posterior_predict(draws, design_for(draws, table), scale, seed)
    _emit(prediction_text(rows, scale.value), prediction_json(rows, scale.value), fmt)


@app.command()
@_guard
def verify(
    seed: int = typer.Option(1, '--seed'),
    quick: bool = typer.Option(False, '--quick', help="Shorter runs; same thresholds."),
    workers: int = typer.Option(1, '--workers'),
    fmt: OutputFormat = typer.Option(OutputFormat.TEXT, '--format'),
):
    """Run the reference checks; exits 4 if any check fails."""
    results = run_verification_suite(seed, quick, workers)
    _emit(verification_text(results), verification_json(results), fmt)
    if not all(r.passed for r in results):
        raise typer.Exit(code=4)


if __name__ == "__main__":
    app()
