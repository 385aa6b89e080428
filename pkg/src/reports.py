"""
Text and JSON renderings of the result tables: coefficient summaries, LOO comparison, predictions and the
verification report. Text is rounded for display; JSON keeps full precision and writes NaN as null.
"""
import io
import math

from rich import box
from rich.console import Console
from rich.table import Table

from chain_store import dumps
from diagnostics import ParamSummary
from model_eval import LooComparison
from prediction import PredictionRow
from verification import CheckResult

SUMMARY_COLUMNS = ['Estimate', 'Est.Error', '95% CI Lower', '95% CI Upper', 'Rhat', 'ESS Bulk', 'ESS Tail']


def _fixed(value: float, digits: int) -> str:
    if value is None or not math.isfinite(value):
        return 'NA'
    text = f"{value:.{digits}f}"
    # no negative zero in tables
    return text[1:] if text.startswith('-') and float(text) == 0.0 else text


def _count(value: float) -> str:
    if value is None or not math.isfinite(value):
        return 'NA'
    return str(int(round(value)))


def render_table(table: Table) -> str:
    """Renders a rich table as plain text (no colour, no terminal control codes)."""
    buffer = io.StringIO()
    console = Console(file=buffer, width=200, color_system=None, force_terminal=False, legacy_windows=False)
    console.print(table)
    return buffer.getvalue()


def _table(title: str | None, columns: list[str]) -> Table:
    table = Table(title=title, box=box.SIMPLE, show_edge=False, pad_edge=False)
    table.add_column('', justify='left')
    for column in columns:
        table.add_column(column, justify='right')
    return table


def summary_text(summaries: list[ParamSummary], title: str | None = None) -> str:
    """Coefficient table: one row per parameter, estimates to 2 decimals, ESS as integers."""
    table = _table(title, SUMMARY_COLUMNS)
    for s in summaries:
        table.add_row(s.name, _fixed(s.estimate, 2), _fixed(s.est_error, 2), _fixed(s.ci_lower, 2),
                      _fixed(s.ci_upper, 2), _fixed(s.rhat, 2), _count(s.ess_bulk), _count(s.ess_tail))
    return render_table(table)


def summary_json(summaries: list[ParamSummary], extra: dict | None = None) -> str:
    payload = {'parameters': [s.to_dict() for s in summaries]}
    if extra:
        payload.update(extra)
    return dumps(payload)


def comparison_text(comparison: LooComparison) -> str:
    table = _table(None, ['elpd_diff', 'se_diff'])
    for row in comparison.rows:
        table.add_row(row.name, _fixed(row.elpd_diff, 1), _fixed(row.se_diff, 1))
    return render_table(table)


def comparison_json(comparison: LooComparison, loo: dict | None = None) -> str:
    payload = {'comparison': comparison.to_dict()}
    if loo:
        payload['loo'] = {name: result.to_dict() for name, result in loo.items()}
    return dumps(payload)


def prediction_text(rows: list[PredictionRow], scale: str) -> str:
    table = _table(f"Posterior predictions ({scale} scale)", ['Estimate', 'Est. Error', 'Q2.5', 'Q97.5'])
    for row in rows:
        table.add_row(str(row.index), _fixed(row.estimate, 3), _fixed(row.est_error, 3), _fixed(row.q2_5, 3),
                      _fixed(row.q97_5, 3))
    return render_table(table)


def prediction_json(rows: list[PredictionRow], scale: str) -> str:
    return dumps({'scale': scale, 'predictions': [row.to_dict() for row in rows]})


def verification_text(results: list[CheckResult]) -> str:
    table = Table(box=box.SIMPLE, show_edge=False, pad_edge=False)
    table.add_column('Check')
    table.add_column('Result')
    table.add_column('Detail')
    for result in results:
        table.add_row(result.name, 'PASS' if result.passed else 'FAIL', result.detail)
    return render_table(table)


def verification_json(results: list[CheckResult]) -> str:
    return dumps({'passed': all(r.passed for r in results), 'checks': [r.to_dict() for r in results]})
