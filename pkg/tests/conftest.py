import os
import sys

import numpy as np
import pytest

module_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir, 'src'))
if module_dir not in sys.path:
    sys.path.insert(0, module_dir)

from data_pipeline import FEATURE_COLUMNS  # noqa: E402
from model_core import LinkKind, ModelSpec, default_priors  # noqa: E402

JOBS = ['admin.', 'blue-collar', 'technician', 'services', 'management', 'retired']
MARITAL = ['married', 'single', 'divorced']
EDUCATION = ['basic.4y', 'high.school', 'university.degree', 'professional.course']
MONTHS = ['may', 'jun', 'jul', 'aug', 'nov']
DAYS = ['mon', 'tue', 'wed', 'thu', 'fri']


def bank_rows(n: int, seed: int = 0, with_target: bool = True) -> list[dict]:
    """Synthetic records in the bank-marketing schema with a duration-driven response."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        duration = float(rng.integers(20, 1200))
        row = {
            'age': int(rng.integers(18, 90)),
            'job': JOBS[i % len(JOBS)],
            'marital': MARITAL[int(rng.integers(len(MARITAL)))],
            'education': EDUCATION[int(rng.integers(len(EDUCATION)))],
            'default': 'no' if i % 7 else 'unknown',
            'housing': 'yes' if rng.random() < 0.5 else 'no',
            'loan': 'yes' if rng.random() < 0.2 else 'no',
            'contact': 'cellular' if rng.random() < 0.6 else 'telephone',
            'month': MONTHS[int(rng.integers(len(MONTHS)))],
            'day_of_week': DAYS[int(rng.integers(len(DAYS)))],
            'duration': int(duration),
            'campaign': int(rng.integers(1, 6)),
            'pdays': 999,
            'previous': int(rng.integers(0, 3)),
            'poutcome': 'nonexistent' if i % 5 else 'failure',
            'emp.var.rate': round(float(rng.normal(0.0, 1.5)), 1),
            'cons.price.idx': round(float(rng.normal(93.5, 0.5)), 3),
            'cons.conf.idx': round(float(rng.normal(-40.0, 4.0)), 1),
            'euribor3m': round(float(rng.uniform(0.6, 5.0)), 3),
            'nr.employed': round(float(rng.normal(5160.0, 70.0)), 1),
        }
        if with_target:
            p = 1.0 / (1.0 + np.exp(-(duration - 500.0) / 150.0))
            row['y'] = 'yes' if rng.random() < p else 'no'
        rows.append(row)
    return rows


def write_bank_csv(path, rows: list[dict], delimiter: str = ';') -> str:
    columns = FEATURE_COLUMNS + (['y'] if rows and 'y' in rows[0] else [])
    lines = [delimiter.join(f'"{c}"' for c in columns)]
    for row in rows:
        fields = []
        for c in columns:
            value = row[c]
            fields.append(f'"{value}"' if isinstance(value, str) else str(value))
        lines.append(delimiter.join(fields))
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('\n'.join(lines) + '\n')
    return str(path)


@pytest.fixture
def bank_csv(tmp_path):
    """Path of a 120-record labelled file in the public schema."""
    return write_bank_csv(tmp_path / 'bank.csv', bank_rows(120, seed=3))


@pytest.fixture
def logistic_model():
    """2-parameter logit model on 50 synthetic rows."""
    rng = np.random.default_rng(42)
    x = rng.standard_normal((50, 1))
    y = (rng.random(50) < 1.0 / (1.0 + np.exp(-(0.5 + x[:, 0])))).astype(float)
    return ModelSpec(LinkKind.LOGIT, default_priors('logit'), x, y, ['x1'])


class StandardNormalTarget:
    """Independent standard normals, exposed through the sampler's log-density interface."""
    def __init__(self, n_params: int = 2) -> None:
        self.n_params = n_params
        self.param_names = ['Intercept'] + [f"x{j}" for j in range(1, n_params)]

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * theta @ theta), -theta
