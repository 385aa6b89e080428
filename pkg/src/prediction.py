"""
Posterior-predictive summaries for new records, on the outcome (0/1 draws) or probability scale.
"""
import logging
from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np

from data_pipeline import DesignMatrix, Encoding, RecordTable, FEATURE_COLUMNS, encode
from errors import EncodingMismatch, DimensionMismatch, VarianceBoundViolation, UsageError
from model_core import LinkKind, inverse_link
from sampler import PosteriorDraws
from seeding import make_rng, PREDICT_STREAM

logger = logging.getLogger(__name__)


class PredictionScale(str, Enum):
    OUTCOME = 'outcome'
    PROBABILITY = 'probability'


@dataclass
class PredictionRow:
    """
    Predictive summary of one new record.

    Attributes:
        index (int): 1-based row number in the new data.
        estimate (float): Predictive mean.
        est_error (float): Predictive sd.
        q2_5 (float): 2.5% quantile.
        q97_5 (float): 97.5% quantile.
        scale (str): 'outcome' or 'probability'.
    """
    index: int
    estimate: float
    est_error: float
    q2_5: float
    q97_5: float
    scale: str

    def to_dict(self) -> dict:
        return asdict(self)


def training_encoding(draws: PosteriorDraws) -> Encoding:
    if draws.encoding is None:
        raise EncodingMismatch("Draws carry no encoding metadata")
    return Encoding.from_dict(draws.encoding)


def design_for(draws: PosteriorDraws, table: RecordTable) -> DesignMatrix:
    """
    Encodes new records with the training encoding stored alongside the draws.

    Args:
        draws (PosteriorDraws): Draws carrying training encoding metadata.
        table (RecordTable): New records; may be empty.

    Returns:
        DesignMatrix: Encoded and scaled exactly as the training design.
    """
    encoding = training_encoding(draws)
    if len(table) == 0:
        return DesignMatrix(np.zeros((0, len(FEATURE_COLUMNS))), encoding)
    design, _ = encode(table, encoding=encoding)
    return design


def _summary(values: np.ndarray) -> tuple[float, float, float, float]:
    # Population sd and empirical-CDF quantiles: both unchanged when every draw is duplicated.
    return (float(values.mean()), float(values.std()),
            float(np.quantile(values, 0.025, method='inverted_cdf')),
            float(np.quantile(values, 0.975, method='inverted_cdf')))


def posterior_predict(draws: PosteriorDraws, new_rows: DesignMatrix, scale: PredictionScale | str = 'outcome',
                      seed: int | None = None, link: LinkKind | str | None = None) -> list[PredictionRow]:
    """
    Posterior-predictive summary per new row.

    On the probability scale the summaries are of pi_i over all pooled draws. On the outcome scale one
    Bernoulli(pi_i) outcome is drawn per posterior draw, on a per-row substream of the seed, and the 0/1 draws
    are summarized.

    Args:
        draws (PosteriorDraws): Posterior draws.
        new_rows (DesignMatrix): New records encoded with the training metadata.
        scale (PredictionScale | str): 'outcome' (default) or 'probability'.
        seed (int | None): Seed of the outcome draws; defaults to the draws' seed.
        link (LinkKind | str | None): Overrides the link recorded with the draws.

    Returns:
        list[PredictionRow]: One row per new record, in order.

    Raises:
        EncodingMismatch: new_rows were encoded with different metadata than the training design.
        VarianceBoundViolation: An outcome-scale row breaks est_error^2 <= p(1 - p) + 1/S.
    """
    scale = PredictionScale(scale)
    link = link if link is not None else draws.link
    if link is None:
        raise UsageError("No link function recorded with the draws")
    link = LinkKind(link)
    if draws.encoding is not None and training_encoding(draws).fingerprint() != new_rows.encoding.fingerprint():
        raise EncodingMismatch("New rows were encoded with metadata that differs from the training design")
    if new_rows.values.shape[1] + 1 != draws.n_params:
        raise DimensionMismatch(
            f"New rows have {new_rows.values.shape[1]} columns, draws have {draws.n_params - 1} slopes")
    seed = draws.seed if seed is None else seed

    pooled = draws.pooled()
    n_samples = pooled.shape[0]
    rows = []
    for i, x in enumerate(new_rows.values):
        probs = np.asarray(inverse_link(pooled[:, 0] + pooled[:, 1:] @ x, link), dtype=float)
        if scale is PredictionScale.PROBABILITY:
            stats = _summary(probs)
        else:
            outcomes = (make_rng(seed, PREDICT_STREAM + i).random(n_samples) < probs).astype(float)
            stats = _summary(outcomes)
            estimate, est_error = stats[0], stats[1]
            if est_error ** 2 > estimate * (1.0 - estimate) + 1.0 / n_samples:
                raise VarianceBoundViolation(f"Row {i + 1}: predictive variance exceeds the Bernoulli bound")
        rows.append(PredictionRow(i + 1, *stats, scale.value))
    logger.info(f"Scored {len(rows)} row(s) on the {scale.value} scale with {n_samples} draws")
    return rows
