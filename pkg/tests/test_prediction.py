import math

import numpy as np
import pytest
from scipy import special

from conftest import bank_rows, write_bank_csv
from data_pipeline import DesignMatrix, Encoding, parse_dataset, encode, FEATURE_COLUMNS
from errors import EncodingMismatch, DimensionMismatch, UsageError
from prediction import posterior_predict, design_for, PredictionScale
from sampler import PosteriorDraws

IDENTITY = Encoding(['x1'], {}, {'x1': [0.0, 1.0]}, False)


def one_slope_draws(values, link='logit', encoding=None, seed=3) -> PosteriorDraws:
    ary = np.asarray(values, dtype=float).reshape(1, -1, 2)
    return PosteriorDraws(draws=ary, param_names=['Intercept', 'x1'], divergence_count=[0],
                          divergent_iterations=[[]], step_size=[0.5], accept_rate=[0.8], seed=seed, link=link,
                          encoding=encoding)


def bank_draws(design: DesignMatrix, n_draws: int = 200) -> PosteriorDraws:
    rng = np.random.default_rng(4)
    ary = 0.1 * rng.standard_normal((2, n_draws, len(FEATURE_COLUMNS) + 1))
    return PosteriorDraws(draws=ary, param_names=['Intercept'] + FEATURE_COLUMNS, divergence_count=[0, 0],
                          divergent_iterations=[[], []], step_size=[0.5, 0.5], accept_rate=[0.8, 0.8], seed=9,
                          link='probit', encoding=design.encoding.to_dict())


class TestProbabilityScale:
    def test_point_mass_posterior(self):
        draws = one_slope_draws(np.tile([0.2, 1.0], 50))
        rows = posterior_predict(draws, DesignMatrix(np.array([[0.5], [-0.5]]), IDENTITY), 'probability')
        assert [r.index for r in rows] == [1, 2]
        assert rows[0].estimate == pytest.approx(special.expit(0.7), rel=1e-14)
        assert rows[0].est_error == pytest.approx(0.0, abs=1e-12)
        assert rows[1].q2_5 == rows[1].q97_5 == pytest.approx(special.expit(-0.3))
        assert rows[0].scale == 'probability'

    def test_probit_link(self):
        draws = one_slope_draws(np.tile([0.0, 1.0], 10), link='probit')
        row = posterior_predict(draws, DesignMatrix(np.array([[1.0]]), IDENTITY), PredictionScale.PROBABILITY)[0]
        assert row.estimate == pytest.approx(special.ndtr(1.0))

    def test_link_override(self):
        draws = one_slope_draws(np.tile([0.0, 1.0], 10), link=None)
        with pytest.raises(UsageError):
            posterior_predict(draws, DesignMatrix(np.array([[1.0]]), IDENTITY), 'probability')
        row = posterior_predict(draws, DesignMatrix(np.array([[1.0]]), IDENTITY), 'probability', link='probit')[0]
        assert row.estimate == pytest.approx(special.ndtr(1.0))

    @pytest.mark.parametrize('link', ['logit', 'probit'])
    def test_positive_slope_never_lowers_estimate(self, link):
        rng = np.random.default_rng(6)
        values = np.column_stack([rng.normal(0.0, 1.0, 300), np.abs(rng.normal(0.5, 0.5, 300)) + 1e-3])
        rows = DesignMatrix(np.array([[-2.0], [-0.5], [0.0], [0.5], [3.0]]), IDENTITY)
        estimates = [r.estimate for r in posterior_predict(one_slope_draws(values, link=link), rows, 'probability')]
        assert all(a <= b for a, b in zip(estimates, estimates[1:]))

    def test_probability_spread_within_outcome_spread(self):
        rng = np.random.default_rng(7)
        draws = one_slope_draws(np.column_stack([rng.normal(0.0, 0.3, 2000), np.ones(2000)]))
        rows = DesignMatrix(np.array([[0.5], [-1.0], [2.0]]), IDENTITY)
        probability = posterior_predict(draws, rows, 'probability')
        outcome = posterior_predict(draws, rows, 'outcome')
        for p, o in zip(probability, outcome):
            assert p.est_error <= o.est_error

    def test_duplicating_draws_changes_nothing(self):
        rng = np.random.default_rng(5)
        base = rng.normal(0.0, 1.0, (101, 2))
        rows = DesignMatrix(np.array([[0.3], [2.0]]), IDENTITY)
        single = posterior_predict(one_slope_draws(base), rows, 'probability')
        double = posterior_predict(one_slope_draws(np.concatenate([base, base])), rows, 'probability')
        for a, b in zip(single, double):
            assert b.estimate == pytest.approx(a.estimate, rel=1e-12)
            assert b.est_error == pytest.approx(a.est_error, rel=1e-12)
            assert (b.q2_5, b.q97_5) == (a.q2_5, a.q97_5)


class TestOutcomeScale:
    def test_draws_are_binary_and_reproducible(self):
        draws = one_slope_draws(np.tile([0.0, 0.0], 4000))
        rows = DesignMatrix(np.zeros((3, 1)), IDENTITY)
        first = posterior_predict(draws, rows)
        assert first == posterior_predict(draws, rows)
        for row in first:
            assert row.scale == 'outcome'
            assert row.estimate == pytest.approx(0.5, abs=4 * math.sqrt(0.25 / 4000))
            assert (row.q2_5, row.q97_5) == (0.0, 1.0)
            assert row.est_error ** 2 <= row.estimate * (1 - row.estimate) + 1 / 4000
        assert posterior_predict(draws, rows, seed=99) != first

    def test_certain_outcome(self):
        draws = one_slope_draws(np.tile([40.0, 0.0], 100))
        row = posterior_predict(draws, DesignMatrix(np.zeros((1, 1)), IDENTITY))[0]
        assert (row.estimate, row.est_error, row.q2_5, row.q97_5) == (1.0, 0.0, 1.0, 1.0)


class TestEncodingChecks:
    def test_rows_encoded_with_other_metadata(self, bank_csv):
        design, _ = encode(parse_dataset(bank_csv))
        other, _ = encode(parse_dataset(bank_csv), standardize=False)
        with pytest.raises(EncodingMismatch):
            posterior_predict(bank_draws(design), other)

    def test_column_count(self):
        draws = one_slope_draws(np.tile([0.0, 1.0], 10))
        wide = DesignMatrix(np.zeros((1, 2)), Encoding(['a', 'b'], {}, {'a': [0.0, 1.0], 'b': [0.0, 1.0]}, False))
        with pytest.raises(DimensionMismatch):
            posterior_predict(draws, wide)

    def test_new_records_use_training_encoding(self, bank_csv, tmp_path):
        design, _ = encode(parse_dataset(bank_csv))
        draws = bank_draws(design)
        new = parse_dataset(write_bank_csv(tmp_path / 'new.csv', bank_rows(4, seed=21, with_target=False)),
                            require_target=False)
        rows = posterior_predict(draws, design_for(draws, new), 'probability')
        assert len(rows) == 4
        assert all(0.0 < r.q2_5 <= r.estimate <= r.q97_5 < 1.0 for r in rows)

    def test_empty_new_data(self, bank_csv):
        design, _ = encode(parse_dataset(bank_csv))
        draws = bank_draws(design)
        table = parse_dataset(bank_csv).take([])
        assert design_for(draws, table).shape == (0, len(FEATURE_COLUMNS))
        assert posterior_predict(draws, design_for(draws, table)) == []

    def test_draws_without_encoding(self, bank_csv):
        draws = one_slope_draws(np.tile([0.0, 1.0], 10))
        with pytest.raises(EncodingMismatch):
            design_for(draws, parse_dataset(bank_csv))
