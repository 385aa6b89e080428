import io
import os
import hashlib
import logging
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import BinaryIO

import numpy as np
import pandas as pd
import ujson

from errors import (UnknownColumn, MissingField, UnparseableNumber, UnknownTargetLabel, MalformedRow,
                    SampleTooLarge, DegenerateClasses, EmptyTable, UnseenLevel, UsageError, DataError)
from seeding import make_rng, substream_seed, SUBSAMPLE_STREAM, BALANCE_STREAM, TRIM_STREAM, HOLDOUT_STREAM

logger = logging.getLogger(__name__)

# Column order of the public bank-additional distribution; coefficient tables follow it.
FEATURE_COLUMNS: list[str] = [
    'age', 'job', 'marital', 'education', 'default', 'housing', 'loan', 'contact', 'month',
    'day_of_week', 'duration', 'campaign', 'pdays', 'previous', 'poutcome', 'emp.var.rate',
    'cons.price.idx', 'cons.conf.idx', 'euribor3m', 'nr.employed',
]
CATEGORICAL_COLUMNS: list[str] = [
    'job', 'marital', 'education', 'default', 'housing', 'loan', 'contact', 'month', 'day_of_week', 'poutcome',
]
NUMERIC_COLUMNS: list[str] = [c for c in FEATURE_COLUMNS if c not in CATEGORICAL_COLUMNS]
TARGET_COLUMN = 'y'
TARGET_LABELS = {'no': 0, 'yes': 1}


@dataclass
class RecordTable:
    """
    Typed rows of the bank-marketing schema.

    Attributes:
        frame (pd.DataFrame): One row per record; categorical columns as str, numeric columns as float,
            target column 'y' as int 0/1 when the table is labelled.
        source_index (np.ndarray): Row position of every record in the originally parsed file (provenance).
    """
    frame: pd.DataFrame
    source_index: np.ndarray

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def has_target(self) -> bool:
        return TARGET_COLUMN in self.frame.columns

    @property
    def target(self) -> np.ndarray:
        """The 0/1 target vector; raises DataError for unlabelled tables."""
        if not self.has_target:
            raise DataError("Table has no target column 'y'")
        return self.frame[TARGET_COLUMN].to_numpy(dtype=np.int64)

    @property
    def n_positive(self) -> int:
        return int(self.target.sum())

    def take(self, positions) -> 'RecordTable':
        """
        Selects rows by position, keeping provenance.

        Args:
            positions (array-like of int): Row positions in this table; repeats are allowed.

        Returns:
            RecordTable: New table, rows in the given order.
        """
        positions = np.asarray(positions, dtype=np.int64)
        return RecordTable(self.frame.iloc[positions].reset_index(drop=True), self.source_index[positions].copy())

    def to_csv(self, path: str, delimiter: str = ';') -> None:
        """Writes the table back in the input schema (target as yes/no)."""
        out = self.frame.copy()
        if self.has_target:
            labels = {v: k for k, v in TARGET_LABELS.items()}
            out[TARGET_COLUMN] = out[TARGET_COLUMN].map(labels)
        out.to_csv(path, sep=delimiter, index=False)


@dataclass
class BalanceReport:
    """
    Record of a class-balancing pass.

    Attributes:
        n_before (int): Rows before balancing.
        n_positive_before (int): Positive rows before balancing.
        n_after (int): Rows after balancing (and trimming, when the pipeline trims).
        n_positive_after (int): Positive rows after balancing.
        duplicated_indices (list[int]): Input-table positions of the rows that were duplicated, one entry per copy.
            Recorded before any trim; some copies may not survive a later balanced_trim.
        seed (int): Seed of the duplication draw.
        minority_label (int): Class that was oversampled.
    """
    n_before: int
    n_positive_before: int
    n_after: int
    n_positive_after: int
    duplicated_indices: list[int]
    seed: int
    minority_label: int

    def to_dict(self) -> dict:
        return asdict(self)


class BalanceOrder(str, Enum):
    AFTER = 'after'    # subsample, then balance, then trim back to n
    BEFORE = 'before'  # balance the full table, then draw n balanced rows
    OFF = 'off'


@dataclass
class Encoding:
    """
    Encoding and scaling metadata of a design matrix; everything needed to encode new rows identically.

    Attributes:
        column_names (list[str]): Predictor names in design-column order.
        encoding_map (dict[str, dict[str, int]]): Per categorical column, level -> code (lexicographic, codes 1..L).
        scaling (dict[str, list[float]]): Per column, [center, scale]; [0.0, 1.0] is the identity.
        standardized (bool): Whether scaling was estimated from the data.
        constant_columns (list[str]): Columns with zero sample spread (scale forced to 1).
    """
    column_names: list[str]
    encoding_map: dict[str, dict[str, int]]
    scaling: dict[str, list[float]]
    standardized: bool
    constant_columns: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'column_names': list(self.column_names),
            'encoding_map': {c: dict(m) for c, m in self.encoding_map.items()},
            'scaling': {c: [float(a), float(b)] for c, (a, b) in self.scaling.items()},
            'standardized': bool(self.standardized),
            'constant_columns': list(self.constant_columns),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Encoding':
        return cls(
            column_names=list(data['column_names']),
            encoding_map={c: {k: int(v) for k, v in m.items()} for c, m in data['encoding_map'].items()},
            scaling={c: [float(v[0]), float(v[1])] for c, v in data['scaling'].items()},
            standardized=bool(data['standardized']),
            constant_columns=list(data.get('constant_columns', [])),
        )

    def fingerprint(self) -> str:
        """Content hash of the metadata; two designs are compatible only if their fingerprints agree."""
        payload = ujson.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()


@dataclass
class DesignMatrix:
    """
    Numeric predictor matrix x_1..x_k with the metadata that produced it.

    Attributes:
        values (np.ndarray): n x k float matrix.
        encoding (Encoding): Encoding maps and scaling pairs.
    """
    values: np.ndarray
    encoding: Encoding

    @property
    def column_names(self) -> list[str]:
        return self.encoding.column_names

    @property
    def encoding_map(self) -> dict[str, dict[str, int]]:
        return self.encoding.encoding_map

    @property
    def scaling(self) -> dict[str, list[float]]:
        return self.encoding.scaling

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _open_source(source) -> BinaryIO:
    if isinstance(source, (str, os.PathLike)):
        return open(source, 'rb')
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source)
    return source


def parse_dataset(source, delimiter: str = ';', require_target: bool = True) -> RecordTable:
    """
    Parses delimiter-separated bank-marketing records.

    Args:
        source (str | os.PathLike | bytes | BinaryIO): File path, raw bytes or a binary stream, UTF-8,
            header row first, fields optionally double-quoted.
        delimiter (str): Field separator; the public distribution uses ';'.
        require_target (bool): When False the 'y' column may be absent (unlabelled scoring data).

    Returns:
        RecordTable: One record per data row, in file order.

    Raises:
        UnknownColumn: Header names an unknown column or lacks a required one.
        MissingField: A row has fewer fields than the header, or an empty field.
        MalformedRow: A row has more fields than the header, or the input is not valid UTF-8.
        UnparseableNumber: Non-numeric text in a numeric column.
        UnknownTargetLabel: Target value other than yes/no.
    """
    stream = _open_source(source)
    try:
        raw_bytes = stream.read()
    finally:
        if stream is not source:
            stream.close()
    try:
        text = raw_bytes.decode('utf-8-sig')
    except UnicodeDecodeError as e:
        raise MalformedRow(f"Input is not valid UTF-8 at byte offset {e.start}") from e

    # Header read as a data row so that a longer data row is a parse error, not an index column.
    try:
        frame = pd.read_csv(io.StringIO(text), sep=delimiter, dtype=str, keep_default_na=False, header=None,
                            index_col=False, quotechar='"', skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise UnknownColumn("Input has no header row")
    except pd.errors.ParserError as e:
        raise MalformedRow(f"Row has more fields than the header: {e}")

    header = frame.iloc[0].fillna('')
    frame = frame.iloc[1:].reset_index(drop=True)
    frame.columns = [str(c).strip() for c in header]
    repeated = sorted({c for c in frame.columns if list(frame.columns).count(c) > 1})
    if repeated:
        raise UnknownColumn(f"Repeated column(s) in header: {', '.join(repeated)}")
    expected = FEATURE_COLUMNS + [TARGET_COLUMN]
    unknown = [c for c in frame.columns if c not in expected]
    if unknown:
        raise UnknownColumn(f"Unknown column(s) in header: {', '.join(unknown)}")
    required = expected if require_target else FEATURE_COLUMNS
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise UnknownColumn(f"Header lacks column(s): {', '.join(missing)}")
    columns = [c for c in expected if c in frame.columns]
    frame = frame[columns]

    # Line numbers below are 1-based file lines; the header is line 1.
    first_gap = None
    for column in columns:
        values = frame[column]
        blank = np.flatnonzero((values.isna() | (values.fillna('').str.strip() == '')).to_numpy())
        if blank.size and (first_gap is None or blank[0] < first_gap[0]):
            first_gap = (int(blank[0]), column)
    if first_gap is not None:
        raise MissingField(f"Missing value for column '{first_gap[1]}' on line {first_gap[0] + 2}")

    parsed = {}
    for column in columns:
        raw = frame[column].str.strip()
        if column in NUMERIC_COLUMNS:
            numbers = pd.to_numeric(raw, errors='coerce')
            bad = np.flatnonzero(numbers.isna().to_numpy())
            if bad.size:
                raise UnparseableNumber(
                    f"Column '{column}' on line {bad[0] + 2}: cannot parse '{raw.iloc[bad[0]]}' as a number")
            parsed[column] = numbers.astype(float)
        elif column == TARGET_COLUMN:
            labels = raw.str.lower()
            bad = np.flatnonzero(~labels.isin(list(TARGET_LABELS)).to_numpy())
            if bad.size:
                raise UnknownTargetLabel(f"Target '{raw.iloc[bad[0]]}' on line {bad[0] + 2} is not yes/no")
            parsed[column] = labels.map(TARGET_LABELS).astype(np.int64)
        else:
            parsed[column] = raw

    table = RecordTable(pd.DataFrame(parsed, columns=columns), np.arange(len(frame), dtype=np.int64))
    logger.info(f"Parsed {len(table)} records")
    return table


def _partial_shuffle(n_total: int, n_pick: int, rng: np.random.Generator) -> np.ndarray:
    """First n_pick positions of a seeded Fisher-Yates shuffle of range(n_total)."""
    order = np.arange(n_total, dtype=np.int64)
    for i in range(n_pick):
        j = int(rng.integers(i, n_total))
        order[i], order[j] = order[j], order[i]
    return order[:n_pick]


def subsample(table: RecordTable, n: int, seed: int) -> RecordTable:
    """
    Draws n rows uniformly without replacement.

    Args:
        table (RecordTable): Source table.
        n (int): Rows to draw, 0 < n <= len(table).
        seed (int): Seed of the draw.

    Returns:
        RecordTable: The drawn rows in draw order; provenance kept in source_index.
    """
    if n <= 0:
        raise UsageError(f"Subsample size must be positive, got {n}")
    if n > len(table):
        raise SampleTooLarge(f"Cannot draw {n} rows from a table of {len(table)}")
    return table.take(_partial_shuffle(len(table), n, make_rng(seed)))


def balance_oversample(table: RecordTable, seed: int) -> tuple[RecordTable, BalanceReport]:
    """
    Duplicates minority-class rows, sampled with replacement, until both classes have equal counts.

    Args:
        table (RecordTable): Labelled table with at least one row of each class.
        seed (int): Seed of the duplication draw.

    Returns:
        tuple[RecordTable, BalanceReport]: Input rows unchanged followed by the duplicates, and the report.
    """
    target = table.target
    n_positive = int(target.sum())
    n_negative = len(target) - n_positive
    if n_positive == 0 or n_negative == 0:
        raise DegenerateClasses(f"Cannot balance a table with {n_positive} positive and {n_negative} negative rows")

    minority_label = 1 if n_positive < n_negative else 0
    minority = np.flatnonzero(target == minority_label)
    deficit = abs(n_positive - n_negative)
    rng = make_rng(seed)
    duplicated = minority[rng.integers(0, len(minority), size=deficit)] if deficit else np.empty(0, dtype=np.int64)

    balanced = table.take(np.concatenate([np.arange(len(table), dtype=np.int64), duplicated]))
    report = BalanceReport(
        n_before=len(table), n_positive_before=n_positive, n_after=len(balanced),
        n_positive_after=balanced.n_positive, duplicated_indices=[int(i) for i in duplicated],
        seed=int(seed), minority_label=minority_label,
    )
    logger.info(f"Oversampled class {minority_label}: {deficit} duplicates, {len(balanced)} rows")
    return balanced, report


def balanced_trim(table: RecordTable, n: int, seed: int) -> RecordTable:
    """
    Draws n // 2 rows of each class without replacement, keeping table order.

    Args:
        table (RecordTable): Labelled table.
        n (int): Target size; an odd n yields n - 1 rows.
        seed (int): Seed of the draw.

    Returns:
        RecordTable: Exactly balanced table.
    """
    half = n // 2
    rng = make_rng(seed)
    target = table.target
    picks = []
    for label in (1, 0):
        members = np.flatnonzero(target == label)
        if half > len(members):
            raise SampleTooLarge(f"Need {half} rows of class {label}, table has {len(members)}")
        picks.append(members[_partial_shuffle(len(members), half, rng)])
    return table.take(np.sort(np.concatenate(picks)))


def prepare_training_table(table: RecordTable, n: int | None, order: BalanceOrder | str,
                           seed: int) -> tuple[RecordTable, BalanceReport | None]:
    """
    Composes subsampling and oversampling in the requested order.

    Args:
        table (RecordTable): Parsed, labelled table.
        n (int | None): Size of the training table, or None to keep every row.
        order (BalanceOrder | str): 'after' subsamples, balances, then trims back to n;
            'before' balances the full table and then draws n balanced rows; 'off' only subsamples.
        seed (int): Master seed; each stage uses its own substream.

    Returns:
        tuple[RecordTable, BalanceReport | None]: The training table and the balance report (None when off).
    """
    order = BalanceOrder(order)
    sub_seed = substream_seed(seed, SUBSAMPLE_STREAM)
    bal_seed = substream_seed(seed, BALANCE_STREAM)
    trim_seed = substream_seed(seed, TRIM_STREAM)

    if order is BalanceOrder.OFF:
        return (subsample(table, n, sub_seed) if n is not None else table), None

    if order is BalanceOrder.AFTER:
        source = subsample(table, n, sub_seed) if n is not None else table
        balanced, report = balance_oversample(source, bal_seed)
    else:
        balanced, report = balance_oversample(table, bal_seed)

    if n is not None:
        balanced = balanced_trim(balanced, n, trim_seed)
        report.n_after = len(balanced)
        report.n_positive_after = balanced.n_positive
    logger.info(f"Training table: {len(balanced)} rows, {balanced.n_positive} positive")
    return balanced, report


def encode(table: RecordTable, standardize: bool = True,
           encoding: Encoding | None = None) -> tuple[DesignMatrix, np.ndarray | None]:
    """
    Encodes a table into a numeric design matrix.

    Categorical columns become single integer-coded columns (levels sorted lexicographically, codes 1..L).
    With standardize set, every column is shifted and scaled to sample mean 0 and sample sd 1 (denominator
    n - 1); a constant column keeps scale 1 and is flagged.

    Args:
        table (RecordTable): Non-empty table.
        standardize (bool): Estimate scaling from this table. Ignored when encoding is given.
        encoding (Encoding | None): Training metadata to reuse (maps and scaling) for new rows.

    Returns:
        tuple[DesignMatrix, np.ndarray | None]: The design and the 0/1 target (None for unlabelled tables).
    """
    if len(table) == 0:
        raise EmptyTable("Cannot encode an empty table")

    frame = table.frame
    if encoding is None:
        encoding_map = {
            column: {level: code for code, level in enumerate(sorted(frame[column].unique()), start=1)}
            for column in CATEGORICAL_COLUMNS
        }
    else:
        encoding_map = encoding.encoding_map

    raw = np.empty((len(table), len(FEATURE_COLUMNS)), dtype=float)
    for j, column in enumerate(FEATURE_COLUMNS):
        if column in CATEGORICAL_COLUMNS:
            mapping = encoding_map[column]
            levels = frame[column].to_numpy()
            for level in pd.unique(levels):
                if level not in mapping:
                    raise UnseenLevel(column, level)
            raw[:, j] = [mapping[level] for level in levels]
        else:
            raw[:, j] = frame[column].to_numpy(dtype=float)

    if encoding is None:
        scaling, constant = {}, []
        for j, column in enumerate(FEATURE_COLUMNS):
            if not standardize:
                scaling[column] = [0.0, 1.0]
                continue
            center = float(raw[:, j].mean())
            scale = float(raw[:, j].std(ddof=1)) if len(table) > 1 else 0.0
            if not np.isfinite(scale) or scale <= 0.0:
                logger.warning(f"Column '{column}' is constant; centred with scale 1")
                constant.append(column)
                scale = 1.0
            scaling[column] = [center, scale]
        encoding = Encoding(list(FEATURE_COLUMNS), encoding_map, scaling, bool(standardize), constant)

    centers = np.array([encoding.scaling[c][0] for c in FEATURE_COLUMNS])
    scales = np.array([encoding.scaling[c][1] for c in FEATURE_COLUMNS])
    values = (raw - centers) / scales
    target = table.target.astype(float) if table.has_target else None
    return DesignMatrix(values, encoding), target


def decode_column(design: DesignMatrix, column: str) -> list[str]:
    """
    Maps a categorical design column back to its level strings.

    Args:
        design (DesignMatrix): Encoded design.
        column (str): Name of a categorical column.

    Returns:
        list[str]: One level per row.
    """
    if column not in design.encoding_map:
        raise DataError(f"Column '{column}' is not categorical")
    j = design.column_names.index(column)
    center, scale = design.scaling[column]
    codes = np.rint(design.values[:, j] * scale + center).astype(int)
    levels = {code: level for level, code in design.encoding_map[column].items()}
    try:
        return [levels[code] for code in codes]
    except KeyError as e:
        raise DataError(f"Code {e.args[0]} of column '{column}' is not in the encoding map")


def holdout_split(table: RecordTable, n_holdout: int, seed: int) -> tuple[RecordTable, RecordTable]:
    """
    Splits a table into disjoint training and held-out parts.

    Args:
        table (RecordTable): Source table.
        n_holdout (int): Held-out rows, 0 < n_holdout < len(table).
        seed (int): Seed of the draw.

    Returns:
        tuple[RecordTable, RecordTable]: (train, holdout), each in table order.
    """
    if n_holdout <= 0:
        raise UsageError(f"Holdout size must be positive, got {n_holdout}")
    if n_holdout >= len(table):
        raise SampleTooLarge(f"Cannot hold out {n_holdout} of {len(table)} rows")
    picked = np.sort(_partial_shuffle(len(table), n_holdout, make_rng(seed)))
    mask = np.ones(len(table), dtype=bool)
    mask[picked] = False
    return table.take(np.flatnonzero(mask)), table.take(picked)


def split_for_holdout(table: RecordTable, n_holdout: int, seed: int) -> tuple[RecordTable, RecordTable | None]:
    """holdout_split on the pipeline's holdout substream; n_holdout == 0 keeps every row for training."""
    if n_holdout == 0:
        return table, None
    return holdout_split(table, n_holdout, substream_seed(seed, HOLDOUT_STREAM))
