"""
Chain-file persistence.

A chain file is one compact JSON header line followed by the draws as CSV::

    {"accept_rate":[...],"config":{...},...}
    chain,iteration,Intercept,age,...
    0,0,2.3412...,0.1043...
    ...

Floats are written with 17 significant digits so a file read back reproduces the draws bit for bit and two
identical runs produce identical bytes. Everything diagnostics, model_eval and prediction need travels in the
header: parameter names, sampler config, seed, per-chain step size, acceptance and divergences, link, prior,
dataset fingerprint, encoding metadata and the run configuration.
"""
import logging
import math
import os

import numpy as np
import ujson

from errors import CorruptChainFile
from sampler import PosteriorDraws, SamplerConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLOAT_FORMAT = '%.17g'


def _json_safe(value):
    """Recursively converts numpy values to Python ones and NaN/inf to None."""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(value) -> str:
    """Compact, key-sorted JSON used for every artifact this package writes."""
    return ujson.dumps(_json_safe(value), sort_keys=True, escape_forward_slashes=False)


class ChainStore:
    """
    Reads and writes the chain file of one fit.

    Attributes:
        path (str): Location of the chain file.
    """

    def __init__(self, path: str) -> None:
        self.path = path

    def header_for(self, draws: PosteriorDraws) -> dict:
        return {
            'format_version': FORMAT_VERSION,
            'model_name': draws.model_name,
            'param_names': list(draws.param_names),
            'n_chains': draws.n_chains,
            'n_draws': draws.n_draws,
            'seed': int(draws.seed),
            'config': draws.config.model_dump() if draws.config is not None else None,
            'step_size': draws.step_size,
            'accept_rate': draws.accept_rate,
            'divergence_count': draws.divergence_count,
            'divergent_iterations': draws.divergent_iterations,
            'inv_metric': draws.inv_metric,
            'link': draws.link,
            'prior': draws.prior,
            'fingerprint': draws.fingerprint,
            'encoding': draws.encoding,
            'run_config': draws.run_config,
        }

    def write(self, draws: PosteriorDraws) -> None:
        """
        Writes the draws and their header.

        Args:
            draws (PosteriorDraws): Draws to persist.
        """
        with open(self.path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(dumps(self.header_for(draws)) + '\n')
            handle.write(','.join(['chain', 'iteration'] + list(draws.param_names)) + '\n')
            for c in range(draws.n_chains):
                for d in range(draws.n_draws):
                    values = ','.join(FLOAT_FORMAT % v for v in draws.draws[c, d])
                    handle.write(f"{c},{d},{values}\n")
        logger.info(f"Wrote {draws.n_chains} x {draws.n_draws} draws to {self.path}")

    def read(self) -> PosteriorDraws:
        """
        Reads a chain file back into PosteriorDraws.

        Returns:
            PosteriorDraws: Draws with all header metadata attached.

        Raises:
            FileNotFoundError: The path does not exist.
            CorruptChainFile: Any structural problem, with the byte offset of the offending line.
        """
        if not os.path.exists(self.path):
            raise FileNotFoundError(f"Chain file not found: {self.path}")
        with open(self.path, 'rb') as handle:
            content = handle.read()

        lines = content.split(b'\n')
        offsets = [0]
        for line in lines[:-1]:
            offsets.append(offsets[-1] + len(line) + 1)
        if lines and lines[-1] == b'':
            lines.pop()
        elif lines:
            raise CorruptChainFile(self.path, offsets[len(lines) - 1], "last line is truncated (no newline)")

        if not lines:
            raise CorruptChainFile(self.path, 0, "file is empty")
        try:
            header = ujson.loads(lines[0].decode('utf-8'))
        except (ValueError, UnicodeDecodeError) as e:
            raise CorruptChainFile(self.path, 0, f"header is not valid JSON ({e})")
        for key in ('param_names', 'n_chains', 'n_draws', 'seed'):
            if key not in header:
                raise CorruptChainFile(self.path, 0, f"header lacks '{key}'")

        names = list(header['param_names'])
        n_chains, n_draws = int(header['n_chains']), int(header['n_draws'])
        expected_columns = ['chain', 'iteration'] + names
        if len(lines) < 2 or lines[1].decode('utf-8', errors='replace').split(',') != expected_columns:
            raise CorruptChainFile(self.path, offsets[1] if len(offsets) > 1 else len(content),
                                   "column header does not match param_names")

        rows = lines[2:]
        draws = np.empty((n_chains, n_draws, len(names)))
        for r, line in enumerate(rows):
            offset = offsets[r + 2]
            if r >= n_chains * n_draws:
                raise CorruptChainFile(self.path, offset, f"more than {n_chains * n_draws} draw rows")
            fields = line.decode('utf-8', errors='replace').split(',')
            if len(fields) != len(expected_columns):
                raise CorruptChainFile(self.path, offset,
                                       f"expected {len(expected_columns)} fields, found {len(fields)}")
            c, d = divmod(r, n_draws)
            if fields[0] != str(c) or fields[1] != str(d):
                raise CorruptChainFile(self.path, offset, f"expected chain {c} iteration {d}")
            try:
                draws[c, d] = [float(v) for v in fields[2:]]
            except ValueError as e:
                raise CorruptChainFile(self.path, offset, f"unparseable value ({e})")
            if not np.all(np.isfinite(draws[c, d])):
                raise CorruptChainFile(self.path, offset, "non-finite draw")
        if len(rows) != n_chains * n_draws:
            raise CorruptChainFile(self.path, len(content),
                                   f"expected {n_chains * n_draws} draw rows, found {len(rows)}")

        def per_chain(key, default):
            value = header.get(key)
            return np.asarray(default if value is None else value, dtype=float)

        inv_metric = header.get('inv_metric')
        return PosteriorDraws(
            draws=draws,
            param_names=names,
            divergence_count=np.asarray(header.get('divergence_count') or [0] * n_chains, dtype=np.int64),
            divergent_iterations=[list(v) for v in header.get('divergent_iterations') or [[]] * n_chains],
            step_size=per_chain('step_size', [np.nan] * n_chains),
            accept_rate=per_chain('accept_rate', [np.nan] * n_chains),
            seed=int(header['seed']),
            config=SamplerConfig(**header['config']) if header.get('config') else None,
            inv_metric=np.asarray(inv_metric, dtype=float) if inv_metric is not None else None,
            link=header.get('link'),
            prior=header.get('prior'),
            fingerprint=header.get('fingerprint'),
            encoding=header.get('encoding'),
            run_config=header.get('run_config'),
            model_name=header.get('model_name'),
        )


def write_chain_file(path: str, draws: PosteriorDraws) -> None:
    """Writes draws to a chain file, replacing any existing file."""
    ChainStore(path).write(draws)


def read_chain_file(path: str) -> PosteriorDraws:
    """Reads a chain file written by write_chain_file."""
    return ChainStore(path).read()
