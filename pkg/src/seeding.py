"""
Seed splitting for every random stage of the pipeline.

A run carries one master seed. Each random stage (subsampling, balancing,
holdout, chain initialisation, chain transitions, predictive draws) draws
from its own substream: ``substream_seed(seed, stream)`` mixes a stream id
into the master seed with the splitmix64 finalizer, and the result seeds a
PCG64 generator. Stream ids for chains are ``base + chain_index`` so chain
``c`` gets the same generator no matter which thread runs it.
"""
import numpy as np

MASK64 = (1 << 64) - 1

# Fixed stream ids; changing any of them changes every downstream artifact.
SUBSAMPLE_STREAM = 0x5B
BALANCE_STREAM = 0xBA
TRIM_STREAM = 0x7B
HOLDOUT_STREAM = 0x40
CHAIN_INIT_STREAM = 0x1_0000
CHAIN_TRANSITION_STREAM = 0x2_0000
PREDICT_STREAM = 0x3_0000


def mix64(value: int) -> int:
    """
    splitmix64 finalizer.

    Args:
        value (int): Any integer, reduced modulo 2**64.

    Returns:
        int: A well-mixed 64-bit integer.
    """
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def substream_seed(seed: int, stream: int) -> int:
    """
    Derives the seed of substream ``stream`` from a master seed.

    Args:
        seed (int): Master seed (negative values are taken modulo 2**64).
        stream (int): Substream identifier.

    Returns:
        int: 64-bit seed for the substream.
    """
    return mix64((seed & MASK64) ^ mix64(stream & MASK64))


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """
    Builds a PCG64 generator for a master seed, optionally on a substream.

    Args:
        seed (int): Master seed.
        stream (int | None): Substream identifier, or None for the master stream.

    Returns:
        np.random.Generator: A fresh, independently owned generator.
    """
    effective = seed & MASK64 if stream is None else substream_seed(seed, stream)
    return np.random.Generator(np.random.PCG64(effective))


def chain_rng(seed: int, chain_index: int, base: int = CHAIN_TRANSITION_STREAM) -> np.random.Generator:
    """Generator owned by one chain; identical for a given (seed, chain_index) regardless of threading."""
    return make_rng(seed, base + chain_index)
