"""Deterministic seed derivation for replicated Monte Carlo work.

Every random draw in the package comes from a generator built by
:func:`make_rng`. A master seed plus a tuple of stable labels (command name,
replication index, P_NG index, ...) is mapped to a
:class:`numpy.random.SeedSequence` whose ``spawn_key`` holds the labels.
String labels are hashed with CRC-32 so the key stays a tuple of integers.

Because each replication owns its own stream, results do not depend on the
execution order or on how replications are split across worker processes.
"""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


def _label_key(label: int | str) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean seed labels are ambiguous")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer seed labels must be non-negative")
        return int(label)
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    raise TypeError(f"unsupported seed label {label!r}")


def seed_sequence(seed: int | np.random.SeedSequence, *labels: int | str) -> np.random.SeedSequence:
    """Child seed sequence for ``labels`` under a master ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        key = tuple(seed.spawn_key) + tuple(_label_key(x) for x in labels)
        return np.random.SeedSequence(seed.entropy, spawn_key=key)
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError("master seed must be a non-negative integer")
    if seed < 0:
        raise ValueError("master seed must be non-negative")
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_label_key(x) for x in labels))


def make_rng(seed: SeedLike, *labels: int | str) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and optional stream labels.

    A ``Generator`` passed in is returned unchanged (labels must then be
    empty). ``None`` yields fresh OS entropy and is only meant for
    interactive use.
    """
    if isinstance(seed, np.random.Generator):
        if labels:
            raise ValueError("cannot derive labelled streams from a live Generator")
        return seed
    if seed is None:
        if labels:
            raise ValueError("labelled streams need an explicit master seed")
        return np.random.default_rng()
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *labels)))


def child_seed(seed: int | np.random.SeedSequence, *labels: int | str) -> np.random.SeedSequence:
    """Alias of :func:`seed_sequence`, used where a seed is passed on rather than consumed."""
    return seed_sequence(seed, *labels)
