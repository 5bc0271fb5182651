"""Deterministic derivation of labeled random streams.

Every random draw in the package flows from one master seed through
labeled substreams: ``derive_rng(seed, "rep", 3, "candidates", 7)``
always yields the same generator, and any change to one label yields an
independent stream.  String labels are hashed with CRC-32, which is
stable across platforms and Python versions.
"""

import zlib

import numpy as np


def _as_word(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(*parts) -> np.random.SeedSequence:
    """SeedSequence keyed by a tuple of ints and string labels."""
    if not parts:
        raise ValueError("at least one seed part is required")
    return np.random.SeedSequence([_as_word(p) for p in parts])


def derive_rng(*parts) -> np.random.Generator:
    """Generator for the substream identified by ``parts``."""
    return np.random.default_rng(seed_sequence(*parts))


def derive_seed(*parts) -> int:
    """Collapse the substream identified by ``parts`` to one integer."""
    return int(seed_sequence(*parts).generate_state(1)[0])
