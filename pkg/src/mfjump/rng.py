"""Counter-based random streams keyed by (seed, replication, particle, role).

Every stream is an independent Philox generator whose key is derived from the
full lineage tuple, so the draws a particle sees never depend on how many
other particles exist or in which order workers run.
"""

from __future__ import annotations

import numpy as np

ROLES = {
    "init": 0,
    "brownian": 1,
    "small": 2,
    "large-times": 3,
    "large-marks": 4,
    "aux": 5,
}


def stream(seed: int, replication: int = 0, particle: int = 0, role: str = "aux") -> np.random.Generator:
    if role not in ROLES:
        raise ValueError(f"unknown RNG role {role!r}")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication), int(particle), ROLES[role]))
    return np.random.Generator(np.random.Philox(ss))
