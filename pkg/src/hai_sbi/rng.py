"""Counter-based random streams for reproducible, order-independent simulation.

Every random event in a simulation draws from a Philox stream keyed by
(seed, time step, event kind); patient i consumes element i of the stream.
The draw a patient sees therefore does not depend on loop order, on which
patients were skipped, or on how replicate simulations are scheduled across
workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Event kinds, one sub-stream per kind and step.
INIT = 0
DISCHARGE = 1
ADMIT_STATUS = 2
INFECT = 3
OBSERVE = 4


def step_uniforms(seed: int, t: int, kind: int, n: int) -> np.ndarray:
    """Return n uniforms on [0, 1) from the stream keyed by (seed, t, kind).

    Element i belongs to patient/location i. Repeated calls with the same
    key return identical values.
    """
    key = np.array([seed & _MASK64, ((t << 3) | kind) & _MASK64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(n)


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive a child 64-bit seed from a master seed and an index path.

    Children with distinct paths are statistically independent; the mapping
    is stable across runs and platforms.
    """
    ss = np.random.SeedSequence(entropy=master_seed & _MASK64, spawn_key=tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])
