"""Deterministic seed derivation for independent random streams.

Every stochastic subsystem (traffic routing, pedestrian speeds, case
sampling, sensor noise) draws from its own ``random.Random`` seeded by a
splitmix64 expansion of the world seed and a stream label.  Identical
(seed, label) pairs always yield identical streams, on every platform.
"""

from __future__ import annotations

import random

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, label: str) -> int:
    """Expand a 64-bit seed into a per-stream seed keyed by ``label``."""
    state = (seed ^ _fnv1a64(label)) & _MASK64
    state, out = splitmix64(state)
    _, out2 = splitmix64(state)
    return (out ^ (out2 << 1)) & _MASK64


def stream(seed: int, label: str) -> random.Random:
    """Independent deterministic RNG for one named subsystem."""
    return random.Random(derive_seed(seed, label))
