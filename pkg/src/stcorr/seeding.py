"""Deterministic seed derivation.

Every random draw in the package (parameter init, corpus samples, epoch
shuffles) comes from a child seed derived from one master seed, so that a
(config, seed) pair fully determines corpora, training trajectories, and
reports. Child seeds are produced by splitmix64, the finalizer used by
java.util.SplittableRandom; string keys are folded in via FNV-1a.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(seed: int, stream: int = 0) -> int:
    """Finalize (seed + stream * golden-gamma) into a well-mixed 64-bit value."""
    z = (seed + (stream + 1) * 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(master: int, *keys) -> int:
    """Child seed for a named stream, e.g. derive_seed(42, "init", "stage1.w")."""
    z = master & _MASK
    for key in keys:
        stream = fnv1a64(key) if isinstance(key, str) else int(key)
        z = splitmix64(z, stream)
    return z
