"""Seeded, splittable random streams.

The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit state
advanced by the golden-ratio increment ``0x9E3779B97F4A7C15`` and passed
through the ``mix64`` finalizer. Uniform doubles take the top 53 bits.

A run's stream is derived from ``(seed, run_index)`` as
``mix64(seed XOR mix64(run_index + 1))``. Because ``mix64`` is a bijection,
distinct run indices under one seed start from distinct states, and any run
can be replayed alone without generating the runs before it.
"""

from __future__ import annotations

from . import kernels

MASK64 = 0xFFFFFFFFFFFFFFFF


class SplitMix64:
    """Mutable SplitMix64 stream. Not shared across threads; derive one per run."""

    __slots__ = ("state",)

    def __init__(self, state: int = 0) -> None:
        self.state = state & MASK64

    @classmethod
    def for_run(cls, seed: int, run_index: int = 0) -> "SplitMix64":
        return cls(kernels.derive_state(seed & MASK64, run_index & MASK64))

    def next_u64(self) -> int:
        self.state, out = kernels.next_u64(self.state)
        return int(out)

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return kernels.u64_to_uniform(self.next_u64())

    def split(self, index: int) -> "SplitMix64":
        """Independent child stream keyed by the current state and ``index``."""
        return SplitMix64(kernels.derive_state(self.state, index & MASK64))
