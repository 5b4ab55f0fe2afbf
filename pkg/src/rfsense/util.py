"""Shared constants and small helpers used across the toolkit."""

from __future__ import annotations

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * np.log10(x)


def _splitmix64(x: int) -> int:
    """One round of the splitmix64 mixing function (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def derive_trial_seed(seed: int, trial: int) -> int:
    """Independent per-trial seed: base seed XORed with the hashed trial index.

    The splitting rule is deterministic and order-free, so Monte Carlo trials
    may run in any order (or in parallel) without changing any result.
    """
    return (int(seed) ^ _splitmix64(int(trial))) & 0xFFFFFFFFFFFFFFFF


def fmt_float(x: float) -> str:
    """Deterministic float formatting for text outputs (repr round-trips)."""
    return repr(float(x))


def largest_prime_at_most(n: int) -> int:
    """Largest prime <= n (trial division; fine for n up to ~1e6)."""
    if n < 2:
        raise ValueError("no prime <= %d" % n)
    for candidate in range(n, 1, -1):
        if candidate % 2 == 0 and candidate != 2:
            continue
        is_prime = True
        d = 3
        while d * d <= candidate:
            if candidate % d == 0:
                is_prime = False
                break
            d += 2
        if is_prime and (candidate == 2 or candidate % 2 == 1):
            return candidate
    raise ValueError("no prime <= %d" % n)
