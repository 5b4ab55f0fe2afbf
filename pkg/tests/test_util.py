import math

import numpy as np
import pytest

from rfsense.util import (
    SPEED_OF_LIGHT,
    db_to_linear,
    derive_trial_seed,
    fmt_float,
    largest_prime_at_most,
    linear_to_db,
)


def test_speed_of_light_is_si_value():
    assert SPEED_OF_LIGHT == 299_792_458.0


def test_db_round_trip():
    for x in (1e-6, 0.5, 1.0, 2.0, 1e6):
        assert linear_to_db(db_to_linear(linear_to_db(x))) == pytest.approx(
            linear_to_db(x), rel=1e-12
        )
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(-10.0) == pytest.approx(0.1)
    assert linear_to_db(100.0) == pytest.approx(20.0)


def test_db_to_linear_vectorizes():
    out = db_to_linear(np.array([0.0, 10.0, 20.0]))
    assert np.allclose(out, [1.0, 10.0, 100.0])


def test_derive_trial_seed_is_deterministic_and_spreads():
    a = derive_trial_seed(1234, 0)
    b = derive_trial_seed(1234, 0)
    c = derive_trial_seed(1234, 1)
    d = derive_trial_seed(1235, 0)
    assert a == b
    assert a != c
    assert a != d
    # The mix is seed XOR a splitmix64 hash of the trial index, so xoring two
    # derivations of the same trial recovers the seed difference exactly.
    assert derive_trial_seed(0, 7) ^ derive_trial_seed(99, 7) == 99


def test_derive_trial_seed_fits_in_uint64():
    big = derive_trial_seed(2**64 - 1, 2**63)
    assert 0 <= big < 2**64


def test_fmt_float_round_trips_through_repr():
    for x in (0.1, 1.0 / 3.0, 2.5e-9, 91.84, -0.0):
        assert float(fmt_float(x)) == float(x)
    assert fmt_float(1.0) == "1.0"


def test_largest_prime_at_most():
    assert largest_prime_at_most(2) == 2
    assert largest_prime_at_most(3) == 3
    assert largest_prime_at_most(4) == 3
    assert largest_prime_at_most(20000) == 19997
    assert largest_prime_at_most(839) == 839
    with pytest.raises(ValueError):
        largest_prime_at_most(1)


def test_largest_prime_at_most_matches_sympy_free_reference():
    def is_prime(n):
        if n < 2:
            return False
        for p in range(2, int(math.isqrt(n)) + 1):
            if n % p == 0:
                return False
        return True

    for n in (5, 100, 541, 600, 1223):
        got = largest_prime_at_most(n)
        assert is_prime(got)
        assert all(not is_prime(m) for m in range(got + 1, n + 1))
