import math
import struct

import numpy as np
from hypothesis import given, strategies as st

from wignerlab.numfmt import format_float


def test_short_values_print_short():
    assert format_float(0.5) == "0.5"
    assert format_float(1.0) == "1"
    assert format_float(-2.0) == "-2"
    assert format_float(0.0) == "0"
    assert format_float(1e-9) == "1e-9"
    assert format_float(2.5e-7) == "2.5e-7"
    assert format_float(0.001) == "0.001"
    assert format_float(1e22) == "1e22"


def test_full_precision_values():
    assert format_float(math.sqrt(0.5)) == "0.70710678118654752"
    assert format_float(-math.sqrt(0.5)) == "-0.70710678118654752"
    # smallest-magnitude 17-digit decimal, not the shortest repr
    assert format_float(0.1 + 0.2) == "0.30000000000000002"
    assert float("0.30000000000000002") == 0.1 + 0.2
    s = format_float(math.pi)
    assert float(s) == math.pi and len(s.replace(".", "").lstrip("0")) <= 17


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_round_trip(x):
    assert float(format_float(x)) == x or (x == 0 and float(format_float(x)) == 0)


def test_round_trip_random_bits():
    rng = np.random.default_rng(0)
    for bits in rng.integers(0, 2**63, size=20_000, dtype=np.uint64):
        x = struct.unpack("<d", struct.pack("<Q", int(bits)))[0]
        if math.isfinite(x):
            assert float(format_float(x)) == x


def test_rejects_non_finite():
    for bad in (math.inf, -math.inf, math.nan):
        try:
            format_float(bad)
        except ValueError:
            continue
        raise AssertionError(bad)
