"""Deterministic float formatting shared by the scenario serializer and JSON reports.

Values with a short exact decimal form (``0.5``, ``1``, ``1e-9``) print that
way. Anything that needs full precision prints with 17 significant digits,
choosing the smallest-magnitude such decimal that still parses back to the
same double. Every output round-trips through ``float``.
"""

from __future__ import annotations

import math

SIG_DIGITS = 17
_SHORT = 15


def _plain(digits: str, exp10: int) -> str:
    # digits: significant digits; value = 0.d1d2... * 10**exp10
    if -5 < exp10 <= 21:
        if exp10 <= 0:
            return "0." + "0" * (-exp10) + digits
        if exp10 >= len(digits):
            return digits + "0" * (exp10 - len(digits))
        return digits[:exp10] + "." + digits[exp10:]
    mant = digits[0] + ("." + digits[1:] if len(digits) > 1 else "")
    return f"{mant}e{exp10 - 1}"


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot format {x!r}")
    if x == 0.0:
        return "0"
    sign = "-" if x < 0 else ""
    a = abs(x)
    short = repr(a)
    mant, _, exp = short.partition("e")
    digits = mant.replace(".", "").lstrip("0").rstrip("0") or "0"
    if len(digits) <= _SHORT:
        # re-derive the decimal exponent from the repr
        m = mant.split(".")
        intpart, frac = m[0], (m[1] if len(m) > 1 else "")
        e = int(exp) if exp else 0
        if intpart.strip("0"):
            exp10 = len(intpart.lstrip("0")) + e
        else:
            exp10 = -(len(frac) - len(frac.lstrip("0"))) + e
        return sign + _plain(digits, exp10)
    m_str, e_str = f"{a:.{SIG_DIGITS - 1}e}".split("e")
    m = int(m_str.replace(".", ""))
    e = int(e_str) - (SIG_DIGITS - 1)
    floor = 10 ** (SIG_DIGITS - 1)
    while m - 1 >= floor and float(f"{m - 1}e{e}") == a:
        m -= 1
    digits = str(m)
    return sign + _plain(digits, e + len(digits))
