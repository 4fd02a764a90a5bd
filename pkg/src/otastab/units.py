"""Engineering-notation value parsing and formatting.

Grammar: optional sign, decimal number, optional suffix from
{f, p, n, u, µ, m, k, M, G}. Case matters only for m/M (milli vs mega);
the other suffixes are accepted in their canonical case only.
"""

from __future__ import annotations

import math

from .errors import ParseError

_SUFFIX = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "µ": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "M": 1e6,
    "G": 1e9,
}

_FORMAT_STEPS = [
    (1e9, "G"), (1e6, "M"), (1e3, "k"), (1.0, ""),
    (1e-3, "m"), (1e-6, "u"), (1e-9, "n"), (1e-12, "p"), (1e-15, "f"),
]


def parse_value(text, context=None):
    """Parse ``text`` as a float, honoring engineering suffixes.

    Accepts plain numbers (including exponent notation) and strings like
    "10.5p" or "-3.3u". Raises ParseError on anything else.
    """
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        s = str(text).strip()
        if not s:
            raise ParseError("empty value", context)
        try:
            value = float(s)
        except ValueError:
            mult = _SUFFIX.get(s[-1])
            if mult is None:
                raise ParseError(f"unknown suffix in {s!r}; expected one of "
                                 f"{''.join(sorted(set(_SUFFIX) - {'µ'}))}", context) from None
            try:
                value = float(s[:-1]) * mult
            except ValueError:
                raise ParseError(f"cannot parse number {s!r}", context) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", context)
    return value


def format_si(value, unit="", digits=4):
    """Render a float with an engineering suffix, e.g. 1.05e-11 -> '10.5 pF'."""
    if value == 0:
        return f"0 {unit}".strip()
    sign = "-" if value < 0 else ""
    mag = abs(value)
    for step, suffix in _FORMAT_STEPS:
        if mag >= step:
            return f"{sign}{mag / step:.{digits}g} {suffix}{unit}".strip()
    return f"{sign}{mag:.{digits}g} {unit}".strip()
