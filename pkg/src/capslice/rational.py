"""Exact rational arithmetic helpers shared by all modules.

Every quantity in this package (relevance, cohesion, coupling, objective
values) is kept as a fractions.Fraction so results are reproducible bit for
bit.  Conversion to text happens only at the reporting edge.
"""

from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction


def to_fraction(value) -> Fraction:
    """Coerce a numeric input to an exact Fraction.

    Floats are read through their shortest decimal representation, so a
    literal 0.3 coming from a file means exactly 3/10.
    """
    if isinstance(value, bool):
        raise TypeError("boolean is not a numeric value")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, Decimal):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def fixed(value: Fraction, places: int = 4) -> str:
    """Render a Fraction with a fixed number of decimals, banker's rounding."""
    with localcontext() as ctx:
        ctx.prec = 50
        quantum = Decimal(1).scaleb(-places)
        d = Decimal(value.numerator) / Decimal(value.denominator)
        return str(d.quantize(quantum, rounding=ROUND_HALF_EVEN))
