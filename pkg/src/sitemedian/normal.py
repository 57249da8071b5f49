"""Standard normal distribution helpers.

``math.erfc`` is accurate to a few ulp over the whole real line, so the
upper tail is computed directly rather than as ``1 - cdf``.
"""

import math

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)
