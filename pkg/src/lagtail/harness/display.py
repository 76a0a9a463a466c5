"""Display formatting of log-probabilities."""

from __future__ import annotations

import math

_LN10 = math.log(10.0)


def format_log_prob(log_p: float | None) -> str:
    """3 significant figures in ``d.dde+dd`` style, computed from the log.

    Works for values far below the double range (e.g. log_p = -2000).
    """
    if log_p is None or (isinstance(log_p, float) and math.isnan(log_p)):
        return ""
    if log_p == -math.inf:
        return "0.00e+00"
    if log_p == math.inf:
        return "inf"
    l10 = log_p / _LN10
    e = math.floor(l10)
    mant = round(10.0 ** (l10 - e), 2)
    if mant >= 10.0:
        mant /= 10.0
        e += 1
    return f"{mant:.2f}e{e:+03d}"
