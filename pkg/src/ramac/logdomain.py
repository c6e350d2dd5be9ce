"""Log-domain arithmetic helpers.

All probability accumulation in this package happens in the log domain; these
wrappers centralize the conventions:

* ``log(0) = -inf`` without warnings,
* ``0^a = 0`` for a >= 0, including a = 0 where a masked entry must stay
  impossible (the factors we exponentiate arise as p * p^(-s) limits, so the
  p = 0 entry contributes nothing for every admissible exponent),
* sums of exponentials via scipy's logsumexp, which returns -inf on empty or
  all-masked input.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp as _lse

NEG_INF = float("-inf")


def safe_log(p: np.ndarray) -> np.ndarray:
    """Elementwise log with log(0) = -inf and no RuntimeWarning."""
    p = np.asarray(p, dtype=float)
    out = np.full(p.shape, NEG_INF)
    np.log(p, out=out, where=p > 0)
    return out


def scaled_power(logp: np.ndarray, exponent: float) -> np.ndarray:
    """log(p^exponent) from log(p), with the 0^a = 0 convention.

    Entries with logp = -inf stay -inf for every exponent (including 0 and
    negative values, where IEEE arithmetic would produce nan or +inf).
    """
    logp = np.asarray(logp, dtype=float)
    mask = np.isneginf(logp)
    with np.errstate(invalid="ignore"):
        out = exponent * logp
    out[mask] = NEG_INF
    return out


def logsumexp(a, axis=None):
    """logsumexp that tolerates empty and all--inf inputs (returns -inf)."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        if axis is None:
            return NEG_INF
        shape = list(a.shape)
        if isinstance(axis, tuple):
            for ax in sorted((x % a.ndim for x in axis), reverse=True):
                del shape[ax]
        else:
            del shape[axis % a.ndim]
        return np.full(shape, NEG_INF)
    with np.errstate(invalid="ignore"):
        return _lse(a, axis=axis)


def logsumexp_list(values) -> float:
    """logsumexp of a python iterable of floats; empty -> -inf."""
    vals = [v for v in values]
    if not vals:
        return NEG_INF
    return float(logsumexp(np.asarray(vals, dtype=float)))
