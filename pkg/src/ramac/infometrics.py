"""Conditional mutual information for feasibility checks.

conditional_mi computes I(X_Sc; Y | X_S) in nats for a channel driven by
independent per-user input laws, where S is the conditioning user set and Sc
its complement. Two independent evaluation paths are provided: a direct joint
expectation and a chain-rule decomposition via conditional entropies; the test
suite holds them to 1e-10 of each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import Dmc, InputLaws, RateVectorIndex
from .errors import ValidationError
from .logdomain import safe_log


@dataclass(frozen=True)
class MiQuery:
    channel: Dmc
    laws: InputLaws
    rate_vector: RateVectorIndex
    subset: frozenset

    def __post_init__(self):
        if len(self.rate_vector.indices) != self.channel.num_users:
            raise ValidationError("rate vector length differs from channel user count")
        for u in self.subset:
            if not 1 <= u <= self.channel.num_users:
                raise ValidationError(f"subset user {u} outside 1..{self.channel.num_users}")


def _joint(q: MiQuery) -> np.ndarray:
    """Joint law over (x_1 .. x_K, y) under independent inputs."""
    ch = q.channel
    joint = np.array(ch.probs)
    for u in range(1, ch.num_users + 1):
        vec = q.laws.law(u, q.rate_vector.index(u))
        shape = [1] * joint.ndim
        shape[u - 1] = ch.input_size
        joint = joint * vec.reshape(shape)
    return joint


def _plogp_sum(p: np.ndarray) -> float:
    """sum p log p with 0 log 0 = 0."""
    logp = safe_log(p)
    with np.errstate(invalid="ignore"):
        terms = np.where(p > 0, p * logp, 0.0)
    return float(terms.sum())


def conditional_mi(q: MiQuery) -> float:
    """I(X_Sc; Y | X_S) by direct joint evaluation.

    Sum over (x, y) of p(x, y) * [log p(y | x) - log p(y | x_S)], with the
    0 log 0 terms dropped. Nonnegative up to float rounding; clamped at 0.
    """
    ch = q.channel
    sc_axes = tuple(u - 1 for u in range(1, ch.num_users + 1) if u not in q.subset)
    if not sc_axes:  # conditioning on everything leaves nothing to learn
        return 0.0
    joint = _joint(q)
    # p(x_S, y): marginalize the complement users out of the joint.
    cond_marg = joint.sum(axis=sc_axes, keepdims=True)
    denom = cond_marg.sum(axis=-1, keepdims=True)  # p(x_S)
    with np.errstate(invalid="ignore"):
        log_cond = safe_log(cond_marg) - safe_log(denom)  # log p(y | x_S)
        log_full = safe_log(ch.probs)  # log p(y | x)
        terms = np.where(joint > 0, joint * (log_full - log_cond), 0.0)
    return max(0.0, float(terms.sum()))


def conditional_mi_chain(q: MiQuery) -> float:
    """Same quantity via the chain rule H(Y | X_S) - H(Y | X).

    Kept as an independent code path for cross-validation.
    """
    ch = q.channel
    sc_axes = tuple(u - 1 for u in range(1, ch.num_users + 1) if u not in q.subset)
    if not sc_axes:
        return 0.0
    joint = _joint(q)
    joint_s = joint.sum(axis=sc_axes)
    # H(Y | X_S) = H(X_S, Y) - H(X_S)
    h_sy = -_plogp_sum(joint_s)
    h_s = -_plogp_sum(joint_s.sum(axis=-1))
    # H(Y | X) = H(X, Y) - H(X)
    h_xy = -_plogp_sum(joint)
    h_x = -_plogp_sum(joint.sum(axis=-1))
    return max(0.0, (h_sy - h_s) - (h_xy - h_x))
