"""Random-coding error exponents for partial-decode and crossing events.

Two kinds of exponent govern the slot error bounds:

* em: the event that a competing in-operation codeword tuple, agreeing with the
  transmitted one exactly on a user subset S, beats it at the decoder;
* ei: the event that the received word looks typical for an out-of-operation
  rate/channel pair agreeing on S.

Each is a max over (rho, s) of a rate-penalty term minus a log-moment term; the
moment is a law-weighted sum over input tuples and outputs, evaluated entirely
in the log domain. Class variants replace channel probabilities by the class
envelopes: true-tuple factors pair the upper envelope with a negative power of
the lower one, competing factors use the upper envelope alone. A singleton
class (pmax = pmin) makes every class formula collapse to its finite
counterpart, which the tests assert to 1e-12.

Optimization is a deterministic grid search with shrinking refinement: the
incumbent is only ever replaced by a strictly better value, so the returned
value is exactly the objective at the returned (rho_star, s_star).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .channels import (
    ChannelClassEnvelope,
    Dmc,
    InputLaws,
    RateTable,
    RateVectorIndex,
    effective_channel,
)
from .errors import ConstraintViolation, DimensionMismatch, ValidationError
from .logdomain import NEG_INF, logsumexp, safe_log, scaled_power

ChannelLike = Union[Dmc, ChannelClassEnvelope]


@dataclass(frozen=True)
class OptimizerConfig:
    rho_grid_size: int = 64
    s_grid_size: int = 64
    refinement_rounds: int = 3
    refinement_shrink: float = 0.2
    epsilon: float = 1e-6
    objective_tolerance: float = 1e-8
    include_gallager_point: bool = True

    def __post_init__(self):
        if self.rho_grid_size < 2 or self.s_grid_size < 2:
            raise ValidationError("grid sizes must be >= 2")
        if not 0 < self.refinement_shrink < 1:
            raise ValidationError("refinement_shrink must be in (0, 1)")
        if not 0 < self.epsilon < 0.5:
            raise ValidationError("epsilon must be in (0, 0.5)")
        if self.refinement_rounds < 0:
            raise ValidationError("refinement_rounds must be >= 0")


@dataclass(frozen=True)
class ExponentResult:
    value: float
    rho_star: float
    s_star: float
    evaluations: int
    variant: str  # finite | class | subset
    kind: str  # em | ei


@dataclass(frozen=True)
class ExponentQuery:
    """One (subset, true pair, competing pair) exponent instance.

    The competing rate vector must agree with the true one on S; both vectors
    index the same rate table. Channels may be Dmc or ChannelClassEnvelope,
    but one query never mixes the two.
    """

    subset: frozenset
    true_rates: RateVectorIndex
    true_channel: ChannelLike
    comp_rates: RateVectorIndex
    comp_channel: ChannelLike
    laws: InputLaws
    rate_table: RateTable

    def __post_init__(self):
        k = self.true_channel.num_users
        if self.comp_channel.num_users != k:
            raise DimensionMismatch("true and competing channels differ in user count")
        if self.true_channel.input_size != self.comp_channel.input_size or \
                self.true_channel.output_size != self.comp_channel.output_size:
            raise DimensionMismatch("true and competing channels differ in alphabet size")
        if self.rate_table.num_users != k:
            raise DimensionMismatch("rate table user count differs from channel")
        self.true_rates.check_against(self.rate_table)
        self.comp_rates.check_against(self.rate_table)
        for u in self.subset:
            if not 1 <= u <= k:
                raise ValidationError(f"subset user {u} outside 1..{k}")
        if len(self.subset) >= k:
            raise ValidationError("subset must be a proper subset of the users")
        if not self.comp_rates.agrees_on(self.true_rates, self.subset):
            raise ConstraintViolation(
                "competing rate vector must match the true one on the subset"
            )
        if isinstance(self.true_channel, Dmc) != isinstance(self.comp_channel, Dmc):
            raise ValidationError("cannot mix a channel with a class envelope in one query")

    @property
    def num_users(self) -> int:
        return self.true_channel.num_users


class _QueryTensors:
    """Per-query constants shared by every objective evaluation."""

    def __init__(self, q: ExponentQuery):
        k = q.num_users
        a = q.true_channel.input_size
        self.sbar_axes = tuple(u - 1 for u in range(1, k + 1) if u not in q.subset)
        self.s_users = sorted(q.subset)
        full = (a,) * k + (1,)

        def law_block(users, rates: RateVectorIndex):
            w = np.zeros(full)
            for u in users:
                vec = safe_log(q.laws.law(u, rates.index(u)))
                if vec.shape != (a,):
                    raise DimensionMismatch(
                        f"law for user {u} has length {vec.shape[0]}, expected {a}"
                    )
                shape = [1] * (k + 1)
                shape[u - 1] = a
                w = w + vec.reshape(shape)
            return w

        sbar_users = [u for u in range(1, k + 1) if u not in q.subset]
        self.w_true = law_block(sbar_users, q.true_rates)
        self.w_comp = law_block(sbar_users, q.comp_rates)
        # Subset-user laws on the reduced shape left over after the sbar axes
        # are summed out (subset axes in increasing user order, then output).
        reduced = (a,) * len(self.s_users) + (1,)
        ws = np.zeros(reduced)
        for pos, u in enumerate(self.s_users):
            vec = safe_log(q.laws.law(u, q.true_rates.index(u)))
            shape = [1] * len(reduced)
            shape[pos] = a
            ws = ws + vec.reshape(shape)
        self.w_subset = ws
        self.rate_sum_true = sum(
            q.rate_table.rate(u, q.true_rates.index(u)) for u in sbar_users
        )
        self.rate_sum_comp = sum(
            q.rate_table.rate(u, q.comp_rates.index(u)) for u in sbar_users
        )

    def reduce(self, tensor: np.ndarray) -> np.ndarray:
        if not self.sbar_axes:
            return tensor
        return logsumexp(tensor, axis=self.sbar_axes)

    def collect(self, log_true_factor: np.ndarray, outer_true: float,
                log_comp_factor: np.ndarray, outer_comp: float) -> float:
        """log of sum over (x_S, y) of subset laws times the two reduced factors."""
        t1 = self.reduce(self.w_true + log_true_factor)
        t2 = self.reduce(self.w_comp + log_comp_factor)
        with np.errstate(invalid="ignore"):
            inner = self.w_subset + outer_true * t1 + outer_comp * t2
        # 0 * -inf from a vanished factor with a zero outer power cannot occur:
        # outer powers are strictly positive for every admissible (rho, s).
        return float(logsumexp(inner, axis=None))


def _envelope_true_factor(log_pmax: np.ndarray, log_pmin: np.ndarray,
                          neg_power: float) -> np.ndarray:
    """log of pmax * pmin^(-neg_power); -inf wherever pmax vanishes."""
    mask = np.isneginf(log_pmax)
    with np.errstate(invalid="ignore"):
        out = log_pmax - neg_power * log_pmin
    out[mask] = NEG_INF
    return out


def _em_objective(q: ExponentQuery, t: _QueryTensors) -> Callable[[float, float], float]:
    if isinstance(q.true_channel, Dmc):
        log_p = safe_log(q.true_channel.probs)
        log_pc = safe_log(q.comp_channel.probs)

        def objective(rho: float, s: float) -> float:
            f_true = scaled_power(log_p, 1.0 - s)
            f_comp = scaled_power(log_pc, s / rho)
            log_phi = t.collect(f_true, 1.0, f_comp, rho)
            return -rho * t.rate_sum_comp - log_phi

    else:
        log_pmax = safe_log(q.true_channel.pmax)
        log_pmin = safe_log(q.true_channel.pmin)
        log_pmax_c = safe_log(q.comp_channel.pmax)

        def objective(rho: float, s: float) -> float:
            f_true = _envelope_true_factor(log_pmax, log_pmin, s)
            f_comp = scaled_power(log_pmax_c, s / rho)
            log_phi = t.collect(f_true, 1.0, f_comp, rho)
            return -rho * t.rate_sum_comp - log_phi

    return objective


def _ei_objective(q: ExponentQuery, t: _QueryTensors) -> Callable[[float, float], float]:
    if isinstance(q.true_channel, Dmc):
        log_p = safe_log(q.true_channel.probs)
        f_comp = safe_log(q.comp_channel.probs)

        def objective(rho: float, s: float) -> float:
            f_true = scaled_power(log_p, s / (s + rho))
            log_phi = t.collect(f_true, s + rho, f_comp, 1.0 - s)
            return -rho * t.rate_sum_true - log_phi

    else:
        log_pmax = safe_log(q.true_channel.pmax)
        log_pmin = safe_log(q.true_channel.pmin)
        f_comp = safe_log(q.comp_channel.pmax)

        def objective(rho: float, s: float) -> float:
            f_true = _envelope_true_factor(log_pmax, log_pmin, rho / (s + rho))
            log_phi = t.collect(f_true, s + rho, f_comp, 1.0 - s)
            return -rho * t.rate_sum_true - log_phi

    return objective


def _maximize_2d(objective, cfg: OptimizerConfig, *, rho_hi: float,
                 s_hi_of_rho, gallager_points: bool):
    """Deterministic grid max with shrinking refinement boxes.

    Probes in (rho ascending, s ascending) order; only a strictly larger value
    replaces the incumbent, so ties resolve to the first point probed.
    """
    eps = cfg.epsilon
    best_v, best_rho, best_s = NEG_INF, eps, eps
    evals = 0
    rho_lo0 = eps
    s_width0 = max(s_hi_of_rho(rho) for rho in (rho_lo0, rho_hi)) - eps

    for rnd in range(cfg.refinement_rounds + 1):
        if rnd == 0:
            rho_vals = np.linspace(rho_lo0, rho_hi, cfg.rho_grid_size)
            s_window = None
        else:
            shrink = cfg.refinement_shrink ** rnd
            rw = (rho_hi - rho_lo0) * shrink
            lo = min(max(best_rho - rw / 2, rho_lo0), rho_hi)
            hi = max(min(best_rho + rw / 2, rho_hi), rho_lo0)
            rho_vals = np.linspace(lo, hi, cfg.rho_grid_size)
            sw = s_width0 * shrink
            s_window = (best_s - sw / 2, best_s + sw / 2)
        prev_best = best_v
        for rho in rho_vals:
            rho = float(rho)
            s_hi = s_hi_of_rho(rho)
            if s_hi < eps:
                continue
            if s_window is None:
                s_lo, s_top = eps, s_hi
            else:
                s_lo = min(max(s_window[0], eps), s_hi)
                s_top = max(min(s_window[1], s_hi), s_lo)
            s_vals = list(np.linspace(s_lo, s_top, cfg.s_grid_size))
            if gallager_points and cfg.include_gallager_point:
                sg = rho / (1.0 + rho)
                if eps <= sg <= s_hi:
                    s_vals = sorted(set(s_vals) | {sg})
            for s in s_vals:
                s = float(s)
                v = objective(rho, s)
                evals += 1
                if v > best_v:
                    best_v, best_rho, best_s = v, rho, s
        if rnd > 0 and best_v - prev_best <= cfg.objective_tolerance * max(1.0, abs(prev_best)):
            break
    return best_v, best_rho, best_s, evals


def em_exponent(query: ExponentQuery, cfg: OptimizerConfig = OptimizerConfig()) -> ExponentResult:
    """Exponent of the in-operation confusion event, finite channel pair."""
    if not isinstance(query.true_channel, Dmc):
        raise ValidationError("em_exponent takes channel pairs; use em_class_exponent")
    t = _QueryTensors(query)
    v, rho, s, evals = _maximize_2d(
        _em_objective(query, t), cfg, rho_hi=1.0,
        s_hi_of_rho=lambda _: 1.0, gallager_points=True,
    )
    return ExponentResult(v, rho, s, evals, "finite", "em")


def ei_exponent(query: ExponentQuery, cfg: OptimizerConfig = OptimizerConfig()) -> ExponentResult:
    """Exponent of the out-of-operation typicality event, finite channel pair."""
    if not isinstance(query.true_channel, Dmc):
        raise ValidationError("ei_exponent takes channel pairs; use ei_class_exponent")
    t = _QueryTensors(query)
    v, rho, s, evals = _maximize_2d(
        _ei_objective(query, t), cfg, rho_hi=1.0 - cfg.epsilon,
        s_hi_of_rho=lambda rho: 1.0 - rho, gallager_points=False,
    )
    return ExponentResult(v, rho, s, evals, "finite", "ei")


def em_class_exponent(query: ExponentQuery, cfg: OptimizerConfig = OptimizerConfig()) -> ExponentResult:
    if not isinstance(query.true_channel, ChannelClassEnvelope):
        raise ValidationError("em_class_exponent takes class envelopes")
    t = _QueryTensors(query)
    v, rho, s, evals = _maximize_2d(
        _em_objective(query, t), cfg, rho_hi=1.0,
        s_hi_of_rho=lambda _: 1.0, gallager_points=True,
    )
    return ExponentResult(v, rho, s, evals, "class", "em")


def ei_class_exponent(query: ExponentQuery, cfg: OptimizerConfig = OptimizerConfig()) -> ExponentResult:
    if not isinstance(query.true_channel, ChannelClassEnvelope):
        raise ValidationError("ei_class_exponent takes class envelopes")
    t = _QueryTensors(query)
    v, rho, s, evals = _maximize_2d(
        _ei_objective(query, t), cfg, rho_hi=1.0 - cfg.epsilon,
        s_hi_of_rho=lambda rho: 1.0 - rho, gallager_points=False,
    )
    return ExponentResult(v, rho, s, evals, "class", "ei")


def subset_exponent(kind: str, users_d, subset_s, true_rates: RateVectorIndex,
                    comp_rates: RateVectorIndex, channel: Dmc, laws: InputLaws,
                    rate_table: RateTable, cfg: OptimizerConfig = OptimizerConfig(),
                    comp_channel: Optional[Dmc] = None) -> ExponentResult:
    """Exponent for a decoder that resolves only the users in D.

    Users outside D are absorbed into the channel: the true pair sees the
    channel averaged under its own complement rates, the competing pair under
    its own. S must be a proper subset of D; rate sums run over D minus S.
    With D = all users this reduces exactly to the full-system exponents.
    """
    if kind not in ("em", "ei"):
        raise ValidationError(f"kind must be 'em' or 'ei', got {kind!r}")
    d = sorted(set(int(u) for u in users_d))
    if not d:
        raise ValidationError("subset_exponent needs a nonempty decoded set")
    s_set = frozenset(int(u) for u in subset_s)
    if not s_set <= set(d) or len(s_set) >= len(d):
        raise ValidationError("S must be a proper subset of the decoded set D")
    true_rates.check_against(rate_table)
    comp_rates.check_against(rate_table)
    if not comp_rates.agrees_on(true_rates, s_set):
        raise ConstraintViolation(
            "competing rate vector must match the true one on the subset"
        )
    outside = [u for u in range(1, channel.num_users + 1) if u not in d]
    eff_true = effective_channel(
        channel, d, {u: true_rates.index(u) for u in outside}, laws)
    base_comp = comp_channel if comp_channel is not None else channel
    eff_comp = effective_channel(
        base_comp, d, {u: comp_rates.index(u) for u in outside}, laws)
    reduced_s = frozenset(d.index(u) + 1 for u in s_set)
    reduced = ExponentQuery(
        subset=reduced_s,
        true_rates=true_rates.restrict(d),
        true_channel=eff_true,
        comp_rates=comp_rates.restrict(d),
        comp_channel=eff_comp,
        laws=laws.restrict(d),
        rate_table=rate_table.restrict(d),
    )
    if kind == "em":
        res = em_exponent(reduced, cfg)
    else:
        res = ei_exponent(reduced, cfg)
    return ExponentResult(res.value, res.rho_star, res.s_star, res.evaluations,
                          "subset", kind)


def gallager_reference_exponent(channel: Dmc, law, rate: float,
                                cfg: OptimizerConfig = OptimizerConfig()) -> ExponentResult:
    """Classic single-user random-coding exponent max_rho [-rho R + E0(rho)].

    Written directly from the E0 definition as an independent cross-check of
    the confusion exponent, which must coincide with it at s = rho/(1+rho)
    when both codeword tuples share one rate, law and channel.
    """
    if channel.num_users != 1:
        raise ValidationError("the reference exponent is single-user")
    vec = np.asarray(law, dtype=float)
    if vec.shape != (channel.input_size,):
        raise DimensionMismatch("law length differs from the input alphabet")
    log_law = safe_log(vec)
    log_p = safe_log(channel.probs)  # (A, B)

    def e0(rho: float) -> float:
        inner = logsumexp(log_law[:, None] + scaled_power(log_p, 1.0 / (1.0 + rho)), axis=0)
        return -float(logsumexp((1.0 + rho) * inner, axis=None))

    def objective(rho: float) -> float:
        return -rho * rate + e0(rho)

    eps = cfg.epsilon
    best_v, best_rho = NEG_INF, eps
    evals = 0
    lo0, hi0 = eps, 1.0
    for rnd in range(cfg.refinement_rounds + 1):
        if rnd == 0:
            lo, hi = lo0, hi0
        else:
            w = (hi0 - lo0) * cfg.refinement_shrink ** rnd
            lo = min(max(best_rho - w / 2, lo0), hi0)
            hi = max(min(best_rho + w / 2, hi0), lo0)
        prev_best = best_v
        for rho in np.linspace(lo, hi, cfg.rho_grid_size):
            rho = float(rho)
            v = objective(rho)
            evals += 1
            if v > best_v:
                best_v, best_rho = v, rho
        if rnd > 0 and best_v - prev_best <= cfg.objective_tolerance * max(1.0, abs(prev_best)):
            break
    return ExponentResult(best_v, best_rho, best_rho / (1.0 + best_rho), evals,
                          "finite", "gallager")
