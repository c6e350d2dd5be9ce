"""Slot-level Monte Carlo and exact evaluation of the threshold decoder.

The decoder under test works per conditioning subset S: a codeword tuple is
admitted when its log likelihood clears a per-(rate vector, channel, S)
threshold, the subset estimate is the admitted tuple of maximum likelihood
(class mode: the tuple whose lower-envelope likelihood strictly beats every
rival's upper-envelope likelihood), and the slot decodes only when every
subset produces the same estimate; anything else is reported as a collision.

Likelihoods are joint (input, output) cell counts dotted with a log-propensity
table in a fixed flat order, so tuples with identical transition counts have
bit-identical scores and analytic ties really compare equal; ties then
propagate to a collision rather than an arbitrary winner.

All randomness is counter-based: every (role, case, batch) triple names a
Philox stream derived from the master seed, and codebooks regenerate
bit-identically from per-(user, rate, message) keys.
"""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .channels import (
    ChannelClassEnvelope,
    CompoundSet,
    Dmc,
    InputLaws,
    RateTable,
    RateVectorIndex,
)
from .errors import (
    DegenerateLikelihood,
    EnumerationTooLarge,
    TooManyCodewords,
    ValidationError,
)
from .exponents import ExponentQuery, OptimizerConfig, ei_class_exponent, ei_exponent
from .logdomain import NEG_INF, logsumexp, safe_log, scaled_power
from .regions import OperationRegion, pair_universe, proper_subsets

CODEWORD_GUARD = 10 ** 6
OUTPUT_ENUM_GUARD = 2 ** 20
Z99 = statistics.NormalDist().inv_cdf(0.995)

# Stream roles for counter-based randomness.
_ROLE_CODEBOOK = 0
_ROLE_MESSAGE = 1
_ROLE_NOISE = 2
_ROLE_ENSEMBLE = 3


def message_count(n: int, rate: float) -> int:
    """max(1, floor(exp(n * rate))), guarded against float round-off so that
    analytically integral counts (rate = log(m) / n) survive exactly."""
    return max(1, math.floor(math.exp(n * rate) + 1e-9))


def _cum(law: np.ndarray) -> np.ndarray:
    return np.cumsum(law)


def _symbols_from_uniform(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cum, u, side="right")
    return np.minimum(idx, len(cum) - 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class CodebookSet:
    """Frozen codebooks, one (messages, n) symbol array per (user, rate index).

    Every codeword is addressable: codeword m of (user, rate) is drawn from
    the Philox stream keyed SeedSequence(seed, spawn_key=(user, rate, m)), so
    any single entry regenerates bit-identically without the rest.
    """

    seed: int
    n: int
    entries: Mapping

    def codeword(self, user: int, rate_idx: int, message: int) -> np.ndarray:
        return self.entries[(user, rate_idx)][message]

    def counts(self) -> Mapping:
        return {key: arr.shape[0] for key, arr in self.entries.items()}


def generate_codebooks(table: RateTable, laws: InputLaws, input_size: int,
                       n: int, seed: int) -> CodebookSet:
    if n < 1:
        raise ValidationError("block length must be >= 1")
    total = 0
    for u in range(1, table.num_users + 1):
        for i in range(1, table.num_classes + 1):
            total += message_count(n, table.rate(u, i))
    if total > CODEWORD_GUARD:
        raise TooManyCodewords(
            f"{total} codewords exceed the guard {CODEWORD_GUARD}"
        )
    entries = {}
    for u in range(1, table.num_users + 1):
        for i in range(1, table.num_classes + 1):
            cum = _cum(laws.law(u, i))
            if cum.shape != (input_size,):
                raise ValidationError("law length differs from the input alphabet")
            m = message_count(n, table.rate(u, i))
            rows = np.empty((m, n), dtype=np.int64)
            for msg in range(m):
                ss = np.random.SeedSequence(entropy=seed, spawn_key=(u, i, msg))
                gen = np.random.Generator(np.random.Philox(ss))
                rows[msg] = _symbols_from_uniform(cum, gen.random(n))
            rows.flags.writeable = False
            entries[(u, i)] = rows
    return CodebookSet(seed=seed, n=n, entries=entries)


@dataclass(frozen=True)
class ThresholdParams:
    """Tilt parameters of the typicality thresholds.

    source "manual" takes rho_tilde and s2 as given; "from_ei" reads rho_tilde
    off the crossing-exponent argmax against the selected competing pair and
    sets s2 = rho_tilde / 2. s1 is always 1 - s2 / rho_tilde.
    """

    rho_tilde: Optional[float] = None
    s2: Optional[float] = None
    source: str = "from_ei"

    def __post_init__(self):
        if self.source not in ("manual", "from_ei"):
            raise ValidationError(f"source must be 'manual' or 'from_ei', got {self.source!r}")
        if self.source == "manual":
            if self.rho_tilde is None or self.s2 is None:
                raise ValidationError("manual thresholds need rho_tilde and s2")
        if self.rho_tilde is not None and not 0 < self.rho_tilde <= 1:
            raise ValidationError("rho_tilde must lie in (0, 1]")
        if self.s2 is not None:
            if self.rho_tilde is None or not 0 < self.s2 < self.rho_tilde:
                raise ValidationError("s2 must lie in (0, rho_tilde)")


def _law_weight_tensor(k: int, a: int, laws: InputLaws, rates_of) -> np.ndarray:
    """Additive log-law tensor over the full input product, shape (a,)*k + (1,)."""
    w = np.zeros((a,) * k + (1,))
    for u in range(1, k + 1):
        vec = safe_log(laws.law(u, rates_of(u)))
        shape = [1] * (k + 1)
        shape[u - 1] = a
        w = w + vec.reshape(shape)
    return w


def _log_true_tensor(channel, power: float, kind: str) -> np.ndarray:
    """Per-(x, y) log factor of the tested pair inside a threshold expectation.

    kind "self" uses the plain propensity (class: lower envelope) at `power`;
    kind "mixed" uses p^(1 - s1), which for a class is pmax * pmin^(-s1).
    """
    if isinstance(channel, Dmc):
        return scaled_power(safe_log(channel.probs), power)
    if kind == "self":
        return scaled_power(safe_log(channel.pmin), power)
    s1 = 1.0 - power
    log_pmax = safe_log(channel.pmax)
    log_pmin = safe_log(channel.pmin)
    mask = np.isneginf(log_pmax)
    with np.errstate(invalid="ignore"):
        out = log_pmax - s1 * log_pmin
    out[mask] = NEG_INF
    return out


def _log_comp_tensor(channel) -> np.ndarray:
    if isinstance(channel, Dmc):
        return safe_log(channel.probs)
    return safe_log(channel.pmax)


@dataclass(frozen=True)
class ThresholdTables:
    """Per-output-symbol log factors of one (pair, subset) threshold.

    tau(y) = (counts(y) . coeff) / n + const, where counts(y) are the output
    symbol counts. A coeff entry may be +inf (the competing pair cannot
    produce the symbol: the test never rejects such outputs) or -inf (the
    tested pair cannot produce it: always rejected, matching the vanishing
    likelihood of every admissible codeword).
    """

    log_a: np.ndarray  # competing-pair expectation per symbol
    log_b: np.ndarray  # tested-pair self expectation per symbol
    log_c: np.ndarray  # tested-pair mixed expectation per symbol
    rho_tilde: float
    s1: float
    s2: float
    rate_sum: float
    spread: float
    comp_pair: Optional[tuple]

    @property
    def coeff(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            raw = -(self.log_a + self.rho_tilde * self.log_b - self.log_c)
        raw = np.where(np.isneginf(self.log_a), math.inf, raw)
        bad = np.isneginf(self.log_b) | np.isneginf(self.log_c)
        raw = np.where(bad, NEG_INF, raw)
        return raw / (self.s1 + self.s2)

    @property
    def const(self) -> float:
        return -self.rho_tilde * self.rate_sum / (self.s1 + self.s2)

    def tau(self, y_counts: np.ndarray, n: int) -> float:
        coeff = self.coeff
        active = y_counts > 0
        if np.any(active & np.isneginf(coeff)):
            return NEG_INF
        if np.any(active & np.isposinf(coeff)):
            return math.inf
        return float(y_counts @ np.where(np.isfinite(coeff), coeff, 0.0)) / n + self.const


def _spread(tensor_with_laws: np.ndarray, subset_axes) -> float:
    """Range of the per-symbol log factor across subset input values."""
    if not subset_axes:
        return 0.0
    other = tuple(ax for ax in range(tensor_with_laws.ndim - 1)
                  if ax not in subset_axes)
    cond = logsumexp(tensor_with_laws, axis=other) if other else tensor_with_laws
    flat = np.asarray(cond).reshape(-1, np.asarray(cond).shape[-1])
    spreads = []
    for col in range(flat.shape[1]):
        vals = flat[:, col][np.isfinite(flat[:, col])]
        if vals.size > 1:
            spreads.append(float(vals.max() - vals.min()))
    return max(spreads) if spreads else 0.0


def build_threshold_tables(true_rates: RateVectorIndex, true_channel,
                           subset: frozenset, laws: InputLaws, table: RateTable,
                           rho_tilde: float, s2: float,
                           comp_rates: Optional[RateVectorIndex] = None,
                           comp_channel=None,
                           comp_key: Optional[tuple] = None) -> ThresholdTables:
    """Per-symbol expectation tables of the threshold balance equation.

    The subset users' symbols are averaged under their input laws, so the
    threshold depends on the output word alone; `spread` reports the residual
    max-minus-min of the conditional log factors across subset input values
    as a diagnostic of that averaging.
    """
    k = true_channel.num_users
    a = true_channel.input_size
    if comp_rates is None:
        comp_rates = true_rates
    if comp_channel is None:
        comp_channel = true_channel
    if not 0 < rho_tilde <= 1 or not 0 < s2 < rho_tilde:
        raise ValidationError("threshold tilts need 0 < s2 < rho_tilde <= 1")
    s1 = 1.0 - s2 / rho_tilde
    w_true = _law_weight_tensor(k, a, laws, lambda u: true_rates.index(u))
    w_comp = _law_weight_tensor(
        k, a, laws,
        lambda u: true_rates.index(u) if u in subset else comp_rates.index(u))
    all_axes = tuple(range(k))
    t_a = w_comp + _log_comp_tensor(comp_channel)
    t_b = w_true + _log_true_tensor(true_channel, s2 / rho_tilde, "self")
    t_c = w_true + _log_true_tensor(true_channel, 1.0 - s1, "mixed")
    log_a = np.atleast_1d(logsumexp(t_a, axis=all_axes))
    log_b = np.atleast_1d(logsumexp(t_b, axis=all_axes))
    log_c = np.atleast_1d(logsumexp(t_c, axis=all_axes))
    subset_axes = tuple(u - 1 for u in sorted(subset))
    spread = max(_spread(t_a, subset_axes), _spread(t_b, subset_axes),
                 _spread(t_c, subset_axes))
    rate_sum = sum(table.rate(u, true_rates.index(u))
                   for u in range(1, k + 1) if u not in subset)
    return ThresholdTables(log_a, log_b, log_c, rho_tilde, s1, s2, rate_sum,
                           spread, comp_key)


@dataclass(frozen=True)
class ThresholdResult:
    tau: float
    tables: ThresholdTables


def typicality_threshold(y: Sequence[int], rate_vector: RateVectorIndex,
                         channel, subset: frozenset, laws: InputLaws,
                         table: RateTable, params: ThresholdParams,
                         competing: Optional[tuple] = None,
                         cfg: OptimizerConfig = OptimizerConfig()) -> ThresholdResult:
    """Closed-form typicality threshold for one received word.

    `competing` is an optional (rate vector, channel) pair; without it the
    pair is balanced against itself. Underflowed per-symbol expectations at an
    observed symbol raise DegenerateLikelihood rather than being clamped.
    """
    y = np.asarray(y, dtype=np.int64)
    comp_rates = competing[0] if competing else None
    comp_channel = competing[1] if competing else None
    if params.source == "manual":
        rho_tilde, s2 = params.rho_tilde, params.s2
    else:
        q = ExponentQuery(subset, rate_vector, channel,
                          comp_rates if comp_rates is not None else rate_vector,
                          comp_channel if comp_channel is not None else channel,
                          laws, table)
        res = ei_exponent(q, cfg) if isinstance(channel, Dmc) else ei_class_exponent(q, cfg)
        rho_tilde = res.rho_star
        s2 = params.s2 if params.s2 is not None else rho_tilde / 2.0
    tables = build_threshold_tables(rate_vector, channel, subset, laws, table,
                                    rho_tilde, s2, comp_rates, comp_channel)
    for name, tab in (("competing", tables.log_a), ("self", tables.log_b),
                      ("mixed", tables.log_c)):
        if np.any(np.isneginf(tab[y])):
            raise DegenerateLikelihood(
                f"{name} expectation underflows at an observed symbol"
            )
    counts = np.bincount(y, minlength=tables.log_a.shape[0]).astype(float)
    return ThresholdResult(tables.tau(counts, len(y)), tables)


def tau_by_bisection(y: Sequence[int], tables: ThresholdTables, n: int,
                     tol: float = 1e-12, max_iter: int = 400) -> float:
    """Root of the threshold balance equation by bracketing bisection.

    Kept as an independent path: the balance gap is evaluated from the same
    per-symbol tables but never rearranged into the closed form.
    """
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=tables.log_a.shape[0]).astype(float)
    sum_a = float(counts @ tables.log_a)
    sum_b = float(counts @ tables.log_b)
    sum_c = float(counts @ tables.log_c)

    def gap(tau: float) -> float:
        lhs = sum_c - n * tables.s1 * tau
        rhs = (sum_a + tables.rho_tilde * sum_b + n * tables.s2 * tau
               + n * tables.rho_tilde * tables.rate_sum)
        return lhs - rhs

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if gap(lo) > 0:
            break
        lo *= 2.0
    for _ in range(200):
        if gap(hi) < 0:
            break
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


class _ScoreContext:
    """Cell scores grouped by distinct log-propensity value.

    Summing integer cell counts per distinct table value before the dot
    product makes analytically equal likelihoods compare bit-equal even when
    channel symmetries give different cells the same value; vanishing-
    probability cells short to -inf instead of polluting the dot with 0*inf.
    """

    def __init__(self, flat_log: np.ndarray):
        vals, inverse = np.unique(flat_log, return_inverse=True)
        self.inverse = inverse.astype(np.int64)
        self.values = vals
        self.dead = np.isneginf(vals)
        self.live = ~self.dead
        self.live_values = vals[self.live]
        # one-hot cells -> value groups, for batched matmul grouping
        self.onehot = np.zeros((flat_log.size, vals.size))
        self.onehot[np.arange(flat_log.size), self.inverse] = 1.0

    def score(self, counts: np.ndarray) -> float:
        grouped = np.bincount(self.inverse, weights=counts,
                              minlength=self.values.size)
        if self.dead.any() and (grouped[self.dead] > 0).any():
            return NEG_INF
        return float(grouped[self.live] @ self.live_values)

    def score_rows(self, flat_counts: np.ndarray) -> np.ndarray:
        grouped = flat_counts @ self.onehot
        out = grouped[:, self.live] @ self.live_values
        if self.dead.any():
            out = np.where((grouped[:, self.dead] > 0).any(axis=1), NEG_INF, out)
        return out


def _score_context(flat_log: np.ndarray) -> _ScoreContext:
    return _ScoreContext(flat_log)


@dataclass(frozen=True)
class Decision:
    outcome: str  # decoded | collision
    messages: Optional[tuple]
    rates: Optional[RateVectorIndex]
    channel_id: Optional[str]
    subset_diagnostics: tuple


class SlotDecoder:
    """Precomputed decoding context for one region: log-propensity tables,
    candidate enumeration, and per-(pair, subset) thresholds.

    In class mode each candidate carries two scores: the lower-envelope
    likelihood when tested and the upper-envelope likelihood when rivaling;
    finite mode uses one score for both roles. Rounding is monotone, so the
    tested score never exceeds the rival score and at most one message/rate
    tuple can strictly dominate.
    """

    def __init__(self, region: OperationRegion, laws: InputLaws,
                 table: RateTable, n: int,
                 compound: Optional[CompoundSet] = None,
                 envelopes: Optional[Sequence[ChannelClassEnvelope]] = None,
                 params: ThresholdParams = ThresholdParams(),
                 cfg: OptimizerConfig = OptimizerConfig()):
        if region.mode == "finite":
            if compound is None:
                raise ValidationError("finite mode needs a compound set")
            self.ids = tuple(compound.ids)
            self.channels = {cid: compound.by_id(cid) for cid in self.ids}
            ref = compound.channels[0]
        else:
            if not envelopes:
                raise ValidationError("class mode needs envelopes")
            self.ids = tuple(env.class_id for env in envelopes)
            self.channels = {env.class_id: env for env in envelopes}
            ref = envelopes[0]
        self.mode = region.mode
        self.region = region
        self.laws = laws
        self.table = table
        self.n = int(n)
        self.params = params
        self.num_users = ref.num_users
        self.input_size = ref.input_size
        self.output_size = ref.output_size
        self.cells = self.input_size ** self.num_users * self.output_size
        for rvi, cid in region.members:
            rvi.check_against(table)
            if cid not in self.channels:
                raise ValidationError(f"region references unknown id {cid!r}")
        self.subsets = tuple(proper_subsets(self.num_users))
        universe = pair_universe(table, self.ids)
        self.out_pairs = region.complement(universe)
        self.log_tested = {}
        self.log_rival = {}
        self.tested_ctx = {}
        self.rival_ctx = {}
        for cid, ch in self.channels.items():
            if isinstance(ch, Dmc):
                flat = safe_log(ch.probs).reshape(-1)
                self.log_tested[cid] = flat
                self.log_rival[cid] = flat
                self.tested_ctx[cid] = _score_context(flat)
                self.rival_ctx[cid] = self.tested_ctx[cid]
            else:
                self.log_tested[cid] = safe_log(ch.pmin).reshape(-1)
                self.log_rival[cid] = safe_log(ch.pmax).reshape(-1)
                self.tested_ctx[cid] = _score_context(self.log_tested[cid])
                self.rival_ctx[cid] = _score_context(self.log_rival[cid])
        self.message_counts = {}
        for u in range(1, self.num_users + 1):
            for i in range(1, table.num_classes + 1):
                self.message_counts[(u, i)] = message_count(self.n, table.rate(u, i))
        self.thresholds = self._build_thresholds(cfg)

    def _build_thresholds(self, cfg) -> dict:
        """For each (in pair, subset): pick the matching out pair minimizing
        the crossing exponent and build its balance tables; no matching out
        pair means the test never rejects (tau = +inf, stored as None)."""
        out = {}
        for t in self.region.members:
            for subset in self.subsets:
                key = ((t[0].indices, t[1]), subset)
                best = None
                for o in self.out_pairs:
                    if not o[0].agrees_on(t[0], subset):
                        continue
                    q = ExponentQuery(subset, t[0], self.channels[t[1]], o[0],
                                      self.channels[o[1]], self.laws, self.table)
                    res = (ei_exponent(q, cfg) if self.mode == "finite"
                           else ei_class_exponent(q, cfg))
                    if best is None or res.value < best[0]:
                        best = (res.value, o, res)
                if best is None:
                    out[key] = None
                    continue
                _, o_star, res = best
                if self.params.source == "manual":
                    rho_tilde, s2 = self.params.rho_tilde, self.params.s2
                else:
                    rho_tilde = res.rho_star
                    s2 = self.params.s2 if self.params.s2 is not None else rho_tilde / 2.0
                out[key] = build_threshold_tables(
                    t[0], self.channels[t[1]], subset, self.laws, self.table,
                    rho_tilde, s2, o_star[0], self.channels[o_star[1]],
                    (o_star[0].indices, o_star[1]))
        return out

    def tau(self, pair_key, subset, y_counts) -> float:
        tables = self.thresholds[(pair_key, subset)]
        if tables is None:
            return math.inf
        return tables.tau(y_counts, self.n)

    def _cell_counts(self, rows, y) -> np.ndarray:
        code = np.zeros(len(y), dtype=np.int64)
        for row in rows:
            code = code * self.input_size + row
        code = code * self.output_size + y
        return np.bincount(code, minlength=self.cells).astype(float)

    def decode(self, y, codebooks) -> Decision:
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (self.n,):
            raise ValidationError(f"received word must have length {self.n}")
        y_counts = np.bincount(y, minlength=self.output_size).astype(float)
        scored = []
        for rvi, cid in self.region.members:
            ranges = [range(self.message_counts[(u, rvi.index(u))])
                      for u in range(1, self.num_users + 1)]
            for msgs in itertools.product(*ranges):
                rows = [codebooks.codeword(u, rvi.index(u), msgs[u - 1])
                        for u in range(1, self.num_users + 1)]
                counts = self._cell_counts(rows, y)
                tested = self.tested_ctx[cid].score(counts)
                rival = tested if self.mode == "finite" \
                    else self.rival_ctx[cid].score(counts)
                scored.append((msgs, rvi, cid, tested, rival))
        taus = {}
        for rvi, cid in self.region.members:
            for subset in self.subsets:
                taus[((rvi.indices, cid), subset)] = self.tau(
                    (rvi.indices, cid), subset, y_counts)
        estimates = {}
        diagnostics = []
        for subset in self.subsets:
            est, n_typical = self._subset_estimate(scored, taus, subset)
            estimates[subset] = est
            diagnostics.append((subset, n_typical,
                                None if est is None else (est[0], est[1].indices, est[2])))
        values = list(estimates.values())
        if values and all(v is not None for v in values) and len(
                {(v[0], v[1].indices, v[2]) for v in values}) == 1:
            msgs, rvi, cid = values[0]
            return Decision("decoded", msgs, rvi, cid, tuple(diagnostics))
        return Decision("collision", None, None, None, tuple(diagnostics))

    def _subset_estimate(self, scored, taus, subset):
        """Estimate for one conditioning subset: the admitted tuple whose
        tested score strictly beats every other tuple's rival score."""
        tested_idx = []
        rival_by_group = {}
        n_typical = 0
        for i, (msgs, rvi, cid, tested, rival) in enumerate(scored):
            thr = -self.n * taus[((rvi.indices, cid), subset)]
            group = (msgs, rvi.indices)
            if rival > thr:
                n_typical += 1
                if group not in rival_by_group or rival > rival_by_group[group]:
                    rival_by_group[group] = rival
            if tested > thr:
                tested_idx.append(i)
        best = None
        for i in tested_idx:
            msgs, rvi, cid, tested, _ = scored[i]
            group = (msgs, rvi.indices)
            rival_max = max((v for g, v in rival_by_group.items() if g != group),
                            default=NEG_INF)
            if tested > rival_max:
                cand = (msgs, rvi, cid, tested)
                if best is None:
                    best = cand
                elif (cand[0], cand[1].indices) == (best[0], best[1].indices):
                    # Same tuple under another channel hypothesis: keep the
                    # higher score, then the earlier id in channel order.
                    if cand[3] > best[3] or (
                            cand[3] == best[3]
                            and self.ids.index(cand[2]) < self.ids.index(best[2])):
                        best = cand
                else:
                    # Two distinct tuples cannot both strictly dominate.
                    return None, n_typical
        if best is None:
            return None, n_typical
        return (best[0], best[1], best[2]), n_typical


def build_thresholds(region: OperationRegion, laws: InputLaws, table: RateTable,
                     n: int, compound: Optional[CompoundSet] = None,
                     envelopes: Optional[Sequence[ChannelClassEnvelope]] = None,
                     params: ThresholdParams = ThresholdParams(),
                     cfg: OptimizerConfig = OptimizerConfig()) -> SlotDecoder:
    """Precompute the full decoding context (thresholds included) for a region."""
    return SlotDecoder(region, laws, table, n, compound, envelopes, params, cfg)


def decode_slot(y, codebooks, region: OperationRegion, thresholds: SlotDecoder,
                mode: str = "finite") -> Decision:
    if thresholds.region != region:
        raise ValidationError("thresholds were built for a different region")
    if mode != thresholds.mode:
        raise ValidationError(f"thresholds are {thresholds.mode}-mode, not {mode}")
    return thresholds.decode(y, codebooks)


@dataclass(frozen=True)
class CaseReport:
    rate_indices: tuple
    channel_id: str
    in_region: bool
    trials: int
    errors: int
    rate: float
    std: float
    half_width99: float


@dataclass(frozen=True)
class SimReport:
    n: int
    trials: int
    seed: int
    batch_size: int
    mode: str
    frozen_codebooks: bool
    decode_error_rate: float
    collision_miss_rate: float
    system_error_rate: float
    system_case: Optional[tuple]
    system_std: float
    system_half_width99: float
    bound: Optional[float]
    bound_holds: Optional[bool]
    cases: tuple


def build_schedule(region: OperationRegion, table: RateTable, ids: Sequence[str],
                   class_map: Optional[Mapping[str, Sequence[str]]] = None) -> tuple:
    """Default realization schedule: every (rate vector, channel) case in
    universe order, labeled in/out of region. With a class map, realizations
    are member channels while membership is judged at class level."""
    owner = {}
    if class_map is not None:
        for class_id, members in class_map.items():
            for cid in members:
                owner[str(cid)] = str(class_id)
    cases = []
    for rvi, cid in pair_universe(table, tuple(ids)):
        region_id = owner.get(cid, cid)
        cases.append((rvi, cid, (rvi, region_id) in region))
    return tuple(cases)


class _BatchDraws:
    """One batch of counter-based randomness for a case.

    Streams are derived as SeedSequence(seed, spawn_key=(role, case, batch));
    within a stream, draws happen in a fixed documented order (codebooks by
    sorted (user, rate) then message-major; messages user by user; noise last),
    so any batch regenerates independently of the others.
    """

    def __init__(self, seed: int, case_idx: int, batch_idx: int, size: int,
                 decoder: SlotDecoder, true_rvi: RateVectorIndex,
                 frozen: Optional[CodebookSet]):
        self.size = size
        self.decoder = decoder
        n = decoder.n
        self.codebooks = {}
        if frozen is None:
            gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(
                entropy=seed, spawn_key=(_ROLE_CODEBOOK, case_idx, batch_idx))))
            for key in sorted(decoder.message_counts):
                u, i = key
                m = decoder.message_counts[key]
                cum = _cum(decoder.laws.law(u, i))
                self.codebooks[key] = _symbols_from_uniform(
                    cum, gen.random((size, m, n)))
        else:
            for key, m in decoder.message_counts.items():
                arr = frozen.entries.get(key)
                if arr is None or arr.shape[0] < m:
                    raise ValidationError(f"frozen codebooks lack entries for {key}")
                self.codebooks[key] = np.broadcast_to(arr[:m], (size, m, n))
        gen_m = np.random.Generator(np.random.Philox(np.random.SeedSequence(
            entropy=seed, spawn_key=(_ROLE_MESSAGE, case_idx, batch_idx))))
        self.messages = np.empty((size, decoder.num_users), dtype=np.int64)
        for u in range(1, decoder.num_users + 1):
            m = decoder.message_counts[(u, true_rvi.index(u))]
            self.messages[:, u - 1] = gen_m.integers(0, m, size=size)
        self.noise_u = np.random.Generator(np.random.Philox(np.random.SeedSequence(
            entropy=seed, spawn_key=(_ROLE_NOISE, case_idx, batch_idx)))).random((size, n))

    def outputs(self, true_channel: Dmc, true_rvi: RateVectorIndex) -> np.ndarray:
        dec = self.decoder
        xs = tuple(
            self.codebooks[(u, true_rvi.index(u))][np.arange(self.size),
                                                   self.messages[:, u - 1]]
            for u in range(1, dec.num_users + 1))
        cum = np.cumsum(true_channel.probs, axis=-1)
        rows = cum[xs]  # (size, n, B)
        y = (self.noise_u[..., None] > rows[..., :-1]).sum(axis=-1)
        return y.astype(np.int64)


class _TrialCodebookView:
    def __init__(self, draws: _BatchDraws, t: int):
        self._draws = draws
        self._t = t

    def codeword(self, user: int, rate_idx: int, message: int) -> np.ndarray:
        return self._draws.codebooks[(user, rate_idx)][self._t, message]


def _simulate_case_general(decoder: SlotDecoder, case_idx: int,
                           true_rvi: RateVectorIndex, true_channel: Dmc,
                           in_region: bool, trials: int, seed: int,
                           batch_size: int, frozen: Optional[CodebookSet]) -> int:
    errors = 0
    done = 0
    batch_idx = 0
    while done < trials:
        size = min(batch_size, trials - done)
        draws = _BatchDraws(seed, case_idx, batch_idx, size, decoder, true_rvi, frozen)
        ys = draws.outputs(true_channel, true_rvi)
        for t in range(size):
            decision = decoder.decode(ys[t], _TrialCodebookView(draws, t))
            correct = (decision.outcome == "decoded"
                       and decision.rates.indices == true_rvi.indices
                       and decision.messages == tuple(draws.messages[t]))
            if in_region:
                errors += 0 if correct else 1
            elif decision.outcome == "decoded" and not correct:
                errors += 1
        done += size
        batch_idx += 1
    return errors


def _simulate_case_k1(decoder: SlotDecoder, case_idx: int,
                      true_rvi: RateVectorIndex, true_channel: Dmc,
                      in_region: bool, trials: int, seed: int,
                      batch_size: int, frozen: Optional[CodebookSet]) -> int:
    """Vectorized single-user finite-mode path; decision-equivalent to the
    general path and cross-checked against it in the tests."""
    a = decoder.input_size
    b = decoder.output_size
    n = decoder.n
    empty = frozenset()
    rates_in_region = sorted({rvi.index(1) for rvi, _ in decoder.region.members})
    group_offset = {}
    off = 0
    for r in rates_in_region:
        group_offset[r] = off
        off += decoder.message_counts[(1, r)]
    pair_list = list(decoder.region.members)
    true_gid_base = group_offset.get(true_rvi.index(1))

    errors = 0
    done = 0
    batch_idx = 0
    while done < trials:
        size = min(batch_size, trials - done)
        draws = _BatchDraws(seed, case_idx, batch_idx, size, decoder, true_rvi, frozen)
        ys = draws.outputs(true_channel, true_rvi)
        y_counts = np.zeros((size, b))
        for sym in range(b):
            y_counts[:, sym] = (ys == sym).sum(axis=1)
        like = {}
        for r in rates_in_region:
            x = draws.codebooks[(1, r)]  # (size, m, n)
            m = x.shape[1]
            counts = np.zeros((size, m, a * b))
            for xa in range(a):
                xmask = x == xa
                for yb in range(b):
                    counts[:, :, xa * b + yb] = (
                        xmask & (ys == yb)[:, None, :]).sum(axis=2)
            flat = counts.reshape(size * m, a * b)
            for cid in decoder.ids:
                like[(r, cid)] = decoder.tested_ctx[cid].score_rows(
                    flat).reshape(size, m)
        cand_l, cand_gid, cand_thr = [], [], []
        for rvi, cid in pair_list:
            r = rvi.index(1)
            m = decoder.message_counts[(1, r)]
            tables = decoder.thresholds[((rvi.indices, cid), empty)]
            if tables is None:
                thr = np.full(size, NEG_INF)
            else:
                coeff = tables.coeff
                finite = np.isfinite(coeff)
                tau = (y_counts @ np.where(finite, coeff, 0.0)) / n + tables.const
                neg = np.isneginf(coeff)
                pos = np.isposinf(coeff)
                if pos.any():
                    tau = np.where((y_counts[:, pos] > 0).any(axis=1), math.inf, tau)
                if neg.any():
                    tau = np.where((y_counts[:, neg] > 0).any(axis=1), NEG_INF, tau)
                thr = -n * tau
            l = like[(r, cid)]
            for msg in range(m):
                cand_l.append(l[:, msg])
                cand_gid.append(group_offset[r] + msg)
                cand_thr.append(thr)
        cl = np.stack(cand_l, axis=1)  # (size, C)
        cthr = np.stack(cand_thr, axis=1)
        gid = np.asarray(cand_gid)
        typical = cl > cthr
        masked = np.where(typical, cl, NEG_INF)
        vmax = masked.max(axis=1)
        has = vmax > NEG_INF
        winner = typical & (cl == vmax[:, None])
        big = 1 << 30
        gmin = np.where(winner, gid[None, :], big).min(axis=1)
        gmax = np.where(winner, gid[None, :], -1).max(axis=1)
        decoded = has & (gmin == gmax)
        w_true = draws.messages[:, 0]
        if true_gid_base is None:
            correct = np.zeros(size, dtype=bool)
        else:
            correct = decoded & (gmin == true_gid_base + w_true)
        if in_region:
            errors += int(np.count_nonzero(~correct))
        else:
            errors += int(np.count_nonzero(decoded & ~correct))
        done += size
        batch_idx += 1
    return errors


def estimate_errors(region: OperationRegion, laws: InputLaws, table: RateTable,
                    n: int, trials: int, seed: int,
                    compound: Optional[CompoundSet] = None,
                    envelopes: Optional[Sequence[ChannelClassEnvelope]] = None,
                    class_map: Optional[Mapping[str, Sequence[str]]] = None,
                    schedule: Optional[Sequence] = None,
                    params: ThresholdParams = ThresholdParams(),
                    cfg: OptimizerConfig = OptimizerConfig(),
                    bound: Optional[float] = None,
                    freeze_codebooks: bool = False,
                    codebooks: Optional[CodebookSet] = None,
                    batch_size: int = 4096,
                    force_general: bool = False) -> SimReport:
    """Per-case Monte Carlo error estimation over an explicit realization
    schedule (never a sampled prior); the system error is the worst case.

    In-region cases count every outcome other than a correct (message, rate)
    decode as an error; out-of-region cases count only wrong decodes, since
    reporting the collision is the intended behavior there. By default every
    trial draws a fresh codebook; freeze_codebooks pins one (provided or
    regenerated from the master seed) across all trials.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if compound is None:
        raise ValidationError("estimate_errors needs the realizable channels")
    total = sum(message_count(n, table.rate(u, i))
                for u in range(1, table.num_users + 1)
                for i in range(1, table.num_classes + 1))
    if total > CODEWORD_GUARD:
        raise TooManyCodewords(
            f"{total} codewords per trial exceed the guard {CODEWORD_GUARD}"
        )
    decoder = SlotDecoder(region, laws, table, n, compound=compound,
                          envelopes=envelopes, params=params, cfg=cfg) \
        if region.mode == "finite" else \
        SlotDecoder(region, laws, table, n, envelopes=envelopes, params=params,
                    cfg=cfg)
    if schedule is None:
        schedule = build_schedule(region, table, compound.ids, class_map)
    frozen = None
    if freeze_codebooks:
        frozen = codebooks if codebooks is not None else generate_codebooks(
            table, laws, decoder.input_size, n, seed)
    cases = []
    for case_idx, (rvi, cid, in_region) in enumerate(schedule):
        rvi.check_against(table)
        channel = compound.by_id(cid)
        fast = (decoder.num_users == 1 and decoder.mode == "finite"
                and not force_general)
        runner = _simulate_case_k1 if fast else _simulate_case_general
        errs = runner(decoder, case_idx, rvi, channel, in_region, trials,
                      seed, batch_size, frozen)
        rate = errs / trials
        std = math.sqrt(rate * (1.0 - rate) / trials)
        cases.append(CaseReport(rvi.indices, cid, in_region, trials, errs,
                                rate, std, Z99 * std))
    in_rates = [c.rate for c in cases if c.in_region]
    out_rates = [c.rate for c in cases if not c.in_region]
    decode_error = max(in_rates, default=0.0)
    miss = max(out_rates, default=0.0)
    system = 0.0
    system_case = None
    system_std = 0.0
    for c in cases:
        if system_case is None or c.rate > system:
            system = c.rate
            system_case = (c.rate_indices, c.channel_id)
            system_std = c.std
    bound_holds = None
    if bound is not None:
        bound_holds = system <= bound + 3.0 * system_std
    return SimReport(
        n=n, trials=trials, seed=seed, batch_size=batch_size,
        mode=region.mode, frozen_codebooks=freeze_codebooks,
        decode_error_rate=decode_error, collision_miss_rate=miss,
        system_error_rate=system, system_case=system_case,
        system_std=system_std, system_half_width99=Z99 * system_std,
        bound=bound, bound_holds=bound_holds, cases=tuple(cases),
    )


@dataclass(frozen=True)
class ExactCase:
    rate_indices: tuple
    channel_id: str
    in_region: bool
    probability: float


@dataclass(frozen=True)
class ExactReport:
    n: int
    samples: int
    cases: tuple  # ensemble-averaged ExactCase entries
    per_sample: tuple  # per-codebook tuples of ExactCase


def exact_conditional_errors(region: OperationRegion, laws: InputLaws,
                             table: RateTable, n: int,
                             compound: Optional[CompoundSet] = None,
                             envelopes: Optional[Sequence[ChannelClassEnvelope]] = None,
                             class_map: Optional[Mapping[str, Sequence[str]]] = None,
                             schedule: Optional[Sequence] = None,
                             params: ThresholdParams = ThresholdParams(),
                             cfg: OptimizerConfig = OptimizerConfig(),
                             codebooks: Optional[CodebookSet] = None,
                             seed: int = 0,
                             codebook_samples: int = 1) -> ExactReport:
    """Exact conditional error probabilities by output-space enumeration.

    Conditions on a fixed codebook (given, or drawn from derived seeds for a
    small ensemble average) and a uniform message tuple; sums the channel law
    over every output word. Guarded to output_size ** n <= 2 ** 20.
    """
    if compound is None:
        raise ValidationError("exact evaluation needs the realizable channels")
    decoder = SlotDecoder(region, laws, table, n, compound=compound,
                          envelopes=envelopes, params=params, cfg=cfg) \
        if region.mode == "finite" else \
        SlotDecoder(region, laws, table, n, envelopes=envelopes, params=params,
                    cfg=cfg)
    if decoder.output_size ** n > OUTPUT_ENUM_GUARD:
        raise EnumerationTooLarge(
            f"{decoder.output_size}^{n} output words exceed {OUTPUT_ENUM_GUARD}"
        )
    if schedule is None:
        schedule = build_schedule(region, table, compound.ids, class_map)
    if codebooks is not None:
        books = [codebooks]
    else:
        books = []
        for i in range(codebook_samples):
            child = np.random.SeedSequence(entropy=seed,
                                           spawn_key=(_ROLE_ENSEMBLE, i))
            books.append(generate_codebooks(table, laws, decoder.input_size, n,
                                            int(child.generate_state(1)[0])))
    all_y = np.array(list(itertools.product(range(decoder.output_size),
                                            repeat=n)), dtype=np.int64)
    per_sample = []
    for cb in books:
        outcomes = []
        for row in all_y:
            d = decoder.decode(row, cb)
            outcomes.append(None if d.outcome != "decoded"
                            else (d.messages, d.rates.indices))
        sample_cases = []
        for rvi, cid, in_region in schedule:
            channel = compound.by_id(cid)
            log_p = safe_log(channel.probs)
            ranges = [range(decoder.message_counts[(u, rvi.index(u))])
                      for u in range(1, decoder.num_users + 1)]
            total = 0.0
            count = 0
            for msgs in itertools.product(*ranges):
                count += 1
                rows = [cb.codeword(u, rvi.index(u), msgs[u - 1])
                        for u in range(1, decoder.num_users + 1)]
                lp = np.zeros(all_y.shape[0])
                for j in range(n):
                    col = log_p[tuple(r[j] for r in rows)]
                    lp += col[all_y[:, j]]
                p_y = np.exp(lp)
                key = (tuple(msgs), rvi.indices)
                for idx, out in enumerate(outcomes):
                    if in_region:
                        if out != key:
                            total += p_y[idx]
                    elif out is not None and out != key:
                        total += p_y[idx]
            sample_cases.append(ExactCase(rvi.indices, cid, in_region,
                                          total / count))
        per_sample.append(tuple(sample_cases))
    averaged = []
    for i, (rvi, cid, in_region) in enumerate(schedule):
        mean = sum(s[i].probability for s in per_sample) / len(per_sample)
        averaged.append(ExactCase(rvi.indices, cid, in_region, mean))
    return ExactReport(n=n, samples=len(books), cases=tuple(averaged),
                       per_sample=tuple(per_sample))
