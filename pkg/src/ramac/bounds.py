"""Slot error bounds assembled from exponent terms.

Every bound here has the two-branch shape: a decode branch (worst in-region
realization: confusion sums plus the worst matching atypicality term) and a
collision branch (worst out-of-region realization: for each matching in-region
pair, the worst atypicality term again). The bound is the larger branch;
raw values are exp of log-domain totals and are additionally clamped at 1.

Exponent calls are memoized per assembly, keyed by (kind, subset, true pair,
competing pair), so repeated matching patterns cost one optimization each.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .channels import (
    ChannelClassEnvelope,
    CompoundSet,
    Dmc,
    InputLaws,
    RateTable,
    RateVectorIndex,
    effective_channel,
)
from .errors import C1Violation, InfeasibleRegion, ValidationError
from .exponents import (
    ExponentQuery,
    ExponentResult,
    OptimizerConfig,
    ei_class_exponent,
    ei_exponent,
    em_class_exponent,
    em_exponent,
)
from .logdomain import NEG_INF, logsumexp_list
from .regions import (
    OperationRegion,
    Partition,
    enumerate_partitions,
    feasibility_check,
    pair_universe,
    subsets_containing,
    proper_subsets,
)


@dataclass(frozen=True)
class BoundTerm:
    branch: str  # decode | collision
    true_pair: tuple  # (rate indices, id)
    subset: frozenset
    kind: str  # em | ei
    comp_pair: Optional[tuple]
    exponent: float
    log_weight: float  # -N * exponent
    aggregation: str  # sum | max
    attained: bool


@dataclass(frozen=True)
class BoundReport:
    n: int
    mode: str  # finite | class | subset
    raw_bound: float
    clamped_bound: float
    log_bound: float
    branch: str  # branch attaining the bound (decode on ties)
    decode_log: float
    collision_log: float
    pair_totals: tuple  # (branch, pair, log total) per realization
    terms: tuple
    exponent_evaluations: int


@dataclass(frozen=True)
class SystemExponentResult:
    value: float
    kind: Optional[str]
    subset: Optional[frozenset]
    true_pair: Optional[tuple]
    comp_pair: Optional[tuple]
    evaluations: int


def _pair_key(pair) -> tuple:
    rvi, cid = pair
    return (rvi.indices, str(cid))


def _matches(a, b, subset) -> bool:
    return a[0].agrees_on(b[0], subset)


class _ExponentMemo:
    def __init__(self, em_fn, ei_fn):
        self._em_fn = em_fn
        self._ei_fn = ei_fn
        self._cache = {}
        self.evaluations = 0

    def get(self, kind: str, subset, t, c) -> ExponentResult:
        key = (kind, subset, _pair_key(t), _pair_key(c))
        if key not in self._cache:
            res = self._em_fn(subset, t, c) if kind == "em" else self._ei_fn(subset, t, c)
            self._cache[key] = res
            self.evaluations += res.evaluations
        return self._cache[key]


def _finite_memo(compound: CompoundSet, laws: InputLaws, table: RateTable,
                 cfg: OptimizerConfig) -> _ExponentMemo:
    def em(subset, t, c):
        q = ExponentQuery(subset, t[0], compound.by_id(t[1]), c[0],
                          compound.by_id(c[1]), laws, table)
        return em_exponent(q, cfg)

    def ei(subset, t, c):
        q = ExponentQuery(subset, t[0], compound.by_id(t[1]), c[0],
                          compound.by_id(c[1]), laws, table)
        return ei_exponent(q, cfg)

    return _ExponentMemo(em, ei)


def _class_memo(envelopes: Mapping[str, ChannelClassEnvelope], laws: InputLaws,
                table: RateTable, cfg: OptimizerConfig) -> _ExponentMemo:
    def em(subset, t, c):
        q = ExponentQuery(subset, t[0], envelopes[t[1]], c[0],
                          envelopes[c[1]], laws, table)
        return em_class_exponent(q, cfg)

    def ei(subset, t, c):
        q = ExponentQuery(subset, t[0], envelopes[t[1]], c[0],
                          envelopes[c[1]], laws, table)
        return ei_class_exponent(q, cfg)

    return _ExponentMemo(em, ei)


def _best_ei(memo: _ExponentMemo, subset, t, out_pairs, n: int):
    """Largest-weight atypicality term for (t, subset); None when no match."""
    best = None
    entries = []
    for o in out_pairs:
        if not _matches(o, t, subset):
            continue
        res = memo.get("ei", subset, t, o)
        lw = -n * res.value
        entries.append((o, res, lw))
        if best is None or lw > best[2]:
            best = (o, res, lw)
    return best, entries


def _assemble(in_pairs, out_pairs, subsets, memo: _ExponentMemo, n: int,
              mode: str) -> BoundReport:
    terms = []
    pair_totals = []
    decode_entries = []
    best_ei_cache = {}

    def best_ei(subset, t):
        key = (subset, _pair_key(t))
        if key not in best_ei_cache:
            best_ei_cache[key] = _best_ei(memo, subset, t, out_pairs, n)
        return best_ei_cache[key]

    for t in in_pairs:
        logs_t = []
        for subset in subsets:
            for c in in_pairs:
                if not _matches(c, t, subset):
                    continue
                res = memo.get("em", subset, t, c)
                lw = -n * res.value
                terms.append(BoundTerm("decode", _pair_key(t), subset, "em",
                                       _pair_key(c), res.value, lw, "sum", True))
                logs_t.append(lw)
            best, entries = best_ei(subset, t)
            for o, res, lw in entries:
                terms.append(BoundTerm("decode", _pair_key(t), subset, "ei",
                                       _pair_key(o), res.value, lw, "max",
                                       best is not None and o is best[0]))
            if best is not None:
                logs_t.append(best[2])
        total = logsumexp_list(logs_t)
        pair_totals.append(("decode", _pair_key(t), total))
        decode_entries.append((total, _pair_key(t)))

    collision_entries = []
    for o_true in out_pairs:
        logs_o = []
        for subset in subsets:
            for t in in_pairs:
                if not _matches(t, o_true, subset):
                    continue
                best, _ = best_ei(subset, t)
                # t matches o_true on the subset, so t has at least one
                # matching out pair (o_true itself).
                o_star, res, lw = best
                terms.append(BoundTerm("collision", _pair_key(o_true), subset,
                                       "ei", _pair_key(o_star), res.value, lw,
                                       "max", True))
                logs_o.append(lw)
        if logs_o:
            total = logsumexp_list(logs_o)
            pair_totals.append(("collision", _pair_key(o_true), total))
            collision_entries.append((total, _pair_key(o_true)))

    decode_log = max((e[0] for e in decode_entries), default=NEG_INF)
    collision_log = max((e[0] for e in collision_entries), default=NEG_INF)
    log_bound = max(decode_log, collision_log)
    branch = "decode" if decode_log >= collision_log else "collision"
    raw = math.exp(log_bound) if log_bound > NEG_INF else 0.0
    return BoundReport(
        n=n, mode=mode, raw_bound=raw, clamped_bound=min(raw, 1.0),
        log_bound=log_bound, branch=branch, decode_log=decode_log,
        collision_log=collision_log, pair_totals=tuple(pair_totals),
        terms=tuple(terms), exponent_evaluations=memo.evaluations,
    )


def _require_feasible(region: OperationRegion, compound: CompoundSet,
                      laws: InputLaws, table: RateTable):
    report = feasibility_check(region, compound, laws, table)
    if not report.passed:
        first = report.violations[0]
        raise InfeasibleRegion(
            f"{len(report.violations)} feasibility violations; first: rate vector "
            f"{first[0].indices}, channel {first[1]!r}, subset {sorted(first[2])}, "
            f"sum rate {first[3]:.6g} > mi {first[4]:.6g}"
        )


def _check_n(n: int):
    if not (isinstance(n, int) and n >= 1):
        raise ValidationError(f"block length must be an integer >= 1, got {n!r}")


def pes_bound_finite(region: OperationRegion, compound: CompoundSet,
                     laws: InputLaws, table: RateTable, n: int,
                     cfg: OptimizerConfig = OptimizerConfig()) -> BoundReport:
    """Slot error bound for a channel-level operation region at block length n."""
    _check_n(n)
    if region.mode != "finite":
        raise ValidationError("pes_bound_finite expects a channel-level region")
    _require_feasible(region, compound, laws, table)
    universe = pair_universe(table, compound.ids)
    out_pairs = region.complement(universe)
    subsets = tuple(proper_subsets(compound.num_users))
    memo = _finite_memo(compound, laws, table, cfg)
    return _assemble(region.members, out_pairs, subsets, memo, n, "finite")


def pes_bound_classes(region: OperationRegion,
                      envelopes: Sequence[ChannelClassEnvelope],
                      laws: InputLaws, table: RateTable, n: int,
                      cfg: OptimizerConfig = OptimizerConfig()) -> BoundReport:
    """Class-level bound; the region must already be class-mode (run c1_check
    first on channel-level input), and feasibility is the caller's channel-level
    responsibility."""
    _check_n(n)
    if region.mode != "class":
        raise C1Violation(
            "pes_bound_classes needs a class-mode region; convert channel-level "
            "regions through c1_check first"
        )
    envmap = {}
    for env in envelopes:
        if env.class_id in envmap:
            raise ValidationError(f"duplicate class id {env.class_id!r}")
        envmap[env.class_id] = env
    for rvi, cid in region.members:
        rvi.check_against(table)
        if cid not in envmap:
            raise ValidationError(f"region references unknown class {cid!r}")
    first = next(iter(envmap.values()))
    universe = pair_universe(table, tuple(envmap.keys()))
    out_pairs = region.complement(universe)
    subsets = tuple(proper_subsets(first.num_users))
    memo = _class_memo(envmap, laws, table, cfg)
    return _assemble(region.members, out_pairs, subsets, memo, n, "class")


def system_exponent(region: OperationRegion, compound: CompoundSet,
                    laws: InputLaws, table: RateTable,
                    cfg: OptimizerConfig = OptimizerConfig()) -> SystemExponentResult:
    """Asymptotic slope of the finite bound: the smallest exponent among the
    decode-branch terms.

    The collision branch introduces no additional exponent values: its inner
    maximization runs over the same matched atypicality terms that already
    appear in some decode-branch entry (the out-region realization itself is
    always an admissible competing pair), so the minimum over decode-branch
    terms is the system exponent.
    """
    if region.mode != "finite":
        raise ValidationError("system_exponent expects a channel-level region")
    _require_feasible(region, compound, laws, table)
    universe = pair_universe(table, compound.ids)
    out_pairs = region.complement(universe)
    subsets = tuple(proper_subsets(compound.num_users))
    memo = _finite_memo(compound, laws, table, cfg)
    best = None
    for t in region.members:
        for subset in subsets:
            for c in region.members:
                if not _matches(c, t, subset):
                    continue
                res = memo.get("em", subset, t, c)
                cand = (res.value, "em", subset, _pair_key(t), _pair_key(c))
                if best is None or cand[0] < best[0]:
                    best = cand
            for o in out_pairs:
                if not _matches(o, t, subset):
                    continue
                res = memo.get("ei", subset, t, o)
                cand = (res.value, "ei", subset, _pair_key(t), _pair_key(o))
                if best is None or cand[0] < best[0]:
                    best = cand
    if best is None:
        return SystemExponentResult(float("inf"), None, None, None, None,
                                    memo.evaluations)
    return SystemExponentResult(best[0], best[1], best[2], best[3], best[4],
                                memo.evaluations)


def _rate_universe(table: RateTable) -> tuple:
    return tuple(RateVectorIndex(combo) for combo in
                 itertools.product(range(1, table.num_classes + 1),
                                   repeat=table.num_users))


def _ddecoder_memo(users_d, channel: Dmc, laws: InputLaws, table: RateTable,
                   cfg: OptimizerConfig) -> _ExponentMemo:
    d = sorted(users_d)
    outside = [u for u in range(1, channel.num_users + 1) if u not in users_d]
    reduced_laws = laws.restrict(d)
    reduced_table = table.restrict(d)
    eff_cache = {}

    def eff(rvi: RateVectorIndex) -> Dmc:
        key = tuple(rvi.index(u) for u in outside)
        if key not in eff_cache:
            eff_cache[key] = effective_channel(
                channel, d, {u: rvi.index(u) for u in outside}, laws)
        return eff_cache[key]

    def reduced_query(subset, t, c) -> ExponentQuery:
        reduced_s = frozenset(d.index(u) + 1 for u in subset)
        return ExponentQuery(reduced_s, t[0].restrict(d), eff(t[0]),
                             c[0].restrict(d), eff(c[0]), reduced_laws,
                             reduced_table)

    def em(subset, t, c):
        res = em_exponent(reduced_query(subset, t, c), cfg)
        return ExponentResult(res.value, res.rho_star, res.s_star,
                              res.evaluations, "subset", "em")

    def ei(subset, t, c):
        res = ei_exponent(reduced_query(subset, t, c), cfg)
        return ExponentResult(res.value, res.rho_star, res.s_star,
                              res.evaluations, "subset", "ei")

    return _ExponentMemo(em, ei)


def pes_bound_ddecoder(users_d, region_rates: Sequence[RateVectorIndex],
                       channel: Dmc, laws: InputLaws, table: RateTable, n: int,
                       cfg: OptimizerConfig = OptimizerConfig(),
                       channel_id: str = "channel") -> BoundReport:
    """Bound for a decoder resolving only the users in D over a known channel.

    region_rates lists the full-length rate vectors the D-decoder commits to;
    its complement is taken inside the full rate-vector universe. Conditioning
    subsets range over proper subsets of D, and users outside D are averaged
    into the channel pair by pair.
    """
    _check_n(n)
    d = sorted(set(int(u) for u in users_d))
    if not d:
        raise ValidationError("the decoded set must be nonempty")
    for u in d:
        if not 1 <= u <= channel.num_users:
            raise ValidationError(f"user {u} outside 1..{channel.num_users}")
    seen = set()
    for rvi in region_rates:
        rvi.check_against(table)
        if rvi.indices in seen:
            raise ValidationError(f"duplicate rate vector {rvi.indices}")
        seen.add(rvi.indices)
    in_pairs = tuple((rvi, channel_id) for rvi in region_rates)
    out_pairs = tuple((rvi, channel_id) for rvi in _rate_universe(table)
                      if rvi.indices not in seen)
    subsets = []
    for size in range(len(d)):
        for combo in itertools.combinations(d, size):
            subsets.append(frozenset(combo))
    memo = _ddecoder_memo(frozenset(d), channel, laws, table, cfg)
    return _assemble(in_pairs, out_pairs, tuple(subsets), memo, n, "subset")


@dataclass(frozen=True)
class PartitionBoundResult:
    raw_bound: float
    clamped_bound: float
    log_bound: float
    partition: Partition
    block_reports: tuple  # (decoded set, BoundReport) in first-use order
    search: str
    partitions_considered: int
    exponent_evaluations: int


class _BlockCache:
    """Memoizes per-(decoded set, member tuple) D-decoder bounds."""

    def __init__(self, channel, laws, table, n, cfg, channel_id):
        self.channel, self.laws, self.table = channel, laws, table
        self.n, self.cfg, self.channel_id = n, cfg, channel_id
        self._cache = {}
        self.evaluations = 0

    def bound(self, users_d: frozenset, members) -> BoundReport:
        key = (users_d, tuple(rvi.indices for rvi, _ in members))
        if key not in self._cache:
            report = pes_bound_ddecoder(
                users_d, tuple(rvi for rvi, _ in members), self.channel,
                self.laws, self.table, self.n, self.cfg, self.channel_id)
            self._cache[key] = report
            self.evaluations += report.exponent_evaluations
        return self._cache[key]


def evaluate_partition(partition: Partition, cache: _BlockCache):
    """Log-domain total of a partition's block bounds, plus the block reports."""
    blocks = partition.blocks()
    reports = []
    logs = []
    for users_d, members in blocks.items():
        report = cache.bound(users_d, members)
        reports.append((users_d, report))
        logs.append(report.log_bound)
    return logsumexp_list(logs), tuple(reports)


def pes_bound_single_user(user: int, region: OperationRegion, channel: Dmc,
                          laws: InputLaws, table: RateTable, n: int,
                          search: str = "exhaustive",
                          cfg: OptimizerConfig = OptimizerConfig(),
                          allow_drop: bool = False,
                          max_blocks: Optional[int] = None) -> PartitionBoundResult:
    """Best split of the region into per-decoded-set blocks covering `user`.

    Exhaustive search enumerates every assignment of members to decoded sets
    containing the user (optionally allowing explicit drops, whose members are
    always reported as collisions) and returns the smallest total. Greedy
    assigns each member independently to the decoded set minimizing its
    singleton-block bound, then scores the resulting merged partition; it is
    never below the exhaustive optimum.
    """
    _check_n(n)
    if search not in ("exhaustive", "greedy"):
        raise ValidationError(f"search must be 'exhaustive' or 'greedy', got {search!r}")
    if region.mode != "finite":
        raise ValidationError("partition search expects a channel-level region")
    k = channel.num_users
    cache = _BlockCache(channel, laws, table, n, cfg,
                        region.members[0][1] if region.members else "channel")
    if search == "greedy":
        choices = subsets_containing(user, k)
        assignment = []
        for rvi, cid in region.members:
            best = None
            for users_d in choices:
                report = cache.bound(users_d, ((rvi, cid),))
                if best is None or report.log_bound < best[0]:
                    best = (report.log_bound, users_d)
            assignment.append(best[1])
        partition = Partition(region, user, tuple(assignment))
        total, reports = evaluate_partition(partition, cache)
        best_total, best_partition, best_reports = total, partition, reports
        considered = 1
    else:
        best_total, best_partition, best_reports = None, None, None
        considered = 0
        for partition in enumerate_partitions(region, user, k,
                                              max_blocks=max_blocks,
                                              allow_drop=allow_drop):
            total, reports = evaluate_partition(partition, cache)
            considered += 1
            if best_total is None or total < best_total:
                best_total, best_partition, best_reports = total, partition, reports
        if best_partition is None:
            # Empty region: the single empty assignment.
            best_partition = Partition(region, user, ())
            best_total, best_reports = NEG_INF, ()
            considered = 1
    raw = math.exp(best_total) if best_total > NEG_INF else 0.0
    return PartitionBoundResult(
        raw_bound=raw, clamped_bound=min(raw, 1.0), log_bound=best_total,
        partition=best_partition, block_reports=best_reports, search=search,
        partitions_considered=considered, exponent_evaluations=cache.evaluations,
    )
