"""Slot simulation: codebooks, thresholds, the threshold decoder, estimators."""

import math

import numpy as np
import pytest

import ramac
from conftest import FAST_OPT, bsc
from oracles import pairwise_tail

TINY_OPT = ramac.OptimizerConfig(rho_grid_size=8, s_grid_size=8,
                                 refinement_rounds=0)
NOISELESS = ramac.validate_dmc([[1.0, 0.0], [0.0, 1.0]], 1, 2, 2)


def _k1(p, rates, region_idx=(1,), ids=("c",)):
    comp = ramac.CompoundSet(tuple(bsc(q) for q in p), ids)
    table = ramac.RateTable((tuple(rates),))
    laws = ramac.uniform_laws(table, 2)
    members = tuple((ramac.RateVectorIndex((i,)), cid)
                    for i in region_idx for cid in ids)
    region = ramac.OperationRegion(members, "finite")
    return comp, table, laws, region


def test_message_count_examples():
    assert ramac.message_count(10, 0.0) == 1
    assert ramac.message_count(4, math.log(2)) == 16
    assert ramac.message_count(8, math.log(2) / 8) == 2
    assert ramac.message_count(5, 0.1) == 1  # floor(e^0.5) = 1


def test_codebooks_deterministic_and_addressable():
    table = ramac.RateTable(((0.0, math.log(2) / 4), (0.0, math.log(3) / 4)))
    laws = ramac.uniform_laws(table, 3)
    a = ramac.generate_codebooks(table, laws, 3, 4, seed=99)
    b = ramac.generate_codebooks(table, laws, 3, 4, seed=99)
    for key in a.entries:
        assert np.array_equal(a.entries[key], b.entries[key])
    assert a.counts()[(1, 2)] == 2
    assert a.counts()[(2, 2)] == 3
    # single entries regenerate from their own stream, independent of the rest
    cum = np.cumsum(laws.law(2, 2))
    ss = np.random.SeedSequence(entropy=99, spawn_key=(2, 2, 1))
    gen = np.random.Generator(np.random.Philox(ss))
    idx = np.searchsorted(cum, gen.random(4), side="right")
    want = np.minimum(idx, 2)
    assert np.array_equal(a.codeword(2, 2, 1), want)
    c = ramac.generate_codebooks(table, laws, 3, 4, seed=100)
    assert not all(np.array_equal(a.entries[k], c.entries[k]) for k in a.entries)


def test_codebook_guard():
    table = ramac.RateTable(((math.log(2e6),),))
    laws = ramac.uniform_laws(table, 2)
    with pytest.raises(ramac.TooManyCodewords):
        ramac.generate_codebooks(table, laws, 2, 1, seed=0)


def test_threshold_params_validation():
    ramac.ThresholdParams()  # from_ei defaults are fine
    ramac.ThresholdParams(rho_tilde=0.5, s2=0.2, source="manual")
    with pytest.raises(ramac.ValidationError):
        ramac.ThresholdParams(source="manual")
    with pytest.raises(ramac.ValidationError):
        ramac.ThresholdParams(rho_tilde=0.5, s2=0.5, source="manual")
    with pytest.raises(ramac.ValidationError):
        ramac.ThresholdParams(rho_tilde=1.5, s2=0.2, source="manual")
    with pytest.raises(ramac.ValidationError):
        ramac.ThresholdParams(s2=0.2)


def test_threshold_matches_hand_formula():
    p = 0.1
    comp, table, laws, _ = _k1([p], (0.05, 0.4), region_idx=(1,))
    params = ramac.ThresholdParams(rho_tilde=0.5, s2=0.25, source="manual")
    y = [0, 1, 0, 0, 1, 0]
    competing = (ramac.RateVectorIndex((2,)), comp.by_id("c"))
    res = ramac.typicality_threshold(y, ramac.RateVectorIndex((1,)),
                                     comp.by_id("c"), frozenset(), laws, table,
                                     params, competing=competing)
    n = len(y)
    s1, s2, rho = 0.5, 0.25, 0.5
    log_a = math.log(0.5)  # same for both symbols
    g = math.log(0.5 * (p ** 0.5 + (1 - p) ** 0.5))
    want = (-(n * log_a + rho * n * g - n * g) / (n * (s1 + s2))
            - rho * 0.05 / (s1 + s2))
    assert abs(res.tau - want) < 1e-12
    assert res.tables.spread == 0.0
    assert abs(ramac.tau_by_bisection(y, res.tables, n) - res.tau) \
        <= 1e-9 * max(1.0, abs(res.tau))


def test_threshold_bisection_agrees_randomly():
    rng = np.random.default_rng(5)
    for _ in range(50):
        probs = rng.uniform(0.05, 1.0, size=(3, 4))
        probs /= probs.sum(axis=1, keepdims=True)
        ch = ramac.validate_dmc(probs, 1, 3, 4)
        table = ramac.RateTable(((0.03, 0.2),))
        laws = ramac.uniform_laws(table, 3)
        rho = float(rng.uniform(0.2, 1.0))
        s2 = float(rng.uniform(0.05, 0.95)) * rho
        params = ramac.ThresholdParams(rho_tilde=rho, s2=s2, source="manual")
        y = rng.integers(0, 4, size=12)
        res = ramac.typicality_threshold(y, ramac.RateVectorIndex((1,)), ch,
                                         frozenset(), laws, table, params)
        direct = ramac.tau_by_bisection(y, res.tables, 12)
        assert abs(direct - res.tau) <= 1e-9 * max(1.0, abs(res.tau))


def test_degenerate_expectation_raises():
    dead = ramac.validate_dmc([[1.0, 0.0], [1.0, 0.0]], 1, 2, 2)
    table = ramac.RateTable(((0.05,),))
    laws = ramac.uniform_laws(table, 2)
    params = ramac.ThresholdParams(rho_tilde=0.5, s2=0.25, source="manual")
    with pytest.raises(ramac.DegenerateLikelihood):
        ramac.typicality_threshold([0, 1], ramac.RateVectorIndex((1,)), dead,
                                   frozenset(), laws, table, params)


def test_noiseless_single_codeword_decoding():
    comp = ramac.CompoundSet((NOISELESS,), ("id",))
    table = ramac.RateTable(((0.0,),))
    laws = ramac.uniform_laws(table, 2)
    region = ramac.OperationRegion(((ramac.RateVectorIndex((1,)), "id"),),
                                   "finite")
    n = 3
    decoder = ramac.build_thresholds(region, laws, table, n, compound=comp,
                                     cfg=TINY_OPT)
    cb = ramac.generate_codebooks(table, laws, 2, n, seed=3)
    cw = cb.codeword(1, 1, 0)
    for bits in np.ndindex(2, 2, 2):
        d = decoder.decode(np.array(bits), cb)
        if np.array_equal(np.array(bits), cw):
            assert d.outcome == "decoded"
            assert d.messages == (0,)
            assert d.channel_id == "id"
        else:
            # zero likelihood never wins, even with tau = +inf
            assert d.outcome == "collision"
    exact = ramac.exact_conditional_errors(region, laws, table, n,
                                           compound=comp, codebooks=cb,
                                           cfg=TINY_OPT)
    assert exact.cases[0].probability == 0.0


def test_score_tie_collides_and_perturbation_decodes():
    comp, table, laws, region = _k1([0.1], (math.log(2) / 4,))
    decoder = ramac.build_thresholds(region, laws, table, 4, compound=comp,
                                     cfg=TINY_OPT)
    y = np.zeros(4, dtype=np.int64)
    tied = ramac.CodebookSet(seed=0, n=4, entries={
        (1, 1): np.array([[0, 0, 1, 1], [1, 1, 0, 0]])})
    assert decoder.decode(y, tied).outcome == "collision"
    split = ramac.CodebookSet(seed=0, n=4, entries={
        (1, 1): np.array([[0, 0, 1, 1], [1, 1, 0, 1]])})
    d = decoder.decode(y, split)
    assert d.outcome == "decoded"
    assert d.messages == (0,)


def test_empty_region_always_collides():
    comp, table, laws, _ = _k1([0.1], (0.05,))
    region = ramac.OperationRegion((), "finite")
    decoder = ramac.build_thresholds(region, laws, table, 4, compound=comp,
                                     cfg=TINY_OPT)
    cb = ramac.generate_codebooks(table, laws, 2, 4, seed=1)
    for bits in np.ndindex(2, 2, 2, 2):
        assert decoder.decode(np.array(bits), cb).outcome == "collision"


def test_decode_slot_checks_context():
    comp, table, laws, region = _k1([0.1], (0.05,))
    decoder = ramac.build_thresholds(region, laws, table, 4, compound=comp,
                                     cfg=TINY_OPT)
    cb = ramac.generate_codebooks(table, laws, 2, 4, seed=1)
    other = ramac.OperationRegion((), "finite")
    with pytest.raises(ramac.ValidationError):
        ramac.decode_slot(np.zeros(4, dtype=int), cb, other, decoder)
    with pytest.raises(ramac.ValidationError):
        ramac.decode_slot(np.zeros(4, dtype=int), cb, region, decoder,
                          mode="class")
    d = ramac.decode_slot(np.zeros(4, dtype=int), cb, region, decoder)
    assert d.outcome in ("decoded", "collision")


def test_schedule_covers_universe_with_labels():
    comp, table, laws, region = _k1([0.05, 0.15], (0.05, 0.3),
                                    region_idx=(1,), ids=("a", "b"))
    sched = ramac.build_schedule(region, table, comp.ids)
    assert len(sched) == 4
    assert [s[2] for s in sched] == [True, True, False, False]
    # class map: realizations stay channel-level, membership turns class-level
    class_region = ramac.OperationRegion(
        ((ramac.RateVectorIndex((1,)), "k"),), "class")
    sched2 = ramac.build_schedule(class_region, table, comp.ids,
                                  class_map={"k": ("a", "b")})
    assert [s[2] for s in sched2] == [True, True, False, False]


def test_fast_path_matches_general_path():
    comp, table, laws, region = _k1([0.05, 0.15], (0.12,), ids=("a", "b"))
    kw = dict(compound=comp, params=ramac.ThresholdParams(), cfg=TINY_OPT)
    for freeze in (False, True):
        fast = ramac.estimate_errors(region, laws, table, 10, 200, 17,
                                     freeze_codebooks=freeze, **kw)
        slow = ramac.estimate_errors(region, laws, table, 10, 200, 17,
                                     freeze_codebooks=freeze,
                                     force_general=True, **kw)
        assert [c.errors for c in fast.cases] == [c.errors for c in slow.cases]
        assert fast.system_error_rate == slow.system_error_rate


def test_singleton_class_mode_matches_finite_decisions():
    comp, table, laws, region = _k1([0.08], (0.1,))
    env = ramac.build_envelope((comp.by_id("c"),), class_id="c")
    class_region = ramac.OperationRegion(region.members, "class")
    finite = ramac.estimate_errors(region, laws, table, 8, 300, 11,
                                   compound=comp, cfg=TINY_OPT)
    classy = ramac.estimate_errors(class_region, laws, table, 8, 300, 11,
                                   compound=comp, envelopes=(env,),
                                   class_map={"c": ("c",)}, cfg=TINY_OPT)
    assert [c.errors for c in finite.cases] == [c.errors for c in classy.cases]


def test_simulation_reports_are_deterministic():
    comp, table, laws, region = _k1([0.1], (0.1,))
    a = ramac.estimate_errors(region, laws, table, 8, 150, 23, compound=comp,
                              cfg=TINY_OPT, bound=0.9)
    b = ramac.estimate_errors(region, laws, table, 8, 150, 23, compound=comp,
                              cfg=TINY_OPT, bound=0.9)
    assert a == b
    assert a.bound_holds in (True, False)
    assert a.system_case is not None
    assert a.system_half_width99 == ramac.Z99 * a.system_std


def test_batch_size_does_not_change_results():
    comp, table, laws, region = _k1([0.1], (0.1,))
    a = ramac.estimate_errors(region, laws, table, 8, 130, 5, compound=comp,
                              cfg=TINY_OPT, batch_size=32)
    b = ramac.estimate_errors(region, laws, table, 8, 130, 5, compound=comp,
                              cfg=TINY_OPT, batch_size=4096)
    assert [c.errors for c in a.cases] == [c.errors for c in b.cases]


def test_exact_enumeration_guard():
    comp, table, laws, region = _k1([0.1], (0.0,))
    with pytest.raises(ramac.EnumerationTooLarge):
        ramac.exact_conditional_errors(region, laws, table, 21, compound=comp,
                                       cfg=TINY_OPT)


def test_exact_two_codeword_case_matches_binomial_tail():
    p = 0.1
    n = 8
    comp, table, laws, region = _k1([p], (math.log(2) / n,))
    cb = ramac.CodebookSet(seed=0, n=n, entries={
        (1, 1): np.array([[0] * n, [1, 1, 1, 1, 0, 0, 0, 0]])})
    exact = ramac.exact_conditional_errors(region, laws, table, n,
                                           compound=comp, codebooks=cb,
                                           cfg=TINY_OPT)
    # distance-4 pair: ML pairwise error with ties resolved against the sender
    assert abs(exact.cases[0].probability - pairwise_tail(p, 4)) < 1e-12


def test_exact_ensemble_averages_over_codebooks():
    comp, table, laws, region = _k1([0.1], (math.log(2) / 6,))
    rep = ramac.exact_conditional_errors(region, laws, table, 6, compound=comp,
                                         cfg=TINY_OPT, seed=4,
                                         codebook_samples=3)
    assert rep.samples == 3
    assert len(rep.per_sample) == 3
    mean = sum(s[0].probability for s in rep.per_sample) / 3
    assert abs(rep.cases[0].probability - mean) < 1e-15
