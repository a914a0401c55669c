from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynacct.evolving_graph import EvolvingGraph, RoundGraph
from dynacct.game_core import (AVOID, COOPERATE, DEFECT, PUNISH, Action,
                               ActionKind, ActionProfile, History,
                               IndividualAction, Mode, Trace, UtilityParams,
                               cooperation_tail, discounted_utility,
                               prop_punish, round_utility, tail_bound)


def params(beta="2", alpha="0.1", pi="1.5", delta="0.5", mode=Mode.VALUABLE):
    return UtilityParams.make(beta, alpha, pi, delta, mode)


def profile(n, acts, m=1):
    rg = RoundGraph.from_pairs(n, [(u, v) for u in acts for v in acts[u]
                                   if u < v])
    actions = {i: Action(i, m, dict(acts.get(i, {}))) for i in range(n)}
    return ActionProfile(m, actions), rg


def pair_profile(a01, a10, m=1, mode=Mode.VALUABLE, n=2):
    rg = RoundGraph.from_pairs(n, [(0, 1)])
    actions = {0: Action(0, m, {1: a01}), 1: Action(1, m, {0: a10})}
    for k in range(2, n):
        actions[k] = Action(k, m, {})
    p = ActionProfile(m, actions)
    p.check(rg, mode)
    return p, rg


def test_mutual_cooperation():
    p, rg = pair_profile(COOPERATE, COOPERATE)
    u = round_utility(0, p, rg, params())
    assert u == Fraction(2) - 1 - Fraction("0.1") == Fraction("0.9")
    assert u == round_utility(1, p, rg, params())


def test_defector_against_cooperator():
    p, rg = pair_profile(DEFECT, COOPERATE)
    pr = params()
    assert round_utility(0, p, rg, pr) == pr.beta - pr.alpha
    assert round_utility(1, p, rg, pr) == -1


def test_proportional_punishment_value():
    p, rg = pair_profile(COOPERATE, prop_punish(3), n=5)
    u = round_utility(0, p, rg, params(beta="2", alpha="0.1", pi="1.5"))
    # 2 - 1 - 0.1 - 4.5, each term per the per-edge sum
    assert u == Fraction("-3.6")


def test_avoid_zeroes_the_edge():
    pr = params()
    for other in (COOPERATE, prop_punish(3), DEFECT):
        p, rg = pair_profile(AVOID, other, n=5)
        assert round_utility(0, p, rg, pr) == 0


def test_general_punish_nets_beta_minus_pi():
    pr = params(beta="1.2", alpha="0.1", pi="1.2", mode=Mode.GENERAL)
    p, rg = pair_profile(COOPERATE, PUNISH, mode=Mode.GENERAL)
    assert round_utility(0, p, rg, pr) == pr.beta - pr.alpha - pr.pi - 1


def test_mode_action_legality():
    with pytest.raises(ValueError):
        pair_profile(PUNISH, COOPERATE, mode=Mode.VALUABLE)
    with pytest.raises(ValueError):
        pair_profile(AVOID, COOPERATE, mode=Mode.GENERAL)
    with pytest.raises(ValueError):
        pair_profile(prop_punish(1), COOPERATE, mode=Mode.GENERAL)


def test_prop_punish_normalises_zero_weight():
    assert prop_punish(0) == COOPERATE
    with pytest.raises(ValueError):
        IndividualAction(ActionKind.COOPERATE, c=2)


def test_prop_punish_weight_capped_by_n():
    rg = RoundGraph.from_pairs(2, [(0, 1)])
    a = Action(0, 1, {1: prop_punish(2)})
    p = ActionProfile(1, {0: a, 1: Action(1, 1, {0: COOPERATE})})
    with pytest.raises(ValueError):
        p.check(rg, Mode.VALUABLE)   # c=2 > n-1=1


def test_zero_interaction_round_contributes_zero():
    rg = RoundGraph.from_pairs(3, [])
    p = ActionProfile(1, {i: Action(i, 1, {}) for i in range(3)})
    assert all(round_utility(i, p, rg, params()) == 0 for i in range(3))


def test_round_utility_additive_over_neighbors():
    rg = RoundGraph.from_pairs(3, [(0, 1), (0, 2)])
    pr = params()
    p = ActionProfile(1, {
        0: Action(0, 1, {1: COOPERATE, 2: DEFECT}),
        1: Action(1, 1, {0: prop_punish(1)}),
        2: Action(2, 1, {0: COOPERATE}),
    })
    total = round_utility(0, p, rg, pr)
    # edge to 1: -1 + beta - alpha - pi ; edge to 2: beta - alpha
    e1 = -1 + pr.beta - pr.alpha - pr.pi
    e2 = pr.beta - pr.alpha
    assert total == e1 + e2


def _constant_trace(u_per_round, rounds, delta="0.5"):
    rg = RoundGraph.from_pairs(2, [(0, 1)])
    g = EvolvingGraph((), (rg,), "c")
    h = History(graph=g)
    utils = {}
    for m in range(1, rounds + 1):
        p, _ = pair_profile(COOPERATE, COOPERATE, m=m)
        h.append(p)
        utils[(0, m)] = Fraction(u_per_round)
        utils[(1, m)] = Fraction(u_per_round)
    return Trace(history=h, per_round_utilities=utils, rng_seed=0)


def test_discounted_single_round():
    t = _constant_trace(7, 1)
    assert discounted_utility(t, 0, 1, params()) == 7


def test_discounted_geometric_sum():
    pr = params(delta="0.5")
    H = 6
    t = _constant_trace(3, H)
    expect = Fraction(3) * (1 - pr.delta ** H) / (1 - pr.delta)
    assert discounted_utility(t, 0, 1, pr) == expect


def test_discounted_recursive_decomposition():
    pr = params(delta="0.9")
    rng = random.Random(3)
    t = _constant_trace(0, 8)
    for m in range(1, 9):
        t.per_round_utilities[(0, m)] = Fraction(rng.randint(-5, 5), 3)
    for start in range(1, 8):
        lhs = discounted_utility(t, 0, start, pr)
        rhs = t.per_round_utilities[(0, start)] + pr.delta * discounted_utility(
            t, 0, start + 1, pr)
        assert lhs == rhs


def test_discounted_utility_bounded_by_swing():
    pr = params(beta="2", alpha="0.1", pi="1.5", delta="0.9")
    t = _constant_trace(0, 10)
    rng = random.Random(4)
    n = 2
    y = pr.max_round_swing(n)
    for m in range(1, 11):
        t.per_round_utilities[(0, m)] = Fraction(rng.randint(-3, 3))
    assert abs(discounted_utility(t, 0, 1, pr)) <= y * n / (1 - pr.delta)


def test_deviation_arithmetic_bound():
    # one-round gain 1 beats a punishment delayed rho rounds whenever
    # delta^rho * y * n / (1 - delta) < 1
    pr = params(beta="2", alpha="0", pi="3", delta="0.3", mode=Mode.VALUABLE)
    n, rho = 3, 4
    y = pr.max_round_swing(n)
    bound = pr.delta ** rho * y * n / (1 - pr.delta)
    assert bound < 1
    assert -1 + bound < 0


def test_tail_bound_direct_formula():
    pr = params(beta="2", alpha="0", pi="1", delta="0.5")
    # y*n contrived to 4 by taking n=1: y = 2+0+1+0 = 3... use explicit check
    n = 2
    y = pr.max_round_swing(n)
    assert tail_bound(pr, n, 3) == pr.delta ** 3 * y * n / (1 - pr.delta)


def test_tail_bound_monotone_decay():
    pr = params(delta="0.8")
    vals = [tail_bound(pr, 3, h) for h in range(0, 40, 5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_tail_bound_horizon_for_tolerance():
    pr = UtilityParams.make("1.2", "0.1", "1.2", "0.99", Mode.GENERAL)
    n = 3
    H = 1
    while tail_bound(pr, n, H) >= Fraction(1, 1000):
        H += 1
    assert tail_bound(pr, n, H) < Fraction(1, 1000)
    assert tail_bound(pr, n, H - 1) >= Fraction(1, 1000)
    assert 1300 < H < 1500


def test_params_validation():
    with pytest.raises(ValueError):
        UtilityParams.make("1.2", "0.1", "1.2", "1", Mode.GENERAL)
    with pytest.raises(TypeError):
        UtilityParams.make(1.2, "0.1", "1.2", "0.9", Mode.GENERAL)
    good = UtilityParams.make("1.2", "0.1", "1.2", "0.99", Mode.GENERAL)
    good.validate_for(4)
    bad = UtilityParams.make("1.05", "0.1", "1.2", "0.99", Mode.GENERAL)
    with pytest.raises(ValueError):
        bad.validate_for(4)
    val = UtilityParams.make("17", "0", "5", "0.99", Mode.VALUABLE)
    val.validate_for(4, rho=3)
    with pytest.raises(ValueError):
        val.validate_for(5, rho=3)       # pi must exceed n
    with pytest.raises(ValueError):
        val.validate_for(4)              # rho required in valuable mode


def test_params_json_roundtrip_exact():
    pr = UtilityParams.make("1.2", "0.1", "1.2", "0.99", Mode.GENERAL)
    assert UtilityParams.from_json(pr.to_json()) == pr
    assert pr.beta == Fraction(6, 5)


def test_cooperation_tail_matches_direct_sum():
    rng = random.Random(11)
    from .conftest import random_evolving_graph
    for _ in range(10):
        g = random_evolving_graph(rng, 4, "g")
        pr = params(delta="0.9", mode=Mode.GENERAL, beta="1.5", pi="1.5")
        frm = rng.randint(1, 6)
        to = frm + rng.randint(0, 25)
        direct = sum(pr.delta ** (m - frm) *
                     (pr.beta - 1 - pr.alpha) * g.at(m).degree(0)
                     for m in range(frm, to + 1))
        assert cooperation_tail(g, 0, pr, frm, to) == direct


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 12))
def test_cooperation_tail_hypothesis(span, start_off):
    g = EvolvingGraph(
        (RoundGraph.from_pairs(3, [(0, 1)]),),
        (RoundGraph.from_pairs(3, [(0, 1), (1, 2)]), RoundGraph.from_pairs(3, [])),
        "g")
    pr = params(delta="0.97", mode=Mode.GENERAL, beta="1.5", pi="1.5")
    frm = 1 + start_off
    to = frm + span
    direct = sum(pr.delta ** (m - frm) * (pr.beta - 1 - pr.alpha) * g.at(m).degree(0)
                 for m in range(frm, to + 1))
    assert cooperation_tail(g, 0, pr, frm, to) == direct
