from __future__ import annotations

import copy
import json
from fractions import Fraction

import pytest

from dynacct.evolving_graph import (EvolvingGraph, GraphFamily,
                                    ObservationModel, RoundGraph)
from dynacct.game_core import ActionKind, Mode, UtilityParams, round_utility
from dynacct.protocols import (AccusationPunisher, AlwaysDefect,
                               OneShotDeviation, ScheduledDefector, SigmaGen,
                               SigmaVal, StrategyConfigError, StrategyMachine,
                               always_defect_until, build_strategy,
                               defect_at_rounds, one_shot_deviation,
                               sigma_gen, sigma_val, single_evasive)
from dynacct.scenarios import (builtin, complete_graph, general_defaults,
                               ring_graph, valuable_defaults)
from dynacct.verifier import (SimConfig, _simulate_machines, build_machines,
                              simulate, strategy_context)

NO = ObservationModel.NEIGHBORS_ONLY
ND = ObservationModel.NEIGHBORS_AND_DEGREES


def fam_const(rg, obs=ND, horizon=12, name="g"):
    return GraphFamily(rg.n, (EvolvingGraph((), (rg,), name),), obs, horizon)


def k3_val_cfg(horizon=10, rho=2):
    fam = fam_const(complete_graph(3), obs=NO)
    return SimConfig(
        family=fam, member="g",
        strategies={a: {"strategy": "sigma_val", "rho": rho} for a in range(3)},
        horizon=horizon, params=valuable_defaults(3, rho))


class Recorder(StrategyMachine):
    """Delegating wrapper that logs each round's observations."""

    def __init__(self, inner):
        super().__init__(inner.me, inner.n)
        self.inner = inner
        self.mode = inner.mode
        self.draw_independent_state = inner.draw_independent_state
        self.deterministic = inner.deterministic
        self.uses_own_action = inner.uses_own_action
        self.log = []

    def begin_round(self, view):
        super().begin_round(view)
        self.inner.begin_round(view)

    def payload_for(self, j):
        return self.inner.payload_for(j)

    def act(self, rand):
        return self.inner.act(rand)

    def end_round(self, own_action, inbox):
        norm = {j: (a.kind.value, a.c, json.dumps(p, sort_keys=True))
                for j, (a, p) in sorted(inbox.items())}
        self.log.append((self.round, sorted(self.view.neighbors), norm))
        self.inner.end_round(own_action, inbox)

    def snapshot(self):
        return self.inner.snapshot()

    def state_key(self, m):
        return self.inner.state_key(m)

    def is_quiescent(self):
        return self.inner.is_quiescent()


def run_recorded(cfg, machines):
    recs = {a: Recorder(m) for a, m in machines.items()}
    _simulate_machines(cfg, dict(recs))
    return {a: recs[a].log for a in recs}


# ---------------------------------------------------------------------------
# sigma_val
# ---------------------------------------------------------------------------

def test_sigma_val_honest_all_cooperate():
    cfg = k3_val_cfg()
    t = simulate(cfg)
    for m in range(1, t.last_round + 1):
        for a in range(3):
            for act in t.history.profiles[m - 1].actions[a].per_neighbor.values():
                assert act.kind is ActionKind.COOPERATE


def test_sigma_val_accusation_after_defection():
    cfg = k3_val_cfg(horizon=6)
    machines = build_machines(cfg)
    machines[0] = ScheduledDefector(machines[0], {2: frozenset([1])},
                                    sincere=True)
    t = _simulate_machines(cfg, machines)
    # at the start of round 3 agent 1 holds one accusation against 0 for round 2
    assert ("accusations" in t.state_log[(1, 2)]
            and t.state_log[(1, 2)]["accusations"] == [(0, 2)])
    # and punishes proportionally at round 3
    act = t.history.profiles[2].actions[1].per_neighbor[0]
    assert act.kind is ActionKind.PROP_PUNISH and act.c == 1


def test_sigma_val_accusation_propagation_matches_influence_oracle():
    # 4-agent line family: accusations travel exactly as interference-free
    # influence from the victim allows
    line = RoundGraph.from_pairs(4, [(0, 1), (1, 2), (2, 3)])
    fam = fam_const(line, obs=NO, horizon=12)
    rho = 6
    cfg = SimConfig(family=fam, member="g",
                    strategies={a: {"strategy": "sigma_val", "rho": rho}
                                for a in range(4)},
                    horizon=8, params=valuable_defaults(4, 2))
    machines = build_machines(cfg)
    deviator, victim, m = 1, 0, 1
    machines[deviator] = ScheduledDefector(machines[deviator],
                                           {m: frozenset([victim])}, sincere=True)
    t = _simulate_machines(cfg, machines)
    from .oracles import oracle_influences
    g = cfg.graph
    # the report for round m stays in the window through round m+rho-1
    for M in range(m, m + rho):
        for l in range(4):
            if l == deviator:
                continue
            holds = (deviator, m) in [tuple(x) for x in
                                      t.state_log[(l, M)]["accusations"]]
            want = (l == victim or oracle_influences(
                g, victim, m, l, M + 1, exclude=deviator))
            assert holds == want, (l, M)


def test_sigma_val_requires_valuable_mode():
    with pytest.raises(StrategyConfigError):
        sigma_val(0, 3, 2, general_defaults())


def test_sigma_val_self_reports_ignored():
    # stuffing or stripping payload entries about oneself cannot change the
    # accusation counts others hold
    class Liar(SigmaVal):
        def __init__(self, me, n, rho, variant):
            super().__init__(me, n, rho)
            self.variant = variant

        def payload_for(self, j):
            pay = super().payload_for(j)
            if self.variant == "strip":
                pay["acc"] = [e for e in pay["acc"] if e[0] != self.me]
            elif self.variant == "stuff":
                pay["acc"] = pay["acc"] + [(self.me, self.round - 1)]
            return pay

    logs = []
    for variant in ("honest", "strip", "stuff"):
        cfg = k3_val_cfg(horizon=6)
        machines = build_machines(cfg)
        inner = (SigmaVal(0, 3, 2) if variant == "honest"
                 else Liar(0, 3, 2, variant))
        machines[0] = ScheduledDefector(inner, {1: frozenset([1])}, sincere=True)
        t = _simulate_machines(cfg, machines)
        logs.append({(a, m): t.state_log[(a, m)]["accusations"]
                     for a in (1, 2) for m in range(1, 7)})
    assert logs[0] == logs[1] == logs[2]


# ---------------------------------------------------------------------------
# sigma_gen
# ---------------------------------------------------------------------------

def test_sigma_gen_honest_pend_stays_zero():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=10)
    cfg.record_state = True
    t = simulate(cfg)
    for (a, m), snap in t.state_log.items():
        assert snap["pend"] == []
        for act in t.history.profiles[m - 1].actions[a].per_neighbor.values():
            assert act.kind is ActionKind.COOPERATE


def test_sigma_gen_single_defection_tally():
    # degree-d defection at round m: every agent's tally for the deviator's
    # residue equals d from round m+n-1 on, then drains within n periods
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=30)
    n, m, i = 4, 2, 0
    machines = build_machines(cfg)
    machines[i] = always_defect_until(machines[i], m)  # defects rounds 1..2
    t = _simulate_machines(cfg, machines)
    d = cfg.graph.at(m).degree(i)
    for l in range(1, 4):
        pend = dict((tuple(k), v) for k, v in t.state_log[(l, m + n - 1)]["pend"])
        assert pend.get((i, (m + n) % n), 0) == d
    # all tallies zero again within n^2 of the last deviation
    for l in range(4):
        pend = t.state_log[(l, m + n * n)]["pend"]
        assert pend == []


def test_sigma_gen_needs_degrees_and_general_mode():
    with pytest.raises(StrategyConfigError):
        sigma_gen(0, 3, general_defaults(), NO)
    with pytest.raises(StrategyConfigError):
        sigma_gen(0, 3, valuable_defaults(3, 2), ND)


def test_sigma_gen_state_bound_and_quiescence():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=24)
    machines = build_machines(cfg)
    machines[0] = defect_at_rounds(machines[0], [1, 2, 5])
    t = _simulate_machines(cfg, machines)
    bound = SigmaGen.static_state_bound(4)
    for (a, m), snap in t.state_log.items():
        assert len(snap["pend"]) + len(snap["acc"]) <= bound
        assert all(0 <= v <= 3 for _, v in snap["pend"])
    assert t.state_log[(1, 24)]["pend"] == []


def test_sigma_gen_cap_removal_detected():
    # without the cap, a tally-inflating gossiper pushes honest tallies
    # past n-1; with the cap they clamp
    ring = ring_graph(4)
    fam = fam_const(ring, obs=ND)
    cfg = SimConfig(family=fam, member="g",
                    strategies={a: "sigma_gen" for a in range(4)},
                    horizon=12, params=general_defaults())
    for cap, expect_ok in ((True, True), (False, False)):
        machines = {a: SigmaGen(a, 4, _cap=cap) for a in range(4)}
        machines[1] = SigmaGen(1, 4, _cap=cap, _pend_payload_inflate=7)
        machines[0] = ScheduledDefector(machines[0], {1: "all"}, sincere=True)
        t = _simulate_machines(cfg, machines)
        ok = all(v <= 3 for (a, m), snap in t.state_log.items()
                 for _, v in snap["pend"] if a != 1)
        assert ok == expect_ok


# ---------------------------------------------------------------------------
# deviation wrappers
# ---------------------------------------------------------------------------

def test_single_evasive_never_triggered_equals_base():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=8)
    honest = build_machines(cfg)
    evasive = build_machines(cfg)
    evasive[0] = single_evasive(evasive[0], j=1, m=50)  # beyond the horizon
    th = _simulate_machines(cfg, honest)
    te = _simulate_machines(cfg, evasive)
    assert th.history.profiles == te.history.profiles


def test_single_evasive_invisible_without_opportunity():
    # bridged-pairs family: agent 0 is never causally influenced by the
    # defected partner, so its whole observation stream is unchanged
    sc = builtin("timely_violation")
    cfg = sc.sim_config(horizon=10)
    honest_log = run_recorded(cfg, build_machines(cfg, honest_only=True))
    machines = build_machines(cfg, honest_only=True)
    machines[1] = single_evasive(machines[1], j=2, m=1)
    evasive_log = run_recorded(cfg, machines)
    assert honest_log[0] == evasive_log[0]
    assert honest_log[2] != evasive_log[2]   # the victim sees the defection
    assert honest_log[3] != evasive_log[3]   # and gossips it onward


def test_single_evasive_detected_with_timely_opportunity():
    cfg = k3_val_cfg(horizon=8)
    machines = build_machines(cfg)
    machines[0] = single_evasive(machines[0], j=1, m=1)
    t = _simulate_machines(cfg, machines)
    assert t.state_log[(2, 2)]["accusations"] == [(0, 1)]
    # punished by both opportunities inside the window
    assert t.history.profiles[1].actions[1].per_neighbor[0].kind is ActionKind.PROP_PUNISH


def test_always_defect_until_zero_is_base():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=6)
    a = build_machines(cfg)
    b = build_machines(cfg)
    b[2] = always_defect_until(b[2], 0)
    assert (_simulate_machines(cfg, a).history.profiles ==
            _simulate_machines(cfg, b).history.profiles)


def test_one_shot_identity_override_is_base():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=8)
    a = build_machines(cfg)
    b = build_machines(cfg)
    b[1] = OneShotDeviation(b[1], lambda v: v.round == 3, {"cooperate": "all"})
    assert (_simulate_machines(cfg, a).history.profiles ==
            _simulate_machines(cfg, b).history.profiles)


def test_one_shot_defect_all_raises_tally():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=10)
    machines = build_machines(cfg)
    machines[3] = one_shot_deviation(machines[3], lambda v: v.round == 1,
                                     {"defect": "all"})
    t = _simulate_machines(cfg, machines)
    pend = dict((tuple(k), v) for k, v in t.state_log[(0, 4)]["pend"])
    assert pend.get((3, 5 % 4), 0) == 2


def test_one_shot_avoid_zero_edge_utility():
    cfg = k3_val_cfg(horizon=4)
    machines = build_machines(cfg)
    machines[0] = one_shot_deviation(machines[0], lambda v: v.round == 2,
                                     {"avoid": [1]})
    t = _simulate_machines(cfg, machines)
    profile = t.history.profiles[1]
    rg = cfg.graph.at(2)
    u = round_utility(0, profile, rg, cfg.params)
    # edge to 1 contributes zero; edge to 2 is plain cooperation
    assert u == cfg.params.beta - 1 - cfg.params.alpha


def test_one_shot_override_validates_targets():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=4)
    machines = build_machines(cfg)
    machines[0] = one_shot_deviation(machines[0], lambda v: v.round == 1,
                                     {"defect": [2]})  # 2 is not a ring nbr of 0
    with pytest.raises(ValueError):
        _simulate_machines(cfg, machines)


def test_scheduled_defector_state_key_is_round_relative():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=4)
    m = build_machines(cfg)[0]
    d1 = ScheduledDefector(m.clone(), {3: "all"})
    d2 = ScheduledDefector(m.clone(), {5: "all"})
    assert d1.state_key(2) == d2.state_key(4)


# ---------------------------------------------------------------------------
# scripted dual and lenient evasive strategies
# ---------------------------------------------------------------------------

def _dual_machines(cfg, sc):
    from dynacct.protocols import build_deviation
    machines = build_machines(cfg, honest_only=True)
    spec = {k: v for k, v in sc.candidates[0].items() if k != "agent"}
    machines[0] = build_deviation(spec, strategy_context(cfg, 0))
    return machines


def test_dual_evasive_hides_from_far_side():
    sc = builtin("fig2_ambiguous")
    cfg = sc.sim_config(horizon=11)
    honest_log = run_recorded(cfg, build_machines(cfg, honest_only=True))
    dual_log = run_recorded(cfg, _dual_machines(cfg, sc))
    for a in (3, 4):
        assert honest_log[a] == dual_log[a]
    assert honest_log[1] != dual_log[1]
    assert honest_log[2] != dual_log[2]


def test_dual_evasive_near_side_punishes_far_side_does_not():
    sc = builtin("fig2_ambiguous")
    cfg = sc.sim_config(horizon=11)
    t = _simulate_machines(cfg, _dual_machines(cfg, sc))
    punishers = {(m, j) for m in range(1, 12) for j in range(1, 5)
                 if 0 in t.history.profiles[m - 1].actions[j].per_neighbor
                 and t.history.profiles[m - 1].actions[j].per_neighbor[0].kind
                 is ActionKind.PUNISH}
    assert punishers and all(j in (1, 2) for (_, j) in punishers)


def test_dual_evasive_unfired_script_is_honest():
    from dynacct.protocols import DualEvasiveFig2, _ShadowWorld
    sc = builtin("fig2_ambiguous")
    cfg = sc.sim_config(horizon=9)
    machines = build_machines(cfg, honest_only=True)
    ctx = strategy_context(cfg, 0)
    shadow = _ShadowWorld(cfg.graph, cfg.family.observation,
                          {a: ctx.honest(a) for a in range(5)})
    machines[0] = DualEvasiveFig2(ctx.honest(0), shadow, cfg.graph,
                                  group1=frozenset([1, 2]),
                                  group2=frozenset([3, 4]),
                                  defect_target=1, defect_round=0)
    th = _simulate_machines(cfg, build_machines(cfg, honest_only=True))
    td = _simulate_machines(cfg, machines)
    assert th.history.profiles == td.history.profiles


def test_dual_evasive_wrong_member_refused():
    sc = builtin("fig2_ambiguous")
    sc.member = "G"   # scripted against Gp's round-2 topology
    cfg = sc.sim_config(horizon=9)
    with pytest.raises(StrategyConfigError):
        _simulate_machines(cfg, _dual_machines(cfg, sc))


def _unsafe_runs(lenient: bool):
    from dynacct.protocols import build_deviation
    sc = builtin("unsafe_three_agent")
    cfg = sc.sim_config(horizon=12)
    machines = build_machines(cfg, honest_only=True)
    machines[0] = always_defect_until(machines[0], 1)
    machines[1] = ScheduledDefector(machines[1], {2: frozenset([2])},
                                    sincere=False)
    if lenient:
        spec = {k: v for k, v in sc.candidates[0].items() if k != "agent"}
        machines[2] = build_deviation(spec, strategy_context(cfg, 2))
    return cfg, _simulate_machines(cfg, machines)


def test_lenient_evasive_defects_and_escapes_punishment():
    cfg, t = _unsafe_runs(lenient=True)
    assert t.history.profiles[2].actions[2].per_neighbor[0].kind is ActionKind.DEFECT
    for m in range(4, 13):
        profile = t.history.profiles[m - 1]
        for j in (0, 1):
            if 2 in profile.actions[j].per_neighbor:
                assert profile.actions[j].per_neighbor[2].kind is ActionKind.COOPERATE


def test_lenient_evasive_strictly_beats_prescribed():
    from dynacct.game_core import discounted_utility
    cfg, t_honest = _unsafe_runs(lenient=False)
    _, t_lenient = _unsafe_runs(lenient=True)
    assert t_honest.history.profiles[2].actions[2].per_neighbor[0].kind \
        is ActionKind.COOPERATE
    gain = (discounted_utility(t_lenient, 2, 1, cfg.params)
            - discounted_utility(t_honest, 2, 1, cfg.params))
    assert gain == cfg.params.delta ** 2


def test_lenient_evasive_clean_shadow_is_honest():
    from dynacct.protocols import LenientEvasiveUnsafe, _ShadowWorld
    sc = builtin("unsafe_three_agent")
    cfg = sc.sim_config(horizon=10)
    ctx = strategy_context(cfg, 2)
    shadow = _ShadowWorld(cfg.graph, cfg.family.observation,
                          {a: ctx.honest(a) for a in range(3)})
    machines = build_machines(cfg, honest_only=True)
    machines[2] = LenientEvasiveUnsafe(ctx.honest(2), shadow, cfg.graph)
    th = _simulate_machines(cfg, build_machines(cfg, honest_only=True))
    tl = _simulate_machines(cfg, machines)
    assert th.history.profiles == tl.history.profiles


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def test_build_strategy_unknown_name():
    sc = builtin("ring_connectivity")
    cfg = sc.sim_config(horizon=4)
    with pytest.raises(StrategyConfigError):
        build_strategy("sigma_mystery", strategy_context(cfg, 0))


def test_mode_mismatch_rejected():
    ring = ring_graph(4)
    fam = fam_const(ring, obs=ND)
    cfg = SimConfig(family=fam, member="g",
                    strategies={a: {"strategy": "sigma_val", "rho": 2}
                                for a in range(4)},
                    horizon=4, params=general_defaults())
    with pytest.raises(StrategyConfigError):
        build_machines(cfg)
