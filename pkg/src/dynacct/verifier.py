"""Run execution, exact expected utilities, and equilibrium verification.

Rounds are synchronous: every machine observes its round view, all actions
are drawn simultaneously, and outcomes (individual actions toward the agent
plus monitoring payloads, which defectors omit) are revealed at the end of
the round.

Randomisation is explicit.  A realised run draws each labelled Bernoulli
from a seed via SHA-256 (bit-exact across platforms and thread counts);
the enumerator instead forks the world at every draw, so probabilities are
exact rationals and leaf probabilities multiply along the path.

Expected utilities are computed to the configured horizon.  A branch whose
machines all report quiescence is absorbed: from there every agent
cooperates forever, and the remaining discounted utility is added in closed
form.  Gains between two continuations that both absorb before the horizon
are therefore exact even for the infinite game; the reported tolerance is
still the analytic tail bound the finite-horizon contract prescribes.

One-shot deviation checking enumerates the agent's information-set
occurrences up to a deviation window, deduplicated by (machine states,
graph phase).  That deduplication, and the conditioning of off-path
continuations on "only the observed deviator deviated", is sound for
machines whose monitoring state is independent of punish/cooperate draw
outcomes and whose utilities are additive per directed edge; every shipped
strategy declares the property, the checker refuses machines that do not.
Robustness depth 2 additionally explores information sets reached after a
prior unilateral deviation by the checked agent itself.  Punish-or-
cooperate substitutions are utility-equivalent for the shipped protocols
(garbage costs the sender exactly what the value costs, and punishing is
never accusable), so override enumeration ranges over send/defect/avoid
patterns per neighbour; the prescribed pattern itself reports gain zero.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .evolving_graph import (EvolvingGraph, GraphFamily, ObservationModel,
                             _reach_frontier, local_view)
from .game_core import (Action, ActionKind, ActionProfile, History, Mode,
                        Trace, UtilityParams, cooperation_tail,
                        discounted_utility, round_utility, tail_bound)
from .protocols import (AVOID, DEFECT, RandSource, StrategyConfigError,
                        StrategyContext, StrategyMachine, build_strategy)

AgentId = int


class EnumerationCapExceeded(RuntimeError):
    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(f"randomisation branching exceeds the {cap}-leaf cap; "
                         f"use monte_carlo_utility instead")


# ---------------------------------------------------------------------------
# Draw sources
# ---------------------------------------------------------------------------

class _HashDraws:
    """Seeded, platform-independent draw stream keyed by (agent, round, label)."""

    def __init__(self, seed: int):
        self.seed = seed

    def draw(self, agent: AgentId, rnd: int, label: str, p: Fraction) -> bool:
        key = f"{self.seed}|{agent}|{rnd}|{label}".encode()
        x = int.from_bytes(hashlib.sha256(key).digest(), "big")
        return x * p.denominator < p.numerator * (1 << 256)


class _NeedBranch(Exception):
    def __init__(self, p: Fraction):
        self.p = p


class _ScriptDraws:
    """Replays a script of outcomes; asks for a fork when it runs out."""

    def __init__(self, script: Sequence[bool]):
        self.script = list(script)
        self.cursor = 0
        self.prob = Fraction(1)

    def draw(self, agent: AgentId, rnd: int, label: str, p: Fraction) -> bool:
        if not (0 < p < 1):
            raise ValueError(f"degenerate draw probability {p} for {label}")
        if self.cursor >= len(self.script):
            raise _NeedBranch(p)
        out = self.script[self.cursor]
        self.cursor += 1
        self.prob *= p if out else 1 - p
        return out


class _FixedDraws:
    """Constant outcomes; only valid when state is draw-independent."""

    def __init__(self, value: bool = False):
        self.value = value

    def draw(self, agent, rnd, label, p) -> bool:
        return self.value


class _BoundRand(RandSource):
    def __init__(self, impl, agent: AgentId, rnd: int):
        self.impl = impl
        self.agent = agent
        self.rnd = rnd

    def bernoulli(self, label: str, p: Fraction) -> bool:
        p = Fraction(p)
        if p <= 0:
            return False
        if p >= 1:
            return True
        return self.impl.draw(self.agent, self.rnd, label, p)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    family: GraphFamily
    member: str
    strategies: dict[AgentId, object]
    horizon: int
    params: UtilityParams
    seed: int = 0
    record_state: bool = False
    enum_cap: int = 10 ** 6

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        missing = set(range(self.family.n)) - set(self.strategies)
        if missing:
            raise ValueError(f"agents without strategies: {sorted(missing)}")

    @property
    def graph(self) -> EvolvingGraph:
        return self.family.member(self.member)


def _strip_deviation(spec) -> object:
    if isinstance(spec, Mapping) and "deviation" in spec:
        base = spec["deviation"].get("base")
        if base is None:
            raise StrategyConfigError(
                "deviation spec needs a 'base' to define the honest profile")
        return base
    return spec


def strategy_context(cfg: SimConfig, me: AgentId) -> StrategyContext:
    def honest(agent: AgentId) -> StrategyMachine:
        ctx = StrategyContext(n=cfg.family.n, me=agent, params=cfg.params,
                              observation=cfg.family.observation,
                              member=cfg.graph, honest_factory=None)
        return build_strategy(_strip_deviation(cfg.strategies[agent]), ctx)

    return StrategyContext(n=cfg.family.n, me=me, params=cfg.params,
                           observation=cfg.family.observation,
                           member=cfg.graph, honest_factory=honest)


def build_machines(cfg: SimConfig, honest_only: bool = False,
                   ) -> dict[AgentId, StrategyMachine]:
    machines = {}
    for a in sorted(cfg.strategies):
        spec = cfg.strategies[a]
        if honest_only:
            spec = _strip_deviation(spec)
        m = build_strategy(spec, strategy_context(cfg, a))
        if m.mode is not cfg.params.mode:
            raise StrategyConfigError(
                f"agent {a}: strategy mode {m.mode.value} != params mode "
                f"{cfg.params.mode.value}")
        machines[a] = m
    return machines


# ---------------------------------------------------------------------------
# Round engine
# ---------------------------------------------------------------------------

ActionHook = Callable[[int, AgentId, dict], dict]


def _play_round(graph: EvolvingGraph, obs: ObservationModel,
                machines: dict[AgentId, StrategyMachine],
                params: UtilityParams, m: int, draws,
                action_hook: Optional[ActionHook] = None):
    rg = graph.at(m)
    views = {i: local_view(graph, i, m, obs) for i in machines}
    for i in sorted(machines):
        machines[i].begin_round(views[i])
    payloads = {i: {j: machines[i].payload_for(j)
                    for j in sorted(views[i].neighbors)}
                for i in sorted(machines)}
    raw = {}
    for i in sorted(machines):
        a = machines[i].act(_BoundRand(draws, i, m))
        if set(a) != set(views[i].neighbors):
            raise ValueError(
                f"agent {i} round {m}: action keys {sorted(a)} != "
                f"neighbours {sorted(views[i].neighbors)}")
        if action_hook is not None:
            a = action_hook(m, i, a)
        raw[i] = a
    profile = ActionProfile(m, {i: Action(i, m, raw[i]) for i in raw})
    profile.check(rg, params.mode)
    utils = {i: round_utility(i, profile, rg, params) for i in sorted(machines)}
    for i in sorted(machines):
        inbox = {}
        for j in sorted(views[i].neighbors):
            a_ji = profile.individual(j, i)
            pay = payloads[j][i] if a_ji.kind is not ActionKind.DEFECT else None
            inbox[j] = (a_ji, pay)
        machines[i].end_round(raw[i], inbox)
    return profile, utils


def simulate(cfg: SimConfig) -> Trace:
    """One realised run to the horizon under the seeded draw stream."""
    machines = build_machines(cfg)
    graph = cfg.graph
    draws = _HashDraws(cfg.seed)
    history = History(graph=graph)
    per_round: dict[tuple[AgentId, int], Fraction] = {}
    state_log: Optional[dict] = {} if cfg.record_state else None
    for m in range(1, cfg.horizon + 1):
        profile, utils = _play_round(graph, cfg.family.observation, machines,
                                     cfg.params, m, draws)
        history.append(profile)
        for i, u in utils.items():
            per_round[(i, m)] = u
        if state_log is not None:
            for i in sorted(machines):
                state_log[(i, m)] = machines[i].snapshot()
    return Trace(history=history, per_round_utilities=per_round,
                 rng_seed=cfg.seed, state_log=state_log)


# ---------------------------------------------------------------------------
# Exact branch enumeration
# ---------------------------------------------------------------------------

@dataclass
class _Leaf:
    prob: Fraction
    utils: dict[tuple[AgentId, int], Fraction]
    absorbed_at: Optional[int]
    profiles: Optional[dict[int, ActionProfile]] = None


class _Enumerator:
    """Depth-first exact enumeration of all runs of a machine profile."""

    def __init__(self, graph: EvolvingGraph, obs: ObservationModel,
                 params: UtilityParams,
                 machines: dict[AgentId, StrategyMachine],
                 start_round: int, horizon: int, cap: int,
                 absorb: bool = True,
                 action_hook: Optional[ActionHook] = None,
                 hook_until: int = 0,
                 condition: Sequence[ActionProfile] = (),
                 collect_profiles: bool = False):
        self.graph = graph
        self.obs = obs
        self.params = params
        self.machines = machines
        self.start = start_round
        self.horizon = horizon
        self.cap = cap
        self.absorb = absorb
        self.action_hook = action_hook
        self.hook_until = hook_until
        self.condition = list(condition)
        self.collect_profiles = collect_profiles
        self.count = 0

    def leaves(self) -> Iterable[_Leaf]:
        yield from self._rec(self.machines, self.start, Fraction(1), {},
                             {} if self.collect_profiles else None)

    def _emit(self, prob, utils, absorbed, profiles) -> _Leaf:
        self.count += 1
        if self.count > self.cap:
            raise EnumerationCapExceeded(self.cap)
        return _Leaf(prob=prob, utils=utils, absorbed_at=absorbed,
                     profiles=profiles)

    def _round_scripts(self, machines, m) -> list[tuple[list[bool], Fraction]]:
        """All draw scripts that complete round m's action phase."""
        stack: list[list[bool]] = [[]]
        done: list[tuple[list[bool], Fraction]] = []
        while stack:
            script = stack.pop()
            draws = _ScriptDraws(script)
            try:
                for i in sorted(machines):
                    machines[i].act(_BoundRand(draws, i, m))
            except _NeedBranch as nb:
                stack.append(script + [False])
                stack.append(script + [True])
                continue
            done.append((script, draws.prob))
        return done

    def _rec(self, machines, m, prob, utils, profiles):
        while True:
            if m > self.horizon:
                yield self._emit(prob, utils, None, profiles)
                return
            blocked = m <= max(self.hook_until, len(self.condition))
            if self.absorb and not blocked and all(
                    machines[i].is_quiescent() for i in machines):
                yield self._emit(prob, utils, m, profiles)
                return
            rg = self.graph.at(m)
            views = {i: local_view(self.graph, i, m, self.obs) for i in machines}
            for i in sorted(machines):
                machines[i].begin_round(views[i])
            scripts = self._round_scripts(machines, m)
            if not scripts:
                raise EnumerationCapExceeded(self.cap)
            for si, (script, p) in enumerate(scripts):
                last = si == len(scripts) - 1
                ms = machines if last else copy.deepcopy(machines)
                profile, round_utils = _play_round(
                    self.graph, self.obs, ms, self.params, m,
                    _ScriptDraws(script), self.action_hook)
                if m <= len(self.condition) and profile != self.condition[m - 1]:
                    continue
                nu = dict(utils) if not last else utils
                for i, u in round_utils.items():
                    nu[(i, m)] = u
                np = None
                if profiles is not None:
                    np = dict(profiles) if not last else profiles
                    np[m] = profile
                if last:
                    utils, profiles = nu, np
                    prob *= p
                    m += 1
                    break
                yield from self._rec(ms, m + 1, prob * p, nu, np)
            else:
                return  # every script was pruned by the condition


def _leaf_eu(leaf: _Leaf, graph: EvolvingGraph, params: UtilityParams,
             i: AgentId, from_round: int, horizon: int) -> Fraction:
    d = params.delta
    total = Fraction(0)
    for (a, m), u in leaf.utils.items():
        if a == i and m >= from_round:
            total += d ** (m - from_round) * u
    if leaf.absorbed_at is not None and leaf.absorbed_at <= horizon:
        start = max(leaf.absorbed_at, from_round)
        total += d ** (start - from_round) * cooperation_tail(
            graph, i, params, start, horizon)
    return total


def expected_utility(cfg: SimConfig, i: AgentId,
                     condition: Sequence[ActionProfile] = (),
                     from_round: Optional[int] = None) -> Fraction:
    """Exact expected discounted utility of i over the branch tree,
    conditioned on a realised history prefix (expectation renormalised to
    the branches consistent with it); discounting starts at the round after
    the prefix unless ``from_round`` says otherwise."""
    if from_round is None:
        from_round = len(condition) + 1
    machines = build_machines(cfg)
    enum = _Enumerator(cfg.graph, cfg.family.observation, cfg.params, machines,
                       1, cfg.horizon, cfg.enum_cap, condition=condition)
    total = Fraction(0)
    mass = Fraction(0)
    for leaf in enum.leaves():
        mass += leaf.prob
        total += leaf.prob * _leaf_eu(leaf, cfg.graph, cfg.params, i,
                                      from_round, cfg.horizon)
    if mass == 0:
        raise ValueError("condition is inconsistent with the strategy profile")
    return total / mass


def monte_carlo_utility(cfg: SimConfig, i: AgentId,
                        samples: int) -> tuple[Fraction, float]:
    """Sample mean and standard error of the discounted utility over
    independent seeded runs (seeds cfg.seed, cfg.seed+1, ...)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    values = []
    for k in range(samples):
        run_cfg = SimConfig(family=cfg.family, member=cfg.member,
                            strategies=cfg.strategies, horizon=cfg.horizon,
                            params=cfg.params, seed=cfg.seed + k,
                            enum_cap=cfg.enum_cap)
        t = simulate(run_cfg)
        values.append(discounted_utility(t, i, 1, cfg.params))
    mean = sum(values, Fraction(0)) / samples
    if samples == 1:
        return mean, 0.0
    var = sum((float(v - mean)) ** 2 for v in values) / (samples - 1)
    return mean, math.sqrt(var / samples)


def expected_punishments(cfg: SimConfig, i: AgentId, from_round: int, rho: int,
                         condition: Sequence[ActionProfile] = ()) -> Fraction:
    """Expected number of punishments received by i over the i-edges in
    rounds (from_round, from_round + rho), conditioned on the prefix."""
    machines = build_machines(cfg)
    end = min(from_round + rho - 1, cfg.horizon)
    enum = _Enumerator(cfg.graph, cfg.family.observation, cfg.params, machines,
                       1, end, cfg.enum_cap, absorb=False,
                       condition=condition, collect_profiles=True)
    total = Fraction(0)
    mass = Fraction(0)
    for leaf in enum.leaves():
        mass += leaf.prob
        hits = 0
        for m in range(from_round + 1, end + 1):
            profile = leaf.profiles[m]
            for j in sorted(cfg.graph.at(m).neighbors(i)):
                a = profile.individual(j, i)
                if a.kind is ActionKind.PUNISH or (
                        a.kind is ActionKind.PROP_PUNISH and a.c > 0):
                    hits += 1
        total += leaf.prob * hits
    if mass == 0:
        raise ValueError("condition is inconsistent with the strategy profile")
    return total / mass


@dataclass
class PunishLedger:
    """Per (agent, round) expected punishments over the next rho-1 rounds."""

    rho: int
    entries: dict[tuple[AgentId, int], Fraction] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"rho": self.rho,
                "entries": {f"{a}@{m}": str(v)
                            for (a, m), v in sorted(self.entries.items())}}


def punish_ledger(cfg: SimConfig, i: AgentId, rounds: Iterable[int],
                  rho: int) -> PunishLedger:
    led = PunishLedger(rho=rho)
    for m in rounds:
        led.entries[(i, m)] = expected_punishments(cfg, i, m, rho)
    return led


# ---------------------------------------------------------------------------
# Branch tree (explicit structure, mainly for inspection and tests)
# ---------------------------------------------------------------------------

@dataclass
class BranchLeaf:
    prob: Fraction
    trace: Trace


@dataclass
class BranchNode:
    agent: AgentId
    round: int
    label: str
    children: list[tuple[Fraction, object]]  # (edge probability, node or leaf)


@dataclass
class BranchTree:
    root: object  # BranchNode or BranchLeaf
    leaves: list[BranchLeaf]

    def total_probability(self) -> Fraction:
        return sum((l.prob for l in self.leaves), Fraction(0))


def build_branch_tree(cfg: SimConfig, max_leaves: int = 10 ** 4) -> BranchTree:
    """Materialise the full randomisation tree of the profile to the horizon."""
    machines = build_machines(cfg)
    leaves: list[BranchLeaf] = []

    class _Probe:
        """Draw source that records the first unresolved draw point."""

        def __init__(self, script):
            self.inner = _ScriptDraws(script)
            self.pending: Optional[tuple[AgentId, int, str, Fraction]] = None

        def draw(self, agent, rnd, label, p):
            try:
                return self.inner.draw(agent, rnd, label, p)
            except _NeedBranch:
                self.pending = (agent, rnd, label, p)
                raise

    def rec(machines, m, prob, history, utils, scripts_prefix):
        if len(leaves) > max_leaves:
            raise EnumerationCapExceeded(max_leaves)
        if m > cfg.horizon:
            trace = Trace(history=history, per_round_utilities=utils,
                          rng_seed=cfg.seed)
            leaf = BranchLeaf(prob=prob, trace=trace)
            leaves.append(leaf)
            return leaf
        rg_views = {i: local_view(cfg.graph, i, m, cfg.family.observation)
                    for i in machines}
        for i in sorted(machines):
            machines[i].begin_round(rg_views[i])
        probe = _Probe(scripts_prefix)
        try:
            for i in sorted(machines):
                machines[i].act(_BoundRand(probe, i, m))
        except _NeedBranch:
            agent, rnd, label, p = probe.pending
            node = BranchNode(agent=agent, round=rnd, label=label, children=[])
            for outcome, ep in ((True, p), (False, 1 - p)):
                ms = copy.deepcopy(machines)
                child = rec(ms, m, prob * ep, copy.deepcopy(history),
                            dict(utils), scripts_prefix + [outcome])
                node.children.append((ep, child))
            return node
        profile, round_utils = _play_round(
            cfg.graph, cfg.family.observation, machines, cfg.params, m,
            _ScriptDraws(scripts_prefix))
        history.append(profile)
        for i, u in round_utils.items():
            utils[(i, m)] = u
        return rec(machines, m + 1, prob, history, utils, [])

    root = rec(machines, 1, Fraction(1), History(graph=cfg.graph), {}, [])
    return BranchTree(root=root, leaves=leaves)


# ---------------------------------------------------------------------------
# One-shot deviation verification
# ---------------------------------------------------------------------------

@dataclass
class EquilibriumReport:
    max_gain: Fraction
    witness: Optional[dict]
    tolerance: Fraction
    verdict: bool
    checks: int = 0

    def to_json(self) -> dict:
        return {
            "max_gain": str(self.max_gain),
            "max_gain_float": float(self.max_gain),
            "witness": self.witness,
            "tolerance": str(self.tolerance),
            "tolerance_float": float(self.tolerance),
            "verdict": "pass" if self.verdict else "fail",
            "checks": self.checks,
        }


def _phase(graph: EvolvingGraph, m: int):
    P, L = len(graph.prefix), len(graph.cycle)
    return ("p", m) if m <= P else ("c", (m - P - 1) % L)


def _world_key(graph, machines, m):
    return (_phase(graph, m),
            tuple(machines[a].state_key(m) for a in sorted(machines)))


def _require_verifiable(machines):
    for a, mach in machines.items():
        if not mach.draw_independent_state:
            raise StrategyConfigError(
                f"agent {a}: {type(mach).__name__} does not declare "
                f"draw-independent state; one-shot verification unsupported")


def _override_patterns(mode: Mode, nbrs: Sequence[AgentId]):
    """Send/defect(/avoid) patterns per neighbour; 'send' keeps the
    prescription.  The all-send pattern comes first (the conform class)."""
    opts = ["send", "defect"] + (["avoid"] if mode is Mode.VALUABLE else [])
    patterns: list[dict] = [{}]
    for j in nbrs:
        patterns = [{**p, j: o} for p in patterns for o in opts]
    patterns.sort(key=lambda p: sum(p[j] != "send" for j in nbrs))
    return patterns


def _pattern_hook(agent: AgentId, at_round: int, pattern: Mapping[AgentId, str]):
    from .game_core import COOPERATE

    def hook(m, a, actions):
        if m != at_round or a != agent:
            return actions
        out = dict(actions)
        for j, o in pattern.items():
            if j not in out:
                continue
            if o == "defect":
                out[j] = DEFECT
            elif o == "avoid":
                out[j] = AVOID
            elif not out[j].sends:
                out[j] = COOPERATE
        return out

    return hook


def _action_class(a) -> str:
    if a.kind is ActionKind.DEFECT:
        return "defect"
    if a.kind is ActionKind.AVOID:
        return "avoid"
    return "send"


class _OneShotChecker:
    def __init__(self, cfg: SimConfig, i: AgentId):
        self.cfg = cfg
        self.i = i
        self.graph = cfg.graph
        self.n = cfg.family.n
        self.params = cfg.params
        self.horizon = cfg.horizon
        self.checks = 0
        self.results: list[tuple[Fraction, Fraction, dict]] = []

    def _walk_contexts(self, machines, start: int, end: int, origin: str,
                       seen: set, out: list,
                       hook: Optional[ActionHook] = None, hook_round: int = 0):
        """Step the profile with fixed draw outcomes (valid because state is
        draw-independent), collecting deduplicated pre-action world states."""
        ms = copy.deepcopy(machines)
        draws = _FixedDraws(False)
        for m in range(start, end + 1):
            if m > hook_round:
                key = _world_key(self.graph, ms, m)
                if key not in seen:
                    seen.add(key)
                    out.append((m, copy.deepcopy(ms), origin))
            if m > self.horizon:
                break
            _play_round(self.graph, self.cfg.family.observation, ms,
                        self.params, m, draws, action_hook=hook)

    def _continuation_eu(self, machines, m2: int,
                         pattern: Optional[Mapping[AgentId, str]]) -> Fraction:
        hook = None
        hook_until = 0
        if pattern is not None:
            hook = _pattern_hook(self.i, m2, pattern)
            hook_until = m2
        enum = _Enumerator(self.graph, self.cfg.family.observation, self.params,
                           copy.deepcopy(machines), m2, self.horizon,
                           self.cfg.enum_cap, absorb=True, action_hook=hook,
                           hook_until=hook_until)
        total = Fraction(0)
        for leaf in enum.leaves():
            total += leaf.prob * _leaf_eu(leaf, self.graph, self.params,
                                          self.i, m2, self.horizon)
        return total

    def _prescribed_classes(self, machines, m2: int) -> dict[AgentId, str]:
        probe = copy.deepcopy(machines[self.i])
        probe.begin_round(local_view(self.graph, self.i, m2,
                                     self.cfg.family.observation))
        action = probe.act(_BoundRand(_FixedDraws(False), self.i, m2))
        return {j: _action_class(a) for j, a in action.items()}

    def check_context(self, m2: int, machines, origin: str):
        nbrs = sorted(self.graph.at(m2).neighbors(self.i))
        if not nbrs:
            return
        prescribed = self._prescribed_classes(machines, m2)
        conform = self._continuation_eu(machines, m2, None)
        for pattern in _override_patterns(self.params.mode, nbrs):
            if pattern == prescribed:
                gain = Fraction(0)   # forcing the prescribed class changes nothing
            else:
                gain = self._continuation_eu(machines, m2, pattern) - conform
            tol = tail_bound(self.params, self.n, self.horizon - m2)
            self.checks += 1
            self.results.append((gain, tol, {
                "agent": self.i, "round": m2, "origin": origin,
                "override": {str(j): o for j, o in sorted(pattern.items())},
            }))

    def add_candidate(self, spec: Mapping, honest_eu_cache: dict):
        ctx = strategy_context(self.cfg, self.i)
        machine = build_strategy({"deviation": dict(spec)}, ctx)
        machines = build_machines(self.cfg, honest_only=True)
        machines[self.i] = machine
        enum = _Enumerator(self.graph, self.cfg.family.observation, self.params,
                           machines, 1, self.horizon, self.cfg.enum_cap)
        eu_dev = Fraction(0)
        for leaf in enum.leaves():
            eu_dev += leaf.prob * _leaf_eu(leaf, self.graph, self.params,
                                           self.i, 1, self.horizon)
        if self.i not in honest_eu_cache:
            honest = build_machines(self.cfg, honest_only=True)
            henum = _Enumerator(self.graph, self.cfg.family.observation,
                                self.params, honest, 1, self.horizon,
                                self.cfg.enum_cap)
            honest_eu_cache[self.i] = sum(
                (l.prob * _leaf_eu(l, self.graph, self.params, self.i, 1,
                                   self.horizon) for l in henum.leaves()),
                Fraction(0))
        m_dev = getattr(machine, "first_deviation_round", None) or 1
        gain = (eu_dev - honest_eu_cache[self.i]) / self.params.delta ** (m_dev - 1)
        tol = tail_bound(self.params, self.n, self.horizon - m_dev)
        self.checks += 1
        self.results.append((gain, tol, {
            "agent": self.i, "round": m_dev, "origin": "candidate",
            "override": getattr(machine, "label", type(machine).__name__),
        }))


def verify_one_shot(cfg: SimConfig, i: AgentId, robust_depth: int = 2,
                    candidates: Sequence[Mapping] = (),
                    on_window: Optional[int] = None,
                    prior_window: Optional[int] = None,
                    dev_window: Optional[int] = None) -> EquilibriumReport:
    """Enumerate one-shot deviations of agent i against the honest profile
    and report the largest expected-utility gain.

    Robustness depth >= 2 also explores information sets reached after one
    prior unilateral deviation by i itself.  User-supplied deviation specs
    are evaluated as whole-run candidates against the honest profile.
    """
    honest = build_machines(cfg, honest_only=True)
    _require_verifiable(honest)
    graph = cfg.graph
    n = cfg.family.n
    P, L = len(graph.prefix), len(graph.cycle)
    span = n * n + n
    if on_window is None:
        on_window = min(cfg.horizon - 1, P + 2 * L + span + 2)
    if prior_window is None:
        prior_window = min(cfg.horizon - 1, P + L + 2 * n)
    if dev_window is None:
        dev_window = span + L + 2

    checker = _OneShotChecker(cfg, i)
    seen: set = set()
    contexts: list = []
    checker._walk_contexts(honest, 1, on_window, "on-path", seen, contexts)

    if robust_depth >= 2:
        prior_seen: set = set()
        prior_points: list = []
        checker._walk_contexts(honest, 1, prior_window, "prior", prior_seen,
                               prior_points)
        for (m1, state, _) in prior_points:
            nbrs1 = sorted(graph.at(m1).neighbors(i))
            if not nbrs1:
                continue
            for pattern in _override_patterns(cfg.params.mode, nbrs1):
                if all(o == "send" for o in pattern.values()):
                    continue
                desc = ",".join(f"{j}:{o}" for j, o in sorted(pattern.items())
                                if o != "send")
                end = min(m1 + dev_window, cfg.horizon - 1)
                checker._walk_contexts(
                    state, m1, end, f"after own {desc}@{m1}", seen, contexts,
                    hook=_pattern_hook(i, m1, pattern), hook_round=m1)

    for (m2, state, origin) in contexts:
        checker.check_context(m2, state, origin)

    honest_eu_cache: dict = {}
    for spec in candidates:
        checker.add_candidate(spec, honest_eu_cache)

    if not checker.results:
        zero = Fraction(0)
        return EquilibriumReport(max_gain=zero, witness=None,
                                 tolerance=tail_bound(cfg.params, n, cfg.horizon),
                                 verdict=True, checks=0)
    def _prefer(r):
        # break exact ties toward candidate machines: their witnesses carry
        # the sustained deviation rather than its first one-shot prefix
        return (r[0] - r[1], r[2].get("origin") == "candidate")

    best = max(checker.results, key=_prefer)
    top = max(checker.results, key=lambda r: (r[0], r[2].get("origin") == "candidate"))
    verdict = all(g <= t for (g, t, _) in checker.results)
    gain, tol, witness = top if verdict else best
    return EquilibriumReport(max_gain=gain, witness=witness, tolerance=tol,
                             verdict=verdict, checks=checker.checks)


def verify_cooperation(cfg: SimConfig) -> tuple[bool, Optional[dict]]:
    """On-path accountability clause: with the honest profile installed,
    every realised individual action is cooperation."""
    machines = build_machines(cfg, honest_only=True)
    enum = _Enumerator(cfg.graph, cfg.family.observation, cfg.params, machines,
                       1, cfg.horizon, cfg.enum_cap, collect_profiles=True)
    for leaf in enum.leaves():
        for m, profile in sorted(leaf.profiles.items()):
            for a in sorted(profile.actions):
                for j, ia in sorted(profile.actions[a].per_neighbor.items()):
                    if ia.kind is not ActionKind.COOPERATE:
                        return False, {"agent": a, "round": m, "toward": j,
                                       "action": ia.kind.value}
    return True, None


# ---------------------------------------------------------------------------
# Paired-trace fact assertions for the bounded tally protocol
# ---------------------------------------------------------------------------

@dataclass
class FactReport:
    facts: dict[str, Optional[str]]

    @property
    def passed(self) -> bool:
        return all(v is None for v in self.facts.values())

    def to_json(self) -> dict:
        return {"passed": self.passed,
                "facts": {k: ("pass" if v is None else v)
                          for k, v in sorted(self.facts.items())}}


FACT_NAMES = ("F1_accusation_accuracy", "F2_pend_convergence",
              "F3_other_rounds_untouched", "F4_pend_dominance",
              "F5_round_utility_dominance", "F6_punishment_mass_window",
              "bounded_state")


def run_paired_defection(cfg: SimConfig, i: AgentId, m: int,
                         targets) -> tuple[Trace, Trace]:
    """Conforming and deviating traces differing only in i's round-m action
    (defecting ``targets``, or all neighbours), sharing seed and state logs."""
    from .protocols import ALL_NEIGHBORS, ScheduledDefector

    base_cfg = SimConfig(family=cfg.family, member=cfg.member,
                         strategies=cfg.strategies, horizon=cfg.horizon,
                         params=cfg.params, seed=cfg.seed, record_state=True,
                         enum_cap=cfg.enum_cap)
    conform = _simulate_machines(base_cfg, build_machines(base_cfg, honest_only=True))
    sched = ALL_NEIGHBORS if targets == ALL_NEIGHBORS else frozenset(targets)
    machines = build_machines(base_cfg, honest_only=True)
    machines[i] = ScheduledDefector(machines[i], {m: sched}, sincere=True,
                                    label=f"defect@{m}")
    return conform, _simulate_machines(base_cfg, machines)


def _simulate_machines(cfg: SimConfig, machines) -> Trace:
    graph = cfg.graph
    draws = _HashDraws(cfg.seed)
    history = History(graph=graph)
    per_round: dict[tuple[AgentId, int], Fraction] = {}
    state_log: dict = {}
    for m in range(1, cfg.horizon + 1):
        profile, utils = _play_round(graph, cfg.family.observation, machines,
                                     cfg.params, m, draws)
        history.append(profile)
        for i, u in utils.items():
            per_round[(i, m)] = u
        for i in sorted(machines):
            state_log[(i, m)] = machines[i].snapshot()
    return Trace(history=history, per_round_utilities=per_round,
                 rng_seed=cfg.seed, state_log=state_log)


def _snap_pend(snap: dict) -> dict[tuple[int, int], int]:
    return {tuple(k): v for k, v in snap.get("pend", [])}


def _snap_acc(snap: dict) -> dict[tuple[int, int, int], str]:
    return {tuple(k): v for k, v in snap.get("acc", [])}


def _represented_round(c: int, end_round: int, n: int) -> int:
    """Absolute round currently represented by pend residue c after the
    end-of-round ``end_round`` update: the unique round in
    [end_round-n+2, end_round+1] congruent to c mod n."""
    lo = end_round - n + 2
    return lo + ((c - lo) % n)


def assert_gen_facts(cfg: SimConfig, paired: tuple[Trace, Trace],
                     m: int) -> FactReport:
    """Check the six single-deviation invariants of the bounded tally
    protocol on a (conforming, deviating) trace pair.

    Exact: tallies are compared as integers, expected punishment masses as
    rationals.  F2 and F6 presuppose a connectivity-restricted family (the
    dissemination arguments need it); on other families they fail honestly.
    """
    conform, deviate = paired
    n = cfg.family.n
    graph = cfg.graph
    params = cfg.params
    if conform.state_log is None or deviate.state_log is None:
        raise ValueError("paired traces need state logs (record_state=True)")
    last = min(conform.last_round, deviate.last_round)
    found = _find_deviation(conform, deviate, m, last)
    facts: dict[str, Optional[str]] = {k: None for k in FACT_NAMES}
    if found is None:
        return FactReport(facts=facts)   # conforming pair: vacuously fine
    i, defected = found

    deg_m = graph.at(m).degree(i)
    residue = m % n

    # F1: accusation accuracy against the interference-free reachability oracle
    for M in range(m, min(m + n - 2, last) + 1):
        for v in range(n):
            if v == i:
                continue
            interacted = graph.at(m).has_edge(i, v)
            holders = (_reach_frontier(graph, [v], m + 1, M + 1, exclude=i)
                       if interacted else set())
            for l in range(n):
                if l == i:
                    continue
                acc = _snap_acc(deviate.state_log[(l, M)])
                val = acc.get((v, i, m))
                if not interacted or l not in holders:
                    if val is not None:
                        facts["F1_accusation_accuracy"] = (
                            f"agent {l} holds ({v},{i},{m}) at end of {M} "
                            f"without an information path")
                        break
                else:
                    want = "bad" if v in defected else "good"
                    if val != want:
                        facts["F1_accusation_accuracy"] = (
                            f"agent {l} at end of {M}: report ({v},{i},{m}) "
                            f"= {val}, expected {want}")
                        break
            if facts["F1_accusation_accuracy"]:
                break
        if facts["F1_accusation_accuracy"]:
            break

    # F2: pend about i converges to y + max(x - deg, 0) at round m+n
    if m + n - 1 <= last:
        x = max(_snap_pend(deviate.state_log[(o, m)]).get((i, residue), 0)
                for o in range(n) if o != i)
        y = deg_m if defected else 0
        want = y + max(x - deg_m, 0)
        for l in range(n):
            if l == i:
                continue
            got = _snap_pend(deviate.state_log[(l, m + n - 1)]).get(
                (i, (m + n) % n), 0)
            if got != want:
                facts["F2_pend_convergence"] = (
                    f"agent {l}: pend[i][{m + n}] = {got}, expected {want}")
                break
    else:
        facts["F2_pend_convergence"] = "horizon too short to reach round m+n-1"

    # F3/F4: deviator-subject entries for rounds other than m are untouched,
    # and the deviating run's tallies dominate.  Entries about the deviator
    # never travel through the deviator (senders cannot testify about
    # themselves), so these are exact; third-party gossip may lag one round
    # behind while the deviator's payload is suppressed and is not compared.
    for M in range(m, last + 1):
        for l in range(n):
            if l == i:
                continue
            pc = _snap_pend(conform.state_log[(l, M)])
            pd = _snap_pend(deviate.state_log[(l, M)])
            for key in sorted((set(pc) | set(pd))):
                s, c = key
                if s != i:
                    continue
                rep = _represented_round(c, M, n)
                same_needed = not (rep >= m and (rep - m) % n == 0)
                if same_needed and pc.get(key, 0) != pd.get(key, 0):
                    facts["F3_other_rounds_untouched"] = (
                        f"agent {l} end of {M}: pend[{s}][{rep}] differs "
                        f"({pc.get(key, 0)} vs {pd.get(key, 0)})")
                if pd.get(key, 0) < pc.get(key, 0):
                    facts["F4_pend_dominance"] = (
                        f"agent {l} end of {M}: pend[{s}] {pd.get(key, 0)} < "
                        f"{pc.get(key, 0)}")
            ac = _snap_acc(conform.state_log[(l, M)])
            ad = _snap_acc(deviate.state_log[(l, M)])
            for key in sorted(set(ac) | set(ad)):
                v, s, r = key
                if s != i or r == m:
                    continue
                if ac.get(key) != ad.get(key):
                    facts["F3_other_rounds_untouched"] = (
                        f"agent {l} end of {M}: report {key} differs "
                        f"({ac.get(key)} vs {ad.get(key)})")

    # F5/F6: expected punish mass toward i, computed from the tallies
    def expected_hits(trace: Trace, M: int) -> Fraction:
        rg = graph.at(M)
        total = Fraction(0)
        deg_i = rg.degree(i)
        if deg_i == 0:
            return total
        for j in sorted(rg.neighbors(i)):
            pend = _snap_pend(trace.state_log[(j, M - 1)]).get((i, M % n), 0)
            total += min(Fraction(1), Fraction(pend, deg_i))
        return total

    extra_in_window = Fraction(0)
    for M in range(m + 1, last + 1):
        hc = expected_hits(conform, M)
        hd = expected_hits(deviate, M)
        if hd < hc:
            facts["F5_round_utility_dominance"] = (
                f"round {M}: deviating punish mass {hd} < conforming {hc}")
            break
        if M <= m + n * n:
            extra_in_window += hd - hc
        elif hd != hc:
            facts["F6_punishment_mass_window"] = (
                f"round {M} > m+n^2 still differs ({hd} vs {hc})")
            break
    if facts["F6_punishment_mass_window"] is None and defected:
        want = Fraction(deg_m)
        if last >= m + n * n and extra_in_window != want:
            facts["F6_punishment_mass_window"] = (
                f"extra expected punishments {extra_in_window} != deg {want}")
        elif params.pi * extra_in_window < params.beta * extra_in_window:
            facts["F6_punishment_mass_window"] = "pi < beta on punish mass"

    # boundedness: tallies inside [0, n-1], state within the static bound
    from .protocols import SigmaGen
    bound = SigmaGen.static_state_bound(n)
    for trace in (conform, deviate):
        for (l, M), snap in sorted(trace.state_log.items()):
            pend = _snap_pend(snap)
            if any(v > n - 1 or v < 0 for v in pend.values()):
                facts["bounded_state"] = (
                    f"agent {l} end of {M}: tally outside [0, n-1]")
                break
            if len(pend) + len(_snap_acc(snap)) > bound:
                facts["bounded_state"] = f"agent {l} state exceeds {bound} entries"
                break
        if facts["bounded_state"]:
            break

    return FactReport(facts=facts)


def _find_deviation(conform: Trace, deviate: Trace, m: int,
                    last: int) -> Optional[tuple[AgentId, set[AgentId]]]:
    for M in range(1, m):
        if conform.history.profiles[M - 1] != deviate.history.profiles[M - 1]:
            raise ValueError(f"traces diverge at round {M} before the deviation")
    pc = conform.history.profiles[m - 1]
    pd = deviate.history.profiles[m - 1]
    devs = [a for a in sorted(pc.actions)
            if pc.actions[a] != pd.actions[a]]
    if not devs:
        return None
    if len(devs) > 1:
        raise ValueError(f"expected exactly one deviating agent at round {m}, "
                         f"found {devs}")
    i = devs[0]
    defected = {j for j, a in pd.actions[i].per_neighbor.items()
                if a.kind is ActionKind.DEFECT
                and pc.actions[i].per_neighbor[j].kind is not ActionKind.DEFECT}
    return i, defected
