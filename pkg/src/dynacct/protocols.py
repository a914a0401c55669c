"""Strategy machines: the equilibrium protocols and deviation wrappers.

A machine owns one agent's private protocol state.  The round contract is:

* ``begin_round(view)`` delivers the round topology observation (and is the
  only pre-action mutation point),
* ``payload_for(j)`` returns the monitoring message content for neighbour j
  as of the start of the round,
* ``act(rand)`` returns the per-neighbour individual actions and must be
  pure: no state mutation, all randomness through ``rand`` with stable
  labels (the branch enumerator replays it),
* ``end_round(own_action, inbox)`` reveals the neighbours' individual
  actions toward the agent plus their payloads (omitted by defectors) and
  advances the state.

Machines set ``draw_independent_state`` when their state evolution depends
only on which neighbours defected, never on punish/cooperate draw outcomes;
the equilibrium verifier relies on that flag.

Protocol window conventions follow the monitoring designs: the
accusation-window protocols keep one report bit per (agent, round) for the
last ``rho`` rounds; the bounded tally protocol keeps per-subject pending
punishment counters per round residue class modulo n, and per-pair
interaction reports for the last n rounds, merged from non-subject senders
only (an agent can never influence the records that drive punishments
applied to itself).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence, Union

from .evolving_graph import (EvolvingGraph, LocalView, ObservationModel,
                             local_view)
from .game_core import (AVOID, COOPERATE, DEFECT, PUNISH, Action, ActionKind,
                        IndividualAction, Mode, UtilityParams, prop_punish)

AgentId = int


class StrategyConfigError(ValueError):
    """Strategy is incompatible with the scenario (mode, observation, family)."""


class RandSource:
    """Interface for labelled draws; implementations live in the verifier."""

    def bernoulli(self, label: str, p: Fraction) -> bool:  # pragma: no cover
        raise NotImplementedError


class _RefuseDraws(RandSource):
    def bernoulli(self, label: str, p: Fraction) -> bool:
        raise StrategyConfigError(
            "scripted evasive strategies need a deterministic honest profile")


class StrategyMachine:
    """Base class; subclasses fill in the round hooks they need."""

    mode: Mode = Mode.GENERAL
    draw_independent_state: bool = True
    uses_own_action: bool = False
    deterministic: bool = True

    def __init__(self, me: AgentId, n: int):
        self.me = me
        self.n = n
        self.round = 0
        self.view: Optional[LocalView] = None

    def clone(self) -> "StrategyMachine":
        return copy.deepcopy(self)

    def begin_round(self, view: LocalView):
        self.round = view.round
        self.view = view

    def payload_for(self, j: AgentId) -> Optional[dict]:
        return None

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        raise NotImplementedError

    def end_round(self, own_action: Mapping[AgentId, IndividualAction],
                  inbox: Mapping[AgentId, tuple[IndividualAction, Optional[dict]]]):
        pass

    def snapshot(self) -> dict:
        return {}

    def state_key(self, m: int):
        """Hashable round-relative state digest, for information-set dedup."""
        return ("opaque", id(self))

    def is_quiescent(self) -> bool:
        return False

    def state_size(self) -> int:
        return 0


# ---------------------------------------------------------------------------
# Accusation-window protocols
# ---------------------------------------------------------------------------

class _AccusationWindow(StrategyMachine):
    """Shared monitoring core: one report bit per (agent, round) within the
    last ``rho`` rounds; accusations spread by union, never from the accused.
    """

    def __init__(self, me: AgentId, n: int, rho: int):
        super().__init__(me, n)
        if rho < 1:
            raise StrategyConfigError("rho must be >= 1")
        self.rho = rho
        self.accusations: set[tuple[AgentId, int]] = set()

    def begin_round(self, view: LocalView):
        super().begin_round(view)
        lo = view.round - self.rho
        self.accusations = {(s, r) for (s, r) in self.accusations if r >= lo}

    def payload_for(self, j: AgentId) -> Optional[dict]:
        return {"acc": sorted(self.accusations)}

    def accusation_count(self, j: AgentId) -> int:
        lo = self.round - self.rho
        return sum(1 for (s, r) in self.accusations if s == j and lo <= r < self.round)

    def end_round(self, own_action, inbox):
        m = self.round
        lo = m + 1 - self.rho
        for j in sorted(inbox):
            act_ji, payload = inbox[j]
            if act_ji.kind is ActionKind.DEFECT:
                self.accusations.add((j, m))
            elif payload is not None:
                for (s, r) in payload.get("acc", ()):
                    # never accept what a sender says about itself, and never
                    # track reports about this agent's own behaviour
                    if s != j and s != self.me and lo <= r < m:
                        self.accusations.add((s, r))
        self.accusations = {(s, r) for (s, r) in self.accusations if r >= lo}

    def snapshot(self) -> dict:
        return {"accusations": sorted(self.accusations)}

    def state_key(self, m: int):
        return (type(self).__name__, self.rho,
                frozenset((s, m - r) for (s, r) in self.accusations))

    def is_quiescent(self) -> bool:
        return not self.accusations

    def state_size(self) -> int:
        return len(self.accusations)


class SigmaVal(_AccusationWindow):
    """Valuable-exchange protocol: exchange values plus the full report
    window every round, punish proportionally to the accusation count.

    The proportional weight is the number of accusation rounds against the
    neighbour inside the window, saturating at min(rho, n-1); weight zero is
    played as plain cooperation.
    """

    mode = Mode.VALUABLE

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        cap = min(self.rho, self.n - 1)
        out = {}
        for j in sorted(self.view.neighbors):
            out[j] = prop_punish(min(self.accusation_count(j), cap))
        return out


class AccusationPunisher(_AccusationWindow):
    """Safe matching punisher for general exchanges: cooperate, but play the
    active punishment toward any neighbour accused inside the window."""

    mode = Mode.GENERAL

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        return {j: (PUNISH if self.accusation_count(j) > 0 else COOPERATE)
                for j in sorted(self.view.neighbors)}


def sigma_val(me: AgentId, n: int, rho: int, params: UtilityParams) -> SigmaVal:
    if params.mode is not Mode.VALUABLE:
        raise StrategyConfigError("sigma_val needs valuable mode")
    return SigmaVal(me, n, rho)


# ---------------------------------------------------------------------------
# Bounded tally protocol (general exchanges under connectivity)
# ---------------------------------------------------------------------------

class SigmaGen(StrategyMachine):
    """General-exchange protocol with bounded per-subject punishment tallies.

    State:
      pend[(j, c)]   pending punishments for subject j in rounds == c mod n,
                     values in [0, n-1]
      acc[(v, s, r)] report by victim v about sender s for round r, "good"
                     or "bad"; absent means no interaction known; kept for
                     the last n rounds

    Round m: punish neighbour j with probability min(1, pend[j][m]/deg_j).
    End of round m: record own reports for m; merge pend (max, capped) and
    fill absent acc slots from non-defecting senders, rejecting anything a
    sender claims about itself and skipping the residue class of m; then,
    for m >= n, rebuild pend[j][m+1] from the fully disseminated round
    m-n+1 reports: drain by the reported degree, re-add it if anyone
    reported a defection.
    """

    mode = Mode.GENERAL

    def __init__(self, me: AgentId, n: int, _cap: bool = True,
                 _pend_payload_inflate: int = 0):
        super().__init__(me, n)
        self.pend: dict[tuple[AgentId, int], int] = {}
        self.acc: dict[tuple[AgentId, AgentId, int], str] = {}
        self._cap = _cap
        self._pend_payload_inflate = _pend_payload_inflate

    def begin_round(self, view: LocalView):
        if view.neighbor_degrees is None:
            raise StrategyConfigError("sigma_gen needs neighbour degrees")
        super().begin_round(view)

    def payload_for(self, j: AgentId) -> Optional[dict]:
        infl = self._pend_payload_inflate
        return {
            "pend": sorted((k, v + infl) for k, v in self.pend.items()),
            "acc": sorted(self.acc.items()),
        }

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        m = self.round
        out = {}
        for j in sorted(self.view.neighbors):
            pending = self.pend.get((j, m % self.n), 0)
            deg_j = self.view.neighbor_degrees[j]
            pr = min(Fraction(1), Fraction(pending, deg_j))
            if pr == 0:
                out[j] = COOPERATE
            elif pr == 1:
                out[j] = PUNISH
            else:
                out[j] = PUNISH if rand.bernoulli(f"punish[{j}]", pr) else COOPERATE
        return out

    def end_round(self, own_action, inbox):
        m, n = self.round, self.n
        for j in sorted(inbox):
            act_ji, _ = inbox[j]
            self.acc[(self.me, j, m)] = (
                "bad" if act_ji.kind is ActionKind.DEFECT else "good")
        self._merge(m, inbox)
        if m >= n:
            self._rebuild_pend(m)
        floor = m - n + 2
        self.acc = {k: v for k, v in self.acc.items() if k[2] >= floor}

    def _merge(self, m: int, inbox):
        n = self.n
        senders = {j: p for j, (a, p) in inbox.items()
                   if a.kind is not ActionKind.DEFECT and p is not None}
        for j in sorted(senders):
            for ((s, c), v) in senders[j]["pend"]:
                if s == self.me or s == j or c == m % n:
                    continue
                merged = max(self.pend.get((s, c), 0), v)
                if self._cap:
                    merged = min(n - 1, merged)
                if merged > 0:
                    self.pend[(s, c)] = merged
        fills: dict[tuple, dict[int, str]] = {}
        for j in sorted(senders):
            for ((v, s, r), val) in senders[j]["acc"]:
                if s == j or v == self.me or s == v:
                    continue
                if not (m - n + 1 <= r <= m - 1):
                    continue
                if (v, s, r) in self.acc:
                    continue
                fills.setdefault((v, s, r), {})[j] = val
        for key, cands in fills.items():
            self.acc[key] = cands[min(cands)]  # lowest-id sender wins

    def _rebuild_pend(self, m: int):
        n = self.n
        r = m - n + 1
        for j in range(n):
            if j == self.me:
                continue
            deg = sum(1 for (v, s, rr) in self.acc
                      if s == j and rr == r and v != j)
            bad = any(val == "bad" for (v, s, rr), val in self.acc.items()
                      if s == j and rr == r and v != j)
            key = (j, (m + 1) % n)
            new = max(0, self.pend.get(key, 0) - deg) + (deg if bad else 0)
            if self._cap:
                assert new <= n - 1, "tally invariant broken"
            if new > 0:
                self.pend[key] = new
            else:
                self.pend.pop(key, None)

    def snapshot(self) -> dict:
        return {"pend": sorted(self.pend.items()), "acc": sorted(self.acc.items())}

    def state_key(self, m: int):
        return ("SigmaGen",
                frozenset(((s, (c - m) % self.n), v) for (s, c), v in self.pend.items()),
                frozenset(((v, s, m - r), val) for (v, s, r), val in self.acc.items()))

    def is_quiescent(self) -> bool:
        return not self.pend and all(v == "good" for v in self.acc.values())

    def state_size(self) -> int:
        return len(self.pend) + len(self.acc)

    @staticmethod
    def static_state_bound(n: int) -> int:
        # pend: (n-1) subjects x n residues; acc: n(n-1) ordered pairs x n rounds
        return (n - 1) * n + n * (n - 1) * n


def sigma_gen(me: AgentId, n: int, params: UtilityParams,
              observation: ObservationModel) -> SigmaGen:
    if params.mode is not Mode.GENERAL:
        raise StrategyConfigError("sigma_gen needs general mode")
    if observation is not ObservationModel.NEIGHBORS_AND_DEGREES:
        raise StrategyConfigError("sigma_gen needs the degree observation model")
    return SigmaGen(me, n)


class AlwaysDefect(StrategyMachine):
    """Defect everyone, always; sends nothing."""

    def __init__(self, me: AgentId, n: int, mode: Mode = Mode.GENERAL):
        super().__init__(me, n)
        self.mode = mode

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        return {j: DEFECT for j in sorted(self.view.neighbors)}

    def state_key(self, m: int):
        return ("AlwaysDefect",)


# ---------------------------------------------------------------------------
# Scenario-scripted protocol for the unsafe three-agent family
# ---------------------------------------------------------------------------

class UnsafePunisherProtocol(_AccusationWindow):
    """Scripted safe-bounded profile for the three-agent unsafe family.

    Agents cooperate except for one scripted punishment: at round 3 the
    round-1 victim (agent 2) and the round-1 deviator (agent 0) mutually
    defect, unless agent 2 was itself defected by agent 1 at round 2, in
    which case agent 2 forgives and keeps sending.  A deviator following
    the profile sincerely conditions on its own past defections.
    """

    mode = Mode.GENERAL
    uses_own_action = True

    def __init__(self, me: AgentId, n: int, rho: int = 3):
        super().__init__(me, n, rho)
        self.my_defections: set[int] = set()

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        out = {j: COOPERATE for j in sorted(self.view.neighbors)}
        if self.round == 3:
            if self.me == 2 and 0 in out:
                if (0, 1) in self.accusations and (1, 2) not in self.accusations:
                    out[0] = DEFECT
            if self.me == 0 and 2 in out and 1 in self.my_defections:
                out[2] = DEFECT
        return out

    def end_round(self, own_action, inbox):
        if any(a.kind is ActionKind.DEFECT for a in own_action.values()):
            self.my_defections.add(self.round)
        super().end_round(own_action, inbox)

    def is_quiescent(self) -> bool:
        # a recorded own defection keeps the round-3 script armed
        return super().is_quiescent() and (self.round >= 3 or not self.my_defections)

    def state_key(self, m: int):
        return (super().state_key(m), frozenset(m - r for r in self.my_defections))

    def snapshot(self) -> dict:
        snap = super().snapshot()
        snap["my_defections"] = sorted(self.my_defections)
        return snap


# ---------------------------------------------------------------------------
# Deviation wrappers
# ---------------------------------------------------------------------------

ALL_NEIGHBORS = "all"


class ScheduledDefector(StrategyMachine):
    """Follow the base strategy but defect scheduled targets.

    ``sincere=False`` gives evasive semantics: the base state is maintained
    as if the defections had not happened (the base is told it played its
    own prescription), so all later messages answer from the counterfactual
    state.  ``sincere=True`` reconstructs the base state from what actually
    happened.
    """

    def __init__(self, base: StrategyMachine,
                 schedule: Mapping[int, object], sincere: bool = False,
                 label: str = "scheduled_defector"):
        super().__init__(base.me, base.n)
        self.base = base
        self.mode = base.mode
        self.schedule = dict(schedule)
        self.sincere = sincere
        self.label = label
        self.draw_independent_state = base.draw_independent_state
        self.deterministic = base.deterministic
        self.uses_own_action = base.uses_own_action

    @property
    def first_deviation_round(self) -> Optional[int]:
        return min(self.schedule) if self.schedule else None

    def begin_round(self, view: LocalView):
        super().begin_round(view)
        self.base.begin_round(view)

    def payload_for(self, j: AgentId) -> Optional[dict]:
        return self.base.payload_for(j)

    def _targets(self, m: int) -> frozenset[AgentId]:
        spec = self.schedule.get(m)
        if spec is None:
            return frozenset()
        if spec == ALL_NEIGHBORS:
            return frozenset(self.view.neighbors)
        return frozenset(spec) & self.view.neighbors

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        out = dict(self.base.act(rand))
        for j in self._targets(self.round):
            out[j] = DEFECT
        return out

    def end_round(self, own_action, inbox):
        claimed = own_action
        if not self.sincere and self._targets(self.round) and self.base.uses_own_action:
            if not self.base.deterministic:
                raise StrategyConfigError(
                    "evasive wrapping of a randomized own-action-dependent base")
            claimed = self.base.act(_RefuseDraws())
        self.base.end_round(claimed, inbox)

    def snapshot(self) -> dict:
        return dict(self.base.snapshot(), deviation=self.label)

    def state_key(self, m: int):
        sched = frozenset(
            (r - m, t if t == ALL_NEIGHBORS else frozenset(t))
            for r, t in self.schedule.items() if r >= m)
        return ("ScheduledDefector", self.sincere, sched, self.base.state_key(m))

    def is_quiescent(self) -> bool:
        done = not self.schedule or self.round >= max(self.schedule)
        return done and self.base.is_quiescent()

    def state_size(self) -> int:
        return self.base.state_size()


def single_evasive(base: StrategyMachine, j: AgentId, m: int) -> ScheduledDefector:
    """Defect j at round m, then behave as if the defection never happened."""
    return ScheduledDefector(base, {m: frozenset([j])}, sincere=False,
                             label=f"single_evasive(j={j}, m={m})")


def always_defect_until(base: StrategyMachine, m: int) -> ScheduledDefector:
    """Defect every neighbour through round m, then follow the base with
    state reconstructed from actual observations."""
    return ScheduledDefector(base, {r: ALL_NEIGHBORS for r in range(1, m + 1)},
                             sincere=True, label=f"always_defect_until({m})")


def defect_at_rounds(base: StrategyMachine, rounds: Sequence[int],
                     sincere: bool = True) -> ScheduledDefector:
    return ScheduledDefector(base, {r: ALL_NEIGHBORS for r in rounds},
                             sincere=sincere,
                             label=f"defect_at_rounds({sorted(rounds)})")


def apply_override(template: Mapping, neighbors: frozenset[AgentId],
                   base_action: Mapping[AgentId, IndividualAction],
                   mode: Mode, n: int) -> dict[AgentId, IndividualAction]:
    """Materialise an override template over the current neighbour set."""
    out = dict(base_action)

    def targets(val) -> list[AgentId]:
        ids = sorted(neighbors) if val == ALL_NEIGHBORS else list(val)
        for t in ids:
            if t not in neighbors:
                raise ValueError(f"override target {t} is not a current neighbour")
        return ids

    kinds = {"defect": DEFECT, "cooperate": COOPERATE, "punish": PUNISH,
             "avoid": AVOID}
    for key, action in kinds.items():
        if key in template:
            for t in targets(template[key]):
                out[t] = action
    for t, c in template.get("prop_punish", {}).items():
        t = int(t)
        if t not in neighbors:
            raise ValueError(f"override target {t} is not a current neighbour")
        out[t] = prop_punish(int(c))
    for a in out.values():
        a.check_mode(mode, n)
    return out


class OneShotDeviation(StrategyMachine):
    """Base strategy with one action override at the first matching round.

    The trigger is an observation predicate over the round view; it fires at
    most once, afterwards the base continues with its true state.
    """

    def __init__(self, base: StrategyMachine,
                 trigger: Callable[[LocalView], bool],
                 override: Mapping, label: str = "one_shot"):
        super().__init__(base.me, base.n)
        self.base = base
        self.mode = base.mode
        self.trigger = trigger
        self.override = dict(override)
        self.fired_at: Optional[int] = None
        self.label = label
        self.draw_independent_state = base.draw_independent_state
        self.deterministic = base.deterministic
        self.uses_own_action = base.uses_own_action

    def _fires_now(self) -> bool:
        return self.fired_at is None and self.trigger(self.view)

    def begin_round(self, view: LocalView):
        super().begin_round(view)
        self.base.begin_round(view)

    def payload_for(self, j: AgentId) -> Optional[dict]:
        return self.base.payload_for(j)

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        base_action = self.base.act(rand)
        if self._fires_now():
            return apply_override(self.override, self.view.neighbors,
                                  base_action, self.mode, self.n)
        return dict(base_action)

    def end_round(self, own_action, inbox):
        if self._fires_now():
            self.fired_at = self.round
        self.base.end_round(own_action, inbox)

    def snapshot(self) -> dict:
        return dict(self.base.snapshot(), fired_at=self.fired_at)

    def state_key(self, m: int):
        return ("OneShot", self.fired_at is not None, self.base.state_key(m))

    def is_quiescent(self) -> bool:
        return self.fired_at is not None and self.base.is_quiescent()

    def state_size(self) -> int:
        return self.base.state_size()


def one_shot_deviation(base: StrategyMachine,
                       at: Callable[[LocalView], bool],
                       override: Mapping) -> OneShotDeviation:
    """Deviate once, at the first view matching ``at``, to the override
    template; conform with true state thereafter."""
    return OneShotDeviation(base, at, override)


# ---------------------------------------------------------------------------
# Shadow worlds for the scripted dual and lenient evasive strategies
# ---------------------------------------------------------------------------

class _ShadowWorld:
    """Internal deterministic replay of a counterfactual run.

    Advances an honest (or designated-deviation) profile over the scenario
    graph in lockstep with the real run and exposes the focal agent's
    counterfactual actions and payloads per round.
    """

    def __init__(self, graph: EvolvingGraph, obs: ObservationModel,
                 machines: dict[AgentId, StrategyMachine]):
        self.graph = graph
        self.obs = obs
        self.machines = machines
        self.done_round = 0
        self.round_actions: dict[int, dict[AgentId, dict[AgentId, IndividualAction]]] = {}
        self.round_payloads: dict[int, dict[AgentId, dict[AgentId, Optional[dict]]]] = {}

    def ensure_round(self, m: int):
        while self.done_round < m:
            self._step(self.done_round + 1)

    def _step(self, m: int):
        rg = self.graph.at(m)
        views = {i: local_view(self.graph, i, m, self.obs) for i in self.machines}
        for i in sorted(self.machines):
            self.machines[i].begin_round(views[i])
        payloads = {i: {j: self.machines[i].payload_for(j)
                        for j in sorted(views[i].neighbors)}
                    for i in sorted(self.machines)}
        actions = {i: self.machines[i].act(_RefuseDraws())
                   for i in sorted(self.machines)}
        for i in sorted(self.machines):
            inbox = {}
            for j in sorted(views[i].neighbors):
                a_ji = actions[j][i]
                pay = payloads[j][i] if a_ji.kind is not ActionKind.DEFECT else None
                inbox[j] = (a_ji, pay)
            self.machines[i].end_round(actions[i], inbox)
        self.round_actions[m] = actions
        self.round_payloads[m] = payloads
        self.done_round = m

    def action_of(self, i: AgentId, m: int) -> dict[AgentId, IndividualAction]:
        self.ensure_round(m)
        return self.round_actions[m][i]

    def payload_of(self, i: AgentId, j: AgentId, m: int) -> Optional[dict]:
        self.ensure_round(m)
        return self.round_payloads[m][i][j]


class _PersonaEvasive(StrategyMachine):
    """Base for scripted evasive strategies that answer some neighbours
    from a counterfactual shadow persona."""

    def __init__(self, base: StrategyMachine, shadow: _ShadowWorld,
                 member: EvolvingGraph, label: str):
        super().__init__(base.me, base.n)
        self.base = base
        self.mode = base.mode
        self.shadow = shadow
        self.member = member
        self.label = label
        self.draw_independent_state = base.draw_independent_state
        self.deterministic = base.deterministic
        self.uses_own_action = base.uses_own_action

    def begin_round(self, view: LocalView):
        super().begin_round(view)
        expected = self.member.at(view.round).neighbors(self.me)
        if view.neighbors != expected:
            raise StrategyConfigError(
                f"scenario family mismatch at round {view.round}: "
                f"saw neighbours {sorted(view.neighbors)}, scripted for {sorted(expected)}")
        self.shadow.ensure_round(view.round)
        self.base.begin_round(view)

    def snapshot(self) -> dict:
        return dict(self.base.snapshot(), deviation=self.label)

    def state_key(self, m: int):
        return (self.label, self.base.state_key(m))

    def is_quiescent(self) -> bool:
        return (self.base.is_quiescent()
                and self.shadow.machines[self.me].is_quiescent())

    def state_size(self) -> int:
        return self.base.state_size()


class DualEvasiveFig2(_PersonaEvasive):
    """Scripted two-faced strategy for the five-agent cut scenario.

    The agent defects one partner of the first half at the scripted round,
    then presents the clean all-honest continuation to the second half
    (actions and payloads replayed from a shadow honest world) while
    presenting the true deviated continuation to the first half.  The cut
    formed by the agent's own edges keeps the two stories from meeting.
    """

    def __init__(self, base: StrategyMachine, shadow_clean: _ShadowWorld,
                 member: EvolvingGraph, group1: frozenset[AgentId],
                 group2: frozenset[AgentId], defect_target: AgentId,
                 defect_round: int):
        super().__init__(base, shadow_clean, member, "dual_evasive")
        self.group1 = group1
        self.group2 = group2
        self.defect_target = defect_target
        self.defect_round = defect_round

    @property
    def first_deviation_round(self) -> int:
        return self.defect_round

    def payload_for(self, j: AgentId) -> Optional[dict]:
        if j in self.group2:
            return self.shadow.payload_of(self.me, j, self.round)
        return self.base.payload_for(j)

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        base_action = self.base.act(rand)
        shadow_action = self.shadow.action_of(self.me, self.round)
        out = {}
        for j in sorted(self.view.neighbors):
            out[j] = shadow_action[j] if j in self.group2 else base_action[j]
        if self.round == self.defect_round and self.defect_target in out:
            out[self.defect_target] = DEFECT
        return out

    def end_round(self, own_action, inbox):
        self.base.end_round(own_action, inbox)

    def is_quiescent(self) -> bool:
        return self.round >= self.defect_round and super().is_quiescent()


class LenientEvasiveUnsafe(_PersonaEvasive):
    """Scripted lenient strategy: ignore the second deviator entirely and
    replay the persona of the counterfactual world in which only the first
    deviator deviated (defecting the punished agent as prescribed there).
    """

    def __init__(self, base: StrategyMachine, shadow_single_dev: _ShadowWorld,
                 member: EvolvingGraph):
        super().__init__(base, shadow_single_dev, member, "lenient_evasive")

    @property
    def first_deviation_round(self) -> Optional[int]:
        return None

    def payload_for(self, j: AgentId) -> Optional[dict]:
        return self.shadow.payload_of(self.me, j, self.round)

    def act(self, rand: RandSource) -> dict[AgentId, IndividualAction]:
        return dict(self.shadow.action_of(self.me, self.round))

    def end_round(self, own_action, inbox):
        self.base.end_round(own_action, inbox)


# ---------------------------------------------------------------------------
# Wire-format strategy construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyContext:
    """Everything a strategy spec may need to materialise a machine."""

    n: int
    me: AgentId
    params: UtilityParams
    observation: ObservationModel
    member: EvolvingGraph
    honest_factory: Optional[Callable[[AgentId], StrategyMachine]] = None

    def honest(self, agent: AgentId) -> StrategyMachine:
        if self.honest_factory is None:
            raise StrategyConfigError("no honest profile available for shadow runs")
        return self.honest_factory(agent)


StrategySpec = Union[str, Mapping]


def build_strategy(spec: StrategySpec, ctx: StrategyContext) -> StrategyMachine:
    if isinstance(spec, str):
        spec = {"strategy": spec}
    if "deviation" in spec:
        return build_deviation(spec["deviation"], ctx)
    name = spec.get("strategy")
    if name == "sigma_val":
        return sigma_val(ctx.me, ctx.n, int(spec["rho"]), ctx.params)
    if name == "sigma_gen":
        return sigma_gen(ctx.me, ctx.n, ctx.params, ctx.observation)
    if name == "accusation_punisher":
        return AccusationPunisher(ctx.me, ctx.n, int(spec["rho"]))
    if name == "always_defect":
        return AlwaysDefect(ctx.me, ctx.n, ctx.params.mode)
    if name == "unsafe_scripted":
        return UnsafePunisherProtocol(ctx.me, ctx.n, int(spec.get("rho", 3)))
    raise StrategyConfigError(f"unknown strategy {name!r}")


def build_deviation(dev: Mapping, ctx: StrategyContext) -> StrategyMachine:
    kind = dev.get("kind")
    base_spec = dev.get("base")
    base = (build_strategy(base_spec, ctx) if base_spec is not None
            else ctx.honest(ctx.me))
    if kind == "single_evasive":
        return single_evasive(base, int(dev["target"]), int(dev["round"]))
    if kind == "always_defect_until":
        return always_defect_until(base, int(dev["round"]))
    if kind == "defect_at_rounds":
        return defect_at_rounds(base, [int(r) for r in dev["rounds"]])
    if kind == "one_shot":
        at = int(dev["round"])
        return OneShotDeviation(base, lambda v, at=at: v.round == at,
                                dev["override"],
                                label=f"one_shot(round={at})")
    if kind == "dual_evasive_fig2":
        _check_member(dev, ctx)
        shadow = _ShadowWorld(ctx.member, ctx.observation,
                              {a: ctx.honest(a) for a in range(ctx.n)})
        return DualEvasiveFig2(
            base, shadow, ctx.member,
            group1=frozenset(int(a) for a in dev["group1"]),
            group2=frozenset(int(a) for a in dev["group2"]),
            defect_target=int(dev["target"]),
            defect_round=int(dev["round"]))
    if kind == "lenient_evasive_unsafe":
        _check_member(dev, ctx)
        machines = {a: ctx.honest(a) for a in range(ctx.n)}
        first = dev.get("first_deviator", 0)
        first_round = dev.get("first_round", 1)
        machines[first] = always_defect_until(machines[first], int(first_round))
        shadow = _ShadowWorld(ctx.member, ctx.observation, machines)
        return LenientEvasiveUnsafe(base, shadow, ctx.member)
    raise StrategyConfigError(f"unknown deviation kind {kind!r}")


def _check_member(dev: Mapping, ctx: StrategyContext):
    want = dev.get("member")
    if want is not None and ctx.member.name != want:
        raise StrategyConfigError(
            f"scenario family mismatch: deviation scripted for member "
            f"{want!r}, config runs {ctx.member.name!r}")
