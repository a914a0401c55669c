"""Actions, per-round utilities, and discounted utility streams.

All utility arithmetic is exact: parameters parse to ``Fraction`` and every
sum, discount power, and bound stays rational.  Equilibrium verdicts at
fine tolerances must not depend on float accumulation over hundreds of
rounds.

Utility of agent i against neighbour j in one round:

* i pays the normalized send cost 1 whenever it cooperates or punishes
  (actively or proportionally); defecting and punishment avoidance cost 0.
* i receives the benefit ``beta`` minus the receive cost ``alpha`` whenever
  j cooperates or punishes, unless i played punishment avoidance.
* a received proportional punishment of weight c costs an extra ``c*pi``;
  a received active punishment costs an extra ``pi`` (the garbage carries
  the benefit clause literally, then the loss ``pi >= beta`` nets it away).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Union

from .evolving_graph import EvolvingGraph, RoundGraph

AgentId = int
Rational = Union[int, str, Fraction]


class Mode(Enum):
    VALUABLE = "valuable"
    GENERAL = "general"


class ActionKind(Enum):
    COOPERATE = "cooperate"
    DEFECT = "defect"
    PUNISH = "punish"
    PROP_PUNISH = "prop_punish"
    AVOID = "avoid"


_SENDING = {ActionKind.COOPERATE, ActionKind.PUNISH, ActionKind.PROP_PUNISH}

_ALLOWED = {
    Mode.VALUABLE: {ActionKind.COOPERATE, ActionKind.DEFECT,
                    ActionKind.PROP_PUNISH, ActionKind.AVOID},
    Mode.GENERAL: {ActionKind.COOPERATE, ActionKind.DEFECT, ActionKind.PUNISH},
}


@dataclass(frozen=True)
class IndividualAction:
    """One agent's action toward one neighbour for one round."""

    kind: ActionKind
    c: int = 0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("proportional punishment weight must be >= 0")
        if self.kind is not ActionKind.PROP_PUNISH and self.c != 0:
            raise ValueError(f"{self.kind.value} carries no weight")

    @property
    def sends(self) -> bool:
        return self.kind in _SENDING

    def check_mode(self, mode: Mode, n: int):
        if self.kind not in _ALLOWED[mode]:
            raise ValueError(f"{self.kind.value} is not available in {mode.value} mode")
        if self.kind is ActionKind.PROP_PUNISH and self.c > n - 1:
            raise ValueError(f"proportional weight {self.c} exceeds n-1={n - 1}")


COOPERATE = IndividualAction(ActionKind.COOPERATE)
DEFECT = IndividualAction(ActionKind.DEFECT)
PUNISH = IndividualAction(ActionKind.PUNISH)
AVOID = IndividualAction(ActionKind.AVOID)


def prop_punish(c: int) -> IndividualAction:
    # weight 0 is cooperation in substance; normalise so action equality holds
    if c == 0:
        return COOPERATE
    return IndividualAction(ActionKind.PROP_PUNISH, c)


@dataclass(frozen=True)
class Action:
    """Per-neighbour individual actions of one agent for one round."""

    agent: AgentId
    round: int
    per_neighbor: Mapping[AgentId, IndividualAction]

    def toward(self, j: AgentId) -> IndividualAction:
        return self.per_neighbor[j]

    def check_neighbors(self, graph: RoundGraph):
        expected = graph.neighbors(self.agent)
        got = frozenset(self.per_neighbor)
        if got != expected:
            raise ValueError(
                f"agent {self.agent} round {self.round}: action keys {sorted(got)} "
                f"!= neighbours {sorted(expected)}")


@dataclass(frozen=True)
class ActionProfile:
    round: int
    actions: Mapping[AgentId, Action]

    def __post_init__(self):
        for i, a in self.actions.items():
            if a.agent != i:
                raise ValueError(f"action for agent {i} labelled {a.agent}")
            if a.round != self.round:
                raise ValueError(
                    f"profile round {self.round} vs action round {a.round}")

    def individual(self, src: AgentId, dst: AgentId) -> IndividualAction:
        return self.actions[src].toward(dst)

    def check(self, graph: RoundGraph, mode: Mode):
        if set(self.actions) != set(range(graph.n)):
            raise ValueError("profile must cover every agent")
        for a in self.actions.values():
            a.check_neighbors(graph)
            for ia in a.per_neighbor.values():
                ia.check_mode(mode, graph.n)


def _frac(x: Rational) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("pass utility parameters as int, str or Fraction, not float")
    return Fraction(x)


@dataclass(frozen=True)
class UtilityParams:
    """Benefit, costs, punishment unit, discount factor, and exchange mode."""

    beta: Fraction
    alpha: Fraction
    pi: Fraction
    delta: Fraction
    mode: Mode

    @staticmethod
    def make(beta: Rational, alpha: Rational, pi: Rational, delta: Rational,
             mode: Mode) -> "UtilityParams":
        p = UtilityParams(_frac(beta), _frac(alpha), _frac(pi), _frac(delta), mode)
        if not (0 < p.delta < 1):
            raise ValueError("delta must lie strictly in (0, 1)")
        return p

    @staticmethod
    def from_json(doc: dict) -> "UtilityParams":
        mode = Mode(doc["mode"])
        return UtilityParams.make(doc["beta"], doc["alpha"], doc["pi"],
                                  doc["delta"], mode)

    def to_json(self) -> dict:
        return {"beta": str(self.beta), "alpha": str(self.alpha),
                "pi": str(self.pi), "delta": str(self.delta),
                "mode": self.mode.value}

    def validate_for(self, n: int, rho: Optional[int] = None):
        """Mode constraints; valuable mode needs the timeliness bound rho."""
        if self.mode is Mode.VALUABLE:
            if rho is None:
                raise ValueError("valuable mode needs rho to validate beta")
            if not (self.beta > 1 + self.alpha + rho * self.pi):
                raise ValueError(
                    f"valuable mode needs beta > 1 + alpha + rho*pi "
                    f"({self.beta} <= {1 + self.alpha + rho * self.pi})")
            if not (self.pi > n):
                raise ValueError(f"valuable mode needs pi > n ({self.pi} <= {n})")
        else:
            if not (self.beta > 1 + self.alpha):
                raise ValueError(
                    f"general mode needs beta > 1 + alpha "
                    f"({self.beta} <= {1 + self.alpha})")
            if not (self.pi >= self.beta):
                raise ValueError(
                    f"general mode needs pi >= beta ({self.pi} < {self.beta})")

    def max_round_swing(self, n: int) -> Fraction:
        """Bound y on the utility swing of a single interaction."""
        return self.beta + self.alpha + 1 + (n - 1) * self.pi


def round_utility(i: AgentId, profile: ActionProfile, graph: RoundGraph,
                  params: UtilityParams) -> Fraction:
    u = Fraction(0)
    mine = profile.actions[i]
    mine.check_neighbors(graph)
    for j in sorted(graph.neighbors(i)):
        a_ij = mine.toward(j)
        a_ji = profile.individual(j, i)
        a_ij.check_mode(params.mode, graph.n)
        a_ji.check_mode(params.mode, graph.n)
        if a_ij.sends:
            u -= 1
        if a_ji.sends and a_ij.kind is not ActionKind.AVOID:
            u += params.beta - params.alpha
            if a_ji.kind is ActionKind.PROP_PUNISH:
                u -= a_ji.c * params.pi
            elif a_ji.kind is ActionKind.PUNISH:
                u -= params.pi
    return u


@dataclass
class History:
    """Realised action profiles over a fixed evolving graph."""

    graph: EvolvingGraph
    profiles: list[ActionProfile] = field(default_factory=list)

    def append(self, profile: ActionProfile):
        expected = len(self.profiles) + 1
        if profile.round != expected:
            raise ValueError(f"expected round {expected}, got {profile.round}")
        self.profiles.append(profile)

    @property
    def last_round(self) -> int:
        return len(self.profiles)


@dataclass
class Trace:
    """A realised run: history, per-round utilities, and the seed it used.

    ``state_log`` optionally holds each machine's end-of-round state
    snapshot, keyed by (agent, round); the paired-trace fact checkers need
    it, plain utility consumers can ignore it.
    """

    history: History
    per_round_utilities: dict[tuple[AgentId, int], Fraction]
    rng_seed: int
    state_log: Optional[dict[tuple[AgentId, int], dict]] = None

    @property
    def last_round(self) -> int:
        return self.history.last_round

    def utility(self, i: AgentId, m: int) -> Fraction:
        return self.per_round_utilities[(i, m)]


def discounted_utility(t: Trace, i: AgentId, from_round: int,
                       params: UtilityParams) -> Fraction:
    if from_round < 1:
        raise ValueError("from_round must be >= 1")
    total = Fraction(0)
    scale = Fraction(1)
    for m in range(from_round, t.last_round + 1):
        total += scale * t.per_round_utilities[(i, m)]
        scale *= params.delta
    return total


def tail_bound(params: UtilityParams, n: int, horizon: int) -> Fraction:
    """Upper bound on any utility difference accrued after ``horizon``
    further rounds: delta^horizon * y * n / (1 - delta)."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    y = params.max_round_swing(n)
    return params.delta ** horizon * y * n / (1 - params.delta)


def cooperation_round_utility(i: AgentId, graph: RoundGraph,
                              params: UtilityParams) -> Fraction:
    """Per-round utility under all-cooperate: (beta - 1 - alpha) * degree."""
    return (params.beta - 1 - params.alpha) * graph.degree(i)


def cooperation_tail(g: EvolvingGraph, i: AgentId, params: UtilityParams,
                     from_round: int, to_round: int) -> Fraction:
    """Exact discounted all-cooperate utility over rounds [from, to],
    in units of round ``from_round`` (discount delta^0 there).

    The cyclic region is summed phase by phase with closed-form geometric
    series, so large horizons cost O(prefix + cycle + log) exact operations.
    """
    if to_round < from_round:
        return Fraction(0)
    d = params.delta
    P = len(g.prefix)
    L = len(g.cycle)
    total = Fraction(0)
    m = from_round
    while m <= min(P, to_round):
        total += d ** (m - from_round) * cooperation_round_utility(i, g.at(m), params)
        m += 1
    if m > to_round:
        return total
    dL = d ** L
    for phase in range(L):
        first = m + ((phase - (m - P - 1)) % L)
        if first > to_round:
            continue
        count = (to_round - first) // L + 1
        per = cooperation_round_utility(i, g.cycle[(first - P - 1) % L], params)
        if per == 0:
            continue
        total += d ** (first - from_round) * per * (1 - dL ** count) / (1 - dL)
    return total
