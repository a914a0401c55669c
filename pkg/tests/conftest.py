from __future__ import annotations

import random

import pytest

from dynacct.evolving_graph import (EvolvingGraph, GraphFamily,
                                    ObservationModel, RoundGraph)


def random_round_graph(rng: random.Random, n: int, p: float = 0.45) -> RoundGraph:
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < p]
    return RoundGraph.from_pairs(n, edges)


def random_evolving_graph(rng: random.Random, n: int, name: str,
                          max_prefix: int = 3, max_cycle: int = 4) -> EvolvingGraph:
    prefix = tuple(random_round_graph(rng, n)
                   for _ in range(rng.randint(0, max_prefix)))
    cycle = tuple(random_round_graph(rng, n)
                  for _ in range(rng.randint(1, max_cycle)))
    return EvolvingGraph(prefix=prefix, cycle=cycle, name=name)


def random_family(rng: random.Random, n: int = None, members: int = None,
                  horizon: int = 12) -> GraphFamily:
    n = n or rng.randint(2, 5)
    members = members or rng.randint(1, 4)
    obs = rng.choice([ObservationModel.NEIGHBORS_ONLY,
                      ObservationModel.NEIGHBORS_AND_DEGREES])
    gs = tuple(random_evolving_graph(rng, n, f"g{k}") for k in range(members))
    horizon = max(horizon, max(g.period for g in gs))
    return GraphFamily(n=n, members=gs, observation=obs, horizon=horizon)


@pytest.fixture
def rng():
    return random.Random(20260809)
