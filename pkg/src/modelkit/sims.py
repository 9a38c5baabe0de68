"""Agent-based simulations wrapped as first-class models.

Each simulation exposes only a sampler (plus parameters where noted); the
likelihood, estimator, and CDF all come from the dispatch layer's defaults,
so every transform and inference routine applies to them unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as core
from .data import (DataSet, KdeSettings, MleSettings, ModelError, Params,
                   RandomStream)
from .model import Model


# ---------------------------------------------------------------------------
# Random network


@dataclass
class NetworkSimConfig:
    n_agents: int = 10
    sigma: float = 1.0

    def __post_init__(self):
        if self.n_agents < 2:
            raise ModelError("network sim needs at least 2 agents")
        if self.sigma <= 0:
            raise ModelError("network sim needs sigma > 0")


def network_sim_model(cfg: NetworkSimConfig | None = None,
                      sigma_free: bool = False) -> Model:
    """Link-count distribution of a random spatial network.

    One run: draw agent positions p_i ~ Normal(0, sigma), link each pair
    with probability 1/(1 + |p_i - p_j|), output each agent's link count
    sorted nonincreasing.  With sigma_free the position spread becomes the
    model's one parameter; otherwise the parameter space is empty.
    """
    cfg = cfg or NetworkSimConfig()
    a = cfg.n_agents

    def rng(p, stream, n):
        sigma = p.scalar("sigma") if sigma_free else cfg.sigma
        pos = stream.normal(0.0, sigma, size=(n, a))
        dist = np.abs(pos[:, :, None] - pos[:, None, :])
        r = stream.uniform(size=(n, a, a))
        link = r <= 1.0 / (1.0 + dist)
        iu = np.triu_indices(a, k=1)
        adj = np.zeros((n, a, a), dtype=bool)
        adj[:, iu[0], iu[1]] = link[:, iu[0], iu[1]]
        adj |= adj.transpose(0, 2, 1)
        deg = adj.sum(axis=2)
        return np.sort(deg, axis=1)[:, ::-1].astype(float)

    if sigma_free:
        shape = Params.scalars(sigma=cfg.sigma)
        constraint = lambda p: max(0.0, 1e-8 - p.scalar("sigma"))
    else:
        shape = Params([])
        constraint = None
    return Model("network_sim", a, shape, rng=rng, constraint=constraint,
                 discrete=True, settings={"config": cfg})


# ---------------------------------------------------------------------------
# Demand


@dataclass
class DemandConfig:
    n_agents: int = 1000
    price: float = 1.0

    def __post_init__(self):
        if self.price <= 0:
            raise ModelError("demand sim needs price > 0")
        if self.n_agents < 1:
            raise ModelError("demand sim needs at least one agent")


def consumption(alpha, b, price):
    """Utility-maximizing (q1, q2) for U = q1^alpha + q2 under p*q1 + q2 <= b.

    The interior optimum q1 = (price/alpha)^(1/(1-alpha)) is clamped to
    affordability b/price; q2 takes the rest of the budget.
    """
    alpha = np.asarray(alpha, dtype=float)
    b = np.asarray(b, dtype=float)
    q1 = np.minimum((price / alpha) ** (1.0 / (1.0 - alpha)), b / price)
    q1 = np.clip(q1, 0.0, None)
    q2 = np.clip(b - price * q1, 0.0, None)
    return q1, q2


def demand_model(cfg: DemandConfig | None = None) -> Model:
    """Mean consumption (Q1, Q2) of utility maximizers U = q1^a + q2.

    Per agent: budget b ~ Normal(mu_b, 1) floored at 0, taste a ~
    Normal(mu_alpha, 1) resampled until 0.01 < a < 0.99.  The interior
    optimum q1 = (p/a)^(1/(1-a)) is clamped to affordability b/p, and
    q2 = max(b - p q1, 0), so spend never exceeds budget.  Likelihood comes
    from a 500-draw KDE-smoothed memoized PMF; estimation cycles one
    parameter dimension at a time.
    """
    cfg = cfg or DemandConfig()
    p1 = cfg.price

    def rng(p, stream, n):
        mu_b, mu_a = p.scalar("mu_b"), p.scalar("mu_alpha")
        out = np.empty((n, 2))
        for run in range(n):
            b = np.clip(stream.normal(mu_b, 1.0, size=cfg.n_agents), 0.0, None)
            alpha = stream.normal(mu_a, 1.0, size=cfg.n_agents)
            for _ in range(1000):
                bad = (alpha <= 0.01) | (alpha >= 0.99)
                if not bad.any():
                    break
                alpha[bad] = stream.normal(mu_a, 1.0, size=int(bad.sum()))
            else:
                raise ModelError("demand sim: alpha resampling did not land in (0.01, 0.99)")
            q1, q2 = consumption(alpha, b, p1)
            out[run] = (q1.mean(), q2.mean())
        return out

    def constraint(p):
        # keep the MLE search where alpha resampling stays cheap
        mu_a = p.scalar("mu_alpha")
        mu_b = p.scalar("mu_b")
        v = max(0.0, -2.0 - mu_a) + max(0.0, mu_a - 3.0)
        v += max(0.0, -10.0 - mu_b) + max(0.0, mu_b - 20.0)
        return v

    return Model("demand_sim", 2, Params.scalars(mu_b=3.0, mu_alpha=0.5),
                 rng=rng, constraint=constraint,
                 settings={"config": cfg, "memoize_draws": 500,
                           "kde": KdeSettings(),
                           "mle": MleSettings(method="coordinate_cycle",
                                              tolerance=1e-4, max_iter=100)})


# ---------------------------------------------------------------------------
# Spatial search


@dataclass
class SearchConfig:
    grid_w: int = 20
    grid_h: int = 20
    n_pairs: int = 10

    def __post_init__(self):
        if 2 * self.n_pairs > self.grid_w * self.grid_h:
            raise ModelError("search sim: grid too small for the agent count")
        if self.n_pairs < 1:
            raise ModelError("search sim needs at least one pair")


_MOORE = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def search_model(cfg: SearchConfig | None = None) -> Model:
    """Pairing times of a two-type spatial search.

    Equal numbers of A and B agents land on distinct grid cells.  Each tick
    (starting at 1): all pairings resolve simultaneously -- an unpaired
    agent adjacent (eight-neighborhood) to an unpaired opposite-type agent
    pairs with the lowest-index candidate and both leave the grid -- then
    every remaining agent steps to a random unoccupied neighboring cell.
    Output: each agent's pairing time, in agent-index order (A's then B's).
    """
    cfg = cfg or SearchConfig()
    n_agents = 2 * cfg.n_pairs

    def one_run(stream: RandomStream) -> np.ndarray:
        w, h = cfg.grid_w, cfg.grid_h
        cells = stream.gen.choice(w * h, size=n_agents, replace=False)
        pos = np.column_stack([cells % w, cells // w]).astype(int)
        is_a = np.arange(n_agents) < cfg.n_pairs
        alive = np.ones(n_agents, dtype=bool)
        times = np.zeros(n_agents)
        occupied = {(int(x), int(y)) for x, y in pos}
        tick = 0
        while alive.any():
            tick += 1
            # simultaneous pairing, lowest index first
            claimed = np.zeros(n_agents, dtype=bool)
            for i in range(n_agents):
                if not alive[i] or claimed[i]:
                    continue
                best = -1
                for dx, dy in _MOORE:
                    xy = (int(pos[i, 0]) + dx, int(pos[i, 1]) + dy)
                    for j in range(n_agents):
                        if (alive[j] and not claimed[j] and is_a[j] != is_a[i]
                                and pos[j, 0] == xy[0] and pos[j, 1] == xy[1]):
                            best = j if best < 0 or j < best else best
                if best >= 0:
                    claimed[i] = claimed[best] = True
                    times[i] = times[best] = tick
            for i in range(n_agents):
                if claimed[i]:
                    alive[i] = False
                    occupied.discard((int(pos[i, 0]), int(pos[i, 1])))
            # movement
            for i in range(n_agents):
                if not alive[i]:
                    continue
                options = []
                for dx, dy in _MOORE:
                    xy = (int(pos[i, 0]) + dx, int(pos[i, 1]) + dy)
                    if 0 <= xy[0] < w and 0 <= xy[1] < h and xy not in occupied:
                        options.append(xy)
                if options:
                    pick = options[int(stream.integers(len(options)))]
                    occupied.discard((int(pos[i, 0]), int(pos[i, 1])))
                    pos[i] = pick
                    occupied.add(pick)
        return times

    def rng(p, stream, n):
        return np.array([one_run(stream) for _ in range(n)])

    return Model("search_sim", n_agents, Params([]), rng=rng,
                 settings={"config": cfg})


def fuzz_weibull_posterior(side_prior: Model, pairs_prior: Model,
                           side_params: Params | None = None,
                           pairs_params: Params | None = None,
                           reps: int = 100,
                           s: RandomStream | None = None) -> Model:
    """Posterior cloud of Weibull fits under fuzzed simulation settings.

    Each rep draws a grid side and pair count from the 1-D priors (rounded,
    clamped to a feasible configuration), runs the search model once, fits
    a Weibull to the pooled pairing times, and records (lambda, k).  The
    result is an equal-weight PMF over those parameter pairs.
    """
    from .distributions import pmf_model, weibull_model

    s = s or RandomStream(0xF022)
    side_params = side_params or side_prior.param_shape
    pairs_params = pairs_params or pairs_prior.param_shape
    wb = weibull_model()
    rows = np.empty((reps, 2))
    for r in range(reps):
        st = s.split(r)
        side = int(round(float(np.atleast_1d(
            core.draw(side_prior, side_params, st.split(0)))[0])))
        side = max(side, 2)
        n_pairs = int(round(float(np.atleast_1d(
            core.draw(pairs_prior, pairs_params, st.split(1)))[0])))
        n_pairs = min(max(n_pairs, 1), side * side // 2)
        sim = search_model(SearchConfig(side, side, n_pairs))
        times = core.draw(sim, Params([]), st.split(2)).reshape(-1, 1)
        fit = core.estimate(wb, DataSet(times))
        rows[r] = (fit.params.scalar("lam"), fit.params.scalar("k"))
    return pmf_model(DataSet(rows, names=["lambda", "k"]))
