"""Population-search baselines for the stage-one composition problem.

Particle swarm optimization and a genetic algorithm search the same
composition simplex as the Q-learning agent, through the same scoring
environment, so the three methods are comparable at equal simulation
budget. Iterates leave the simplex after a velocity or mutation step
and are pulled back by projection: negative fractions clamp to zero and
the vector renormalizes to unit sum.

Both searches accept a pre-built initial population so they can be run
paired on identical starting clouds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ddqn import IdentificationEnv


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Clamp to nonnegative and renormalize to unit sum.

    An all-zero vector has no direction to keep and maps to the uniform
    composition.
    """

    x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    s = float(x.sum())
    if s < 1e-12:
        return np.full(x.size, 1.0 / x.size)
    return x / s


def initial_population(start, size: int, spread: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Cloud of candidates around a start point, start itself included."""

    start = project_simplex(np.asarray(start, dtype=np.float64))
    if size < 1:
        raise ValueError("size must be >= 1")
    pop = np.empty((size, start.size))
    pop[0] = start
    for i in range(1, size):
        pop[i] = project_simplex(start + rng.uniform(-spread, spread, start.size))
    return pop


@dataclass(frozen=True)
class SearchResult:
    """Best composition found, with per-iteration best-so-far rewards."""

    composition: np.ndarray
    reward: float
    p_rmse: float
    q_rmse: float
    history: np.ndarray
    n_evals: int


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 30
    iterations: int = 20
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    init_spread: float = 0.03

    def __post_init__(self) -> None:
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("need >= 1 particles and >= 1 iterations")
        if self.inertia < 0.0 or self.cognitive < 0.0 or self.social < 0.0:
            raise ValueError("pso coefficients must be >= 0")
        if self.init_spread < 0.0:
            raise ValueError("init_spread must be >= 0")


def pso_search(env: IdentificationEnv, start, cfg: PsoConfig = PsoConfig(),
               seed: int = 0, init_pop: np.ndarray | None = None) -> SearchResult:
    """Particle swarm over the active composition simplex."""

    rng = np.random.default_rng(seed)
    d = env.d
    if init_pop is None:
        pos = initial_population(start, cfg.particles, cfg.init_spread, rng)
    else:
        pos = np.array(init_pop, dtype=np.float64)
        if pos.shape != (cfg.particles, d):
            raise ValueError("init_pop must have shape (particles, d)")
    vel = np.zeros_like(pos)

    evals_before = env.n_sim_evals
    evs = [env.evaluate(pos[i]) for i in range(cfg.particles)]
    pbest = pos.copy()
    pbest_r = np.array([e.reward for e in evs])
    g = int(np.argmax(pbest_r))
    gbest = pbest[g].copy()
    gbest_ev = evs[g]
    history = [float(pbest_r[g])]

    for _ in range(cfg.iterations):
        for i in range(cfg.particles):
            r1 = rng.random(d)
            r2 = rng.random(d)
            vel[i] = (cfg.inertia * vel[i]
                      + cfg.cognitive * r1 * (pbest[i] - pos[i])
                      + cfg.social * r2 * (gbest - pos[i]))
            pos[i] = project_simplex(pos[i] + vel[i])
            ev = env.evaluate(pos[i])
            if ev.reward > pbest_r[i]:
                pbest_r[i] = ev.reward
                pbest[i] = pos[i].copy()
            if ev.reward > gbest_ev.reward:
                gbest = pos[i].copy()
                gbest_ev = ev
        history.append(float(gbest_ev.reward))

    return SearchResult(
        composition=env.full_composition(gbest),
        reward=float(gbest_ev.reward),
        p_rmse=gbest_ev.p_rmse,
        q_rmse=gbest_ev.q_rmse,
        history=np.array(history),
        n_evals=env.n_sim_evals - evals_before,
    )


@dataclass(frozen=True)
class GaConfig:
    population: int = 30
    generations: int = 20
    mutation_scale: float = 0.02
    init_spread: float = 0.03

    def __post_init__(self) -> None:
        if self.population < 2 or self.generations < 1:
            raise ValueError("need population >= 2 and generations >= 1")
        if self.mutation_scale < 0.0 or self.init_spread < 0.0:
            raise ValueError("mutation_scale and init_spread must be >= 0")


def ga_search(env: IdentificationEnv, start, cfg: GaConfig = GaConfig(),
              seed: int = 0, init_pop: np.ndarray | None = None) -> SearchResult:
    """Elitist genetic algorithm over the active composition simplex.

    Children are convex combinations of two parents (which stay on the
    simplex by construction) plus projected Gaussian mutation. Parents
    and children compete together for the next generation, so the best
    individual never regresses.
    """

    rng = np.random.default_rng(seed)
    d = env.d
    if init_pop is None:
        pop = initial_population(start, cfg.population, cfg.init_spread, rng)
    else:
        pop = np.array(init_pop, dtype=np.float64)
        if pop.shape != (cfg.population, d):
            raise ValueError("init_pop must have shape (population, d)")

    evals_before = env.n_sim_evals
    evs = [env.evaluate(pop[i]) for i in range(cfg.population)]
    rewards = np.array([e.reward for e in evs])
    history = [float(np.max(rewards))]

    for _ in range(cfg.generations):
        children = np.empty_like(pop)
        for i in range(cfg.population):
            pa, pb = rng.integers(0, cfg.population, size=2)
            u = rng.random()
            child = u * pop[pa] + (1.0 - u) * pop[pb]
            child = project_simplex(child + rng.normal(0.0, cfg.mutation_scale, d))
            children[i] = child
        child_evs = [env.evaluate(children[i]) for i in range(cfg.population)]
        child_rewards = np.array([e.reward for e in child_evs])

        all_pop = np.vstack([pop, children])
        all_evs = evs + child_evs
        all_rewards = np.concatenate([rewards, child_rewards])
        order = np.argsort(-all_rewards, kind="stable")[:cfg.population]
        pop = all_pop[order].copy()
        evs = [all_evs[int(i)] for i in order]
        rewards = all_rewards[order]
        history.append(float(rewards[0]))

    best = int(np.argmax(rewards))
    return SearchResult(
        composition=env.full_composition(pop[best]),
        reward=float(rewards[best]),
        p_rmse=evs[best].p_rmse,
        q_rmse=evs[best].q_rmse,
        history=np.array(history),
        n_evals=env.n_sim_evals - evals_before,
    )


__all__ = [
    "project_simplex", "initial_population", "SearchResult",
    "PsoConfig", "pso_search", "GaConfig", "ga_search",
]
