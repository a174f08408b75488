"""Exact stochastic simulation (Gillespie direct method).

Every trajectory draws from its own counter-based Philox stream keyed by
``(seed, stream)``, so batch output is independent of execution order and of
the number of worker threads.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .crn import CRNModel

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        key = ((self.index & _MASK64) << 64) | (self.seed & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Right-continuous piecewise-constant path.

    ``states[i]`` holds on ``[times[i], times[i+1])``; the last state holds
    up to ``t_end``.
    """

    times: np.ndarray
    states: np.ndarray
    t_end: float

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.t_end == other.t_end
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )

    def state_at(self, t: float) -> np.ndarray:
        i = np.searchsorted(self.times, t, side="right") - 1
        return self.states[max(i, 0)]


@numba.njit(cache=True, nogil=True)
def _direct_method(x0, reactants, changes, rates, t_end, uniforms, times, states):
    """Run until absorption, the horizon, or the uniform buffer runs out.

    Returns the number of recorded states, or -1 if ``uniforms`` (two per
    jump) was exhausted before the path finished.
    """
    n_reac, n_spec = reactants.shape
    x = x0.copy()
    props = np.empty(n_reac)
    t = 0.0
    times[0] = 0.0
    states[0, :] = x
    k = 1
    u = 0
    max_jumps = min(uniforms.shape[0] // 2, times.shape[0] - 1)
    while True:
        total = 0.0
        for r in range(n_reac):
            a = rates[r]
            for s in range(n_spec):
                for j in range(reactants[r, s]):
                    a *= max(x[s] - j, 0)
            props[r] = a
            total += a
        if total <= 0.0:
            return k
        if k - 1 >= max_jumps:
            return -1
        # 1 - U lies in (0, 1], keeping the log finite
        t += -np.log(1.0 - uniforms[u]) / total
        target = uniforms[u + 1] * total
        u += 2
        if t > t_end:
            return k
        acc = 0.0
        chosen = n_reac - 1
        for r in range(n_reac):
            acc += props[r]
            if target < acc and props[r] > 0.0:
                chosen = r
                break
        # guard against round-off landing on a zero-propensity tail reaction
        while props[chosen] <= 0.0:
            chosen -= 1
        for s in range(n_spec):
            x[s] += changes[chosen, s]
        times[k] = t
        states[k, :] = x
        k += 1


def _compiled(model: CRNModel):
    return (
        np.asarray(model.initial_state, dtype=np.int64),
        np.ascontiguousarray(model.reactant_matrix),
        np.ascontiguousarray(model.change_matrix),
        model.rate_index,
    )


def _simulate(arrays, point, t_end, rng: RngStream, capacity: int) -> Trajectory:
    x0, reactants, changes, rate_index = arrays
    rates = np.asarray(point, dtype=float)[rate_index]
    while True:
        # Redrawing from a fresh generator reproduces the same prefix, so
        # growing the buffer never changes the path.
        uniforms = rng.generator().random(2 * capacity)
        times = np.empty(capacity + 1)
        states = np.empty((capacity + 1, x0.shape[0]), dtype=np.int64)
        n = _direct_method(x0, reactants, changes, rates, float(t_end), uniforms, times, states)
        if n >= 0:
            return Trajectory(times[:n].copy(), states[:n].copy(), float(t_end))
        capacity *= 4


def simulate(
    model: CRNModel, point, t_end: float, rng: RngStream | int = 0, capacity: int = 256
) -> Trajectory:
    """Sample one trajectory on ``[0, t_end]``."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    x = model.check_point(point)
    return _simulate(_compiled(model), x, t_end, rng, capacity)


def simulate_streams(model: CRNModel, point, t_end: float, base_seed: int, indices) -> list[Trajectory]:
    """Trajectories at one point for the given stream indices."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    arrays = _compiled(model)
    x = model.check_point(point)
    return [_simulate(arrays, x, t_end, RngStream(base_seed, int(j)), 256) for j in indices]


def simulate_batch(
    model: CRNModel,
    points,
    n_traj: int,
    t_end: float,
    base_seed: int,
    threads: int = 1,
) -> list[list[Trajectory]]:
    """Trajectory ``(i, j)`` uses ``RngStream(base_seed, i * n_traj + j)``."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    points = list(points)

    def run(i):
        return simulate_streams(model, points[i], t_end, base_seed, range(i * n_traj, (i + 1) * n_traj))

    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, range(len(points))))
    return [run(i) for i in range(len(points))]


def write_trajectory_csv(traj: Trajectory, species, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *species])
        for t, row in zip(traj.times, traj.states):
            w.writerow([repr(float(t)), *(int(v) for v in row)])
