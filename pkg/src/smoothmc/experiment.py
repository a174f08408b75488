"""End-to-end procedures: naive baseline, dense/sparse smoothed model
checking, and the active loop with streaming updates."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import streaming
from .crn import SIR_MODEL, SIR_PROPERTY, CRNModel, load_model, parse_model
from .kernels import KernelParams
from .monitor import Formula, check, horizon, parse_property
from .query import ParameterSpace, QueryConfig, choose_points, grid_design, kmeans, lhs_design, uniform_design
from .ssa import simulate_streams
from .svgp import (
    Dataset,
    FitOptions,
    VariationalPosterior,
    fit,
    init_posterior,
    latent_marginals,
    probit_probability,
    probit_variance,
)

log = logging.getLogger(__name__)

# Fixed offsets mixed with the master seed, one per phase.
SEED_INITIAL_SIM = 1
SEED_INDUCING = 2
SEED_DESIGN = 3
SEED_BASELINE = 4
SEED_QUERY = 100
SEED_QUERY_SIM = 200


def phase_seed(master: int, offset: int) -> int:
    return int(np.random.SeedSequence([master, offset]).generate_state(1, np.uint64)[0])


def parse_design(spec: str) -> tuple[str, tuple[int, ...]]:
    """``grid:10x10``, ``uniform:100``, ``lhs:100``, ``kmeans:100`` or ``initial``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "initial" and not arg:
        return kind, ()
    if kind == "grid":
        try:
            dims = tuple(int(t) for t in arg.lower().split("x"))
        except ValueError:
            raise ValueError(f"bad grid spec {spec!r}") from None
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"bad grid spec {spec!r}")
        return kind, dims
    if kind in ("uniform", "lhs", "kmeans"):
        try:
            n = int(arg)
        except ValueError:
            raise ValueError(f"bad design spec {spec!r}") from None
        if n < 1:
            raise ValueError(f"bad design spec {spec!r}")
        return kind, (n,)
    raise ValueError(f"unknown design {spec!r}")


def make_design(space: ParameterSpace, spec: str, seed) -> np.ndarray:
    kind, args = parse_design(spec)
    if kind == "grid":
        return grid_design(space, args)
    if kind == "uniform":
        return uniform_design(space, args[0], seed)
    if kind == "lhs":
        return lhs_design(space, args[0], seed)
    raise ValueError(f"{spec!r} is not a sampling design")


@dataclass
class ExperimentConfig:
    model_path: str | None = None
    property: str = SIR_PROPERTY
    property_path: str | None = None
    t_end: float = 120.0
    initial_design: str = "grid:10x10"
    n_traj: int = 10
    inducing: str = "initial"
    active_iterations: int = 2
    query: QueryConfig = field(default_factory=QueryConfig)
    fit: FitOptions = field(default_factory=FitOptions)
    kernel: KernelParams = field(default_factory=KernelParams)
    eval_grid: str = "grid:20x20"
    baseline_grid: str = "grid:20x20"
    baseline_runs: int = 2000
    update_inducing: str = "fixed"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n_traj < 1 or self.baseline_runs < 1 or self.active_iterations < 0 or self.threads < 1:
            raise ValueError("counts must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.update_inducing not in ("fixed", "kmeans"):
            raise ValueError(f"update_inducing must be 'fixed' or 'kmeans', got {self.update_inducing!r}")
        for spec in (self.initial_design, self.inducing, self.eval_grid, self.baseline_grid):
            parse_design(spec)

    def load_model(self) -> CRNModel:
        return parse_model(SIR_MODEL) if self.model_path is None else load_model(self.model_path)

    def load_property(self, model: CRNModel) -> Formula:
        text = self.property if self.property_path is None else Path(self.property_path).read_text()
        phi = parse_property(text.strip(), model.species)
        if horizon(phi) > self.t_end:
            raise ValueError(f"property horizon {horizon(phi)} exceeds t_end {self.t_end}")
        return phi

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    method: str
    posterior: VariationalPosterior
    eval_points: np.ndarray
    surface_mean: np.ndarray
    surface_variance: np.ndarray
    datasets: list[Dataset] = field(default_factory=list)
    traces: list[tuple[float, ...]] = field(default_factory=list)
    iteration_surfaces: list[np.ndarray] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def n_observations(self) -> int:
        return sum(len(d) for d in self.datasets)

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_surface_csv(out / "surface.csv", self.eval_points, self.surface_mean, self.surface_variance)
        for i, s in enumerate(self.iteration_surfaces):
            write_surface_csv(out / f"surface_iter{i}.csv", self.eval_points, s[0], s[1])
        for i, d in enumerate(self.datasets):
            write_dataset_csv(out / f"data_iter{i}.csv", d)
        self.posterior.save(out / "posterior.json")
        meta = {
            "method": self.method,
            "config": self.config,
            "timings": self.timings,
            "n_observations": self.n_observations,
            "batch_sizes": [len(d) for d in self.datasets],
            "elbo_traces": [list(t) for t in self.traces],
            "inducing_points": self.posterior.m,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        (out / "metadata.json").write_text(json.dumps(meta, indent=2))
        return out


# ---------------------------------------------------------------------------
# persistence helpers


def _coord_header(d: int) -> list[str]:
    return [f"x{i + 1}" for i in range(d)]


def write_surface_csv(path, points, mean, variance) -> None:
    points = np.atleast_2d(points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*_coord_header(points.shape[1]), "mean", "variance"])
        for x, m, v in zip(points, mean, variance):
            w.writerow([*(repr(float(c)) for c in x), repr(float(m)), repr(float(v))])


def write_baseline_csv(path, points, estimate) -> None:
    points = np.atleast_2d(points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*_coord_header(points.shape[1]), "estimate"])
        for x, e in zip(points, estimate):
            w.writerow([*(repr(float(c)) for c in x), repr(float(e))])


def write_dataset_csv(path, data: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*_coord_header(data.points.shape[1]), "label"])
        for x, y in zip(data.points, data.labels):
            w.writerow([*(repr(float(c)) for c in x), int(y)])


def read_table_csv(path, value_columns) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Read a coordinate table; returns points and the requested value columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    coords = [i for i, h in enumerate(header) if h.startswith("x")]
    missing = [c for c in value_columns if c not in header]
    if missing or not coords:
        raise ValueError(f"{path}: expected columns x1.. and {value_columns}, got {header}")
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return body[:, coords], {c: body[:, header.index(c)] for c in value_columns}


# ---------------------------------------------------------------------------
# simulation phases


def label_points(model: CRNModel, phi: Formula, points, n_traj: int, t_end: float, seed: int, threads: int = 1) -> Dataset:
    """Simulate ``n_traj`` runs per point and label each; stream ``i*n_traj+j``."""
    points = np.asarray(points, dtype=float).reshape(-1, model.dim)
    if len(points) == 0:
        return Dataset.empty(model.dim)

    def one(i):
        trajs = simulate_streams(model, points[i], t_end, seed, range(i * n_traj, (i + 1) * n_traj))
        return [check(t, phi, model.species) for t in trajs]

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            labels = list(pool.map(one, range(len(points))))
    else:
        labels = [one(i) for i in range(len(points))]
    return Dataset(np.repeat(points, n_traj, axis=0), np.concatenate(labels))


def generate_initial_data(model, phi, space: ParameterSpace, design, n_traj: int, seed: int, t_end: float, threads: int = 1) -> Dataset:
    if isinstance(design, str):
        design = make_design(space, design, phase_seed(seed, SEED_DESIGN))
    return label_points(model, phi, design, n_traj, t_end, seed, threads)


def naive_baseline(model, phi, grid, runs_per_point: int, seed: int, t_end: float, threads: int = 1) -> np.ndarray:
    """Empirical satisfaction probability at each grid point."""
    grid = np.asarray(grid, dtype=float).reshape(-1, model.dim)
    data = label_points(model, phi, grid, runs_per_point, t_end, seed, threads)
    return data.labels.reshape(len(grid), runs_per_point).mean(axis=1)


# ---------------------------------------------------------------------------
# smoothed model checking runs


class _Clock:
    def __init__(self):
        self.t = {"ssa": 0.0, "inference": 0.0, "query": 0.0}

    def timed(self, key, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.t[key] += time.perf_counter() - t0
        return out


def _unit(space: ParameterSpace, data: Dataset) -> Dataset:
    return Dataset(space.to_unit(data.points), data.labels)


def _surface(q: VariationalPosterior, unit_points):
    f = latent_marginals(q, unit_points)
    return probit_probability(f.mean, f.variance), probit_variance(f.mean, f.variance)


def _inducing_points(config: ExperimentConfig, space: ParameterSpace, data_unit: Dataset) -> np.ndarray:
    kind, args = parse_design(config.inducing)
    locs = np.unique(data_unit.points, axis=0)
    if kind == "initial":
        return locs
    if kind == "grid":
        return space.to_unit(grid_design(space, args))
    if kind == "kmeans":
        return kmeans(locs, args[0], phase_seed(config.seed, SEED_INDUCING))
    raise ValueError(f"{config.inducing!r} cannot define inducing points")


def _prepare(config: ExperimentConfig):
    model = config.load_model()
    phi = config.load_property(model)
    space = ParameterSpace(model.bounds)
    eval_points = make_design(space, config.eval_grid, None)
    return model, phi, space, eval_points


def _single_fit(config: ExperimentConfig, method: str, dense: bool) -> RunReport:
    model, phi, space, eval_points = _prepare(config)
    clock = _Clock()
    start = time.perf_counter()
    data = clock.timed(
        "ssa",
        generate_initial_data,
        model, phi, space, config.initial_design, config.n_traj,
        phase_seed(config.seed, SEED_INITIAL_SIM), config.t_end, config.threads,
    )
    unit = _unit(space, data)
    if dense:
        inducing = np.unique(unit.points, axis=0)
    else:
        inducing = _inducing_points(config, space, unit)
    q = clock.timed("inference", fit, init_posterior(inducing, config.kernel), unit, config.fit)
    mean, var = _surface(q, space.to_unit(eval_points))
    clock.t["total"] = time.perf_counter() - start
    return RunReport(
        method, q, eval_points, mean, var,
        datasets=[data], traces=[q.trace], iteration_surfaces=[(mean, var)],
        timings=dict(clock.t), config=config.to_dict(),
    )


def run_smoothed(config: ExperimentConfig) -> RunReport:
    """Inducing points at every distinct training location (no sparsity)."""
    return _single_fit(config, "smoothed", dense=True)


def run_sparse(config: ExperimentConfig) -> RunReport:
    return _single_fit(config, "sparse", dense=False)


def run_active(config: ExperimentConfig) -> RunReport:
    if config.active_iterations < 1:
        raise ValueError("active runs need at least one iteration")
    model, phi, space, eval_points = _prepare(config)
    clock = _Clock()
    start = time.perf_counter()
    data = clock.timed(
        "ssa",
        generate_initial_data,
        model, phi, space, config.initial_design, config.n_traj,
        phase_seed(config.seed, SEED_INITIAL_SIM), config.t_end, config.threads,
    )
    unit = _unit(space, data)
    inducing = _inducing_points(config, space, unit)
    q = clock.timed("inference", fit, init_posterior(inducing, config.kernel), unit, config.fit)
    datasets, traces, surfaces = [data], [q.trace], [_surface(q, space.to_unit(eval_points))]
    seen = unit

    for it in range(1, config.active_iterations + 1):
        qcfg = replace(config.query, seed=phase_seed(config.seed, SEED_QUERY + it))
        points = clock.timed("query", choose_points, q, space, qcfg)
        new = clock.timed(
            "ssa", label_points, model, phi, points, config.n_traj, config.t_end,
            phase_seed(config.seed, SEED_QUERY_SIM + it), config.threads,
        )
        new_unit = _unit(space, new)
        seen = seen.concat(new_unit)
        v = None
        if config.update_inducing == "kmeans":
            locs = np.unique(seen.points, axis=0)
            v = kmeans(locs, min(q.m, len(locs)), phase_seed(config.seed, SEED_INDUCING + it))
        q = clock.timed("inference", streaming.update, q, new_unit, v, config.fit)
        datasets.append(new)
        traces.append(q.trace)
        surfaces.append(_surface(q, space.to_unit(eval_points)))
        log.info("iteration %d: %d new observations, elbo %.3f", it, len(new), q.trace[-1])

    clock.t["total"] = time.perf_counter() - start
    mean, var = surfaces[-1]
    return RunReport(
        f"active-{config.query.strategy}", q, eval_points, mean, var,
        datasets=datasets, traces=traces, iteration_surfaces=surfaces,
        timings=dict(clock.t), config=config.to_dict(),
    )


def run(config: ExperimentConfig, mode: str) -> RunReport:
    modes = {"dense": run_smoothed, "sparse": run_sparse, "active": run_active}
    if mode not in modes:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(modes)}")
    return modes[mode](config)


def baseline_for(config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Baseline grid and estimates for the config's model and property."""
    model = config.load_model()
    phi = config.load_property(model)
    space = ParameterSpace(model.bounds)
    grid = make_design(space, config.baseline_grid, None)
    est = naive_baseline(
        model, phi, grid, config.baseline_runs, phase_seed(config.seed, SEED_BASELINE), config.t_end, config.threads
    )
    return grid, est
