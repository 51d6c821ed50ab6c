"""Euler-Maruyama simulation of the particle system and of i.i.d. limit copies.

All configurations in a coupled experiment consume one noise bundle generated
on the finest grid; coarser grids see pairwise-aggregated increments, so the
only difference between two runs is the discretization (or the population).
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec, is_power_of_two
from .levy import LevySpec, coarsen_array, generate_noise_path
from .measure import EmpiricalMeasure1D, w1
from .model import InitialLaw, Interaction, ModelCoefficients, check_admissible, euler_mean_curve
from .rng import stream

__all__ = [
    "GridSpec",
    "SimulationBlowup",
    "NoiseBundle",
    "ParticleCloud",
    "SimulationResult",
    "ErrorTable",
    "build_noise_bundle",
    "em_step",
    "simulate",
    "run_particle_system",
    "run_limit_copies",
    "reference_mean_curve",
    "coupled_discretization_error",
    "coupled_chaos_error",
    "time_increment_moment",
    "resolve_workers",
    "write_trajectories_csv",
]


class SimulationBlowup(RuntimeError):
    def __init__(self, step: int, particle: int):
        super().__init__(f"non-finite state at step {step}, particle {particle}")
        self.step = step
        self.particle = particle


# --------------------------------------------------------------------------
# noise bundles


@dataclass(frozen=True)
class NoiseBundle:
    """Stacked noise of ``N`` particles on the finest grid plus their initial states."""

    grid: GridSpec
    particles: tuple[int, ...]
    init: np.ndarray
    brownian: np.ndarray
    small: np.ndarray
    large: np.ndarray
    large_compensator: float

    @property
    def size(self) -> int:
        return len(self.particles)

    def subset(self, count: int) -> "NoiseBundle":
        return NoiseBundle(self.grid, self.particles[:count], self.init[:count], self.brownian[:count],
                           self.small[:count], self.large[:count], self.large_compensator)

    def view(self, factor: int) -> "BundleView":
        return BundleView(
            grid=self.grid.coarsened(factor),
            init=self.init,
            brownian=coarsen_array(self.brownian, factor),
            small=coarsen_array(self.small, factor),
            large=coarsen_array(self.large, factor),
            large_compensator=self.large_compensator,
            particles=self.particles,
        )


@dataclass(frozen=True)
class BundleView:
    grid: GridSpec
    init: np.ndarray
    brownian: np.ndarray
    small: np.ndarray
    large: np.ndarray
    large_compensator: float
    particles: tuple[int, ...]


def build_noise_bundle(levy: LevySpec, init: InitialLaw, grid: GridSpec, N: int | None = None,
                       seed: int = 0, replication: int = 0, z_cut: float = 1.0,
                       particles: Sequence[int] | None = None) -> NoiseBundle:
    if particles is None:
        if N is None or N < 1:
            raise ValueError("need N >= 1 or an explicit particle list")
        particles = range(N)
    particles = tuple(int(p) for p in particles)
    n = grid.n
    brownian = np.empty((len(particles), n))
    small = np.empty((len(particles), n))
    large = np.empty((len(particles), n))
    x0 = np.empty(len(particles))
    comp = 0.0
    for row, pid in enumerate(particles):
        path = generate_noise_path(levy, grid, z_cut, seed, replication, pid)
        brownian[row] = path.brownian_increments
        small[row] = path.small_jump_increments
        large[row] = path.binned_large_jumps()
        comp = path.large_compensator
        x0[row] = init.sample(1, stream(seed, replication, pid, "init"))[0]
    return NoiseBundle(grid, particles, x0, brownian, small, large, comp)


# --------------------------------------------------------------------------
# one step and full passes


@dataclass
class ParticleCloud:
    """States of all particles at grid index ``step``."""

    states: np.ndarray
    step: int
    grid: GridSpec

    @property
    def time(self) -> float:
        return self.step * self.grid.delta

    @property
    def measure(self) -> EmpiricalMeasure1D:
        return EmpiricalMeasure1D(self.states)


def em_step(states: np.ndarray, model: ModelCoefficients, t: float, dt: float, dW, dZ_small, dZ_large,
            large_compensator: float = 0.0, summary=None) -> np.ndarray:
    """Advance every particle from ``t_k`` to ``t_{k+1}``.

    ``summary`` is the interaction snapshot at ``t_k``; it defaults to the
    summary of ``states`` themselves (particle-system mode).  The large-jump
    compensator enters through the drift so that the whole Lévy increment is
    compensated.
    """
    if summary is None:
        summary = model.summarize(states)
    b = model.drift(t, states, summary)
    s = model.diffusion(t, states)
    h = model.jump_coef(t, states)
    return states + (b - h * large_compensator) * dt + s * dW + h * (dZ_small + dZ_large)


def _check_finite(x: np.ndarray, step: int, particles: Sequence[int]) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        raise SimulationBlowup(step, particles[int(np.argmax(bad))])


def simulate(model: ModelCoefficients, view: BundleView, mean_curve=None, record: bool = False):
    """Run the scheme over ``view.grid``.

    With ``mean_curve=None`` particles interact through their empirical
    measure; otherwise each particle is an independent limit copy whose drift
    sees ``mean_curve[k]`` at step ``k``.  Returns ``(terminal, trajectory)``.
    """
    grid = view.grid
    dt = grid.delta
    x = np.array(view.init, dtype=float)
    traj = np.empty((grid.n + 1, x.size)) if record else None
    if record:
        traj[0] = x
    for k in range(grid.n):
        t = k * dt
        summary = None if mean_curve is None else float(mean_curve[k])
        x = em_step(x, model, t, dt, view.brownian[:, k], view.small[:, k], view.large[:, k],
                    view.large_compensator, summary)
        _check_finite(x, k, view.particles)
        if record:
            traj[k + 1] = x
    return x, traj


@dataclass
class SimulationResult:
    grid: GridSpec
    terminal: EmpiricalMeasure1D
    trajectory: np.ndarray | None = None
    particles: tuple[int, ...] = ()
    replication: int = 0

    @property
    def cloud(self) -> ParticleCloud:
        return ParticleCloud(self.terminal.samples, self.grid.n, self.grid)


def _fine_grid(grid: GridSpec, n_fine: int | None) -> tuple[GridSpec, int]:
    n_fine = grid.n if n_fine is None else n_fine
    if n_fine % grid.n or not is_power_of_two(n_fine):
        raise ValueError(f"fine resolution {n_fine} must be a power-of-two multiple of n={grid.n}")
    return GridSpec(grid.T, n_fine), n_fine // grid.n


def run_particle_system(model: ModelCoefficients, levy: LevySpec, init: InitialLaw, grid: GridSpec,
                        N: int, seed: int, replication: int = 0, z_cut: float = 1.0,
                        n_fine: int | None = None, record: bool = False,
                        particles: Sequence[int] | None = None) -> SimulationResult:
    check_admissible(model, levy)
    fine, factor = _fine_grid(grid, n_fine)
    bundle = build_noise_bundle(levy, init, fine, N, seed, replication, z_cut, particles)
    x, traj = simulate(model, bundle.view(factor), record=record)
    return SimulationResult(grid, EmpiricalMeasure1D(x), traj, bundle.particles, replication)


def _resolve_mean_curve(model, init, grid, mean_curve):
    if model.interaction is Interaction.EMPIRICAL:
        raise ValueError("limit copies need a MeanFunctional interaction; this model sees the full measure")
    if mean_curve is None:
        try:
            return euler_mean_curve(model, init.mean, grid)
        except TypeError:
            raise ValueError("no mean curve supplied and the model has no closed mean dynamics") from None
    if callable(mean_curve):
        return np.array([mean_curve(t) for t in grid.times])
    m = np.asarray(mean_curve, dtype=float)
    if m.shape != (grid.n + 1,) and m.shape != (grid.n,):
        raise ValueError(f"mean curve must have {grid.n + 1} grid values, got shape {m.shape}")
    return m


def run_limit_copies(model: ModelCoefficients, levy: LevySpec, init: InitialLaw, grid: GridSpec, N: int,
                     seed: int, mean_curve=None, replication: int = 0, z_cut: float = 1.0,
                     n_fine: int | None = None, record: bool = False,
                     particles: Sequence[int] | None = None) -> SimulationResult:
    """Independent copies driven by ``b(t, x, m_ref(t))`` on the particle system's noise.

    ``mean_curve`` may be an array of grid values, a callable of ``t``, or
    ``None`` for the Euler mean recursion of models with closed mean dynamics.
    """
    check_admissible(model, levy)
    m = _resolve_mean_curve(model, init, grid, mean_curve)
    fine, factor = _fine_grid(grid, n_fine)
    bundle = build_noise_bundle(levy, init, fine, N, seed, replication, z_cut, particles)
    x, traj = simulate(model, bundle.view(factor), mean_curve=m, record=record)
    return SimulationResult(grid, EmpiricalMeasure1D(x), traj, bundle.particles, replication)


def reference_mean_curve(model, levy, init, grid, N_ref, seed, replication=0, z_cut=1.0) -> np.ndarray:
    """Grid values of the empirical mean of a large reference particle system."""
    res = run_particle_system(model, levy, init, grid, N_ref, seed, replication, z_cut, record=True)
    return res.trajectory.mean(axis=1)


# --------------------------------------------------------------------------
# coupled experiments


def resolve_workers(workers) -> int:
    if workers in (None, "auto"):
        return os.cpu_count() or 1
    w = int(workers)
    if w < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return w


def _map(fn: Callable, jobs: list, workers) -> list:
    workers = resolve_workers(workers)
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class ErrorTable:
    """Mean error per scale over replications, with standard errors."""

    scales: list[int]
    errors: np.ndarray
    stderrs: np.ndarray
    counts: np.ndarray
    per_replication: np.ndarray
    blowups: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_replications(cls, scales, rows, extra_rows=None):
        ok = [r for r in rows if r is not None]
        blowups = len(rows) - len(ok)
        per = np.array(ok, dtype=float).reshape(len(ok), len(scales))
        R = per.shape[0]
        errors = per.mean(axis=0) if R else np.full(len(scales), np.nan)
        stderrs = per.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(len(scales), np.nan)
        table = cls(list(scales), errors, stderrs, np.full(len(scales), R), per, blowups)
        if extra_rows is not None:
            ok_extra = np.array([e for e, r in zip(extra_rows, rows) if r is not None], dtype=float)
            ok_extra = ok_extra.reshape(R, len(scales))
            table.extra["coupled_error"] = ok_extra.mean(axis=0) if R else np.full(len(scales), np.nan)
            table.extra["coupled_stderr"] = (ok_extra.std(axis=0, ddof=1) / math.sqrt(R) if R > 1
                                             else np.full(len(scales), np.nan))
        return table

    def rows(self):
        return [(s, float(e), float(se), int(c))
                for s, e, se, c in zip(self.scales, self.errors, self.stderrs, self.counts)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_or_N", "error", "stderr", "count"])
            for s, e, se, c in self.rows():
                w.writerow([s, repr(e), repr(se), c])


def _discretization_job(job):
    model, levy, init, T, N, n_list, n_ref, seed, rep, z_cut = job
    bundle = build_noise_bundle(levy, init, GridSpec(T, n_ref), N, seed, rep, z_cut)
    try:
        ref, _ = simulate(model, bundle.view(1))
        out = []
        for n in n_list:
            x, _ = simulate(model, bundle.view(n_ref // n))
            out.append(float(np.mean(np.abs(ref - x))))
    except SimulationBlowup:
        return None
    return out


def coupled_discretization_error(model, levy, init, N: int, n_list: Sequence[int], n_ref: int, seed: int,
                                 R: int, T: float = 1.0, z_cut: float = 1.0, workers=1) -> ErrorTable:
    """``E|X^{n_ref,i}_T - X^{n,i}_T|`` per ``n`` under common noise.

    The ``n_ref`` solution stands in for the exact particle system.
    """
    if R < 1:
        raise ValueError("need at least one replication")
    n_list = sorted(int(n) for n in n_list)
    if not is_power_of_two(n_ref) or any(not is_power_of_two(n) or n_ref % n for n in n_list):
        raise ValueError(f"every n in {n_list} must be a power of two dividing n_ref={n_ref}")
    if n_ref < 8 * max(n_list) and n_ref != max(n_list):
        raise ValueError(f"n_ref={n_ref} must be at least 8 * max(n_list)={8 * max(n_list)}")
    check_admissible(model, levy)
    jobs = [(model, levy, init, T, N, n_list, n_ref, seed, rep, z_cut) for rep in range(R)]
    rows = _map(_discretization_job, jobs, workers)
    return ErrorTable.from_replications(n_list, rows)


def _chaos_job(job):
    model, levy, init, grid, N_list, N_ref, seed, rep, z_cut = job
    bundle = build_noise_bundle(levy, init, grid, N_ref, seed, rep, z_cut)
    view = bundle.view(1)
    try:
        if model.interaction is Interaction.EMPIRICAL:
            proxy, _ = simulate(model, view)
            copies = None
        else:
            try:
                m = euler_mean_curve(model, init.mean, grid)
            except TypeError:
                ref, traj = simulate(model, view, record=True)
                m = traj.mean(axis=1)
            proxy, _ = simulate(model, view, mean_curve=m)
            copies = proxy
        w_row, c_row = [], []
        for N in N_list:
            x, _ = simulate(model, bundle.subset(N).view(1))
            w_row.append(w1(x, proxy))
            c_row.append(float(np.mean(np.abs(x - copies[:N]))) if copies is not None else math.nan)
    except SimulationBlowup:
        return None, None
    return w_row, c_row


def coupled_chaos_error(model, levy, init, N_list: Sequence[int], N_ref: int, grid: GridSpec, seed: int,
                        R: int, z_cut: float = 1.0, workers=1) -> ErrorTable:
    """``E W1(mu^N_T, proxy)`` per ``N``.

    The proxy for the limit law is the cloud of ``N_ref`` limit copies (mean
    interaction, driven by the Euler mean recursion or a reference run) or the
    ``N_ref`` particle system itself (full empirical interaction).  Particle
    ``i`` of every system shares its noise with copy ``i`` of the proxy; the
    coupled error ``E|X^{i,N}_T - Xbar^i_T|`` is stored in ``extra``.
    """
    if R < 1:
        raise ValueError("need at least one replication")
    N_list = sorted(int(n) for n in N_list)
    if N_ref < max(N_list):
        raise ValueError(f"N_ref={N_ref} must be at least max(N_list)={max(N_list)}")
    check_admissible(model, levy)
    jobs = [(model, levy, init, grid, N_list, N_ref, seed, rep, z_cut) for rep in range(R)]
    out = _map(_chaos_job, jobs, workers)
    rows = [w for w, _ in out]
    extra = [c for _, c in out]
    return ErrorTable.from_replications(N_list, rows, extra_rows=extra)


def time_increment_moment(model, levy, init, T: float, n: int, N: int, seed: int, beta: float,
                          refine: int = 8, z_cut: float = 1.0, replication: int = 0) -> float:
    """``sup_t E|X^n_t - X^n_{eta(t)}|^beta`` over the ``refine``-fold finer points.

    Between grid points the scheme is the affine interpolation of frozen
    coefficients against the partial noise increments.
    """
    fine = GridSpec(T, n * refine)
    bundle = build_noise_bundle(levy, init, fine, N, seed, replication, z_cut)
    _, traj = simulate(model, bundle.view(refine), record=True)
    dt_f = fine.delta
    best = 0.0
    for k in range(n):
        x = traj[k]
        t = k * refine * dt_f
        b = model.drift(t, x, model.summarize(x))
        s = model.diffusion(t, x)
        h = model.jump_coef(t, x)
        cols = slice(k * refine, (k + 1) * refine)
        W = np.cumsum(bundle.brownian[:, cols], axis=1)
        Z = np.cumsum(bundle.small[:, cols] + bundle.large[:, cols], axis=1)
        tau = dt_f * np.arange(1, refine + 1)
        inc = (b - h * bundle.large_compensator)[:, None] * tau + s[:, None] * W + h[:, None] * Z
        best = max(best, float(np.max(np.mean(np.abs(inc) ** beta, axis=0))))
    return best


def write_trajectories_csv(path, results: Sequence[SimulationResult]) -> None:
    """CSV with header ``replication,particle,t,x``; terminal states only when unrecorded."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "particle", "t", "x"])
        for res in results:
            times = res.grid.times
            if res.trajectory is None:
                for pid, x in zip(res.particles, res.terminal.samples):
                    w.writerow([res.replication, pid, repr(float(times[-1])), repr(float(x))])
                continue
            for k, t in enumerate(times):
                for pid, x in zip(res.particles, res.trajectory[k]):
                    w.writerow([res.replication, pid, repr(float(t)), repr(float(x))])
