"""Spectrally-positive Lévy measures and the driving noise built from them.

Three parametric families are supported:

* ``StablePositive``  ``nu(dz) = c z^{-1-alpha} dz`` on ``(0, inf)``, ``alpha`` in ``(1, 2]``
* ``TemperedStable``  ``nu(dz) = c exp(-theta z) z^{-1-alpha} dz``, ``alpha`` in ``(1, 2)``
* ``CompoundPoisson`` ``nu(dz) = rate * F(dz)`` for a named one-sided jump law ``F``

``alpha = 2`` in the stable family is the Gaussian limit: the jump measure is
null and increments are ``N(0, 2 c dt)``.  Indices are still reported as
``(2, 2)`` so that the family stays continuous in ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate, special, stats

from .grid import GridSpec, is_power_of_two
from .rng import stream

QUAD_RTOL = 1e-10


class DivergenceError(ValueError):
    """A Lévy-measure integral that the caller asked for is infinite."""


def _quad(f, a, b, points=None):
    if a >= b:
        return 0.0
    if np.isinf(b):
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
    else:
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=400, points=points)
    return float(val)


# --------------------------------------------------------------------------
# jump laws for the compound Poisson family


@dataclass(frozen=True)
class JumpLaw:
    """Named one-sided jump distribution: ``exponential(scale)``, ``uniform(low, high)``
    or ``pareto(shape, scale)``."""

    name: str
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        if self.name == "exponential":
            if len(p) != 1 or p[0] <= 0:
                raise ValueError("exponential jump law needs one positive scale")
        elif self.name == "uniform":
            if len(p) != 2 or not 0 <= p[0] < p[1]:
                raise ValueError("uniform jump law needs 0 <= low < high")
        elif self.name == "pareto":
            if len(p) != 2 or p[0] <= 1 or p[1] <= 0:
                raise DivergenceError("pareto jump law needs shape > 1 (finite mean) and scale > 0")
        else:
            raise ValueError(f"unknown jump law {self.name!r}")

    @property
    def dist(self):
        p = self.params
        if self.name == "exponential":
            return stats.expon(scale=p[0])
        if self.name == "uniform":
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        return stats.pareto(b=p[0], scale=p[1])

    @property
    def support(self) -> tuple[float, float]:
        p = self.params
        if self.name == "exponential":
            return 0.0, math.inf
        if self.name == "uniform":
            return p[0], p[1]
        return p[1], math.inf

    @property
    def tail_index(self) -> float:
        """``sup{beta <= 2 : E[Z^beta] < inf}``."""
        if self.name == "pareto":
            return min(self.params[0], 2.0)
        return 2.0

    def partial_moment(self, power: float, lo: float, hi: float) -> float:
        s_lo, s_hi = self.support
        lo, hi = max(lo, s_lo), min(hi, s_hi)
        if lo >= hi:
            return 0.0
        p = self.params
        if self.name == "exponential":
            s = p[0]
            q = special.gammaincc(power + 1, lo / s) - (0.0 if math.isinf(hi) else special.gammaincc(power + 1, hi / s))
            return float(s**power * special.gamma(power + 1) * q)
        if self.name == "uniform":
            return (hi ** (power + 1) - lo ** (power + 1)) / ((power + 1) * (p[1] - p[0]))
        b, m = p
        if power < b:
            upper = 0.0 if math.isinf(hi) else hi ** (power - b)
            return b * m**b * (lo ** (power - b) - upper) / (b - power)
        if math.isinf(hi):
            return math.inf
        pdf = self.dist.pdf
        return _quad(lambda z: z**power * pdf(z), lo, hi)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.dist.ppf(rng.random(size)), dtype=float)

    def sample_above(self, x: float, size: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws from the law conditioned on ``Z >= x``."""
        d = self.dist
        sf_x = float(d.sf(x))
        u = rng.random(size)
        return np.asarray(d.isf(u * sf_x), dtype=float)

    def sample_below(self, x: float, size: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dist
        cdf_x = float(d.cdf(x))
        u = rng.random(size)
        return np.asarray(d.ppf(u * cdf_x), dtype=float)


# --------------------------------------------------------------------------
# measure families


class LevyMeasureSpec:
    """Base class; concrete families below."""

    family: str = ""

    @property
    def alpha_nu(self) -> float:
        return classify_indices(self)[0]

    @property
    def beta_nu(self) -> float:
        return classify_indices(self)[1]

    def density(self, z):
        raise NotImplementedError

    def tail_rate(self, x: float) -> float:
        """``nu([x, inf))``."""
        raise NotImplementedError


@dataclass(frozen=True)
class StablePositive(LevyMeasureSpec):
    alpha: float
    scale: float = 1.0
    family: str = field(default="stable", init=False)

    def __post_init__(self):
        if not 1 < self.alpha <= 2:
            raise ValueError(f"stable alpha must lie in (1, 2], got {self.alpha}")
        if not self.scale > 0:
            raise ValueError(f"stable scale must be positive, got {self.scale}")

    @property
    def gaussian(self) -> bool:
        return self.alpha == 2

    @property
    def sigma(self) -> float:
        """Scale of the unit-time increment as an ``S(alpha, 1, sigma, 0)`` law."""
        a = self.alpha
        if self.gaussian:
            return math.sqrt(self.scale)
        return (-self.scale * special.gamma(-a) * math.cos(math.pi * a / 2)) ** (1 / a)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        if self.gaussian:
            return np.zeros_like(z)
        return np.where(z > 0, self.scale * np.abs(z) ** (-1 - self.alpha), 0.0)

    def tail_rate(self, x: float) -> float:
        if self.gaussian:
            return 0.0
        return self.scale * x ** (-self.alpha) / self.alpha


@dataclass(frozen=True)
class TemperedStable(LevyMeasureSpec):
    alpha: float
    scale: float = 1.0
    theta: float = 1.0
    family: str = field(default="tempered", init=False)

    def __post_init__(self):
        if not 1 < self.alpha < 2:
            raise ValueError(f"tempered stable alpha must lie in (1, 2), got {self.alpha}")
        if not self.scale > 0 or not self.theta > 0:
            raise ValueError("tempered stable scale and theta must be positive")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        zz = np.where(z > 0, z, 1.0)
        return np.where(z > 0, self.scale * np.exp(-self.theta * zz) * zz ** (-1 - self.alpha), 0.0)

    def tail_rate(self, x: float) -> float:
        return _quad(lambda z: float(self.density(z)), x, math.inf)


@dataclass(frozen=True)
class CompoundPoisson(LevyMeasureSpec):
    rate: float
    jump_law: JumpLaw = JumpLaw("exponential", (1.0,))
    family: str = field(default="cpoisson", init=False)

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"compound Poisson rate must be positive, got {self.rate}")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return self.rate * self.jump_law.dist.pdf(z)

    def tail_rate(self, x: float) -> float:
        return self.rate * float(self.jump_law.dist.sf(x))


LevySpec = Union[StablePositive, TemperedStable, CompoundPoisson]


def classify_indices(spec: LevySpec) -> tuple[float, float]:
    """Closed-form singularity index ``alpha_nu`` and tail index ``beta_nu``."""
    if isinstance(spec, StablePositive):
        return float(spec.alpha), float(spec.alpha)
    if isinstance(spec, TemperedStable):
        return float(spec.alpha), 2.0
    if isinstance(spec, CompoundPoisson):
        return 1.0, float(spec.jump_law.tail_index)
    raise TypeError(f"not a Lévy measure spec: {spec!r}")


def tail_integrals(spec: LevySpec, x: float) -> tuple[float, float]:
    """Return ``(int_0^x z^2 nu(dz), int_x^inf z nu(dz))``."""
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    if isinstance(spec, StablePositive):
        if spec.gaussian:
            return 0.0, 0.0
        a, c = spec.alpha, spec.scale
        return c * x ** (2 - a) / (2 - a), c * x ** (1 - a) / (a - 1)
    if isinstance(spec, TemperedStable):
        a, c, th = spec.alpha, spec.scale, spec.theta
        y = th * x
        small = c * th ** (a - 2) * special.gamma(2 - a) * special.gammainc(2 - a, y)
        # Gamma(1-a, y) through Gamma(s, y) = (Gamma(s+1, y) - y^s e^{-y}) / s, s = 1 - a < 0
        s = 1 - a
        upper_2a = special.gamma(2 - a) * special.gammaincc(2 - a, y)
        upper_1a = (upper_2a - y**s * math.exp(-y)) / s
        large = c * th ** (a - 1) * upper_1a
        return float(small), float(large)
    if isinstance(spec, CompoundPoisson):
        law = spec.jump_law
        small = spec.rate * law.partial_moment(2.0, 0.0, x)
        large = spec.rate * law.partial_moment(1.0, x, math.inf)
        if not np.isfinite(small) or not np.isfinite(large):
            raise DivergenceError("compound Poisson tail integral diverges")
        return small, large
    raise TypeError(f"not a Lévy measure spec: {spec!r}")


def first_absolute_integral(spec: LevySpec) -> float:
    """``int_0^inf (z ^ z^2) nu(dz)``, finite for every representable family."""
    small, large = tail_integrals(spec, 1.0)
    return small + large


# --------------------------------------------------------------------------
# sampling


def stable_standard(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws of ``S(alpha, beta=1, 1, 0)``, zero mean for alpha > 1."""
    v = rng.uniform(-math.pi / 2, math.pi / 2, size)
    w = rng.standard_exponential(size)
    t = math.tan(math.pi * alpha / 2)
    b = math.atan(t) / alpha
    s = (1 + t * t) ** (1 / (2 * alpha))
    av = alpha * (v + b)
    return s * np.sin(av) / np.cos(v) ** (1 / alpha) * (np.cos(v - av) / w) ** ((1 - alpha) / alpha)


def _compensated_jumps_above(spec, dt, z_lo, size, rng):
    """Compensated sum of all jumps of size >= z_lo over a window of length dt, per draw."""
    if isinstance(spec, TemperedStable):
        a, c = spec.alpha, spec.scale
        prop_rate = c * z_lo ** (-a) / a
        counts = rng.poisson(prop_rate * dt, size)
        total = int(counts.sum())
        marks = z_lo * rng.random(total) ** (-1 / a)
        keep = rng.random(total) < np.exp(-spec.theta * marks)
    else:
        counts = rng.poisson(spec.tail_rate(z_lo) * dt, size)
        total = int(counts.sum())
        marks = spec.jump_law.sample_above(z_lo, total, rng)
        keep = np.ones(total, dtype=bool)
    owner = np.repeat(np.arange(size), counts)
    sums = np.bincount(owner[keep], weights=marks[keep], minlength=size)
    _, comp = tail_integrals(spec, z_lo) if z_lo > 0 else (0.0, spec.rate * spec.jump_law.dist.mean())
    return sums - dt * comp


def sample_increment(spec: LevySpec, dt: float, rng: np.random.Generator, size=None):
    """Draw ``Z_{t+dt} - Z_t``; zero mean by compensation.

    Stable increments are exact.  Tempered stable increments simulate every jump
    above ``z_trunc = min(1, dt^{1/alpha})`` and replace the rest by a matched
    Gaussian.  Compound Poisson increments are exact.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = 1 if size is None else int(np.prod(size))
    if isinstance(spec, StablePositive):
        if spec.gaussian:
            out = math.sqrt(2 * spec.scale * dt) * rng.standard_normal(n)
        else:
            out = spec.sigma * dt ** (1 / spec.alpha) * stable_standard(spec.alpha, n, rng)
    elif isinstance(spec, TemperedStable):
        z_trunc = min(1.0, dt ** (1 / spec.alpha))
        var_small, _ = tail_integrals(spec, z_trunc)
        out = _compensated_jumps_above(spec, dt, z_trunc, n, rng)
        out = out + math.sqrt(dt * var_small) * rng.standard_normal(n)
    elif isinstance(spec, CompoundPoisson):
        out = _compensated_jumps_above(spec, dt, 0.0, n, rng)
    else:
        raise TypeError(f"not a Lévy measure spec: {spec!r}")
    if size is None:
        return float(out[0])
    return out.reshape(size)


# --------------------------------------------------------------------------
# noise paths


def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def halve(a: np.ndarray) -> np.ndarray:
    """Sum adjacent pairs along the last axis."""
    return a[..., 0::2] + a[..., 1::2]


def coarsen_array(a: np.ndarray, factor: int) -> np.ndarray:
    """Aggregate along the last axis by repeated pairwise halving.

    Repeated halving keeps ``coarsen_array(coarsen_array(a, 2), 2)`` bit-identical
    to ``coarsen_array(a, 4)``.
    """
    if not is_power_of_two(factor) or a.shape[-1] % factor:
        raise ValueError(f"factor {factor} must be a power of two dividing {a.shape[-1]}")
    while factor > 1:
        a = halve(a)
        factor //= 2
    return a


@dataclass(frozen=True)
class NoisePath:
    """Brownian and Lévy increments of one particle on the finest grid."""

    grid: GridSpec
    brownian_increments: np.ndarray
    small_jump_increments: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    z_cut: float
    large_compensator: float
    seed_lineage: tuple[int, int, int]

    @property
    def large_jumps(self) -> list[tuple[float, float]]:
        return list(zip(self.jump_times.tolist(), self.jump_marks.tolist()))

    @property
    def jump_steps(self) -> np.ndarray:
        return self.grid.step_index(self.jump_times)

    def binned_large_jumps(self) -> np.ndarray:
        return np.bincount(self.jump_steps, weights=self.jump_marks, minlength=self.grid.n).astype(float)


@dataclass(frozen=True)
class IncrementView:
    """Per-step increments of a noise path on a coarser dyadic grid.

    ``large`` holds the uncompensated sum of large-jump marks falling in each
    step; the large-jump compensator is ``large_compensator * delta`` per step.
    """

    grid: GridSpec
    brownian: np.ndarray
    small: np.ndarray
    large: np.ndarray
    large_compensator: float
    jump_times: np.ndarray
    jump_marks: np.ndarray

    @property
    def levy(self) -> np.ndarray:
        """Fully compensated Lévy increment per step."""
        return self.small + self.large - self.grid.delta * self.large_compensator


def generate_noise_path(
    spec: LevySpec,
    grid: GridSpec,
    z_cut: float = 1.0,
    seed: int = 0,
    replication: int = 0,
    particle: int = 0,
) -> NoisePath:
    """Build the noise of one particle deterministically from its seed lineage.

    Large jumps (marks ``>= z_cut``) are a Poisson number of uniform times with
    marks from the normalised restricted measure.  The small-jump part follows
    the same construction as ``sample_increment`` below ``z_cut``; for the stable
    family it is the exact full increment minus the compensated large jumps.
    """
    if not z_cut > 0:
        raise ValueError(f"z_cut must be positive, got {z_cut}")
    n, dt, T = grid.n, grid.delta, grid.T
    lineage = (int(seed), int(replication), int(particle))

    def rng(role):
        return stream(seed, replication, particle, role)

    brownian = math.sqrt(dt) * rng("brownian").standard_normal(n)

    g_times, g_marks, g_small = rng("large-times"), rng("large-marks"), rng("small")

    def uniform_times(count):
        # (0, T]
        return np.sort(T - T * g_times.random(count))

    if isinstance(spec, StablePositive):
        if spec.gaussian:
            times = marks = np.empty(0)
            comp = 0.0
            small = math.sqrt(2 * spec.scale * dt) * g_small.standard_normal(n)
        else:
            a = spec.alpha
            lam = spec.tail_rate(z_cut)
            times = uniform_times(g_times.poisson(lam * T))
            marks = z_cut * g_marks.random(times.size) ** (-1 / a)
            _, comp = tail_integrals(spec, z_cut)
            full = spec.sigma * dt ** (1 / a) * stable_standard(a, n, g_small)
            binned = np.bincount(grid.step_index(times), weights=marks, minlength=n)
            small = full - (binned - dt * comp)
    elif isinstance(spec, TemperedStable):
        a, c, th = spec.alpha, spec.scale, spec.theta
        prop_rate = c * math.exp(-th * z_cut) * z_cut ** (-a) / a
        prop_times = uniform_times(g_times.poisson(prop_rate * T))
        prop_marks = z_cut * g_marks.random(prop_times.size) ** (-1 / a)
        keep = g_marks.random(prop_times.size) < np.exp(-th * (prop_marks - z_cut))
        times, marks = prop_times[keep], prop_marks[keep]
        _, comp = tail_integrals(spec, z_cut)

        z_trunc = min(z_cut, dt ** (1 / a))
        var_small, _ = tail_integrals(spec, z_trunc)
        mid = np.zeros(n)
        if z_trunc < z_cut:
            mid_rate = c * (z_trunc ** (-a) - z_cut ** (-a)) / a
            k = g_small.poisson(mid_rate * T)
            steps = grid.step_index(T - T * g_small.random(k))
            u = g_small.random(k)
            z = (z_trunc ** (-a) - u * (z_trunc ** (-a) - z_cut ** (-a))) ** (-1 / a)
            ok = g_small.random(k) < np.exp(-th * z)
            mid_mean = tail_integrals(spec, z_trunc)[1] - comp
            mid = np.bincount(steps[ok], weights=z[ok], minlength=n) - dt * mid_mean
        small = mid + math.sqrt(dt * var_small) * g_small.standard_normal(n)
    elif isinstance(spec, CompoundPoisson):
        law = spec.jump_law
        all_times = uniform_times(g_times.poisson(spec.rate * T))
        all_marks = law.sample(all_times.size, g_marks)
        big = all_marks >= z_cut
        times, marks = all_times[big], all_marks[big]
        _, comp = tail_integrals(spec, z_cut)
        small_mean = spec.rate * law.partial_moment(1.0, 0.0, z_cut)
        steps = grid.step_index(all_times[~big])
        small = np.bincount(steps, weights=all_marks[~big], minlength=n) - dt * small_mean
    else:
        raise TypeError(f"not a Lévy measure spec: {spec!r}")

    return NoisePath(
        grid=grid,
        brownian_increments=_frozen(brownian),
        small_jump_increments=_frozen(small),
        jump_times=_frozen(times),
        jump_marks=_frozen(marks),
        z_cut=float(z_cut),
        large_compensator=float(comp),
        seed_lineage=lineage,
    )


def coarsen(path: Union[NoisePath, IncrementView], factor: int) -> IncrementView:
    """Per-coarse-step increments; the large-jump list is carried through unchanged."""
    if isinstance(path, NoisePath):
        grid = path.grid
        brownian, small = path.brownian_increments, path.small_jump_increments
        large = path.binned_large_jumps()
        comp = path.large_compensator
    else:
        grid, brownian, small, large = path.grid, path.brownian, path.small, path.large
        comp = path.large_compensator
    coarse = grid.coarsened(factor)
    return IncrementView(
        grid=coarse,
        brownian=_frozen(coarsen_array(np.asarray(brownian), factor)),
        small=_frozen(coarsen_array(np.asarray(small), factor)),
        large=_frozen(coarsen_array(np.asarray(large), factor)),
        large_compensator=comp,
        jump_times=path.jump_times,
        jump_marks=path.jump_marks,
    )
