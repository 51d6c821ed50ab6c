"""Coefficient triples (b, sigma, h), their declared regularity, and initial laws.

Two built-in families:

``IntensityModel``
    ``b = kappa_t (mean(mu) - k_t x)``, ``sigma = s1 |x|^{1/r}``,
    ``h = s2 sign(x) |x|^{1/q}`` (or the positive-part variants).
``LipschitzModel``
    ``b = a - k x + w mean(mu)``, ``sigma = s1 (1 + x/(1+|x|))``,
    ``h = s2 (1 + x/(1+|x|))``; smooth control case.

Coefficients are defined on the whole line so an Euler iterate that leaves the
positive half-line can still be advanced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

import numpy as np

from .levy import LevySpec, StablePositive, classify_indices
from .measure import EmpiricalMeasure1D, w1


class AdmissibilityError(ValueError):
    pass


# --------------------------------------------------------------------------
# deterministic time functions


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        return self.value

    def integral(self, t0: float, t1: float) -> float:
        return self.value * (t1 - t0)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (0.0,)

    def to_config(self):
        return self.value


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function: ``values[i]`` on ``[times[i], times[i+1])``."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("piecewise-constant table needs matching, non-empty times and values")
        if self.times[0] != 0.0 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("piecewise-constant times must start at 0 and increase strictly")

    def __call__(self, t):
        i = np.searchsorted(self.times, t, side="right") - 1
        v = np.asarray(self.values)[np.maximum(i, 0)]
        return float(v) if np.ndim(v) == 0 else v

    def integral(self, t0: float, t1: float) -> float:
        edges = np.array(self.times + (math.inf,))
        lo = np.clip(edges[:-1], t0, t1)
        hi = np.clip(edges[1:], t0, t1)
        return float(np.sum(np.asarray(self.values) * (hi - lo)))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.times

    def to_config(self):
        return [[t, v] for t, v in zip(self.times, self.values)]


TimeFunction = Union[Constant, PiecewiseConstant]


def as_time_function(spec) -> TimeFunction:
    """Scalar -> ``Constant``; ``[[t, value], ...]`` -> ``PiecewiseConstant``."""
    if isinstance(spec, (Constant, PiecewiseConstant)):
        return spec
    if np.isscalar(spec):
        return Constant(float(spec))
    rows = [tuple(r) for r in spec]
    return PiecewiseConstant(tuple(r[0] for r in rows), tuple(r[1] for r in rows))


def _sup_over_time(f, *fs) -> float:
    """Supremum of ``f(t) * g(t) ...`` over t >= 0 for step functions."""
    ts = sorted(set().union(f.breakpoints, *(g.breakpoints for g in fs)))
    vals = []
    for t in ts:
        v = f(t)
        for g in fs:
            v = v * g(t)
        vals.append(v)
    return float(max(vals))


# --------------------------------------------------------------------------
# coefficients


class Interaction(str, Enum):
    MEAN = "mean"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class Regularity:
    gamma: float
    eta: float
    rho: float
    b_onesided: float
    h_onesided: float
    holder_sigma: float
    holder_h: float
    holder_b: float
    linear_growth: float

    def __post_init__(self):
        if not 0.5 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [1/2, 1], got {self.gamma}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")


def _mean_of(summary) -> float:
    if isinstance(summary, EmpiricalMeasure1D):
        return summary.mean()
    return summary


class ModelCoefficients:
    """Interface shared by the built-in models.

    ``drift(t, x, summary)`` receives the scalar ``int phi dmu`` under
    ``Interaction.MEAN`` and the whole ``EmpiricalMeasure1D`` under
    ``Interaction.EMPIRICAL``.
    """

    interaction: Interaction = Interaction.MEAN

    def drift(self, t, x, summary):
        raise NotImplementedError

    def diffusion(self, t, x):
        raise NotImplementedError

    def jump_coef(self, t, x):
        raise NotImplementedError

    @property
    def regularity(self) -> Regularity:
        raise NotImplementedError

    def phi(self, x):
        return x

    def summarize(self, states):
        if self.interaction is Interaction.EMPIRICAL:
            return EmpiricalMeasure1D(states)
        return float(np.mean(self.phi(np.asarray(states))))

    def mean_drift(self, t, m):
        """Right-hand side of the closed ODE for ``E[X_t]``; ``None`` when not closed."""
        return None


@dataclass(frozen=True)
class IntensityModel(ModelCoefficients):
    kappa: TimeFunction
    k: TimeFunction
    sigma1: float
    sigma2: float
    r: float
    q: float
    positive_part: bool = False
    interaction: Interaction = field(default=Interaction.MEAN)

    def __post_init__(self):
        object.__setattr__(self, "kappa", as_time_function(self.kappa))
        object.__setattr__(self, "k", as_time_function(self.k))
        object.__setattr__(self, "interaction", Interaction(self.interaction))
        if not 1 <= self.r <= 2:
            raise ValueError(f"r must lie in [1, 2], got {self.r}")
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("sigma1 and sigma2 must be non-negative")
        if any(v < 0 for v in np.atleast_1d(self.kappa(np.array(self.kappa.breakpoints)))):
            raise ValueError("kappa must be non-negative")

    def drift(self, t, x, summary):
        return self.kappa(t) * (_mean_of(summary) - self.k(t) * x)

    def diffusion(self, t, x):
        base = np.maximum(x, 0.0) if self.positive_part else np.abs(x)
        return self.sigma1 * base ** (1.0 / self.r)

    def jump_coef(self, t, x):
        if self.positive_part:
            return self.sigma2 * np.maximum(x, 0.0) ** (1.0 / self.q)
        return self.sigma2 * np.sign(x) * np.abs(x) ** (1.0 / self.q)

    def mean_drift(self, t, m):
        return self.kappa(t) * (1.0 - self.k(t)) * m

    @property
    def regularity(self) -> Regularity:
        gamma, eta = 1.0 / self.r, 1.0 / self.q
        kappa_max = _sup_over_time(self.kappa)
        neg_kk = _sup_over_time(self.kappa, Constant(-1.0), self.k)
        kk_abs = max(_sup_over_time(self.kappa, self.k), neg_kk, 0.0)
        k_abs = max(_sup_over_time(self.k), _sup_over_time(Constant(-1.0), self.k))
        # sign(x)|x|^eta across zero has Hölder modulus 2^{1-eta}; the positive part keeps 1
        h_mod = self.sigma2 * (1.0 if self.positive_part else 2.0 ** (1.0 - eta))
        return Regularity(
            gamma=gamma,
            eta=eta,
            rho=1.0,
            b_onesided=max(kappa_max, neg_kk, 0.0),
            h_onesided=0.0,
            holder_sigma=self.sigma1,
            holder_h=h_mod,
            holder_b=kk_abs,
            linear_growth=kappa_max * max(1.0, k_abs) + self.sigma1 + self.sigma2,
        )


def _soft(x):
    return x / (1.0 + np.abs(x))


@dataclass(frozen=True)
class LipschitzModel(ModelCoefficients):
    a: float
    k: float
    s1: float
    s2: float
    mean_weight: float = 1.0
    interaction: Interaction = field(default=Interaction.MEAN)

    def __post_init__(self):
        object.__setattr__(self, "interaction", Interaction(self.interaction))

    def drift(self, t, x, summary):
        return self.a - self.k * x + self.mean_weight * _mean_of(summary)

    def diffusion(self, t, x):
        return self.s1 * _soft(x) + self.s1

    def jump_coef(self, t, x):
        return self.s2 * _soft(x) + self.s2

    def mean_drift(self, t, m):
        return self.a + (self.mean_weight - self.k) * m

    @property
    def regularity(self) -> Regularity:
        w = abs(self.mean_weight)
        return Regularity(
            gamma=1.0,
            eta=1.0,
            rho=1.0,
            b_onesided=max(w, -self.k, 0.0),
            h_onesided=max(-self.s2, 0.0),
            holder_sigma=abs(self.s1),
            holder_h=abs(self.s2),
            holder_b=abs(self.k),
            linear_growth=abs(self.a) + abs(self.k) + w + 2 * abs(self.s1) + 2 * abs(self.s2),
        )


def builtin_intensity_model(kappa, k, sigma1, sigma2, r=2.0, q=1.5, alpha=None,
                            interaction="mean") -> IntensityModel:
    """Mean-field default-intensity toy model.

    ``alpha`` (the stable index of the driver) enables the ``1/q + 1/alpha >= 1``
    admissibility check at construction.
    """
    if alpha is not None and 1.0 / q + 1.0 / alpha < 1.0 - 1e-15:
        raise AdmissibilityError(
            f"1/q + 1/alpha = {1 / q + 1 / alpha:.6g} < 1: eta = 1/q is below 1 - 1/alpha")
    return IntensityModel(as_time_function(kappa), as_time_function(k), float(sigma1), float(sigma2),
                          float(r), float(q), interaction=interaction)


def builtin_lipschitz_model(a, k, s1, s2, mean_weight=1.0, interaction="mean") -> LipschitzModel:
    return LipschitzModel(float(a), float(k), float(s1), float(s2), float(mean_weight), interaction)


def positivity_extension(model: IntensityModel) -> IntensityModel:
    """Swap ``sign(x)|x|^p`` and ``|x|^p`` for ``(x^+)^p`` in h and sigma."""
    if not isinstance(model, IntensityModel):
        raise TypeError("positivity extension applies to the intensity model only")
    return replace(model, positive_part=True)


def exact_mean_curve(model: ModelCoefficients, initial_mean: float, t: float) -> float:
    """Closed-form ``E[X_t]`` of the mean-field limit."""
    if isinstance(model, IntensityModel):
        if t == 0:
            return float(initial_mean)
        kap, k = model.kappa, model.k
        ts = sorted(set(kap.breakpoints) | set(k.breakpoints))
        ts = [s for s in ts if s < t] + [t]
        expo = 0.0
        for lo, hi in zip(ts, ts[1:]):
            expo += kap(lo) * (1.0 - k(lo)) * (hi - lo)
        return float(initial_mean * math.exp(expo))
    if isinstance(model, LipschitzModel):
        c = model.mean_weight - model.k
        if c == 0:
            return float(initial_mean + model.a * t)
        return float((initial_mean + model.a / c) * math.exp(c * t) - model.a / c)
    raise TypeError(f"no closed-form mean for {type(model).__name__}")


def euler_mean_curve(model: ModelCoefficients, initial_mean: float, grid) -> np.ndarray:
    """Expected value of the Euler scheme at the grid points.

    For drifts that are affine in ``(x, mean(mu))`` the expectation of the
    scheme obeys the explicit Euler recursion of the mean ODE exactly.
    """
    if model.mean_drift(0.0, initial_mean) is None:
        raise TypeError(f"{type(model).__name__} has no closed mean dynamics")
    m = np.empty(grid.n + 1)
    m[0] = initial_mean
    dt = grid.delta
    for i in range(grid.n):
        m[i + 1] = m[i] + dt * model.mean_drift(i * dt, m[i])
    return m


def check_admissible(model: ModelCoefficients, levy: LevySpec) -> None:
    """Reject pairings with ``eta <= 1 - 1/alpha_nu`` (equality allowed for stable drivers)."""
    alpha_nu, _ = classify_indices(levy)
    eta = model.regularity.eta
    bound = 1.0 - 1.0 / alpha_nu
    ok = eta >= bound - 1e-15 if isinstance(levy, StablePositive) else eta > bound
    if not ok:
        raise AdmissibilityError(f"eta = {eta:.6g} must exceed 1 - 1/alpha_nu = {bound:.6g}")


def regularity_audit(model: ModelCoefficients, rng: np.random.Generator, n_pairs: int = 10_000,
                     x_scale: float = 5.0, t: float = 0.0) -> dict[str, float]:
    """Largest observed value of each defining quotient on random pairs.

    Returns ``{name: (observed, declared)}``; an observed value above the
    declared one means the declared constant is wrong.
    """
    reg = model.regularity
    x = rng.uniform(-x_scale, x_scale, n_pairs)
    y = x + rng.standard_normal(n_pairs) * np.exp(rng.uniform(-8, 1, n_pairs))
    d = np.abs(x - y)
    mu = [EmpiricalMeasure1D(rng.normal(0, 2, 5)) for _ in range(32)]
    nu = [EmpiricalMeasure1D(rng.normal(0, 2, 5)) for _ in range(32)]

    def summ(m):
        return model.summarize(m.samples)

    q_sigma = np.abs(model.diffusion(t, x) - model.diffusion(t, y)) / d**reg.gamma
    q_h = np.abs(model.jump_coef(t, x) - model.jump_coef(t, y)) / d**reg.eta
    q_hL = np.sign(y - x) * (model.jump_coef(t, x) - model.jump_coef(t, y)) / d
    q_b_rho = max(float(np.max(np.abs(model.drift(t, x, summ(m)) - model.drift(t, y, summ(m))) / d**reg.rho))
                  for m in mu[:4])
    q_bL = 0.0
    q_growth = 0.0
    for m1, m2 in zip(mu, nu):
        lhs = np.sign(x - y) * (model.drift(t, x, summ(m1)) - model.drift(t, y, summ(m2)))
        q_bL = max(q_bL, float(np.max(lhs / (d + w1(m1, m2)))))
        size = np.abs(model.drift(t, x, summ(m1))) + np.abs(model.diffusion(t, x)) + np.abs(model.jump_coef(t, x))
        w0 = float(np.mean(np.abs(m1.samples)))
        q_growth = max(q_growth, float(np.max(size / (1 + np.abs(x) + w0))))
    observed = {
        "holder_sigma": float(np.max(q_sigma)),
        "holder_h": float(np.max(q_h)),
        "h_onesided": float(max(np.max(q_hL), 0.0)),
        "holder_b": q_b_rho,
        "b_onesided": q_bL,
        "linear_growth": q_growth,
    }
    return {name: (val, getattr(reg, name)) for name, val in observed.items()}


# --------------------------------------------------------------------------
# initial laws


@dataclass(frozen=True)
class InitialLaw:
    """``point(x0)``, ``uniform(low, high)``, ``exponential(scale)`` or ``lognormal(mu, s)``."""

    dist: str
    params: tuple = ()
    beta: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        n_params = {"point": 1, "uniform": 2, "exponential": 1, "lognormal": 2}
        if self.dist not in n_params:
            raise ValueError(f"unknown initial law {self.dist!r}")
        if len(self.params) != n_params[self.dist]:
            raise ValueError(f"{self.dist} initial law takes {n_params[self.dist]} parameters")
        if self.beta < 1:
            raise ValueError("declared moment order beta must be >= 1")
        if self.dist == "uniform" and not self.params[0] < self.params[1]:
            raise ValueError("uniform initial law needs low < high")
        if self.dist in ("exponential", "lognormal") and self.params[-1] <= 0:
            raise ValueError(f"{self.dist} initial law needs a positive scale")

    @property
    def nonnegative(self) -> bool:
        if self.dist == "point":
            return self.params[0] >= 0
        if self.dist == "uniform":
            return self.params[0] >= 0
        return True

    @property
    def mean(self) -> float:
        p = self.params
        if self.dist == "point":
            return p[0]
        if self.dist == "uniform":
            return 0.5 * (p[0] + p[1])
        if self.dist == "exponential":
            return p[0]
        return math.exp(p[0] + 0.5 * p[1] ** 2)

    def moment(self, beta: float | None = None) -> float:
        """``M_beta = E|xi|^beta`` in closed form."""
        b = self.beta if beta is None else beta
        p = self.params
        if self.dist == "point":
            return abs(p[0]) ** b
        if self.dist == "uniform":
            lo, hi = p

            def prim(x):
                return math.copysign(abs(x) ** (b + 1), x) / (b + 1)

            return (prim(hi) - prim(lo)) / (hi - lo)
        if self.dist == "exponential":
            return math.gamma(b + 1) * p[0] ** b
        return math.exp(b * p[0] + 0.5 * (b * p[1]) ** 2)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        if self.dist == "point":
            return np.full(size, p[0])
        if self.dist == "uniform":
            return rng.uniform(p[0], p[1], size)
        if self.dist == "exponential":
            return rng.exponential(p[0], size)
        return rng.lognormal(p[0], p[1], size)
