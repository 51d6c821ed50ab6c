"""Yamada-Watanabe approximations of ``|x|`` and numerical checks of the jump lemmas.

``psi(z) = A * ramp(z) / (z log delta)`` on ``[eps/delta, eps]`` where ``ramp``
rises linearly from 0 to 1 on ``[a, a(1+tau)]``, equals 1 in the middle and
falls linearly to 0 on ``[b(1-tau), b]`` (``a = eps/delta``, ``b = eps``).
The constant ``A`` normalizes ``int psi = 1``; all antiderivatives are closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .levy import CompoundPoisson, LevySpec, StablePositive, TemperedStable, classify_indices, tail_integrals

QUAD_TOL = 1e-10
SLACK = 1e-9
# requested tolerance is QUAD_TOL; results are rejected only past both of these
QUAD_ABS_FAIL = 1e-10
QUAD_REL_FAIL = 1e-6


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def _ramp_integral(L: float, tau: float) -> float:
    """``int_a^b ramp(z)/z dz`` in units where the flat part spans ``log delta``."""
    return L + math.log((1 - tau) / (1 + tau)) - math.log1p(-tau * tau) / tau


@dataclass(frozen=True)
class YWFunction:
    """Even ``C^2`` function ``phi`` with ``phi'' = psi(|x|)`` and ``phi = phi' = 0`` at 0."""

    delta: float
    epsilon: float
    tau: float
    norm: float

    @property
    def log_delta(self) -> float:
        return math.log(self.delta)

    @property
    def support(self) -> tuple[float, float]:
        return self.epsilon / self.delta, self.epsilon

    @property
    def ramp_points(self) -> tuple[float, float, float, float]:
        a, b = self.support
        return a, a * (1 + self.tau), b * (1 - self.tau), b

    # scalar evaluators on y = |x|; pure Python keeps quadrature fast

    def _psi_abs(self, y: float) -> float:
        a, a1, b1, b = self.ramp_points
        if y <= a or y >= b:
            return 0.0
        s = self.norm / self.log_delta
        if y < a1:
            return s * (y - a) / (a * self.tau) / y
        if y <= b1:
            return s / y
        return s * (b - y) / (b * self.tau) / y

    def _dphi_abs(self, y: float) -> float:
        a, a1, b1, b = self.ramp_points
        if y <= a:
            return 0.0
        if y >= b:
            return 1.0
        s = self.norm / self.log_delta
        ka, kb = s / (a * self.tau), s / (b * self.tau)
        if y <= a1:
            return ka * (y - a - a * math.log(y / a))
        p_a1 = ka * (a1 - a - a * math.log(a1 / a))
        if y <= b1:
            return p_a1 + s * math.log(y / a1)
        p_b1 = p_a1 + s * math.log(b1 / a1)
        return p_b1 + kb * (b * math.log(y / b1) - (y - b1))

    def _phi_abs(self, y: float) -> float:
        a, a1, b1, b = self.ramp_points
        if y <= a:
            return 0.0
        s = self.norm / self.log_delta
        ka, kb = s / (a * self.tau), s / (b * self.tau)

        def up(v):
            return ka * ((v - a) ** 2 / 2 - a * (v * math.log(v / a) - (v - a)))

        if y <= a1:
            return up(y)
        p_a1 = ka * (a1 - a - a * math.log(a1 / a))

        def flat(v):
            return up(a1) + p_a1 * (v - a1) + s * (v * math.log(v / a1) - (v - a1))

        if y <= b1:
            return flat(y)
        p_b1 = p_a1 + s * math.log(b1 / a1)

        def down(v):
            return flat(b1) + p_b1 * (v - b1) + kb * (b * (v * math.log(v / b1) - (v - b1)) - (v - b1) ** 2 / 2)

        if y < b:
            return down(y)
        return down(b) + (y - b)

    def _piece(self, y: float) -> tuple[int, float, float]:
        """Index of the smooth piece containing ``y > 0`` and ``(c0, c1)`` with ``psi = c0 + c1/y``."""
        a, a1, b1, b = self.ramp_points
        s = self.norm / self.log_delta
        if y <= a:
            return 0, 0.0, 0.0
        if y <= a1:
            k = s / (a * self.tau)
            return 1, k, -k * a
        if y <= b1:
            return 2, 0.0, s
        if y <= b:
            k = s / (b * self.tau)
            return 3, -k, k * b
        return 4, 0.0, 0.0

    def taylor_remainder(self, y: float, h: float) -> float:
        """``phi(y+h) - phi(y) - h phi'(y) = int_y^{y+h} (y+h-t) phi''(t) dt``.

        Summed piece by piece in closed form, so there is no cancellation even
        for tiny ``h`` or paths that graze a knot.
        """
        if h == 0.0:
            return 0.0
        # work in offsets from y so segment widths and weights keep every bit of h
        lo, hi = min(0.0, h), max(0.0, h)
        cuts = [lo]
        for k in sorted({0.0} | {c for k in self.ramp_points for c in (k, -k)}):
            if lo < k - y < hi:
                cuts.append(k - y)
        cuts.append(hi)
        total = 0.0
        for o0, o1 in zip(cuts[:-1], cuts[1:]):
            t0, t1 = y + o0, y + o1
            _, c0, c1 = self._piece(abs(0.5 * (t0 + t1)))
            if c0 == 0.0 and c1 == 0.0:
                continue
            # weight |y + h - t| at the segment end nearest y + h
            w_near = h - o1 if h > 0 else o0 - h
            # t -> -t maps a negative segment onto the positive axis with the direction reversed
            up = (h > 0) == (t0 + t1 > 0)
            total += _segment(min(abs(t0), abs(t1)), max(abs(t0), abs(t1)), o1 - o0, w_near, up, c0, c1)
        return total

    # public evaluators (scalars or arrays)

    def psi(self, z):
        return _vectorize(lambda v: self._psi_abs(v) if v > 0 else 0.0, z)

    def phi(self, x):
        return _vectorize(lambda v: self._phi_abs(abs(v)), x)

    def dphi(self, x):
        return _vectorize(lambda v: math.copysign(self._dphi_abs(abs(v)), v) if v != 0 else 0.0, x)

    def d2phi(self, x):
        return _vectorize(lambda v: self._psi_abs(abs(v)), x)


def _xlog_remainder(u: float) -> float:
    """``(1+u) log(1+u) - u`` for ``u > -1``, by series when ``|u|`` is small."""
    if abs(u) < 0.05:
        return sum((-1) ** k * u**k / (k * (k - 1)) for k in range(2, 14))
    return (1 + u) * math.log1p(u) - u


def _segment(t0: float, t1: float, d: float, w_near: float, up: bool, c0: float, c1: float) -> float:
    """``int_{t0}^{t1} w(t) (c0 + c1/t) dt`` on ``0 <= t0 < t1 = t0 + d`` for a linear weight ``w >= 0``.

    ``up``: ``w`` falls to ``w_near`` at ``t1``; otherwise it rises from ``w_near`` at ``t0``.
    """
    quad_part = c0 * d * (2 * w_near + d) / 2
    if up:
        if t0 == 0.0:
            return quad_part if c1 == 0.0 else math.inf
        log_part = t0 * _xlog_remainder(d / t0) + w_near * math.log1p(d / t0)
    else:
        w = -d / t1
        log_part = t1 * _xlog_remainder(w) - w_near * math.log1p(w)
    return quad_part + c1 * log_part


def _vectorize(f, x):
    if np.ndim(x) == 0:
        return f(float(x))
    arr = np.asarray(x, dtype=float)
    return np.fromiter((f(v) for v in arr.ravel()), float, arr.size).reshape(arr.shape)


def build_yw(delta: float, epsilon: float) -> YWFunction:
    """Concrete Yamada-Watanabe pair for ``delta > 1``, ``epsilon in (0, 1)``.

    The ramp width starts at ``min(1/4, (delta-1)/(2(delta+1)))`` (which keeps
    the ramps disjoint) and is halved until the normalization is at most 2.
    """
    if not delta > 1:
        raise ValueError(f"delta must exceed 1, got {delta}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    L = math.log(delta)
    tau = min(0.25, (delta - 1) / (2 * (delta + 1)))
    for _ in range(60):
        norm = L / _ramp_integral(L, tau)
        if 0 < norm <= 2:
            return YWFunction(delta, epsilon, tau, norm)
        tau /= 2
    raise ValueError(f"no ramp width in (0, 1/4] gives a normalization <= 2 for delta={delta}")


def property_checks(yw: YWFunction, n_points: int = 10_000, slack: float = SLACK, x_max: float = 2.0) -> dict:
    """Grid checks of the four defining properties plus integral and consistency checks."""
    a, a1, b1, b = yw.ramp_points
    L = yw.log_delta
    x = np.linspace(-x_max, x_max, n_points)
    x = np.union1d(x, [-b, -b1, -a1, -a, a, a1, b1, b])
    phi, dphi, d2 = yw.phi(x), yw.dphi(x), yw.d2phi(x)
    ax = np.abs(x)
    z = np.linspace(a, b, n_points)
    psi = yw.psi(z)
    integral = _quad(yw._psi_abs, a, b, points=[a1, b1])
    in_supp = (ax >= a) & (ax <= b)
    bound = np.where(in_supp, 2 / (np.where(ax > 0, ax, 1.0) * L), 0.0)
    pos = x[(x > 0) & (x < x_max)][::97]
    consistency = max(abs(yw._dphi_abs(v) - _quad(yw._psi_abs, 0.0, v, points=[p for p in (a, a1, b1, b) if p < v]))
                      for v in pos)
    return {
        "psi_integral": abs(integral - 1) <= QUAD_TOL,
        "psi_bound": bool(np.all(psi >= 0) and np.all(psi <= 2 / (z * L) + slack)),
        "phi1": bool(np.all(dphi[x >= 0] >= -slack) and np.all(dphi[x < 0] <= slack)
                     and np.all(dphi[x <= -a1] < 0)),
        "phi2": bool(np.all(np.abs(dphi) <= 1 + slack)),
        "phi3": bool(np.all(ax <= yw.epsilon + phi + slack)),
        "phi4": bool(np.all(d2 <= bound + slack) and np.all(bound <= 2 * yw.delta / (yw.epsilon * L) + slack)),
        "consistency": consistency <= 1e-8,
    }


# --------------------------------------------------------------------------
# quadrature against a Lévy measure


def _quad(f, lo, hi, points=None, epsabs=1e-13):
    """Adaptive quadrature; fails only if the error estimate misses both tolerances."""
    kw = dict(epsabs=epsabs, epsrel=QUAD_TOL, limit=500, full_output=1)
    if not math.isinf(hi):
        pts = [p for p in (points or []) if lo < p < hi]
        if pts:
            kw["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, *_ = integrate.quad(f, lo, hi, **kw)
    if err > max(QUAD_ABS_FAIL, QUAD_REL_FAIL * abs(val)):
        raise QuadratureError(f"quadrature on [{lo}, {hi}] stalled at error {err:.3g} (value {val:.6g})")
    return float(val)


def _density_scalar(levy: LevySpec):
    if isinstance(levy, StablePositive):
        c, al = levy.scale, levy.alpha
        return lambda z: c * z ** (-1 - al)
    if isinstance(levy, TemperedStable):
        c, al, th = levy.scale, levy.alpha, levy.theta
        return lambda z: c * math.exp(-th * z) * z ** (-1 - al)
    if isinstance(levy, CompoundPoisson):
        dist, rate = levy.jump_law.dist, levy.rate
        return lambda z: rate * float(dist.pdf(z))
    raise TypeError(f"not a Lévy measure spec: {levy!r}")


def _integrate_against(levy: LevySpec, g, breaks, epsabs: float = 1e-13) -> float:
    """``int_0^inf g(z) nu(dz)`` for ``g(z) = O(z^2)`` at 0, split at ``breaks``.

    On the first piece of an infinite-activity measure the substitution
    ``z = w^p`` with ``p = 1/(2 - alpha)`` removes the ``z^(1-alpha)`` singularity.
    """
    if isinstance(levy, StablePositive) and levy.gaussian:
        return 0.0
    dens = _density_scalar(levy)
    pts = sorted({float(p) for p in breaks if p > 0 and math.isfinite(p)})
    if isinstance(levy, CompoundPoisson):
        lo, hi = levy.jump_law.support
        pts = sorted(set(pts) | {p for p in (lo, hi) if 0 < p < math.inf})
    if not pts:
        pts = [1.0]
    total = 0.0
    first = pts[0]
    if isinstance(levy, CompoundPoisson):
        total += _quad(lambda z: g(z) * dens(z), 0.0, first, epsabs=epsabs)
    else:
        p = 1.0 / (2.0 - levy.alpha)

        def sub(w):
            if w <= 0:
                return 0.0
            z = w**p
            return g(z) * dens(z) * p * w ** (p - 1)

        total += _quad(sub, 0.0, first ** (1 / p), epsabs=epsabs)
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += _quad(lambda z: g(z) * dens(z), lo, hi, epsabs=epsabs)
    total += _quad(lambda z: g(z) * dens(z), pts[-1], math.inf, epsabs=epsabs)
    return total


def _crossings(yw: YWFunction, y: float, slopes) -> list[float]:
    """Positive ``z`` where ``y + s z`` meets a ramp knot of ``psi`` or its mirror."""
    knots = yw.ramp_points
    out = []
    for s in slopes:
        if s == 0:
            continue
        for c in knots:
            for target in (c, -c):
                z = (target - y) / s
                if z > 0:
                    out.append(z)
    return out


@dataclass(frozen=True)
class LemmaCheck:
    lhs: float
    rhs: float
    holds: bool


def verify_lemma_key0(yw: YWFunction, levy: LevySpec, x: float, y: float, u: float) -> LemmaCheck:
    """Second-order jump estimate for ``x y >= 0``.

    ``lhs = int {phi(y+xz) - phi(y) - xz phi'(y)} nu(dz)`` and
    ``rhs = 2 1{|y| <= eps} {x^2/log(delta) (1/|y| ^ delta/eps) int_0^u z^2 nu + |x| int_u^inf z nu}``.
    """
    if x * y < 0:
        raise ValueError(f"need x*y >= 0, got x={x}, y={y}")
    if y == 0:
        raise ValueError("y must be nonzero")
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    if x == 0:
        lhs = 0.0
    else:
        rem = yw.taylor_remainder
        lhs = _integrate_against(levy, lambda z: rem(y, x * z),
                                 _crossings(yw, y, [x]) + [u])
    rhs = 0.0
    if abs(y) <= yw.epsilon:
        small, large = tail_integrals(levy, u) if not (isinstance(levy, StablePositive) and levy.gaussian) else (0, 0)
        weight = min(1 / abs(y), yw.delta / yw.epsilon)
        rhs = 2 * (x * x / yw.log_delta * weight * small + abs(x) * large)
    return LemmaCheck(lhs, rhs, lhs <= rhs + SLACK)


@dataclass(frozen=True)
class Key12Check:
    lhs: float
    bracket: float
    rhs: float
    holds: bool

    @property
    def ratio(self) -> float:
        return self.lhs / self.bracket if self.bracket > 0 else (0.0 if self.lhs == 0 else math.inf)


def key12_bracket(yw: YWFunction, levy: LevySpec, x, x_prime, y, u, kappa, alpha) -> float:
    """Right-hand side of the first-order cross estimate without its constant."""
    d = abs(x - x_prime)
    L = yw.log_delta
    out = (yw.delta / (yw.epsilon * L) + 1) * d**alpha + d
    if y * x_prime < 0:
        out += (kappa / L + 1) * d
    else:
        small, large = tail_integrals(levy, u) if not (isinstance(levy, StablePositive) and levy.gaussian) else (0, 0)
        inner = large
        if 0 < abs(y) <= yw.epsilon:
            inner += min(1 / abs(y), yw.delta / yw.epsilon) / L * abs(x_prime) * small
        out += inner * d
    return out


def verify_lemma_key12(yw: YWFunction, levy: LevySpec, x: float, x_prime: float, y: float, u: float,
                       kappa: float, alpha: float = 2.0, C: float = 1.0) -> Key12Check:
    """``lhs = int |phi(y+xz) - phi(y+x'z) - (x-x') z phi'(y)| nu(dz)`` against ``C`` times the bracket."""
    if y * x_prime < 0 and -math.copysign(1.0, y) * x_prime > kappa * abs(y):
        raise ValueError(f"precondition -sign(y) x' <= kappa |y| fails for y={y}, x'={x_prime}, kappa={kappa}")
    alpha_nu, _ = classify_indices(levy)
    if not (alpha_nu < alpha <= 2 or alpha == alpha_nu == 2):
        raise ValueError(f"alpha must lie in (alpha_nu, 2] = ({alpha_nu}, 2], got {alpha}")
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    if x == x_prime:
        lhs = 0.0
    else:
        rem = yw.taylor_remainder
        lhs = _integrate_against(
            levy,
            lambda z: abs(rem(y, x * z) - rem(y, x_prime * z)),
            _crossings(yw, y, [x, x_prime]) + [u],
        )
    bracket = key12_bracket(yw, levy, x, x_prime, y, u, kappa, alpha)
    return Key12Check(lhs, bracket, C * bracket, lhs <= C * bracket + SLACK)


def key12_constant(yw: YWFunction, levy: LevySpec, xs, x_primes, ys, us, kappa: float, alpha: float = 2.0) -> float:
    """Largest observed ``lhs / bracket`` over a parameter grid (skipping precondition failures)."""
    best = 0.0
    for x in xs:
        for xp in x_primes:
            for y in ys:
                if y * xp < 0 and abs(xp) > kappa * abs(y):
                    continue
                for u in us:
                    best = max(best, verify_lemma_key12(yw, levy, x, xp, y, u, kappa, alpha).ratio)
    return best


# --------------------------------------------------------------------------
# small-scale asymptotics of the truncated moments


@dataclass
class AsymptoticsTable:
    eps: np.ndarray
    u: np.ndarray
    I: np.ndarray
    J: np.ndarray
    bound: float | None = None

    @property
    def sup(self) -> float:
        return float(np.max(self.I + self.J))

    @property
    def decreasing(self) -> bool:
        """Both sequences non-increasing as ``eps`` shrinks (eps given in decreasing order)."""
        return bool(np.all(np.diff(self.I) <= 1e-15) and np.all(np.diff(self.J) <= 1e-15))

    @property
    def within_bound(self) -> bool:
        return self.bound is None or bool(np.all(self.I + self.J <= self.bound))


def asymptotics_check(levy: LevySpec, eta: float, alpha_prime: float, eps_grid, delta: float = 2.0,
                      strict: bool = True) -> AsymptoticsTable:
    """``I = u^(a'-2) int_0^u z^2 nu`` and ``J = u^(a'-1) int_u^inf z nu`` at ``u = log(delta) eps^(1-eta)``.

    ``strict=False`` skips the ``alpha_prime > alpha_nu`` requirement so that a
    negative control below the singularity index can be tabulated.  With
    ``eta = 1`` the scale ``u`` is frozen and the table carries the bound
    ``2 int (z ^ z^2) nu``.
    """
    alpha_nu, _ = classify_indices(levy)
    if not eta > 1 - 1 / alpha_nu:
        raise ValueError(f"need eta > 1 - 1/alpha_nu = {1 - 1 / alpha_nu:.6g}, got {eta}")
    upper = math.inf if eta == 1 else 1 / (1 - eta)
    if not alpha_prime < upper or (strict and not alpha_prime > alpha_nu):
        raise ValueError(f"alpha_prime must lie in ({alpha_nu}, {upper}), got {alpha_prime}")
    eps = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    if np.any((eps <= 0) | (eps >= 1)):
        raise ValueError("eps grid must lie in (0, 1)")
    u = math.log(delta) * eps ** (1 - eta)
    pairs = np.array([tail_integrals(levy, v) for v in u])
    I = u ** (alpha_prime - 2) * pairs[:, 0]
    J = u ** (alpha_prime - 1) * pairs[:, 1]
    bound = None
    if eta == 1:
        small, large = tail_integrals(levy, 1.0)
        bound = 2 * (small + large)
    return AsymptoticsTable(eps, u, I, J, bound)


def random_key0_triples(yw: YWFunction, rng: np.random.Generator, count: int):
    """Admissible ``(x, y, u)``: ``y`` within ``2 eps`` of 0, ``x y >= 0``, log-uniform ``|x|`` and ``u``."""
    eps = yw.epsilon
    out = []
    while len(out) < count:
        y = rng.uniform(-2 * eps, 2 * eps)
        if y == 0:
            continue
        x = math.copysign(10 ** rng.uniform(-3, 0), y)
        u = 10 ** rng.uniform(-3, 1)
        out.append((x, y, u))
    return out


def key12_sweep(yw: YWFunction, levy: LevySpec, kappa: float = 2.0, points: int = 3, alpha: float = 2.0) -> float:
    """Empirical constant over an ``eps``-scaled grid with ``points`` magnitudes per axis."""
    eps = yw.epsilon
    mags = eps * np.geomspace(0.1, 1.0, points)
    xs = np.concatenate([mags, -mags])
    ys = np.concatenate([eps * np.geomspace(0.05, 1.5, points), [-0.5 * eps]])
    return key12_constant(yw, levy, xs, xs, ys, [math.sqrt(eps)], kappa, alpha)
