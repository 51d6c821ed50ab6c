"""Theoretical convergence exponents and log-log rate fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


class RateAdmissibilityError(ValueError):
    """Exponent inputs outside the range where the strong-rate result applies."""


@dataclass(frozen=True)
class RatePrediction:
    """Exponents of the Euler error ``n^{-rho^eta/2} + eps_n``.

    ``branch`` is ``"log"`` (``gamma = 1/2``, error of order ``1/log n``),
    ``"first"`` (``alpha_nu`` at most the threshold ``2(1-gamma)/(1-eta)``) or
    ``"second"``.  ``alphas`` are the auxiliary exponents used to balance the
    error terms; ``p_star`` is ``None`` on the log branch.
    """

    gamma: float
    eta: float
    rho: float
    alpha_nu: float
    beta_nu: float
    delta_slack: float
    branch: str
    threshold: float
    alphas: tuple[float, float, float]
    zetas: tuple[float, float, float, float, float]
    q_star: float
    p_star: float | None
    dominant_exponent: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alphas"] = list(self.alphas)
        d["zetas"] = list(self.zetas)
        return d


def _check(gamma, eta, rho, alpha_nu, beta_nu):
    if not 1 <= alpha_nu <= 2:
        raise RateAdmissibilityError(f"alpha_nu must lie in [1, 2], got {alpha_nu}")
    if not 0 < rho <= 1:
        raise RateAdmissibilityError(f"rho in (0, 1] violated: rho = {rho}")
    if not 0 < eta <= 1:
        raise RateAdmissibilityError(f"eta in (0, 1] violated: eta = {eta}")
    if not 0.5 <= gamma < beta_nu / 2:
        raise RateAdmissibilityError(f"gamma in [1/2, beta_nu/2) violated: gamma = {gamma}, beta_nu = {beta_nu}")
    if not beta_nu > eta * alpha_nu:
        raise RateAdmissibilityError(f"beta_nu > eta * alpha_nu violated: {beta_nu} <= {eta * alpha_nu}")
    if not eta > 1 - 1 / alpha_nu:
        raise RateAdmissibilityError(f"eta > 1 - 1/alpha_nu violated: {eta} <= {1 - 1 / alpha_nu}")


def predict_euler_rate(gamma: float, eta: float, rho: float, alpha_nu: float, beta_nu: float,
                       delta_slack: float | None = None, stable: bool = False) -> RatePrediction:
    """Strong-rate exponents of the Euler scheme for Hölder exponents ``gamma`` (diffusion),
    ``eta`` (jump coefficient) and ``rho`` (time regularity).

    ``delta_slack`` must lie in ``(0, 1 - (1-eta) alpha_nu)``; ``stable=True``
    also allows 0, the default for stable drivers.  Other drivers default to
    ``1e-3`` of the admissible range.
    """
    _check(gamma, eta, rho, alpha_nu, beta_nu)
    slack_max = 1 - (1 - eta) * alpha_nu
    if delta_slack is None:
        delta_slack = 0.0 if stable else 1e-3 * slack_max
    lo_ok = delta_slack >= 0 if stable else delta_slack > 0
    if not (lo_ok and delta_slack < slack_max):
        raise RateAdmissibilityError(
            f"delta_slack in ({'[' if stable else '('}0, {slack_max:.6g}) violated: {delta_slack}")

    threshold = math.inf if eta == 1 else 2 * (1 - gamma) / (1 - eta)
    g = min(gamma, eta)
    zeta1 = min(rho, eta) / 2
    zeta4 = eta / 2
    # the threshold is a ratio of rounded differences; a tie must not flip the branch
    if alpha_nu <= threshold * (1 + 1e-12):
        a1 = threshold
        a2 = 2.0 if eta <= gamma else 2 * gamma / eta
        a3 = a1
        zeta2 = 2 * gamma - 1
        zeta3 = g
        # at eta = 1 the (alpha3 - 1)(1 - eta) term vanishes whatever alpha3 is
        zeta5 = 0.0 if eta == 1 else (a3 - 1) * (1 - eta)
        branch = "first"
        p_star = g - 0.5 * g / gamma
    else:
        a1 = alpha_nu + delta_slack / (1 - eta)
        a2 = 2.0
        a3 = 1 + a1 / 2
        zeta2 = 1 - a1 * (1 - eta)
        zeta3 = eta
        zeta5 = (a1 / 2) * (1 - eta)
        branch = "second"
        p_star = eta - eta / (2 - alpha_nu * (1 - eta) - delta_slack)
    q_star = min(zeta3 / (zeta2 + 1), zeta4 / (zeta2 + zeta5) if zeta2 + zeta5 > 0 else math.inf)
    if gamma == 0.5:
        branch, p_star, dominant = "log", None, 0.0
    else:
        # equal exponents: the two error terms share one rate
        dominant = min(zeta1, p_star)
    return RatePrediction(gamma, eta, rho, alpha_nu, beta_nu, float(delta_slack), branch, threshold,
                          (a1, a2, a3), (zeta1, zeta2, zeta3, zeta4, zeta5), q_star, p_star, dominant)


def predict_chaos_rate(beta: float) -> float:
    """Exponent of ``N^{-1/2} + N^{-(beta-1)/beta}`` for initial laws with a finite ``beta``-moment."""
    if not beta > 1:
        raise ValueError(f"moment order must exceed 1, got {beta}")
    if beta == 2:
        raise ValueError("moment order 2 is excluded from the rate statement")
    return min(0.5, (beta - 1) / beta)


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    slope_ci: tuple[float, float]
    slope_stderr: float
    weighted: bool

    def covers(self, value: float) -> bool:
        return self.slope_ci[0] <= value <= self.slope_ci[1]


def fit_loglog(scales, errors, stderrs=None, level: float = 0.95) -> LogLogFit:
    """Least-squares line through ``(log scale, log error)``.

    Weights are ``(error / stderr)^2`` (delta method for ``log error``).  The
    slope variance is inflated by the reduced chi-square when the scatter
    exceeds the stated standard errors.  Without usable standard errors the
    fit is ordinary least squares with residual variance.
    """
    x = np.log(np.asarray(scales, dtype=float))
    e = np.asarray(errors, dtype=float)
    if x.size < 3 or e.size != x.size:
        raise ValueError(f"need at least 3 matching rows, got {x.size} scales and {e.size} errors")
    if np.any(~(e > 0)):
        raise ValueError("errors must be positive for a log-log fit")
    if np.ptp(x) == 0:
        raise ValueError("degenerate design: all scales are equal")
    y = np.log(e)
    se = None if stderrs is None else np.asarray(stderrs, dtype=float)
    weighted = se is not None and bool(np.all(np.isfinite(se)) and np.all(se > 0))
    w = (e / se) ** 2 if weighted else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    intercept, slope = cov @ (XtW @ y)
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    chi2_red = float(np.sum(w * resid**2) / dof)
    scale = max(1.0, chi2_red) if weighted else chi2_red
    slope_se = math.sqrt(max(cov[1, 1] * scale, 0.0))
    half = stats.t.ppf(0.5 + level / 2, dof) * slope_se
    return LogLogFit(float(slope), float(intercept), (float(slope - half), float(slope + half)), slope_se, weighted)
