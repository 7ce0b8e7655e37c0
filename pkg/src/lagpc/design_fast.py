"""Fast-fading design of (alpha1, alpha2) from channel statistics alone.

alpha1 is chosen so a second-order statistical surrogate of the primary
user's ergodic rate meets its no-cognitive-user target; the surrogate's
truncation directions make the result an over-design (the realized ergodic
rate is at least the target).  alpha2 then follows in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import i0e

from . import quadform
from .channel import ChannelStats, DesignParams, PowerConfig, build_matrices

LOG2E = float(np.log2(np.e))
_PRESCAN_N = 200
_RESIDUAL_TOL = 1e-9


class InfeasibleDesignError(Exception):
    """The protection target cannot be met even at full relaying."""


@dataclass(frozen=True)
class FastDesignResult:
    alpha1: float
    alpha2: complex
    r_target: float
    residual: float

    @property
    def params(self) -> DesignParams:
        return DesignParams(self.alpha1, self.alpha2)


def primary_links(stats: ChannelStats) -> quadform.GaussianVectorSpec:
    return quadform.GaussianVectorSpec.from_diag(
        [stats.mu11, stats.mu12], [stats.var11, stats.var12]
    )


def cr_links(stats: ChannelStats) -> quadform.GaussianVectorSpec:
    return quadform.GaussianVectorSpec.from_diag(
        [stats.mu21, stats.mu22], [stats.var21, stats.var22]
    )


def primary_target_ergodic(stats: ChannelStats, pw: PowerConfig) -> float:
    """E[log2(1 + |H11|^2 Pp / noise)] by quadrature over the power density."""
    snr = pw.Pp / pw.noise_p
    nu2 = abs(stats.mu11) ** 2
    s2 = stats.var11
    if s2 == 0.0:
        return float(np.log2(1.0 + nu2 * snr))
    nu = np.sqrt(nu2)

    def integrand(x):
        # Rician power density written with the exponentially scaled Bessel
        # function so the tail does not underflow prematurely.
        t = 2.0 * nu * np.sqrt(x) / s2
        dens = (1.0 / s2) * np.exp(-((np.sqrt(x) - nu) ** 2) / s2) * i0e(t)
        return np.log2(1.0 + x * snr) * dens

    val, err = quad(integrand, 0.0, np.inf, epsabs=1e-12, epsrel=1e-9, limit=400)
    if err > 1e-6 * max(abs(val), 1.0):
        raise RuntimeError(f"ergodic-rate quadrature did not converge (err={err:g})")
    return float(val)


def primary_rate_surrogate(stats: ChannelStats, alpha1: float, pw: PowerConfig) -> float:
    """Second-order lower estimate of the primary ergodic rate at alpha1.

    The signal+interference log term is expanded to second order around its
    mean (an under-estimate, concavity) while the interference-only term is
    replaced by Jensen's upper bound, so the difference under-estimates the
    true ergodic rate and designs on it are conservative.
    """
    g = primary_links(stats)
    m = build_matrices(DesignParams(alpha1, 0.0), pw)
    mu1 = quadform.qf_mean(g, m.S) / pw.noise_p
    var1 = quadform.qf_variance(g, m.S) / pw.noise_p ** 2
    mu2 = quadform.qf_mean(g, m.Q) / pw.noise_p
    return float(
        np.log2(1.0 + mu1)
        - 0.5 * LOG2E * var1 / (1.0 + mu1) ** 2
        - np.log2(1.0 + mu2)
    )


def solve_alpha1_fast(
    stats: ChannelStats, pw: PowerConfig, r_target: float | None = None
) -> FastDesignResult:
    """Smallest alpha1 whose surrogate primary rate meets the target."""
    if r_target is None:
        r_target = primary_target_ergodic(stats, pw)

    def f(a1):
        return primary_rate_surrogate(stats, a1, pw) - r_target

    grid = np.linspace(0.0, 1.0, _PRESCAN_N)
    vals = np.array([f(a) for a in grid])
    if vals[0] >= 0.0:
        # already protected without relaying; residual is the slack
        return FastDesignResult(0.0, alpha2_fast(stats, 0.0, pw), r_target, vals[0])
    if np.all(vals < 0.0):
        raise InfeasibleDesignError(
            f"target {r_target:.4f} bpcu unreachable even at alpha1 = 1"
        )
    i = int(np.argmax(vals >= 0.0))  # first sign change; robust to non-monotone tails
    root = brentq(f, grid[i - 1], grid[i], xtol=1e-13, rtol=8.9e-16)
    residual = f(root)
    if abs(residual) > _RESIDUAL_TOL:
        raise RuntimeError(f"root residual {residual:g} above tolerance")
    return FastDesignResult(float(root), alpha2_fast(stats, float(root), pw), r_target, residual)


def alpha2_fast(stats: ChannelStats, alpha1: float, pw: PowerConfig) -> complex:
    """Closed-form precoding coefficient for the fast-fading design."""
    if not 0.0 <= alpha1 <= 1.0:
        raise ValueError("alpha1 outside [0, 1]")
    if alpha1 == 1.0:
        return 0j  # no own signal left to precode
    sigma2 = (1.0 - alpha1) * pw.Pc
    lead = np.conj(stats.mu22) * stats.mu21 + np.sqrt(alpha1 * pw.Pc / pw.Pp)
    return complex(lead * sigma2 / (sigma2 + pw.noise_s))
