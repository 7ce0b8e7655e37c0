"""Slow-fading design: outage-constrained alpha1, outage-minimizing alpha2.

alpha1 comes from a one-sided tail bound on the interference-to-signal ratio
seen by the primary receiver; the bound's constant r sharpens from 1 to 2/9
when the ratio's density is believed unimodal-symmetric enough (high K) and
the deviation multiplier is large enough.  alpha2 minimizes a moment-matched
chi-square surrogate of the cognitive user's own outage, either through the
regularized incomplete gamma itself or through its exponential lower bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import quadform
from .channel import ChannelStats, DesignParams, PowerConfig, build_matrices
from .design_fast import InfeasibleDesignError, alpha2_fast, cr_links, primary_links

_PRESCAN_N = 200
_RESIDUAL_TOL = 1e-9
_SHARP_R = 2.0 / 9.0
_MIN_DELTA_FOR_SHARP = 2.0 / np.sqrt(3.0)


@dataclass(frozen=True)
class SlowDesignResult:
    alpha1: float
    alpha2: complex | None
    r_used: float | None
    delta: float | None
    objective_value: float | None
    method: str | None

    @property
    def params(self) -> DesignParams:
        if self.alpha2 is None:
            raise ValueError("alpha2 not designed yet")
        return DesignParams(self.alpha1, self.alpha2)


def select_r(
    k_db: float,
    delta_candidate: float,
    k_threshold_db: float = 10.0,
    override: float | None = None,
) -> float:
    """Tail-bound constant: 2/9 needs both high K and delta >= 2/sqrt(3)."""
    if override is not None:
        if override not in (1.0, _SHARP_R):
            raise ValueError("r must be 1 or 2/9")
        r = override
    else:
        r = _SHARP_R if k_db >= k_threshold_db else 1.0
    if r == _SHARP_R and delta_candidate < _MIN_DELTA_FOR_SHARP:
        r = 1.0
    return r


def ratio_stats(
    stats: ChannelStats, alpha1: float, pw: PowerConfig
) -> quadform.RatioMoments:
    """Moments of (interference + noise) / coherent-signal power ratio."""
    g = primary_links(stats)
    m = build_matrices(DesignParams(alpha1, 0.0), pw)
    return quadform.ratio_moments(g, m.P, m.Q, offset=pw.noise_p)


def solve_alpha1_slow(
    stats: ChannelStats,
    pw: PowerConfig,
    r_p: float,
    p_out: float,
    r_override: float | None = None,
    k_threshold_db: float = 10.0,
) -> SlowDesignResult:
    """Smallest alpha1 whose tail bound keeps primary outage under p_out."""
    if not 0.0 < p_out < 1.0:
        raise ValueError("p_out must lie in (0, 1)")
    if r_p <= 0:
        raise ValueError("r_p must be positive")
    # r-selection uses the sharper candidate's multiplier for its own guard.
    k_db = 10.0 * np.log10(min(stats.k_factor("11"), stats.k_factor("12")))
    delta_sharp = np.sqrt(_SHARP_R / p_out - 1.0) if _SHARP_R / p_out > 1 else 0.0
    r = select_r(k_db, delta_sharp, k_threshold_db, override=r_override)
    if r / p_out <= 1.0:
        raise InfeasibleDesignError("outage target too loose for the bound (r/P_out <= 1)")
    delta = float(np.sqrt(r / p_out - 1.0))
    if r == _SHARP_R:
        assert delta >= _MIN_DELTA_FOR_SHARP  # guarded by select_r
    rhs = 1.0 / (2.0 ** r_p - 1.0)

    def f(a1):
        rm = ratio_stats(stats, a1, pw)
        return quadform.cantelli_threshold(rm, r, p_out) - rhs

    grid = np.linspace(0.0, 1.0, _PRESCAN_N)
    vals = np.array([f(a) for a in grid])
    if vals[0] <= 0.0:
        return SlowDesignResult(0.0, None, r, delta, None, None)
    if np.all(vals > 0.0):
        raise InfeasibleDesignError(
            f"(R_P={r_p}, P_out={p_out}) unreachable even at alpha1 = 1"
        )
    i = int(np.argmax(vals <= 0.0))
    root = brentq(f, grid[i - 1], grid[i], xtol=1e-13, rtol=8.9e-16)
    residual = f(root)
    if abs(residual) > _RESIDUAL_TOL:
        raise RuntimeError(f"root residual {residual:g} above tolerance")
    return SlowDesignResult(float(root), None, r, delta, None, None)


def outage_surrogate(
    stats: ChannelStats,
    alpha1: float,
    alpha2: complex,
    pw: PowerConfig,
    r_cr: float,
    method: str = "gamma",
) -> float:
    """Chi-square-matched estimate of P(cognitive rate < r_cr)."""
    m = build_matrices(DesignParams(alpha1, alpha2), pw, r_cr_target=r_cr)
    threshold = (m.c0 * m.d - 1.0) * pw.noise_s
    if threshold <= 0:
        return 0.0  # target met by every realization under the match
    try:
        c2 = quadform.chi2_params(cr_links(stats), m.E)
    except quadform.DomainError:
        return 1.0  # moment match undefined here; treat as hopeless point
    if method == "gamma":
        return quadform.outage_gamma(c2, threshold)
    if method == "alzer":
        return quadform.outage_alzer(c2, threshold)
    raise ValueError(f"unknown method {method!r}")


def solve_alpha2_slow(
    stats: ChannelStats,
    alpha1: float,
    pw: PowerConfig,
    r_cr: float,
    method: str = "gamma",
    grid_n: int = 41,
    restrict_real: bool = False,
) -> SlowDesignResult:
    """Minimize the outage surrogate over complex alpha2.

    Coarse grid over a disc centered on the fast-fading closed form (the
    high-K optimum lands there), then coordinate descent with shrinking
    steps.  Plateau ties resolve toward the disc center.
    """
    if not 0.0 <= alpha1 < 1.0:
        raise ValueError("alpha1 must lie in [0, 1)")
    if r_cr <= 0:
        raise ValueError("r_cr must be positive")
    center = complex(alpha2_fast(stats, alpha1, pw))
    radius = 2.0 * abs(center)
    if radius == 0.0:
        radius = 1.0

    def obj(a2: complex) -> float:
        return outage_surrogate(stats, alpha1, a2, pw, r_cr, method)

    offs = np.linspace(-radius, radius, grid_n)
    best_val = np.inf
    best = center
    best_dist = 0.0
    for dre in offs:
        for dim in ([0.0] if restrict_real else offs):
            if np.hypot(dre, dim) > radius + 1e-12:
                continue
            a2 = center + dre + 1j * dim
            val = obj(a2)
            dist = np.hypot(dre, dim)
            if val < best_val - 1e-15 or (
                abs(val - best_val) <= 1e-15 and dist < best_dist
            ):
                best_val, best, best_dist = val, a2, dist
    # local refinement
    step = offs[1] - offs[0] if grid_n > 1 else radius / 2
    directions = [1.0, -1.0] if restrict_real else [1.0, -1.0, 1j, -1j]
    while step >= 1e-4:
        moved = False
        for d in directions:
            cand = best + d * step
            val = obj(cand)
            if val < best_val - 1e-15:
                best_val, best = val, cand
                moved = True
        if not moved:
            step /= 2.0
    return SlowDesignResult(alpha1, complex(best), None, None, float(best_val), method)


def design(
    stats: ChannelStats,
    pw: PowerConfig,
    r_p: float,
    p_out: float,
    r_cr: float,
    method: str = "gamma",
    r_override: float | None = None,
) -> SlowDesignResult:
    """Both stages: protect the primary, then minimize own outage."""
    st1 = solve_alpha1_slow(stats, pw, r_p, p_out, r_override=r_override)
    st2 = solve_alpha2_slow(stats, st1.alpha1, pw, r_cr, method=method)
    return SlowDesignResult(
        st1.alpha1, st2.alpha2, st1.r_used, st1.delta, st2.objective_value, method
    )
