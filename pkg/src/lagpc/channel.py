"""Channel model for a cognitive link that relays the primary signal.

The cognitive transmitter spends a fraction ``alpha1`` of its power budget
relaying the primary symbol and the rest on its own message, which is
precoded against the known interference with a linear-assignment coefficient
``alpha2``.  Everything here is per-realization and exact; statistical design
lives in :mod:`lagpc.design_fast` and :mod:`lagpc.design_slow`.

All logarithms are base 2 and all rates are in bits per channel use.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class ChannelStats:
    """Rician statistics of the four links; unit mean-square per link."""

    mu11: complex
    mu12: complex
    mu21: complex
    mu22: complex
    var11: float
    var12: float
    var21: float
    var22: float

    def __post_init__(self):
        for name in ("11", "12", "21", "22"):
            mu = getattr(self, "mu" + name)
            var = getattr(self, "var" + name)
            if var < 0:
                raise ValueError(f"negative variance on link {name}")
            if abs(abs(mu) ** 2 + var - 1.0) > _UNIT_TOL:
                raise ValueError(
                    f"link {name}: |mu|^2 + var = {abs(mu)**2 + var:.8f}, expected 1"
                )

    @classmethod
    def from_k_factor(cls, k_db: float, phases=(0.0, 0.0, 0.0, 0.0)) -> "ChannelStats":
        """All four links Rician with the same K-factor (dB).

        |mu|^2 = K/(K+1) and var = 1/(K+1) so each link has unit mean-square
        gain.  Mean phases default to zero.
        """
        k = 10.0 ** (k_db / 10.0)
        mag = np.sqrt(k / (k + 1.0))
        var = 1.0 / (k + 1.0)
        mus = [mag * cmath.exp(1j * ph) for ph in phases]
        return cls(*mus, var, var, var, var)

    def k_factor(self, link: str) -> float:
        """Linear K-factor |mu|^2/var of one link ("11".."22")."""
        var = getattr(self, "var" + link)
        if var == 0:
            return np.inf
        return abs(getattr(self, "mu" + link)) ** 2 / var


@dataclass(frozen=True)
class PowerConfig:
    Pc: float
    Pp: float
    noise_p: float = 1.0
    noise_s: float = 1.0

    def __post_init__(self):
        if min(self.Pc, self.Pp, self.noise_p, self.noise_s) <= 0:
            raise ValueError("powers and noise variances must be positive")


@dataclass(frozen=True)
class DesignParams:
    alpha1: float
    alpha2: complex

    def __post_init__(self):
        if not 0.0 <= self.alpha1 <= 1.0:
            raise ValueError(f"alpha1 = {self.alpha1} outside [0, 1]")


@dataclass(frozen=True)
class ChannelRealization:
    """One draw (or a vector of draws) of the four channel gains."""

    h11: np.ndarray
    h12: np.ndarray
    h21: np.ndarray
    h22: np.ndarray

    def __len__(self):
        return np.size(self.h11)

    def __getitem__(self, idx) -> "ChannelRealization":
        return ChannelRealization(
            self.h11[idx], self.h12[idx], self.h21[idx], self.h22[idx]
        )


@dataclass(frozen=True)
class QuadMatrices:
    """2x2 forms of both rate formulas in the stacked gain vector.

    For gains g = (g_direct, g_cross) at either receiver, the coherent part
    of the received power is g^H P g and the self-interference part is
    g^H Q g.  D is the rank-one form whose value completes the determinant of
    the (U, Ys) covariance, and E combines them for the outage surrogate at a
    target rate.  c0 = c = var(U).
    """

    P: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    D: np.ndarray
    E: np.ndarray | None
    c0: float
    c: float
    d: float | None


def sample_realizations(
    stats: ChannelStats, n: int, seed: int, start: int = 0
) -> ChannelRealization:
    """Draw ``n`` iid channel realizations, reproducibly.

    Counter-based: realization index ``start + i`` always consumes the same
    8 uniforms regardless of how the index range is chunked, so partitioned
    calls tile into the unchunked stream exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    bitgen = Philox(key=seed)
    # 8 doubles per realization = 2 Philox counter increments.
    bitgen.advance(2 * start)
    u = Generator(bitgen).random((n, 8))
    z = ndtri(np.maximum(u, 2.0 ** -53))  # guard ndtri(0) = -inf
    sd = np.sqrt(
        np.array([stats.var11, stats.var12, stats.var21, stats.var22]) / 2.0
    )
    mu = np.array([stats.mu11, stats.mu12, stats.mu21, stats.mu22])
    h = mu[None, :] + sd[None, :] * (z[:, 0::2] + 1j * z[:, 1::2])
    return ChannelRealization(h[:, 0], h[:, 1], h[:, 2], h[:, 3])


def effective_interference_gain(r: ChannelRealization, alpha1: float, pw: PowerConfig):
    """Gain from the primary symbol to the CR receiver, direct plus relayed."""
    return r.h21 + np.sqrt(alpha1 * pw.Pc / pw.Pp) * r.h22


def cr_rate(r: ChannelRealization, p: DesignParams, pw: PowerConfig):
    """Rate of the cognitive user for given gains and design (vectorized).

    Computed from the 2x2 covariance of (U, Ys) with U = X + alpha2*S; equals
    I(U; Ys) - I(U; S), which can be negative for a poor alpha2.
    """
    sigma2 = (1.0 - p.alpha1) * pw.Pc
    if sigma2 == 0.0:
        if p.alpha2 != 0:
            raise ValueError("alpha1 = 1 with nonzero alpha2: degenerate covariance")
        return np.zeros(np.shape(r.h22)) if np.ndim(r.h22) else 0.0
    hs = effective_interference_gain(r, p.alpha1, pw)
    c0 = sigma2 + abs(p.alpha2) ** 2 * pw.Pp
    cross = np.conj(r.h22) * sigma2 + p.alpha2 * np.conj(hs) * pw.Pp
    ys_pow = (
        np.abs(r.h22) ** 2 * sigma2 + np.abs(hs) ** 2 * pw.Pp + pw.noise_s
    )
    det = c0 * ys_pow - np.abs(cross) ** 2
    return np.log2(sigma2 * ys_pow / det)


def cr_rate_matrix_form(r: ChannelRealization, p: DesignParams, pw: PowerConfig):
    """Same rate from the quadratic forms in (h21, h22); cross-check route."""
    m = build_matrices(p, pw)
    h = np.stack([np.atleast_1d(r.h21), np.atleast_1d(r.h22)])
    eps_s = np.real(np.einsum("ik,ij,jk->k", h.conj(), m.S, h))
    eps_d = np.real(np.einsum("ik,ij,jk->k", h.conj(), m.D, h))
    sigma2 = (1.0 - p.alpha1) * pw.Pc
    val = np.log2(
        sigma2 * (eps_s + pw.noise_s) / (m.c0 * (eps_s + pw.noise_s) - eps_d)
    )
    return val if np.ndim(r.h21) else float(val[0])


def primary_rate(r: ChannelRealization, alpha1: float, pw: PowerConfig):
    """Rate of the primary user under partial relaying (vectorized)."""
    if not 0.0 <= alpha1 <= 1.0:
        raise ValueError("alpha1 outside [0, 1]")
    sig = np.abs(r.h11 * np.sqrt(pw.Pp) + r.h12 * np.sqrt(alpha1 * pw.Pc)) ** 2
    intf = np.abs(r.h12) ** 2 * (1.0 - alpha1) * pw.Pc
    return np.log2(1.0 + sig / (intf + pw.noise_p))


def build_matrices(
    p: DesignParams, pw: PowerConfig, r_cr_target: float | None = None
) -> QuadMatrices:
    """Assemble the 2x2 forms of both rates for the given design point."""
    if not 0.0 <= p.alpha1 <= 1.0:
        raise ValueError("alpha1 outside [0, 1]")
    sigma2 = (1.0 - p.alpha1) * pw.Pc
    pvec = np.array([np.sqrt(pw.Pp), np.sqrt(p.alpha1 * pw.Pc)], dtype=complex)
    P = np.outer(pvec, pvec.conj())
    Q = np.diag([0.0, sigma2]).astype(complex)
    S = P + Q
    c0 = sigma2 + abs(p.alpha2) ** 2 * pw.Pp
    dvec = np.array(
        [p.alpha2 * pw.Pp, sigma2 + p.alpha2 * np.sqrt(p.alpha1 * pw.Pc * pw.Pp)],
        dtype=complex,
    )
    D = np.outer(dvec, dvec.conj())
    E = None
    d = None
    if r_cr_target is not None:
        d = 2.0 ** r_cr_target / sigma2
        E = (1.0 - c0 * d) * S + d * D
    return QuadMatrices(P=P, Q=Q, S=S, D=D, E=E, c0=c0, c=c0, d=d)


def full_csit_alpha2(r: ChannelRealization, alpha1: float, pw: PowerConfig):
    """Per-realization coefficient that recovers the interference-free rate."""
    sigma2 = (1.0 - alpha1) * pw.Pc
    hs = effective_interference_gain(r, alpha1, pw)
    return sigma2 * np.conj(r.h22) * hs / (np.abs(r.h22) ** 2 * sigma2 + pw.noise_s)


def naive_alpha2(stats: ChannelStats, alpha1: float, pw: PowerConfig) -> float:
    """Mean-channel precoding coefficient (ignores the fading spread)."""
    sigma2 = (1.0 - alpha1) * pw.Pc
    g = abs(stats.mu22) ** 2 * sigma2
    return g / (g + pw.noise_s)


def baseline_rates(
    r: ChannelRealization, alpha1: float, pw: PowerConfig, stats: ChannelStats
) -> dict:
    """Reference CR rates: interference as noise, full CSIT, mean-channel DPC."""
    sigma2 = (1.0 - alpha1) * pw.Pc
    hs = effective_interference_gain(r, alpha1, pw)
    g22 = np.abs(r.h22) ** 2 * sigma2
    noise_rate = np.log2(1.0 + g22 / (np.abs(hs) ** 2 * pw.Pp + pw.noise_s))
    full_csit_rate = np.log2(1.0 + g22 / pw.noise_s)
    naive = DesignParams(alpha1, naive_alpha2(stats, alpha1, pw))
    return {
        "noise_rate": noise_rate,
        "full_csit_rate": full_csit_rate,
        "naive_dpc_rate": cr_rate(r, naive, pw),
    }
