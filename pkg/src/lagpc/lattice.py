"""Nested-lattice codec realizing the precoded cognitive link over E8.

One frame is T = 4 complex channel uses handled as 2T = 8 real dimensions
(re/im interleaved, so a complex gain c acts as I_T kron rot(c)).  Codewords
are fine-lattice points inside the coarse Voronoi region, the encoder runs
dithered mod-coarse precoding against the known interference frame, and the
decoder lattice-quantizes a whitened MMSE estimate with an exact sphere
search.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.linalg import solve_triangular

from . import channel
from .channel import ChannelRealization, DesignParams, PowerConfig

T_SYMBOLS = 4
N_DIM = 2 * T_SYMBOLS


def e8_generator() -> np.ndarray:
    """Integer-halves basis of the unimodular E8 lattice, columns as basis."""
    rows = np.array(
        [
            [2, 0, 0, 0, 0, 0, 0, 0],
            [-1, 1, 0, 0, 0, 0, 0, 0],
            [0, -1, 1, 0, 0, 0, 0, 0],
            [0, 0, -1, 1, 0, 0, 0, 0],
            [0, 0, 0, -1, 1, 0, 0, 0],
            [0, 0, 0, 0, -1, 1, 0, 0],
            [0, 0, 0, 0, 0, -1, 1, 0],
            [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        ]
    )
    return rows.T.copy()


def _round_nearest(x):
    """Componentwise nearest integer (exact halves fall to the even side)."""
    return np.rint(x)


def _closest_d8(x: np.ndarray) -> np.ndarray:
    """Nearest point of D8 (integer vectors with even sum), batched (..., 8)."""
    f = _round_nearest(x)
    err = x - f
    odd = np.sum(f, axis=-1) % 2 != 0
    if np.any(odd):
        worst = np.argmax(np.abs(err), axis=-1)
        idx = np.nonzero(odd)
        flat = f[idx]
        w = worst[idx]
        rows = np.arange(flat.shape[0])
        delta = err[idx][rows, w]
        # reround the least certain coordinate the other way; an exact
        # integer moves down, keeping the flipped vector lexicographically small
        flat[rows, w] += np.where(delta > 0, 1.0, -1.0)
        f[idx] = flat
    return f


def _lex_smaller(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise-batched test: is a lexicographically smaller than b."""
    diff = a != b
    any_diff = np.any(diff, axis=-1)
    first = np.argmax(diff, axis=-1)
    take = np.take_along_axis(a, first[..., None], axis=-1)[..., 0]
    takeb = np.take_along_axis(b, first[..., None], axis=-1)[..., 0]
    return np.where(any_diff, take < takeb, False)


def e8_closest_point(x) -> np.ndarray:
    """Exact nearest E8 point(s) of x with shape (..., 8).

    E8 = D8 union (D8 + 1/2); the closer of the two coset roundings wins,
    an exact distance tie going to the lexicographically smaller vector.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    cand_int = _closest_d8(x)
    cand_half = _closest_d8(x - 0.5) + 0.5
    d_int = np.sum((x - cand_int) ** 2, axis=-1)
    d_half = np.sum((x - cand_half) ** 2, axis=-1)
    pick_half = (d_half < d_int) | ((d_half == d_int) & _lex_smaller(cand_half, cand_int))
    out = np.where(pick_half[..., None], cand_half, cand_int)
    return out[0] if squeeze else out


@dataclass(frozen=True)
class Lattice:
    """A scaled copy of E8; gen = scale * base generator, columns as basis."""

    gen: np.ndarray
    scale: float

    def __post_init__(self):
        if self.scale <= 0 or not np.isfinite(self.scale):
            raise ValueError("scale must be positive and finite")

    @classmethod
    def scaled_e8(cls, scale: float) -> "Lattice":
        return cls(scale * e8_generator(), float(scale))

    def closest(self, x) -> np.ndarray:
        return self.scale * e8_closest_point(np.asarray(x, dtype=float) / self.scale)


def mod_lambda(x, coarse: Lattice) -> np.ndarray:
    """Residue of x in the coarse Voronoi region: x minus its nearest point."""
    x = np.asarray(x, dtype=float)
    return x - coarse.closest(x)


@dataclass(frozen=True)
class NestedPair:
    fine: Lattice
    coarse: Lattice
    q_nest: int
    rate_bpcu: float
    second_moment: float  # measured per-dimension moment of the coarse cell

    @property
    def codebook_size(self) -> int:
        return self.q_nest ** N_DIM


def build_nested(
    q_nest: int,
    target_second_moment: float = 0.5,
    calib_n: int = 10 ** 6,
    seed: int = 0,
    tol: float = 0.005,
) -> NestedPair:
    """Fine/coarse pair with the coarse cell calibrated to the target power.

    The per-dimension second moment of the coarse Voronoi region is measured
    by Monte Carlo (uniform over a fundamental parallelepiped, folded into
    the cell) and the pair is scaled so it hits target_second_moment; an
    independent batch re-measures the calibrated cell and must agree within
    tol relative.
    """
    if q_nest not in (2, 4):
        raise ValueError("q_nest must be 2 or 4")
    base = e8_generator()
    rng = Generator(Philox(key=seed))
    u = rng.random((calib_n, N_DIM))
    pts = u @ base.T
    res = pts - e8_closest_point(pts)
    m0 = float(np.mean(np.sum(res ** 2, axis=-1)) / N_DIM)
    scale = np.sqrt(target_second_moment / m0) / q_nest
    fine = Lattice.scaled_e8(scale)
    coarse = Lattice.scaled_e8(scale * q_nest)
    rng2 = Generator(Philox(key=seed + 1))
    u2 = rng2.random((calib_n // 4, N_DIM))
    pts2 = u2 @ coarse.gen.T
    res2 = mod_lambda(pts2, coarse)
    measured = float(np.mean(np.sum(res2 ** 2, axis=-1)) / N_DIM)
    if abs(measured - target_second_moment) > tol * target_second_moment:
        raise RuntimeError(
            f"second-moment calibration off: {measured:.5f} vs {target_second_moment}"
        )
    return NestedPair(fine, coarse, q_nest, 2.0 * np.log2(q_nest), measured)


def message_to_digits(index: int, q: int) -> np.ndarray:
    if not 0 <= index < q ** N_DIM:
        raise ValueError("message index out of range")
    digits = np.empty(N_DIM, dtype=np.int64)
    for i in range(N_DIM):
        index, digits[i] = divmod(index, q)
    return digits


def digits_to_message(digits, q: int) -> int:
    idx = 0
    for d in reversed(np.asarray(digits, dtype=np.int64) % q):
        idx = idx * q + int(d)
    return int(idx)


def codeword(pair: NestedPair, index: int) -> np.ndarray:
    """Voronoi-codebook representative of one message."""
    b = message_to_digits(index, pair.q_nest)
    return mod_lambda(pair.fine.gen @ b, pair.coarse)


def sample_dither(pair: NestedPair, rng: Generator) -> np.ndarray:
    """Uniform over the coarse cell: uniform parallelepiped point, folded."""
    u = rng.random(N_DIM)
    return mod_lambda(pair.coarse.gen @ u, pair.coarse)


@dataclass(frozen=True)
class FilterSet:
    F_s: np.ndarray
    F_r: np.ndarray
    L: np.ndarray
    Sigma_E: np.ndarray
    regularized: bool = False


def rot_block(c: complex) -> np.ndarray:
    return np.array([[c.real, -c.imag], [c.imag, c.real]])


def channel_matrix(c: complex, t: int = T_SYMBOLS) -> np.ndarray:
    """Real 2t x 2t action of a scalar complex gain on interleaved frames."""
    return np.kron(np.eye(t), rot_block(complex(c)))


def _scalar(h) -> complex:
    return complex(np.ravel(np.asarray(h))[0])


def build_filters(
    r: ChannelRealization,
    params: DesignParams,
    pw: PowerConfig,
    t: int = T_SYMBOLS,
    s_power: float | None = None,
) -> FilterSet:
    """Side-information, receiver, and whitening filters for one realization.

    s_power overrides the interference power seen by the filter design (0
    builds the interference-free baseline).  The whitener satisfies
    L^T L = Sigma_E^{-1}; a near-singular error covariance gets a 1e-12
    ridge and is flagged.
    """
    if params.alpha1 >= 1.0:
        raise ValueError("no lattice signal at alpha1 = 1")
    sigma2 = (1.0 - params.alpha1) * pw.Pc
    h22 = _scalar(r.h22)
    hs = _scalar(channel.effective_interference_gain(r, params.alpha1, pw))
    s_pow = pw.Pp if s_power is None else float(s_power)
    eye = np.eye(2 * t)
    H_tilde = np.sqrt(sigma2) * channel_matrix(h22, t)
    H_s = channel_matrix(hs, t)
    F_s = channel_matrix(complex(params.alpha2), t) / np.sqrt(sigma2)
    cov_u_y = 0.5 * H_tilde.T + F_s @ (0.5 * s_pow * H_s.T)
    cov_y = (
        0.5 * H_tilde @ H_tilde.T
        + 0.5 * s_pow * H_s @ H_s.T
        + 0.5 * pw.noise_s * eye
    )
    F_r = np.linalg.solve(cov_y, cov_u_y.T).T
    A = F_r @ H_tilde - eye
    B = F_r @ H_s - F_s
    sig_e = 0.5 * (A @ A.T) + 0.5 * s_pow * (B @ B.T) + 0.5 * pw.noise_s * (F_r @ F_r.T)
    sig_e = 0.5 * (sig_e + sig_e.T)
    regularized = False
    try:
        chol = np.linalg.cholesky(sig_e)
    except np.linalg.LinAlgError:
        sig_e = sig_e + 1e-12 * eye
        chol = np.linalg.cholesky(sig_e)
        regularized = True
    L = solve_triangular(chol, eye, lower=True)
    return FilterSet(F_s=F_s, F_r=F_r, L=L, Sigma_E=sig_e, regularized=regularized)


def achievable_rate(filters: FilterSet, t: int = T_SYMBOLS) -> float:
    """Rate supported by the whitened error covariance, bits per channel use."""
    try:
        chol = np.linalg.cholesky(filters.Sigma_E)
    except np.linalg.LinAlgError:
        raise ValueError("error covariance not positive definite") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return float(-1.0 - logdet / (2.0 * t * np.log(2.0)))


def error_covariance_complex(filters: FilterSet, t: int = T_SYMBOLS) -> np.ndarray:
    """T x T complex covariance carried by the real 2T x 2T error blocks."""
    s = filters.Sigma_E
    C = np.empty((t, t), dtype=complex)
    for j in range(t):
        for k in range(t):
            C[j, k] = (s[2 * j, 2 * k] + s[2 * j + 1, 2 * k + 1]) + 1j * (
                s[2 * j + 1, 2 * k] - s[2 * j, 2 * k + 1]
            )
    return C


def encode(
    message_index: int,
    s_frame: np.ndarray,
    dither: np.ndarray,
    pair: NestedPair,
    filters: FilterSet,
    alpha1: float,
    p_c: float,
) -> np.ndarray:
    """Dithered mod-coarse transmit frame for one message."""
    c_c = codeword(pair, message_index)
    v = mod_lambda(c_c - filters.F_s @ np.asarray(s_frame, dtype=float) - dither, pair.coarse)
    return np.sqrt((1.0 - alpha1) * p_c) * v


def sphere_decode(M: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact argmin over integer b of |y - M b|^2, depth-first zig-zag.

    The first leaf visited is the successive-rounding (Babai) point, which
    seeds the pruning radius, so the search always terminates with the
    global minimizer.
    """
    n = M.shape[0]
    q, rmat = np.linalg.qr(M)
    signs = np.sign(np.diag(rmat))
    signs[signs == 0] = 1.0
    rmat = signs[:, None] * rmat
    yq = (q * signs[None, :]).T @ np.asarray(y, dtype=float)
    best = None
    radius = np.inf
    b = np.zeros(n, dtype=np.int64)
    step = np.zeros(n, dtype=np.int64)
    dist = np.zeros(n + 1)
    k = n - 1
    while True:
        resid = yq[k] - rmat[k, k + 1 :] @ b[k + 1 :] if k < n - 1 else yq[k]
        if step[k] == 0:  # entering this level: start at the rounded center
            center = resid / rmat[k, k]
            b[k] = int(np.rint(center))
            step[k] = 1 if center >= b[k] else -1
        inc = (resid - rmat[k, k] * b[k]) ** 2
        if dist[k + 1] + inc < radius:
            if k == 0:
                radius = dist[1] + inc
                best = b.copy()
                b[0] += step[0]
                step[0] = -step[0] - np.sign(step[0])
            else:
                dist[k] = dist[k + 1] + inc
                k -= 1
                step[k] = 0
        else:
            # zig-zag visits siblings in cost order, so the whole level
            # is exhausted once one fails the radius
            step[k] = 0
            k += 1
            if k == n:
                return best
            b[k] += step[k]
            step[k] = -step[k] - np.sign(step[k])


def decode(
    y: np.ndarray, filters: FilterSet, dither: np.ndarray, pair: NestedPair
) -> int:
    """Message index recovered from one received frame."""
    target = filters.L @ (filters.F_r @ np.asarray(y, dtype=float) + dither)
    b = sphere_decode(filters.L @ pair.fine.gen, target)
    return digits_to_message(b, pair.q_nest)


def transmit_samples(
    pair: NestedPair,
    filters: FilterSet,
    alpha1: float,
    pw: PowerConfig,
    n_frames: int = 20000,
    seed: int = 0,
) -> np.ndarray:
    """Per-coordinate samples of the complete on-air transmit signal.

    Each frame is an encoded random message (dithered mod-coarse part) plus
    the relayed share of the primary stream.  The codeword part alone is
    uniform over the coarse cell, visibly sub-Gaussian; relaying is what
    makes the aggregate nearly Gaussian at designed operating points.
    """
    rng = Generator(Philox(key=seed))
    relay = np.sqrt(alpha1 * pw.Pc / pw.Pp)
    out = np.empty((n_frames, N_DIM))
    for i in range(n_frames):
        msg = int(rng.integers(pair.codebook_size))
        dither = sample_dither(pair, rng)
        s_c = (rng.normal(size=T_SYMBOLS) + 1j * rng.normal(size=T_SYMBOLS)) * np.sqrt(
            pw.Pp / 2.0
        )
        s_frame = np.empty(N_DIM)
        s_frame[0::2], s_frame[1::2] = s_c.real, s_c.imag
        x = encode(msg, s_frame, dither, pair, filters, alpha1, pw.Pc)
        out[i] = x + relay * s_frame
    return out.ravel()


@dataclass(frozen=True)
class LatticeScenario:
    k_db: float
    rate_bpcu: float
    snr_db: tuple
    trials: int = 2000
    seed: int = 0
    p_p: float = 100.0
    noise: float = 1.0
    alpha1: float = 0.0
    scheme: str = "la_gpc"  # or no_interference / interference_as_noise
    theory_n: int = 10 ** 5


@dataclass(frozen=True)
class ErrorRatePoint:
    snr_db: float
    scheme: str
    error_rate: float
    ci95: float
    trials: int
    theory_outage: float
    alpha1: float
    alpha2: complex
    seed: int


def _design_alpha2(scheme, stats, alpha1, pw, rate):
    from . import design_slow  # local import; cycle with design modules

    if scheme == "la_gpc":
        return complex(design_slow.solve_alpha2_slow(stats, alpha1, pw, rate).alpha2)
    if scheme in ("no_interference", "interference_as_noise"):
        return 0j
    raise ValueError(f"unknown scheme {scheme!r}")


def codeword_error_sim(scenario: LatticeScenario) -> list[ErrorRatePoint]:
    """Codeword error rate across the SNR sweep, with the matched-rate
    outage of the unstructured scheme as the theory reference."""
    from . import montecarlo

    q = int(round(2.0 ** (scenario.rate_bpcu / 2.0)))
    if 2.0 * np.log2(q) != scenario.rate_bpcu:
        raise ValueError("rate must be 2*log2(q) for integer q")
    stats = channel.ChannelStats.from_k_factor(scenario.k_db)
    pair = build_nested(q, seed=scenario.seed)
    # what is actually on the air vs what the receiver filter assumes; they
    # coincide for every scheme here (the as-noise receiver knows the power,
    # it just cannot precode against the realization)
    interference_on = scenario.scheme != "no_interference"
    filter_s_power = scenario.p_p if interference_on else 0.0
    mu = np.array([stats.mu11, stats.mu12, stats.mu21, stats.mu22])
    sd = np.sqrt([stats.var11, stats.var12, stats.var21, stats.var22])
    rows = []
    for i, snr in enumerate(scenario.snr_db):
        p_c = 10.0 ** (snr / 10.0)
        pw = PowerConfig(p_c, scenario.p_p, noise_p=1.0, noise_s=scenario.noise)
        a2 = _design_alpha2(scenario.scheme, stats, scenario.alpha1, pw, scenario.rate_bpcu)
        params = DesignParams(scenario.alpha1, a2)
        rng = Generator(Philox(SeedSequence(entropy=scenario.seed, spawn_key=(i,))))
        errors = 0
        for _ in range(scenario.trials):
            g = (rng.normal(size=4) + 1j * rng.normal(size=4)) / np.sqrt(2.0)
            h = mu + sd * g
            r = ChannelRealization(*(np.array([v]) for v in h))
            h22 = _scalar(r.h22)
            hs = _scalar(channel.effective_interference_gain(r, scenario.alpha1, pw))
            filters = build_filters(r, params, pw, s_power=filter_s_power)
            msg = int(rng.integers(pair.codebook_size))
            dither = sample_dither(pair, rng)
            if interference_on:
                s_c = (rng.normal(size=T_SYMBOLS) + 1j * rng.normal(size=T_SYMBOLS)) * np.sqrt(
                    scenario.p_p / 2.0
                )
            else:
                s_c = np.zeros(T_SYMBOLS, dtype=complex)
            s_frame = np.empty(N_DIM)
            s_frame[0::2], s_frame[1::2] = s_c.real, s_c.imag
            x = encode(msg, s_frame, dither, pair, filters, scenario.alpha1, p_c)
            z = rng.normal(size=N_DIM) * np.sqrt(scenario.noise / 2.0)
            y = channel_matrix(h22) @ x + channel_matrix(hs) @ s_frame + z
            errors += decode(y, filters, dither, pair) != msg
        p_err = errors / scenario.trials
        ci = 1.96 * np.sqrt(max(p_err * (1.0 - p_err), 1e-12) / scenario.trials)
        # matched-rate outage of the unstructured scheme; the clean-channel
        # baseline is compared against the interference-free outage
        theory_which = "full_csit" if scenario.scheme == "no_interference" else "cr"
        theory = montecarlo.outage_probability(
            stats, params, pw, scenario.rate_bpcu, theory_which,
            n=scenario.theory_n, seed=scenario.seed,
        ).value
        rows.append(
            ErrorRatePoint(
                snr_db=float(snr),
                scheme=scenario.scheme,
                error_rate=float(p_err),
                ci95=float(ci),
                trials=scenario.trials,
                theory_outage=float(theory),
                alpha1=scenario.alpha1,
                alpha2=a2,
                seed=scenario.seed,
            )
        )
    return rows
