import itertools

import numpy as np
import pytest
from numpy.random import Generator, Philox

from lagpc import lattice as lat
from lagpc.channel import (
    ChannelRealization,
    ChannelStats,
    DesignParams,
    PowerConfig,
    cr_rate,
    full_csit_alpha2,
    sample_realizations,
)
from lagpc.design_fast import solve_alpha1_fast

PW = PowerConfig(10.0, 10.0)
STATS = ChannelStats.from_k_factor(10.0)


@pytest.fixture(scope="module")
def pair2():
    return lat.build_nested(2, seed=0)


def _mean_realization(stats=STATS):
    mu = (stats.mu11, stats.mu12, stats.mu21, stats.mu22)
    return ChannelRealization(*(np.array([v]) for v in mu))


def _interference_frame(rng, p_p):
    s_c = (rng.normal(size=lat.T_SYMBOLS) + 1j * rng.normal(size=lat.T_SYMBOLS))
    s_c *= np.sqrt(p_p / 2.0)
    s = np.empty(lat.N_DIM)
    s[0::2], s[1::2] = s_c.real, s_c.imag
    return s


# --- closest-point search -------------------------------------------------

_MASKS = ((np.arange(256)[:, None] >> np.arange(8)) & 1).astype(float)


def _coset_corners(x, shift):
    """All floor/ceil integer combinations of x - shift, shifted back.

    The nearest even-sum integer vector to a (non-integer) point always
    lies on such a corner: any coordinate further out can be pulled two
    steps inward without changing the sum's parity, strictly reducing
    the distance.
    """
    corners = np.floor(x - shift)[None, :] + _MASKS + shift
    keep = np.sum(corners - shift, axis=1) % 2 == 0
    return corners[keep]


def _oracle_e8(x):
    cands = np.vstack([_coset_corners(x, 0.0), _coset_corners(x, 0.5)])
    d = np.sum((cands - x[None, :]) ** 2, axis=1)
    best = np.flatnonzero(d == d.min())
    if len(best) > 1:  # exact tie: lexicographically smallest
        order = np.lexsort(cands[best].T[::-1])
        return cands[best[order[0]]]
    return cands[best[0]]


def test_e8_closest_point_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-4.0, 4.0, size=(40, 8))
    got = lat.e8_closest_point(pts)
    ginv = np.linalg.inv(lat.e8_generator())
    for x, g in zip(pts, got):
        np.testing.assert_array_equal(g, _oracle_e8(x))
        # and the answer is a lattice point
        b = ginv @ g
        np.testing.assert_allclose(b, np.rint(b), atol=1e-9)


def test_e8_closest_point_shapes():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 5, 8))
    batched = lat.e8_closest_point(x)
    assert batched.shape == x.shape
    np.testing.assert_array_equal(batched[1, 2], lat.e8_closest_point(x[1, 2]))
    assert lat.e8_closest_point(np.zeros(8)).shape == (8,)


def test_generator_is_unimodular():
    assert np.linalg.det(lat.e8_generator()) == pytest.approx(1.0)


def test_mod_lambda_lands_in_cell():
    coarse = lat.Lattice.scaled_e8(1.7)
    rng = np.random.default_rng(2)
    x = rng.uniform(-20.0, 20.0, size=(50, 8))
    res = lat.mod_lambda(x, coarse)
    # the residue's own nearest coarse point is the origin
    np.testing.assert_array_equal(coarse.closest(res), np.zeros_like(res))
    # and it differs from x by a lattice vector
    b = np.linalg.solve(coarse.gen, (x - res).T).T
    np.testing.assert_allclose(b, np.rint(b), atol=1e-8)


def test_lattice_validates_scale():
    with pytest.raises(ValueError):
        lat.Lattice.scaled_e8(0.0)


# --- nesting and the codebook ----------------------------------------------


def test_build_nested_calibration(pair2):
    assert pair2.q_nest == 2
    assert pair2.rate_bpcu == 2.0
    assert pair2.second_moment == pytest.approx(0.5, rel=0.005)
    assert pair2.coarse.scale == pytest.approx(2.0 * pair2.fine.scale)
    assert pair2.codebook_size == 256
    with pytest.raises(ValueError):
        lat.build_nested(3)


def test_build_nested_q4():
    pair = lat.build_nested(4, seed=0)
    assert pair.rate_bpcu == 4.0
    assert pair.second_moment == pytest.approx(0.5, rel=0.005)


def test_message_digit_roundtrip():
    rng = np.random.default_rng(3)
    for q in (2, 4):
        for idx in rng.integers(q ** lat.N_DIM, size=30):
            idx = int(idx)
            assert lat.digits_to_message(lat.message_to_digits(idx, q), q) == idx
    with pytest.raises(ValueError):
        lat.message_to_digits(-1, 2)
    with pytest.raises(ValueError):
        lat.message_to_digits(256, 2)


def test_codebook_is_injective(pair2):
    words = np.array([lat.codeword(pair2, i) for i in range(256)])
    assert len({tuple(np.round(w, 9)) for w in words}) == 256
    # every codeword is a fine point and reduces to itself modulo coarse
    # up to a coarse vector (binary words can sit exactly on the cell wall)
    for i, w in enumerate(words):
        b = np.linalg.solve(pair2.fine.gen, w)
        np.testing.assert_allclose(b, np.rint(b), atol=1e-8)
        folded = lat.mod_lambda(w, pair2.coarse)
        k = np.linalg.solve(pair2.coarse.gen, folded - w)
        np.testing.assert_allclose(k, np.rint(k), atol=1e-8)
        assert np.sum(folded ** 2) <= np.sum(w ** 2) + 1e-9


def test_dithered_transmit_power(pair2):
    """mod-coarse output holds the calibrated power for any fixed message."""
    rng = Generator(Philox(key=9))
    alpha1, p_c = 0.3, 10.0
    r = _mean_realization()
    filters = lat.build_filters(r, DesignParams(alpha1, 0.8 + 0.2j), PW)
    sq = 0.0
    n = 1200
    for _ in range(n):
        d = lat.sample_dither(pair2, rng)
        s = _interference_frame(rng, PW.Pp)
        x = lat.encode(7, s, d, pair2, filters, alpha1, p_c)
        sq += float(np.mean(x ** 2))
    per_dim = sq / n
    assert per_dim == pytest.approx(0.5 * (1.0 - alpha1) * p_c, rel=0.05)


# --- filters and the rate identity -----------------------------------------


def test_achievable_rate_matches_closed_form():
    rng = np.random.default_rng(4)
    r_all = sample_realizations(STATS, 10, 5)
    for i in range(10):
        r = r_all[i : i + 1]
        a1 = float(rng.uniform(0.0, 0.9))
        a2 = complex(rng.normal(1.0, 0.3) + 1j * rng.normal(0.0, 0.3))
        params = DesignParams(a1, a2)
        filters = lat.build_filters(r, params, PW)
        want = float(np.ravel(cr_rate(r, params, PW))[0])
        assert lat.achievable_rate(filters) == pytest.approx(want, abs=1e-9)


def test_filters_with_matched_alpha2_reach_clean_rate():
    r = sample_realizations(STATS, 3, 8)
    for i in range(3):
        ri = r[i : i + 1]
        a1 = 0.4
        a2 = complex(np.ravel(full_csit_alpha2(ri, a1, PW))[0])
        filters = lat.build_filters(ri, DesignParams(a1, a2), PW)
        sigma2 = (1.0 - a1) * PW.Pc
        clean = float(np.log2(1.0 + np.abs(np.ravel(ri.h22)[0]) ** 2 * sigma2 / PW.noise_s))
        assert lat.achievable_rate(filters) == pytest.approx(clean, abs=1e-9)
        # absent interference the precoder choice is immaterial
        off = lat.build_filters(ri, DesignParams(a1, 0.123j), PW, s_power=0.0)
        assert lat.achievable_rate(off) == pytest.approx(clean, abs=1e-9)


def test_error_covariance_complex_consistency():
    r = _mean_realization()
    filters = lat.build_filters(r, DesignParams(0.3, 1.0 + 0.1j), PW)
    C = lat.error_covariance_complex(filters)
    np.testing.assert_allclose(C, C.conj().T, atol=1e-12)
    assert np.trace(C).real == pytest.approx(np.trace(filters.Sigma_E))
    assert np.trace(C).imag == pytest.approx(0.0, abs=1e-12)


def test_build_filters_rejects_full_relaying():
    with pytest.raises(ValueError):
        lat.build_filters(_mean_realization(), DesignParams(1.0, 0.0), PW)


def test_achievable_rate_rejects_indefinite_covariance():
    eye = np.eye(lat.N_DIM)
    bad = lat.FilterSet(F_s=eye, F_r=eye, L=eye, Sigma_E=-eye)
    with pytest.raises(ValueError):
        lat.achievable_rate(bad)


# --- sphere decoding --------------------------------------------------------


def _sphere_oracle(M, y, width=3):
    base = np.rint(np.linalg.solve(M, y)).astype(int)
    best, best_d = None, np.inf
    for off in itertools.product(range(-width, width + 1), repeat=M.shape[0]):
        b = base + np.array(off)
        d = float(np.sum((y - M @ b) ** 2))
        if d < best_d:
            best_d, best = d, b
    return best, best_d


def test_sphere_decode_is_exact():
    rng = np.random.default_rng(6)
    for _ in range(60):
        u, _, vt = np.linalg.svd(rng.normal(size=(4, 4)))
        M = u @ np.diag(rng.uniform(1.0, 3.0, size=4)) @ vt
        b0 = rng.integers(-4, 5, size=4)
        y = M @ b0 + rng.normal(scale=0.4, size=4)
        want, want_d = _sphere_oracle(M, y)
        got = lat.sphere_decode(M, y)
        got_d = float(np.sum((y - M @ got) ** 2))
        assert got_d == pytest.approx(want_d, abs=1e-9)
        np.testing.assert_array_equal(got, want)


def test_noiseless_roundtrip(pair2):
    r = _mean_realization()
    a2 = complex(np.ravel(full_csit_alpha2(r, 0.0, PW))[0])
    filters = lat.build_filters(r, DesignParams(0.0, a2), PW)
    h22 = complex(np.ravel(r.h22)[0])
    hs = complex(np.ravel(r.h21)[0])  # alpha1 = 0: no relayed share
    rng = Generator(Philox(key=42))
    for msg in rng.integers(pair2.codebook_size, size=64):
        msg = int(msg)
        d = lat.sample_dither(pair2, rng)
        s = _interference_frame(rng, PW.Pp)
        x = lat.encode(msg, s, d, pair2, filters, 0.0, PW.Pc)
        y = lat.channel_matrix(h22) @ x + lat.channel_matrix(hs) @ s
        assert lat.decode(y, filters, d, pair2) == msg


# --- whole-link simulation ---------------------------------------------------


def test_transmit_samples_gaussianization(pair2):
    """Relaying washes out the sub-Gaussian cell shape of the bare codeword."""
    r = _mean_realization()
    bare_f = lat.build_filters(r, DesignParams(0.0, 0j), PW)
    bare = lat.transmit_samples(pair2, bare_f, 0.0, PW, n_frames=8000, seed=1)
    kurt = float(np.mean(bare ** 4) / np.mean(bare ** 2) ** 2 - 3.0)
    assert -0.56 < kurt < -0.38  # close to the uniform-cell value

    res = solve_alpha1_fast(STATS, PW)
    des_f = lat.build_filters(r, res.params, PW)
    des = lat.transmit_samples(pair2, des_f, res.alpha1, PW, n_frames=12000, seed=2)
    kurt_d = float(np.mean(des ** 4) / np.mean(des ** 2) ** 2 - 3.0)
    skew_d = float(np.mean(des ** 3) / np.mean(des ** 2) ** 1.5)
    assert abs(kurt_d) < 0.08
    assert abs(skew_d) < 0.05


def test_codeword_error_sim_determinism():
    sc = lat.LatticeScenario(
        k_db=10.0, rate_bpcu=2.0, snr_db=(24.0,), trials=150, seed=3, theory_n=20000
    )
    a = lat.codeword_error_sim(sc)
    b = lat.codeword_error_sim(sc)
    assert a == b
    assert a[0].trials == 150 and a[0].snr_db == 24.0


def test_codeword_error_sim_physics():
    kw = dict(k_db=10.0, rate_bpcu=2.0, seed=3, theory_n=40000)
    main = lat.codeword_error_sim(
        lat.LatticeScenario(snr_db=(12.0, 20.0, 28.0), trials=400, **kw)
    )
    # a 4-use exact-ML code beats the infinite-blocklength outage while
    # errors are dominated by deep fades, then pays the short-code penalty
    assert main[0].error_rate < main[0].theory_outage
    assert main[2].error_rate > main[2].theory_outage
    assert main[0].error_rate > main[1].error_rate > main[2].error_rate

    clean = lat.codeword_error_sim(
        lat.LatticeScenario(snr_db=(12.0,), trials=400, scheme="no_interference", **kw)
    )[0]
    assert clean.error_rate < main[0].error_rate
    assert clean.theory_outage < main[0].theory_outage

    blind = lat.codeword_error_sim(
        lat.LatticeScenario(snr_db=(6.0,), trials=300, scheme="interference_as_noise", **kw)
    )[0]
    assert blind.error_rate >= 0.95
    assert blind.alpha2 == 0j


def test_codeword_error_sim_validation():
    with pytest.raises(ValueError):
        lat.codeword_error_sim(
            lat.LatticeScenario(k_db=10.0, rate_bpcu=3.0, snr_db=(20.0,))
        )
    with pytest.raises(ValueError):
        lat.codeword_error_sim(
            lat.LatticeScenario(
                k_db=10.0, rate_bpcu=2.0, snr_db=(20.0,), trials=5, scheme="bogus"
            )
        )
