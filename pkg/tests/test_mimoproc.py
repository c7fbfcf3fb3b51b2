import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mamibench.channel import (DiagonalTransfer, HardwareFront, PropagationChannel,
                               complex_normal, compose_dl, compose_ul, draw_rayleigh)
from mamibench.constellation import Modulation, demap, map_bits
from mamibench.errors import (DimensionMismatch, LengthMismatch, RankDeficient,
                              SingularDiagonal, ZeroPilot)
from mamibench.mimoproc import (Detector, Precoder, calibration_matrix, default_beta,
                                detect_matrix, equalize, ls_estimate, precode_matrix,
                                ue_equalize_dl)
from mamibench.ofdm import PilotAllocation


def _leakage(hp):
    """Off-diagonal to diagonal power ratio of the end-to-end DL matrix."""
    p = np.abs(hp) ** 2
    off = p[~np.eye(p.shape[0], dtype=bool)].sum()
    return off / np.trace(p)


def _setup(m, k, seed, random_hw=True):
    prop = PropagationChannel(draw_rayleigh(k, m, seed))
    hw = HardwareFront.random(m, k, seed + 1) if random_hw else HardwareFront.ideal(m, k)
    return compose_ul(prop, hw), compose_dl(prop, hw), hw


def test_mrc_is_hermitian():
    g = draw_rayleigh(8, 3, 1)
    np.testing.assert_array_equal(detect_matrix(g, Detector("mrc")), g.conj().T)


@pytest.mark.parametrize("engine", ["qr", "direct"])
def test_zf_inverts_channel(engine):
    g = draw_rayleigh(64, 8, 2)
    w = detect_matrix(g, Detector("zf", engine=engine))
    np.testing.assert_allclose(w @ g, np.eye(8), atol=1e-9)


def test_zf_ignores_beta():
    g = draw_rayleigh(16, 4, 3)
    np.testing.assert_allclose(detect_matrix(g, Detector("zf", beta_dec=5.0)),
                               detect_matrix(g, Detector("zf")))


def test_rzf_tends_to_mrc_direction():
    g = draw_rayleigh(16, 4, 3)
    mrc = detect_matrix(g, Detector("mrc"))
    angles = []
    for beta in (1.0, 1e2, 1e4, 1e6):
        w = detect_matrix(g, Detector("rzf", beta_dec=beta))
        cos = [abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)) for a, b in zip(w, mrc)]
        angles.append(np.arccos(np.clip(min(cos), -1, 1)))
    assert angles == sorted(angles, reverse=True)
    assert angles[-1] < 1e-4


def test_zf_rank_deficient():
    g = draw_rayleigh(8, 3, 1)
    g[:, 2] = g[:, 1]
    with pytest.raises(RankDeficient):
        detect_matrix(g, Detector("zf"))


def test_detector_validation():
    with pytest.raises(ValueError):
        Detector("mmse")
    with pytest.raises(ValueError):
        Detector("rzf", beta_dec=-1)
    with pytest.raises(ValueError):
        Precoder("zf", engine="cholesky")
    with pytest.raises(DimensionMismatch):
        detect_matrix(draw_rayleigh(2, 4, 0), Detector())


def test_mrt_identity_calibration():
    g = draw_rayleigh(8, 3, 4)
    p = precode_matrix(g, Precoder("mrt"))
    np.testing.assert_allclose(p, np.conj(g) * np.sqrt(3) / np.linalg.norm(g))


def test_precoder_power_normalization():
    g = draw_rayleigh(32, 4, 5)
    for scheme in ("mrt", "zf", "rzf"):
        p = precode_matrix(g, Precoder(scheme, beta_pre=0.3))
        assert np.linalg.norm(p) ** 2 == pytest.approx(4)


def test_zf_precoder_diagonalizes_reciprocal_channel():
    g, h, _ = _setup(16, 4, 6, random_hw=False)
    np.testing.assert_allclose(h, g.T)
    hp = h @ precode_matrix(g, Precoder("zf"))
    off = hp - np.diag(np.diag(hp))
    assert np.max(np.abs(off)) < 1e-9


def test_calibration_scalar_invariance():
    g, h, hw = _setup(16, 4, 7)
    c = calibration_matrix(hw)
    p1 = precode_matrix(g, Precoder("zf", calibration=c))
    p2 = precode_matrix(g, Precoder("zf", calibration=DiagonalTransfer(3.7 * c.entries)))
    s1 = np.abs(np.diag(h @ p1)) ** 2
    s2 = np.abs(np.diag(h @ p2)) ** 2
    np.testing.assert_allclose(s1, s2, rtol=1e-10)


def test_calibration_trivial_cases():
    t = DiagonalTransfer(np.exp(1j * np.arange(4)))
    hw = HardwareFront(t, t, DiagonalTransfer.identity(2), DiagonalTransfer.identity(2))
    np.testing.assert_allclose(calibration_matrix(hw).entries, np.ones(4))
    hw2 = HardwareFront(DiagonalTransfer(2 * t.entries), t, hw.r_ue, hw.t_ue)
    np.testing.assert_allclose(calibration_matrix(hw2).entries, 2 * np.ones(4))


def test_calibration_cancels_interference():
    g, h, hw = _setup(32, 4, 8)
    hp = h @ precode_matrix(g, Precoder("zf", calibration=calibration_matrix(hw)))
    assert 10 * np.log10(_leakage(hp)) < -60


@settings(max_examples=30, deadline=None)
@given(m=st.integers(4, 48), k=st.integers(1, 4), seed=st.integers(0, 2**30))
def test_calibration_property(m, k, seed):
    g, h, hw = _setup(m, k, seed)
    hp = h @ precode_matrix(g, Precoder("zf", calibration=calibration_matrix(hw)))
    assert _leakage(hp) < 1e-6


def test_uncalibrated_leaks():
    hits = 0
    for seed in range(100):
        g, h, _ = _setup(32, 4, 1000 + 2 * seed)
        hits += _leakage(h @ precode_matrix(g, Precoder("zf"))) > 1e-2
    assert hits >= 99


def test_calibration_scaling_keeps_decisions():
    g, h, hw = _setup(16, 4, 9)
    c = calibration_matrix(hw)
    bits = np.random.default_rng(0).integers(0, 2, (4, 64))
    u = map_bits(bits, Modulation.QAM16)
    out = []
    for scale in (1.0, 0.01 * np.exp(1j)):
        p = precode_matrix(g, Precoder("zf", calibration=DiagonalTransfer(scale * c.entries)))
        y = h @ p @ u
        out.append(demap(ue_equalize_dl(y, np.diag(h @ p)[:, None]), Modulation.QAM16))
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[0], bits)


def test_calibration_singular():
    hw = HardwareFront.ideal(3, 1)
    with pytest.raises(SingularDiagonal):
        calibration_matrix(HardwareFront(hw.r_bs, DiagonalTransfer(np.array([1, 1e-20, 1])),
                                         hw.r_ue, hw.t_ue))


def _pilot_rx(g_sub, alloc, pilots=None, noise=0.0, rng=None):
    """Received comb pilot symbol: subcarrier s carries user owner(s) only."""
    used, m, k = g_sub.shape
    owner = alloc.owner_of(used)
    p = np.ones(k) if pilots is None else pilots
    rx = np.stack([g_sub[s, :, owner[s]] * p[owner[s]] for s in range(used)], axis=1)
    if noise:
        rx = rx + complex_normal(rng, rx.shape, noise)
    return rx


def test_ls_single_user_exact():
    g = draw_rayleigh(4, 1, 3)
    g_sub = np.repeat(g[None], 10, axis=0)
    est = ls_estimate(_pilot_rx(g_sub, PilotAllocation(1)), [1.0], PilotAllocation(1))
    assert est.hold_block == 1 and est.n_blocks == 10
    np.testing.assert_allclose(est.per_subcarrier(10), g_sub)


def test_ls_flat_channel_twelve_users():
    alloc = PilotAllocation(12)
    g = draw_rayleigh(16, 12, 4)
    g_sub = np.repeat(g[None], 1200, axis=0)
    pilots = np.exp(1j * np.arange(12))
    est = ls_estimate(_pilot_rx(g_sub, alloc, pilots), pilots, alloc)
    assert est.n_blocks == 100 and est.hold_block == 12
    np.testing.assert_allclose(est.per_subcarrier(1200), g_sub, atol=1e-12)


def test_ls_zero_order_hold_uses_comb_values():
    alloc = PilotAllocation(3)
    g_sub = draw_rayleigh(2, 3, 5, batch=(9,))
    est = ls_estimate(_pilot_rx(g_sub, alloc), np.ones(3), alloc)
    for b in range(3):
        for user in range(3):
            np.testing.assert_allclose(est.g_hat[b, :, user], g_sub[3 * b + user, :, user])


def test_ls_partial_last_block_holds_previous():
    alloc = PilotAllocation(4)
    g_sub = draw_rayleigh(2, 4, 6, batch=(10,))
    est = ls_estimate(_pilot_rx(g_sub, alloc), np.ones(4), alloc)
    assert est.n_blocks == 3
    np.testing.assert_allclose(est.g_hat[2, :, :2], g_sub[[8, 9], :, [0, 1]].T)
    np.testing.assert_allclose(est.g_hat[2, :, 2:], est.g_hat[1, :, 2:])


def test_ls_noise_variance():
    rng = np.random.default_rng(7)
    alloc = PilotAllocation(2)
    g_sub = np.repeat(draw_rayleigh(4, 2, 8)[None], 2, axis=0)
    pilots = np.array([2.0, 2.0j])
    noise = 0.5
    errs = []
    for _ in range(10000):
        rx = _pilot_rx(g_sub, alloc, pilots, noise, rng)
        errs.append(ls_estimate(rx, pilots, alloc).g_hat[0] - g_sub[0])
    mse = np.mean(np.abs(np.array(errs)) ** 2)
    assert abs(mse / (noise / 4) - 1) < 0.05


def test_ls_errors():
    alloc = PilotAllocation(2)
    with pytest.raises(LengthMismatch):
        ls_estimate(np.ones((4, 6)), np.ones(3), alloc)
    with pytest.raises(ZeroPilot):
        ls_estimate(np.ones((4, 6)), np.array([1.0, 0.0]), alloc)


def test_equalize_identity_and_zf():
    r = draw_rayleigh(4, 1, 1).ravel()
    np.testing.assert_array_equal(equalize(np.eye(4), r), r)
    g = draw_rayleigh(12, 3, 2)
    z = np.array([1 + 1j, -1, 1j]) / np.sqrt(2)
    np.testing.assert_allclose(equalize(detect_matrix(g, Detector()), g @ z), z, atol=1e-9)


def test_equalize_loop_oracle():
    w = draw_rayleigh(3, 5, 3)
    r = draw_rayleigh(5, 1, 4).ravel()
    expected = [sum(w[k, m] * r[m] for m in range(5)) for k in range(3)]
    np.testing.assert_allclose(equalize(w, r), expected)
    with pytest.raises(DimensionMismatch):
        equalize(w, r[:4])


def test_ue_equalizer():
    x = np.array([1 + 2j, -3j])
    np.testing.assert_array_equal(ue_equalize_dl(x, np.ones(2)), x)
    theta = np.array([0.3, -2.0])
    np.testing.assert_allclose(ue_equalize_dl(x * np.exp(1j * theta), np.exp(1j * theta)), x)
    with pytest.raises(ZeroPilot):
        ue_equalize_dl(x, np.array([1.0, 0.0]))


def test_noiseless_dl_chain_recovers_symbols():
    g, h, hw = _setup(16, 4, 10)
    p = precode_matrix(g, Precoder("zf", calibration=calibration_matrix(hw)))
    u = np.array([1, 1j, -1, -1j]) * (1 + 1j) / np.sqrt(2)
    # DL pilot: user k gets a unit symbol, giving it its effective gain
    h_eff = np.diag(h @ p)
    np.testing.assert_allclose(ue_equalize_dl(h @ p @ u, h_eff), u, atol=1e-9)


def test_default_beta():
    assert default_beta(12) == 0.0
    assert default_beta(12, 10.0) == pytest.approx(1.2)
