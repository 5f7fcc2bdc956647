import numpy as np
import pytest

from cellfree.receiver import cluster_weights, combine, local_mmse, sinr_and_mi


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def brute_sinr(receivers, channels, snr):
    """Scalar re-evaluation from raw inner products."""
    n = channels.shape[1]
    out = []
    for k in range(n):
        v = receivers[:, k]
        num = abs(np.vdot(v, channels[:, k])) ** 2
        den = 1.0 / snr
        for j in range(n):
            if j != k:
                den += abs(np.vdot(v, channels[:, j])) ** 2
        out.append(num / den)
    return np.array(out)


def full_mmse_sinr(H, snr):
    """Centralized MMSE SINR: h_k^H (I/snr + sum_{j!=k} h_j h_j^H)^-1 h_k."""
    out = []
    for k in range(H.shape[1]):
        others = np.delete(H, k, axis=1)
        C = others @ others.conj().T + np.eye(H.shape[0]) / snr
        out.append(np.real(H[:, k].conj() @ np.linalg.inv(C) @ H[:, k]))
    return np.array(out)


def test_local_mmse_single_ue_is_matched_filter():
    h = crandn(np.random.default_rng(0), 8, 1)
    v = local_mmse(h, snr=2.0)
    np.testing.assert_allclose(v, h / np.linalg.norm(h), atol=1e-12)


def test_local_mmse_orthogonal_ues_do_not_leak():
    F = np.fft.fft(np.eye(8)) / np.sqrt(8)
    est = np.column_stack([2.0 * F[:, 1], (1 - 1j) * F[:, 5]])
    v = local_mmse(est, snr=3.0)
    assert abs(np.vdot(v[:, 0], est[:, 1])) < 1e-12
    assert abs(np.vdot(v[:, 1], est[:, 0])) < 1e-12


def test_local_mmse_matches_explicit_inverse():
    rng = np.random.default_rng(1)
    est = crandn(rng, 4, 3)
    snr = 7.5
    ref = np.linalg.inv(np.eye(4) / snr + est @ est.conj().T) @ est
    ref /= np.linalg.norm(ref, axis=0)
    np.testing.assert_allclose(local_mmse(est, snr), ref, atol=1e-10)


def test_local_mmse_zero_column_stays_zero():
    est = crandn(np.random.default_rng(2), 4, 3)
    est[:, 1] = 0
    v = local_mmse(est, 2.0)
    assert not v[:, 1].any()
    np.testing.assert_allclose(np.linalg.norm(v[:, [0, 2]], axis=0), 1.0)


def test_single_ru_weight_is_unit_and_positive():
    w = cluster_weights(np.array([0.3 - 0.4j]), np.array([[1.0 + 1j]]), 2.0)
    assert abs(w[0]) == pytest.approx(1.0)
    g = np.vdot(w, [0.3 - 0.4j])
    assert g.real > 0 and abs(g.imag) < 1e-12


def test_weights_without_interference_are_mrc():
    g = crandn(np.random.default_rng(3), 4)
    w = cluster_weights(g, np.zeros((4, 0)), 5.0)
    np.testing.assert_allclose(w, g / np.linalg.norm(g), atol=1e-12)


def test_weights_beat_equal_weights():
    rng = np.random.default_rng(4)
    for _ in range(50):
        g = crandn(rng, 3)
        J = crandn(rng, 3, 2)
        snr = 10.0

        def nominal(w):
            return abs(np.vdot(w, g)) ** 2 / (np.linalg.norm(w) ** 2 / snr + np.sum(abs(J.conj().T @ w) ** 2))

        assert nominal(cluster_weights(g, J, snr)) >= nominal(np.ones(3) / np.sqrt(3)) - 1e-12


def test_zero_desired_gain_falls_back_to_equal_weights():
    w = cluster_weights(np.zeros(4), np.ones((4, 1)), 1.0)
    np.testing.assert_allclose(w, 0.5)


def _random_system(rng, L, M, n, p_edge=0.7):
    est = crandn(rng, L, M, n)
    edges = rng.random((L, n)) < p_edge
    edges[0] |= ~edges.any(axis=0)
    est *= edges[:, None, :]
    return est, edges


def test_combine_unit_norm_and_off_cluster_zero():
    rng = np.random.default_rng(5)
    est, edges = _random_system(rng, 4, 3, 6)
    rx = combine(est, edges, 4.0)
    np.testing.assert_allclose(np.linalg.norm(rx.matrix, axis=0), 1.0, atol=1e-10)
    for l in range(4):
        for k in range(6):
            if not edges[l, k]:
                assert not rx.aggregate[l, :, k].any()
                assert rx.weights[k, l] == 0


def test_combine_weights_are_per_cluster_optimum():
    rng = np.random.default_rng(6)
    est, edges = _random_system(rng, 3, 2, 4, p_edge=1.0)
    snr = 3.0
    rx = combine(est, edges, snr)
    v = rx.local_vectors
    for k in range(4):
        gains = np.array([[np.vdot(v[l, :, k], est[l, :, j]) for j in range(4)] for l in range(3)])
        w = cluster_weights(gains[:, k], np.delete(gains, k, axis=1), snr)
        np.testing.assert_allclose(rx.weights[k], w, atol=1e-10)


def test_sinr_orthogonal_receiver_is_zero():
    H = np.zeros((4, 2), complex)
    H[0, 0] = 1
    H[1, 1] = 1
    R = np.zeros((4, 2), complex)
    R[2, 0] = 1
    R[3, 1] = 1
    sinr, mi = sinr_and_mi(R, H, 10.0)
    np.testing.assert_array_equal(sinr, 0)
    np.testing.assert_array_equal(mi, 0)


def test_sinr_single_ue_no_interference():
    h = crandn(np.random.default_rng(7), 6, 1)
    snr = 2.5
    sinr, mi = sinr_and_mi(h / np.linalg.norm(h), h, snr)
    norm2 = np.linalg.norm(h) ** 2
    assert sinr[0] == pytest.approx(snr * norm2, rel=1e-12)
    assert mi[0] == pytest.approx(np.log2(1 + snr * norm2), rel=1e-12)


def test_sinr_matches_brute_force():
    rng = np.random.default_rng(8)
    H = crandn(rng, 12, 4)
    R = crandn(rng, 12, 4)
    R /= np.linalg.norm(R, axis=0)
    sinr, mi = sinr_and_mi(R, H, 3.0)
    ref = brute_sinr(R, H, 3.0)
    np.testing.assert_allclose(sinr, ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(mi, np.log2(1 + ref), rtol=1e-12)


def test_sinr_inactive_masked():
    rng = np.random.default_rng(9)
    H = crandn(rng, 6, 3)
    H[:, 2] = 0
    R = crandn(rng, 6, 3)
    sinr, _ = sinr_and_mi(R, H, 1.0, active=[True, True, False])
    assert sinr[2] == 0


def test_sinr_phase_invariance_and_interferer_monotonicity():
    rng = np.random.default_rng(10)
    H = crandn(rng, 8, 4)
    R = crandn(rng, 8, 4)
    R /= np.linalg.norm(R, axis=0)
    base, _ = sinr_and_mi(R, H, 2.0)
    rotated, _ = sinr_and_mi(R * np.exp(1j * rng.uniform(0, 2 * np.pi, 4)), H, 2.0)
    np.testing.assert_allclose(rotated, base, rtol=1e-12)
    for j in range(4):
        H2 = H.copy()
        H2[:, j] = 0
        fewer, _ = sinr_and_mi(R, H2, 2.0)
        keep = np.arange(4) != j
        assert np.all(fewer[keep] >= base[keep] - 1e-15)


@pytest.mark.parametrize("L, M, K", [(1, 8, 3), (1, 4, 2), (8, 1, 3), (4, 1, 2), (6, 1, 3)])
def test_perfect_csi_full_cluster_equals_centralized_mmse(L, M, K):
    # equality holds when per-RU combining loses nothing: one RU, or one antenna per RU
    rng = np.random.default_rng(L * 10 + M)
    for _ in range(20):
        H = crandn(rng, L, M, K)
        snr = 4.0
        rx = combine(H, np.ones((L, K), bool), snr)
        sinr, _ = sinr_and_mi(rx.aggregate, H, snr)
        np.testing.assert_allclose(sinr, full_mmse_sinr(H.reshape(L * M, K), snr), rtol=1e-6)


@pytest.mark.parametrize("L, M, K", [(2, 4, 3), (2, 2, 3), (4, 2, 2)])
def test_two_stage_never_beats_centralized_mmse(L, M, K):
    rng = np.random.default_rng(L + M + K)
    for _ in range(20):
        H = crandn(rng, L, M, K)
        rx = combine(H, np.ones((L, K), bool), 4.0)
        sinr, _ = sinr_and_mi(rx.aggregate, H, 4.0)
        assert np.all(sinr <= full_mmse_sinr(H.reshape(L * M, K), 4.0) * (1 + 1e-9))
