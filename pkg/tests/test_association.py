import math

import numpy as np
import pytest

from cellfree.association import (
    AssociationGraph, PilotAssignment, assign_pilots, association_threshold, estimate_channels,
    form_clusters, pilot_conflicts,
)
from cellfree.channel import LargeScaleState, dft_matrix, draw_large_scale, realize_channel, support_masks
from cellfree.geometry import make_topology


def _state(beta, snr=1.0):
    beta = np.asarray(beta, dtype=float)
    return LargeScaleState(beta=beta, los_flags=np.ones(beta.shape, bool), snr=snr)


def _consistent(graph: AssociationGraph) -> bool:
    from_clusters = {(l, k) for k, cl in enumerate(graph.clusters) for l in cl}
    from_served = {(l, k) for l, us in enumerate(graph.served) for k in us}
    return from_clusters == from_served == set(graph.edges)


def test_threshold_is_inclusive():
    snr, m, eta = 3.0, 8, 1.0
    thr = association_threshold(snr, eta, m)
    g = form_clusters(_state([[thr], [thr * 0.999]], snr), eta, 10, m)
    assert g.clusters == [(0,)]


def test_cluster_truncated_to_strongest():
    beta = np.arange(1, 13, dtype=float)[:, None]  # 12 RUs, all pass
    g = form_clusters(_state(beta, snr=1.0), 1.0, 10, 1)
    assert g.clusters[0] == tuple(range(2, 12))


def test_truncation_ties_go_to_lower_index():
    beta = np.array([[5.0], [5.0], [5.0], [1.0]])
    g = form_clusters(_state(beta), 1.0, 2, 1)
    assert g.clusters[0] == (0, 1)


def test_uncovered_ue():
    g = form_clusters(_state([[0.1, 5.0], [0.2, 5.0]]), 1.0, 10, 1)
    assert g.clusters[0] == ()
    assert list(g.uncovered) == [True, False]


def test_graph_invariants_on_real_layout():
    topo = make_topology(3, 4, 60, 50, 2)
    large = draw_large_scale(topo, 8, 2)
    g = form_clusters(large, 1.0, 10, 8)
    assert _consistent(g)
    assert max(len(c) for c in g.clusters) <= 10
    thr = association_threshold(large.snr, 1.0, 8)
    assert all(large.beta[l, k] >= thr for l, k in g.edges)
    sub = g.restrict(np.arange(60) < 10)
    assert _consistent(sub)
    assert all(k < 10 for _, k in sub.edges)


def _one_ru_pair(overlap: bool):
    graph = AssociationGraph(np.ones((1, 2), bool))
    sup = np.zeros((1, 2, 8), bool)
    sup[0, 0, 0] = True
    sup[0, 1, 0 if overlap else 4] = True
    return graph, sup, np.ones((1, 2))


def test_disjoint_supports_share_pilot():
    graph, sup, beta = _one_ru_pair(overlap=False)
    pa = assign_pilots(graph, sup, [0, 1], 1, beta)
    assert list(pa.pilot_of) == [0, 0]
    assert not pa.fallbacks


def test_overlapping_supports_get_distinct_pilots():
    graph, sup, beta = _one_ru_pair(overlap=True)
    pa = assign_pilots(graph, sup, [0, 1], 2, beta)
    assert sorted(pa.pilot_of) == [0, 1]


def test_overlap_with_single_pilot_uses_fallback():
    graph, sup, beta = _one_ru_pair(overlap=True)
    pa = assign_pilots(graph, sup, [0, 1], 1, beta)
    assert list(pa.pilot_of) == [0, 0]
    assert len(pa.fallbacks) == 1 and pa.fallbacks[0][2] == pytest.approx(1.0)


def test_enough_pilots_means_all_distinct():
    topo = make_topology(3, 4, 30, 50, 0)
    large = draw_large_scale(topo, 8, 0)
    sup = support_masks(topo.azimuths(), 8, math.pi / 8)
    g = form_clusters(large, 1.0, 10, 8)
    active = np.flatnonzero(g.covered)[:20]
    pa = assign_pilots(g, sup, active, 20, large.beta)
    assert sorted(pa.pilot_of[active]) == list(range(20))
    assert np.all(pa.pilot_of[np.setdiff1d(np.arange(30), active)] == -1)


def test_pilot_validity_and_determinism_under_reuse():
    topo = make_topology(3, 4, 100, 50, 5)
    large = draw_large_scale(topo, 8, 5)
    sup = support_masks(topo.azimuths(), 8, math.pi / 8)
    g = form_clusters(large, 1.0, 10, 8)
    active = np.flatnonzero(g.covered)
    pa = assign_pilots(g, sup, active, 20, large.beta)
    again = assign_pilots(g, sup, active, 20, large.beta)
    assert np.array_equal(pa.pilot_of, again.pilot_of)
    assert np.all((pa.pilot_of[active] >= 0) & (pa.pilot_of[active] < 20))
    fallback_ues = {k for k, _, _ in pa.fallbacks}
    for a, b, _ in pilot_conflicts(pa, g, sup):
        assert a in fallback_ues or b in fallback_ues


def _estimation_setup(supports, snr=np.inf, tau_p=2):
    L, K, M = supports.shape
    state = _state(np.ones((L, K)), snr=snr)
    graph = AssociationGraph(np.ones((L, K), bool))
    return state, graph


def test_noiseless_single_ue_estimate_is_exact():
    sup = np.zeros((2, 1, 8), bool)
    sup[:, 0, [1, 2]] = True
    state, graph = _estimation_setup(sup)
    real = realize_channel(state, sup, [True], 0)
    pa = PilotAssignment(pilot_of=np.array([0]), tau_p=2)
    est = estimate_channels(real, pa, graph, sup, np.inf, 2)
    np.testing.assert_allclose(est, real.blocks, atol=1e-12)


def test_orthogonal_copilot_is_projected_out():
    sup = np.zeros((1, 2, 8), bool)
    sup[0, 0, [0, 1]] = True
    sup[0, 1, [4, 5]] = True
    state, graph = _estimation_setup(sup)
    real = realize_channel(state, sup, [True, True], 1)
    pa = PilotAssignment(pilot_of=np.array([0, 0]), tau_p=1)
    est = estimate_channels(real, pa, graph, sup, np.inf, 1)
    assert np.linalg.norm(est - real.blocks) < 1e-10


def test_overlapping_copilot_contaminates():
    sup = np.zeros((1, 2, 8), bool)
    sup[0, :, 3] = True
    state, graph = _estimation_setup(sup)
    real = realize_channel(state, sup, [True, True], 2)
    pa = PilotAssignment(pilot_of=np.array([0, 0]), tau_p=1)
    est = estimate_channels(real, pa, graph, sup, np.inf, 1)
    total = real.blocks[0, :, 0] + real.blocks[0, :, 1]
    np.testing.assert_allclose(est[0, :, 0], total, atol=1e-12)


def test_estimate_in_span_and_zero_off_edges():
    sup = np.zeros((2, 2, 8), bool)
    sup[:, 0, 2] = True
    sup[:, 1, [5, 6]] = True
    state = _state(np.ones((2, 2)), snr=5.0)
    graph = AssociationGraph(np.array([[True, True], [True, False]]))
    real = realize_channel(state, sup, [True, True], 3)
    pa = PilotAssignment(pilot_of=np.array([0, 1]), tau_p=2)
    est = estimate_channels(real, pa, graph, sup, 5.0, 2, rng=4)
    F = dft_matrix(8)
    for l in range(2):
        for k in range(2):
            Fs = F[:, sup[l, k]]
            v = est[l, :, k]
            assert np.linalg.norm(v - Fs @ (Fs.conj().T @ v)) < 1e-10
    assert not est[1, :, 1].any()


def test_estimation_error_shrinks_with_pilot_energy():
    sup = np.zeros((1, 1, 8), bool)
    sup[0, 0, [0, 1, 2]] = True
    state, graph = _estimation_setup(sup)
    pa = PilotAssignment(pilot_of=np.array([0]), tau_p=1)
    rng = np.random.default_rng(7)
    errors = []
    for energy in (1.0, 10.0, 100.0):
        acc = 0.0
        for _ in range(1000):
            real = realize_channel(state, sup, [True], rng)
            est = estimate_channels(real, pa, graph, sup, energy, 1, rng)
            acc += np.sum(np.abs(est - real.blocks) ** 2)
        errors.append(acc / 1000)
    assert errors[0] > errors[1] > errors[2]
    # projected noise power is |S| / (tau_p * snr)
    np.testing.assert_allclose(errors, [3.0, 0.3, 0.03], rtol=0.1)
