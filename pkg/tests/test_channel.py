import numpy as np
import pytest
from hypothesis import given, strategies as st

from wireless_streamlet.channel import (FADING, GOOD, CsiSample, LinkMatrix, attempt_delivery,
                                        broadcast, dequantize, homogeneous_links,
                                        make_two_class_topology, quantize, sample_csi,
                                        within_slot_delivery)


def test_within_slot_delivery_examples():
    assert within_slot_delivery(0.95, 2) == pytest.approx(0.9975, abs=1e-12)
    assert within_slot_delivery(0.37, 1) == pytest.approx(0.37)
    assert within_slot_delivery(1.0, 5) == 1.0
    with pytest.raises(ValueError):
        within_slot_delivery(0.9, 0)


@given(st.floats(0, 1), st.integers(1, 20))
def test_within_slot_delivery_monotone(p, k):
    assert within_slot_delivery(p, k + 1) >= within_slot_delivery(p, k)


def test_attempt_delivery_rate_and_errors():
    link = homogeneous_links(3, 0.95)
    rng = np.random.default_rng(0)
    hits = sum(attempt_delivery(link, 0, 1, rng) for _ in range(100_000))
    assert abs(hits / 100_000 - 0.95) < 0.005
    with pytest.raises(ValueError):
        attempt_delivery(link, 1, 1, rng)
    sure = homogeneous_links(3, 1.0)
    assert all(attempt_delivery(sure, 0, 2, rng) for _ in range(1000))


def test_attempt_delivery_consumes_one_draw():
    link = homogeneous_links(2, 0.5)
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    attempt_delivery(link, 0, 1, a)
    b.random()
    assert a.random() == b.random()


def test_replay_is_deterministic():
    def trace(seed):
        rng = np.random.default_rng(seed)
        link = make_two_class_topology(10, 0.3, 0.4, 0.8, rng)
        return link.p.tobytes(), broadcast(link, 2, 3, rng).tobytes()
    assert trace(9) == trace(9)


def test_broadcast_matches_within_slot_bound():
    link = homogeneous_links(4, 0.6)
    rng = np.random.default_rng(1)
    trials, k = 100_000, 2
    ok = np.zeros(4)
    for _ in range(trials // 100):
        for _ in range(100):
            ok += broadcast(link, 0, k, rng).any(axis=0)
    p = within_slot_delivery(0.6, k)
    sigma = np.sqrt(p * (1 - p) / trials)
    assert np.all(np.abs(ok[1:] / trials - p) < 3 * sigma)
    assert ok[0] == trials


def test_two_class_topology_counts():
    rng = np.random.default_rng(2)
    link = make_two_class_topology(10, 0.0, 0.4, 0.8, rng)
    off = ~np.eye(10, dtype=bool)
    assert np.all(link.p[off] == 0.8)
    link = make_two_class_topology(10, 0.5, 0.4, 0.8, rng)
    assert len(link.fading_nodes()) == 5
    for i in range(10):
        row = np.delete(link.p[i], i)
        assert np.all(row == (0.4 if link.classes[i] == FADING else 0.8))
    link = make_two_class_topology(10, 1.0, 0.4, 0.8, rng)
    assert np.all(link.p[off] == 0.4)
    assert GOOD not in link.classes


def test_link_matrix_validation():
    with pytest.raises(ValueError):
        LinkMatrix(np.array([[1.0, 0.0], [0.5, 1.0]]))
    with pytest.raises(ValueError):
        LinkMatrix(np.ones((2, 3)))
    with pytest.raises(ValueError):
        LinkMatrix(np.array([[1.0, 0.5], [0.9, 1.0]]), p_floor=0.8)


def test_csi_means_by_class():
    rng = np.random.default_rng(4)
    link = make_two_class_topology(4, 0.5, 0.4, 0.8, rng)
    good = [i for i in range(4) if link.classes[i] == GOOD][0]
    fade = link.fading_nodes()[0]
    recv = lambda s: (s + 1) % 4
    g = [sample_csi(link, good, recv(good), 1, rng).gamma for _ in range(10_000)]
    b = [sample_csi(link, fade, recv(fade), 1, rng).gamma for _ in range(10_000)]
    assert abs(np.mean(g) - 15.0) < 0.5
    assert abs(np.mean(b) - 3.0) < 0.1


def test_tag_round_trip():
    for tag in range(256):
        assert quantize(dequantize(tag)) == tag
    assert quantize(3.0) == 32
    assert quantize(1e300) == 255
    with pytest.raises(ValueError):
        quantize(-1.0)


@given(st.floats(0, 1e6))
def test_quantize_idempotent(gamma):
    t = quantize(gamma)
    assert quantize(dequantize(t)) == t
    assert CsiSample.from_gamma(gamma).quantized_tag == t
