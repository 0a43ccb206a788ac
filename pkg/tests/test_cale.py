import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wireless_streamlet import cale
from wireless_streamlet.chain import GENESIS, QuorumCertificate, StateBlock, Vote
from wireless_streamlet.channel import quantize
from wireless_streamlet.crypto import KeyedHashScheme, SignedEnvelope, hash_bytes, hash_nor

NODES = tuple(hash_bytes(bytes([i])) for i in range(10))


def fake_qc(tags, proposer=None, block_hash=b"\x00" * 32):
    votes = []
    for i, t in enumerate(tags):
        signer = NODES[i] if NODES[i] != proposer else hash_bytes(b"x")
        votes.append(Vote(1, block_hash, t, SignedEnvelope(b"", signer, b"")))
    return QuorumCertificate(block_hash, 1, tuple(votes))


def test_constant_and_spread_medians():
    assert cale.connectivity_score(fake_qc([quantize(3.0)] * 7)) == 2.0
    assert cale.connectivity_score(fake_qc([quantize(g) for g in (1.0, 3.0, 7.0)])) == 2.0


def test_outliers_cannot_move_median():
    honest, bad = quantize(3.0), quantize(2.0 ** 30)
    for pos in itertools.combinations(range(7), 3):
        tags = [bad if i in pos else honest for i in range(7)]
        assert cale.connectivity_score(fake_qc(tags), f=3) == 2.0


def test_proposer_vote_is_excluded():
    qc = fake_qc([255, 16, 16, 16, 255, 255, 255])
    high = cale.tag_score(255)
    # scores 1,1,1,h,h,h,h: lower median is h
    assert cale.connectivity_score(qc) == pytest.approx(high)
    # without node 4's vote: 1,1,1,h,h,h and the lower median drops to 1
    assert cale.connectivity_score(qc, proposer=NODES[4]) == 1.0


def test_invalid_qcs_rejected():
    with pytest.raises(ValueError):
        cale.connectivity_score(QuorumCertificate(b"\x00" * 32, 1, ()))
    with pytest.raises(ValueError):
        cale.connectivity_score(fake_qc([1, 2, 3]), f=3)
    dup = fake_qc([1, 2])
    dup = QuorumCertificate(dup.block_hash, 1, (dup.votes[0], dup.votes[0]))
    with pytest.raises(ValueError):
        cale.connectivity_score(dup)


def test_median_robustness_exhaustive():
    honest_vals = (0.0, 1.0, 2.5, 4.0)
    extremes = (-1e9, 1e9)
    for size in range(1, 10):
        for f in range(0, (size - 1) // 2 + 1):
            h = size - f
            for hv in itertools.combinations_with_replacement(honest_vals, h):
                for bv in itertools.combinations_with_replacement(extremes, f):
                    m = cale.lower_median(list(hv) + list(bv))
                    assert min(hv) <= m <= max(hv)


def test_weight_examples():
    cold = cale.update_weights([], NODES[:3])
    assert cold.omega_fin == (1.0, 1.0, 1.0) and cold.weights == (1.0, 1.0, 1.0)
    t = cale.WeightTable(0, NODES[:3], (2.0, 1.0, 1.0))
    assert t.baseline == pytest.approx(4 / 3)
    assert t.weights == pytest.approx((1.5, 0.75, 0.75))
    z = cale.WeightTable(0, NODES[:3], (0.0, 1.0, 2.0))
    assert z.weights[0] == pytest.approx(0.01 / 1.0) and z.weights[0] > 0


def test_update_weights_from_finalized_blocks():
    scheme = KeyedHashScheme()
    pks = [scheme.keygen(bytes([i])) for i in range(4)]
    b1 = StateBlock(1, GENESIS.digest, b"\x01" * 32, b"\x02" * 32, pks[0], 1)
    b2 = StateBlock(2, b1.digest, b"\x03" * 32, b"\x04" * 32, pks[0], 2)
    qc = lambda b, g: QuorumCertificate(b.digest, b.epoch, tuple(
        Vote.create(scheme, pk, b.epoch, b.digest, quantize(g)) for pk in pks[1:]))
    table = cale.update_weights([(b1, qc(b1, 7.0)), (b2, qc(b2, 3.0))], pks)
    assert table.omega_fin == (2.0, 1.0, 1.0, 1.0)
    assert table.epoch_basis == 2
    with pytest.raises(ValueError):
        cale.update_weights([(b1, qc(b2, 3.0))], pks)
    with pytest.raises(ValueError):
        cale.update_weights([], pks, omega_min=0.0)


def test_equal_weights_pick_largest_hash():
    table = cale.WeightTable.uniform(NODES)
    for e in range(1, 300):
        assert cale.elect_leader(e, table) == max(NODES, key=lambda pk: hash_nor(e, pk))


def test_dominant_weight_almost_always_wins():
    table = cale.WeightTable(0, NODES, (1e6,) + (1.0,) * 9)
    wins = sum(cale.elect_leader(e, table) == NODES[0] for e in range(1, 10_001))
    assert wins >= 9990


def test_uniform_honest_frequency():
    table = cale.WeightTable.uniform(NODES)
    honest = set(NODES[:7])
    assert cale.honest_leader_probability(table, honest) == pytest.approx(0.7)
    freq = np.mean([cale.elect_leader(e, table) in honest for e in range(1, 10_001)])
    assert abs(freq - 0.7) < 0.02
    assert cale.honest_leader_probability(table, NODES) == pytest.approx(1.0)


def test_selection_law_matches_weights():
    nodes = NODES[:3]
    table = cale.WeightTable(0, nodes, (4.0, 1.0, 1.0))
    assert cale.honest_leader_probability(table, [nodes[0]]) == pytest.approx(4 / 6)
    trials = 100_000
    counts = np.zeros(3)
    for e in range(1, trials + 1):
        counts[nodes.index(cale.elect_leader(e, table))] += 1
    probs = np.array([4, 1, 1]) / 6
    sigma = np.sqrt(probs * (1 - probs) / trials)
    assert np.all(np.abs(counts / trials - probs) < 3 * sigma)
    assert abs(counts[0] / trials - 4 / 6) < 0.01


def test_selection_law_with_alpha():
    nodes = NODES[:4]
    table = cale.WeightTable(0, nodes, (3.0, 1.0, 0.5, 0.5), alpha=2.0)
    powered = np.array(table.weights) ** 2
    probs = powered / powered.sum()
    trials = 40_000
    counts = np.zeros(4)
    for e in range(1, trials + 1):
        counts[nodes.index(cale.elect_leader(e, table))] += 1
    sigma = np.sqrt(probs * (1 - probs) / trials)
    assert np.all(np.abs(counts / trials - probs) < 3.5 * sigma)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 20), min_size=3, max_size=6), st.floats(0.01, 100),
       st.integers(1, 10 ** 6))
def test_scaling_weights_keeps_leader(omegas, c, epoch):
    nodes = NODES[:len(omegas)]
    t1 = cale.WeightTable(0, nodes, tuple(omegas))
    t2 = cale.WeightTable(0, nodes, tuple(o * c for o in omegas), omega_min=0.01 * c)
    assert cale.elect_leader(epoch, t1) == cale.elect_leader(epoch, t2)
    keys = cale.election_keys(epoch, t1)
    scaled = {pk: k / c for pk, k in keys.items()}
    assert min(keys, key=keys.get) == min(scaled, key=scaled.get)


def test_elect_restricted_node_list_and_errors():
    table = cale.WeightTable.uniform(NODES)
    sub = NODES[2:5]
    for e in range(1, 50):
        assert cale.elect_leader(e, table, sub) == cale.elect_uniform(e, sub)
    with pytest.raises(ValueError):
        cale.elect_leader(1, table, [])
