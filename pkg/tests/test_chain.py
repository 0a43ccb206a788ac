import itertools

import pytest
from hypothesis import given, settings, strategies as st

from wireless_streamlet.chain import (BLOCK_ENCODING_SIZE, GENESIS, ChainState, QuorumCertificate,
                                      SafetyViolation, StateBlock, Vote, is_notarized,
                                      longest_notarized_chain, update_finality, voting_eligibility)
from wireless_streamlet.crypto import KeyedHashScheme, hash_bytes

F = 3


@pytest.fixture(scope="module")
def keyed():
    scheme = KeyedHashScheme()
    pks = sorted(scheme.keygen(bytes([i])) for i in range(10))
    return scheme, pks


def blk(parent: StateBlock, epoch: int, proposer=b"\x01" * 32, tag=b"") -> StateBlock:
    pid = hash_bytes(b"p" + parent.digest + epoch.to_bytes(8, "big") + tag)
    return StateBlock(epoch, parent.digest, pid, hash_bytes(pid), proposer, parent.height + 1)


def notarize(state: ChainState, *blocks):
    for b in blocks:
        state.add_block(b)
        state.add_qc(b.digest, None)


def test_block_encoding_round_trip():
    b = blk(GENESIS, 4)
    raw = b.encode()
    assert len(raw) == BLOCK_ENCODING_SIZE == 144
    assert StateBlock.decode(raw) == b
    assert GENESIS.epoch == 0 and GENESIS.height == 0 and GENESIS.parent == bytes(32)


def test_qc_threshold(keyed):
    scheme, pks = keyed
    d = blk(GENESIS, 1).digest
    votes = [Vote.create(scheme, pk, 1, d, 40) for pk in pks]
    assert is_notarized(d, 1, votes[:7], F, scheme) is not None
    assert is_notarized(d, 1, votes[:6], F, scheme) is None
    assert is_notarized(d, 1, votes[:6] + [votes[0]], F, scheme) is None


def test_qc_duplicate_signers_brute_force(keyed):
    scheme, pks = keyed
    d = blk(GENESIS, 1).digest
    votes = [Vote.create(scheme, pk, 1, d, 40) for pk in pks[:9]]
    for size in range(1, 9):
        for combo in itertools.combinations_with_replacement(range(9), size):
            got = is_notarized(d, 1, [votes[i] for i in combo], F, scheme)
            assert (got is not None) == (len(set(combo)) >= 2 * F + 1)


def test_malformed_votes_are_ignored(keyed):
    scheme, pks = keyed
    d = blk(GENESIS, 1).digest
    good = [Vote.create(scheme, pk, 1, d, 40) for pk in pks[:6]]
    other = Vote.create(scheme, pks[6], 1, d, 40)
    forged = Vote(1, d, 41, other.envelope)          # tag no longer matches the signed body
    wrong_epoch = Vote.create(scheme, pks[7], 2, d, 40)
    assert is_notarized(d, 1, good + [forged, wrong_epoch], F, scheme) is None
    assert is_notarized(d, 1, good + [other], F, scheme) is not None


def test_qc_serialization_reverifies(keyed):
    scheme, pks = keyed
    d = blk(GENESIS, 1).digest
    qc = is_notarized(d, 1, [Vote.create(scheme, pk, 1, d, i) for i, pk in enumerate(pks)], F, scheme)
    again = QuorumCertificate.from_bytes(qc.to_bytes())
    assert again == qc
    assert again.verify(scheme, F, set(pks))
    assert not again.verify(scheme, F, set(pks[:5]))


def test_longest_chain_and_tie_break():
    s = ChainState()
    assert longest_notarized_chain(s) == [GENESIS]
    a1 = blk(GENESIS, 1, tag=b"a")
    a2 = blk(a1, 2, tag=b"a")
    a3 = blk(a2, 3, tag=b"a")
    b1 = blk(GENESIS, 4, tag=b"b")
    b2 = blk(b1, 5, tag=b"b")
    notarize(s, a1, a2, a3, b1, b2)
    assert longest_notarized_chain(s)[-1] == a3
    x = blk(GENESIS, 1, tag=b"x")
    y = blk(GENESIS, 2, tag=b"y")
    for order in ((x, y), (y, x)):
        t = ChainState()
        notarize(t, *order)
        assert t.longest_tip == min(x.digest, y.digest)


def test_unnotarized_gap_breaks_chain():
    s = ChainState()
    b1 = blk(GENESIS, 1)
    b2 = blk(b1, 2)
    s.add_block(b1)
    notarize(s, b2)
    assert s.longest_height == 0
    s.add_qc(b1.digest, None)
    assert s.longest_height == 2


def test_finality_examples():
    s = ChainState()
    b1 = blk(GENESIS, 1)
    b2 = blk(b1, 2)
    b3 = blk(b2, 3)
    notarize(s, b1, b2, b3)
    assert [b.epoch for b in update_finality(s)] == [1, 2]
    assert update_finality(s) == []
    b4 = blk(b3, 4)
    notarize(s, b4)
    update_finality(s)
    assert s.finalized_height == 3 and s.finalized_tip == b3.digest

    t = ChainState()
    c1 = blk(GENESIS, 1)
    c2 = blk(c1, 2)
    c4 = blk(c2, 4)
    notarize(t, c1, c2, c4)
    assert update_finality(t) == [] and t.finalized_height == 0


def reference_finalized_height(epochs):
    best = 0
    for i in range(len(epochs) - 2):
        if epochs[i] + 1 == epochs[i + 1] and epochs[i + 1] + 1 == epochs[i + 2]:
            best = i + 2           # height of the middle block (heights start at 1)
    return best


def test_finality_brute_force_over_patterns():
    for mask in range(1, 2 ** 6):
        epochs = [e for e in range(1, 7) if mask >> (e - 1) & 1]
        s = ChainState()
        prev = GENESIS
        for e in epochs:
            prev = blk(prev, e)
            notarize(s, prev)
            update_finality(s)
        assert s.finalized_height == reference_finalized_height(epochs), epochs


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=8, unique=True), st.randoms())
def test_finality_independent_of_arrival_order(epochs, rnd):
    epochs = sorted(epochs)
    chain = []
    prev = GENESIS
    for e in epochs:
        prev = blk(prev, e)
        chain.append(prev)
    items = [("b", b) for b in chain] + [("q", b) for b in chain]
    rnd.shuffle(items)
    s = ChainState()
    heights = []
    for kind, b in items:
        if kind == "b":
            s.add_block(b)
        else:
            s.add_qc(b.digest, None)
        before = s.finalized_digests()
        update_finality(s)
        after = s.finalized_digests()
        assert after[:len(before)] == before
        heights.append(s.finalized_height)
    assert heights == sorted(heights)
    assert s.finalized_height == reference_finalized_height(epochs)


def test_conflicting_finalization_raises():
    s = ChainState()
    a1 = blk(GENESIS, 1, tag=b"a")
    a2 = blk(a1, 2, tag=b"a")
    a3 = blk(a2, 3, tag=b"a")
    notarize(s, a1, a2, a3)
    update_finality(s)
    b1 = blk(GENESIS, 4, tag=b"b")
    b2 = blk(b1, 5, tag=b"b")
    b3 = blk(b2, 6, tag=b"b")
    b4 = blk(b3, 7, tag=b"b")
    notarize(s, b1, b2, b3, b4)
    with pytest.raises(SafetyViolation):
        update_finality(s)


def test_voting_eligibility():
    leader = b"\x07" * 32
    other = b"\x08" * 32
    s = ChainState()
    a1 = blk(GENESIS, 1, tag=b"a")
    a2 = blk(a1, 2, tag=b"a")
    b1 = blk(GENESIS, 3, tag=b"b")
    notarize(s, a1, a2, b1)
    good = blk(a2, 5, proposer=leader)
    assert voting_eligibility(s, good, leader, 5)
    assert not voting_eligibility(s, good, other, 5)
    assert not voting_eligibility(s, good, leader, 6)
    # every parent other than the unique longest tip is rejected
    for parent in (GENESIS, a1, b1):
        assert not voting_eligibility(s, blk(parent, 5, proposer=leader), leader, 5)
    # unknown or unnotarized parent
    ghost = blk(a2, 4)
    s.add_block(ghost)
    assert not voting_eligibility(s, blk(ghost, 5, proposer=leader), leader, 5)
