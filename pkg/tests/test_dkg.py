import pytest
from hypothesis import given, settings, strategies as st

from zkdpps.dkg import (
    DealtShare,
    DisputeVerdict,
    dkg_deal,
    dkg_dispute,
    dkg_finalize,
    dkg_init,
    dkg_verify_share,
    run_dkg,
)
from zkdpps.errors import InsufficientDealers, InvalidReceiver
from zkdpps.field import DEFAULT_GROUP, TINY_GROUP, interpolate_at_zero


def tiny_dealer(coeffs=(5, 7), vid=1, n=5):
    return dkg_init(vid, len(coeffs), 0, TINY_GROUP, n=n, coefficients=coeffs)


def test_commitments_worked_example():
    st_ = tiny_dealer()
    assert st_.commitments == (pow(2, 5, 23), pow(2, 7, 23)) == (9, 13)


def test_degenerate_threshold():
    st_ = dkg_init(1, 1, 3)
    assert len(st_.commitments) == 1
    assert dkg_deal(st_, 2).value == dkg_deal(st_, 4).value == st_.secret_poly[0]


def test_init_deterministic():
    assert dkg_init(2, 3, 17) == dkg_init(2, 3, 17)
    assert dkg_init(2, 3, 17).secret_poly != dkg_init(3, 3, 17).secret_poly


def test_deal_and_verify():
    st_ = tiny_dealer()
    share = dkg_deal(st_, 3)
    assert share.value == (5 + 7 * 3) % 11 == 4
    assert dkg_verify_share(share, st_.commitments, TINY_GROUP)
    # 9 * 13^3 mod 23 == 16 == 2^4
    assert 9 * pow(13, 3, 23) % 23 == 16 == pow(2, 4, 23)
    tampered = DealtShare(share.sender, share.receiver, 5)
    assert not dkg_verify_share(tampered, st_.commitments, TINY_GROUP)


def test_self_share_and_receiver_zero():
    st_ = tiny_dealer(vid=2)
    assert dkg_verify_share(dkg_deal(st_, 2), st_.commitments, TINY_GROUP)
    with pytest.raises(InvalidReceiver):
        dkg_deal(st_, 0)


def test_constant_share_t1():
    st_ = dkg_init(1, 1, 0, TINY_GROUP, coefficients=(6,))
    assert dkg_verify_share(DealtShare(1, 1, 6), st_.commitments, TINY_GROUP)


def test_dispute():
    st_ = tiny_dealer()
    good = dkg_deal(st_, 3)
    bad = DealtShare(1, 3, 5)
    assert dkg_dispute(bad, st_.commitments, TINY_GROUP) is DisputeVerdict.DEALER_FAULTY
    assert dkg_dispute(good, st_.commitments, TINY_GROUP) is DisputeVerdict.SHARE_VALID
    assert dkg_dispute(good, st_.commitments, TINY_GROUP, excluded={1}) is DisputeVerdict.DEALER_FAULTY


def test_finalize_public_key_product():
    a, b = tiny_dealer((5,), 1, n=2), tiny_dealer((3,), 2, n=2)
    comms = {1: a.commitments, 2: b.commitments}
    shares = [dkg_deal(d, j) for d in (a, b) for j in (1, 2)]
    tr = dkg_finalize("r", comms, shares, 2, TINY_GROUP)
    assert tr.public_key == pow(2, 8, 23) == 3


def test_finalize_single_dealer():
    d = tiny_dealer((4, 9), 1, n=1)
    tr = dkg_finalize("r", {1: d.commitments}, [dkg_deal(d, 1)], 1, TINY_GROUP)
    assert tr.aggregate_commitments == d.commitments
    assert tr.shares == {1: dkg_deal(d, 1).value}


def test_two_faulty_of_five_is_insufficient():
    with pytest.raises(InsufficientDealers):
        run_dkg("r", 5, 3, 1, cheaters={1: {2}, 2: {3}})


def test_one_faulty_of_five_is_excluded():
    run = run_dkg("r", 5, 3, 1, cheaters={4: {1}})
    assert 4 in run.transcript.faulty
    assert run.transcript.verified == frozenset({1, 2, 3, 5})


def test_aggregate_shares_reconstruct_sum_of_secrets():
    run = run_dkg("r", 5, 3, 9)
    tr = run.transcript
    q = tr.params.order_q
    expected = sum(run.dealers[d].secret_poly[0] for d in tr.verified) % q
    pts = [(j, tr.shares[j]) for j in (1, 3, 5)]
    assert interpolate_at_zero(pts, q) == expected
    assert tr.public_key == pow(tr.params.generator_g, expected, tr.params.modulus_P)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32), st.data())
def test_honest_shares_always_verify(n, seed, data):
    t = data.draw(st.integers(1, n))
    d = dkg_init(1, t, seed, DEFAULT_GROUP, n=n)
    for j in range(1, n + 1):
        assert dkg_verify_share(dkg_deal(d, j), d.commitments)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, DEFAULT_GROUP.order_q - 1))
def test_shifted_shares_never_verify(seed, delta):
    d = dkg_init(1, 3, seed, n=5)
    s = dkg_deal(d, 2)
    bad = DealtShare(s.sender, s.receiver, (s.value + delta) % DEFAULT_GROUP.order_q)
    assert not dkg_verify_share(bad, d.commitments)
