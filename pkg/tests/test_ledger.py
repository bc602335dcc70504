from itertools import product

import pytest
from hypothesis import given, strategies as st

from zkdpps.errors import DuplicateTx, MalformedTx
from zkdpps.ledger import (
    CommitOutcome,
    Ledger,
    LedgerBlock,
    LedgerTransaction,
    TxKind,
    ValidatorNode,
    commits,
)


def validators(n=5, silent=()):
    return [ValidatorNode(f"v{i}", f"ppsm-{i}", silent=i in silent) for i in range(1, n + 1)]


def mc(ts, body=b"x", publisher="p"):
    meta = {"topic": "To-PPSM", "timestamp": ts, "publisher_id": publisher, "body": body, "function_tag": 1}
    return LedgerTransaction.build(TxKind.MESSAGE_COMMIT, meta, publisher, ts)


def test_submit_and_duplicate():
    led = Ledger(validators())
    h = led.submit_tx(mc(1))
    assert h in led.mempool
    with pytest.raises(DuplicateTx):
        led.submit_tx(mc(1))


def test_malformed():
    led = Ledger(validators())
    good = mc(1)
    bad = LedgerTransaction(good.kind, b"\x00" * 32, good.payload_meta, "p", 1)
    with pytest.raises(MalformedTx):
        led.submit_tx(bad)
    with pytest.raises(MalformedTx):
        LedgerTransaction.build(TxKind.RESULT_COMMIT, {"task_id": b"t"}, "c", 0)


def test_period_batching():
    led = Ledger(validators())
    led.submit_tx(mc(100))
    assert led.produce_block(700) is None
    led.submit_tx(mc(700))
    block = led.produce_block(1000)
    assert block is not None and block.committed_at == 1000
    assert len(block.transactions) == 2


def test_empty_mempool_no_block():
    led = Ledger(validators())
    assert led.produce_block(1000) is None
    assert led.head.height == 0


def test_half_second_period():
    led = Ledger(validators(), block_period_ms=500)
    heights = []
    for t in range(0, 1001, 100):
        led.submit_tx(mc(t))
        if led.produce_block(t):
            heights.append(t)
    assert heights == [500, 1000]


def test_one_block_per_period():
    led = Ledger(validators())
    led.submit_tx(mc(1))
    assert led.produce_block(1000)
    led.submit_tx(mc(2))
    assert led.produce_block(1500) is None
    assert led.produce_block(2000)


@pytest.mark.parametrize("n,yes,outcome", [(5, 4, CommitOutcome.COMMITTED), (5, 3, CommitOutcome.REJECTED), (3, 3, CommitOutcome.COMMITTED)])
def test_vote_counts(n, yes, outcome):
    vs = validators(n)
    led = Ledger(vs)
    led.submit_tx(mc(1))
    block = LedgerBlock(1, led.head.block_hash, tuple(led.mempool.values()), frozenset(), 1000)
    verdicts = {v.id: i < yes for i, v in enumerate(vs)}
    assert led.vote_and_commit(block, verdicts) is outcome


def test_faulty_validators_block_commit():
    vs = validators()
    vs[3].honest = vs[4].honest = False
    led = Ledger(vs)
    led.submit_tx(mc(1))
    assert led.produce_block(1000) is None
    assert led.rejected_blocks == 1


def test_pings_and_silent_relay():
    led = Ledger(validators(silent={2}))
    led.submit_tx(mc(1))
    block = led.produce_block(1000)
    notes = led.ping_pps(block)
    assert len(notes) == 5
    assert {n.ppsm_id for n in notes} == {f"ppsm-{i}" for i in range(1, 6)}
    relayed = [n for n in notes if n.relayed_by]
    assert [(n.ppsm_id, n.relayed_by) for n in relayed] == [("ppsm-2", "v1")]


def test_no_pings_for_uncommitted_block():
    led = Ledger(validators())
    ghost = LedgerBlock(3, b"\x00" * 32, (), frozenset(), 0)
    assert led.ping_pps(ghost) == []


def test_query():
    led = Ledger(validators())
    h1 = led.submit_tx(mc(1))
    led.produce_block(1000)
    h2 = led.submit_tx(mc(2))
    assert led.query(h1)[1] == 1
    assert led.query(h2) is None
    assert led.query(b"\x01" * 32) is None


def test_replay_and_dump(tmp_path):
    vs = validators()
    led = Ledger(vs)
    for t in (1, 2000, 3500):
        led.submit_tx(mc(t))
        led.produce_block(t)
    led.produce_block(4000)
    again = Ledger.replay(vs, 1000, led.blocks)
    assert again.state_digest() == led.state_digest()
    path = tmp_path / "ledger.log"
    led.dump(str(path))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("height\t")
    assert len(lines) == 1 + 3


def test_exhaustive_vote_patterns():
    for n in range(3, 8):
        for pattern in product((False, True), repeat=n):
            yes = sum(pattern)
            assert commits(yes, n) == (yes > 2 * n / 3)


@given(st.integers(1, 200), st.data())
def test_commit_rule_integer_form(n, data):
    yes = data.draw(st.integers(0, n))
    assert commits(yes, n) == (3 * yes > 2 * n)
