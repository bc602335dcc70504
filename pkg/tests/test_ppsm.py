from collections import Counter
from dataclasses import replace
from fractions import Fraction
from itertools import product

import pytest

from zkdpps.bus import TO_PPSM, TO_SUBSCRIBER, MessageEnvelope
from zkdpps.dkg import run_dkg
from zkdpps.encoding import digest
from zkdpps.errors import EmptyComputerPool, ExpiredRound, InsufficientQuorum, ShareVerificationFailed
from zkdpps.he import Plaintext, encrypt
from zkdpps.ledger import LedgerTransaction, TxKind
from zkdpps.ppsm import Insight, Verdict, collaborative_decrypt, select_reconstruction_quorum, verify_results
from zkdpps.system import computer_id
from zkdpps.compute import FaultMode
from zkdpps.threshold import KeyShare, ThresholdConfig, create_key_round

MANAGERS = [f"ppsm-{i}" for i in range(1, 6)]
H, H1, H2 = b"h" * 32, b"i" * 32, b"j" * 32


@pytest.fixture(scope="module")
def key_round():
    run = run_dkg("round-q", 5, 3, 11)
    return create_key_round(run.transcript, dict(enumerate(MANAGERS, 1)), 0, ThresholdConfig(5, 3))


def test_verify_results_examples():
    assert verify_results(b"t", [H, H, H, H, H1], 5).digest == H
    assert verify_results(b"t", [H, H, H, H1, H2], 5).verdict is Verdict.REJECTED
    assert verify_results(b"t", [H, H, H], 3).verdict is Verdict.VERIFIED
    assert verify_results(b"t", [], 5).verdict is Verdict.REJECTED


def test_verify_results_exhaustive_r5():
    for pattern in product((H, H1, H2), repeat=5):
        top = max(Counter(pattern).values())
        rec = verify_results(b"t", pattern, 5)
        assert (rec.verdict is Verdict.VERIFIED) == (top >= 4)


def test_quorum_selection():
    q1 = select_reconstruction_quorum("r", b"block", MANAGERS, 3)
    assert q1 == select_reconstruction_quorum("r", b"block", reversed(MANAGERS), 3)
    assert len(q1) == 3 and set(q1) <= set(MANAGERS)
    with pytest.raises(InsufficientQuorum):
        select_reconstruction_quorum("r", b"block", MANAGERS[:2], 3)


def test_quorum_is_roughly_uniform():
    hits: Counter[str] = Counter()
    trials = 10_000
    for i in range(trials):
        hits.update(select_reconstruction_quorum("r", digest(i.to_bytes(4, "big")), MANAGERS, 3))
    for m in MANAGERS:
        assert abs(hits[m] / trials - 0.6) < 0.02


def test_collaborative_decrypt(key_round):
    ct = encrypt(key_round.he_public_key, 12, 0)
    quorum = {m: key_round.shares[m] for m in ("ppsm-1", "ppsm-3", "ppsm-4")}
    assert collaborative_decrypt(quorum, key_round, ct, 10).value == 12

    s = quorum["ppsm-3"]
    bad = {**quorum, "ppsm-3": KeyShare(s.holder_id, s.index, s.value + 1, s.round_id)}
    with pytest.raises(ShareVerificationFailed) as exc:
        collaborative_decrypt(bad, key_round, ct, 10)
    assert exc.value.member == "ppsm-3"

    with pytest.raises(ExpiredRound):
        collaborative_decrypt(quorum, key_round, ct, key_round.expires_at)


def test_end_to_end_delivery(hazmat_net):
    net, inbox = hazmat_net()
    second: list = []
    net.bus.subscribe("auditor", TO_SUBSCRIBER, second.append)
    net.sim.run(until=10_000)
    got = {i.name: i.value for i in inbox}
    assert got == {"total": 12, "excess": 2}
    assert all(i.verdict == "Verified" for i in inbox)
    assert [Insight.from_bytes(e.body) for e in second] == inbox


def test_tampered_envelope_is_not_allocated(hazmat_net):
    net, inbox = hazmat_net(release=False)

    def tamper(node, env):
        if node == "ppsm-1" and env.topic == TO_PPSM:
            return replace(env, body=env.body[:-1] + bytes([env.body[-1] ^ 1]))
        return env

    net.bus.interceptor = tamper
    for pub, v in zip(("hauler-1", "hauler-2", "insurer"), (5, 7, 10)):
        net.publishers[pub].release(1, 0, Plaintext(v))
    net.sim.run(until=10_000)
    kinds = [k for _, k, _ in net.ppsms["ppsm-1"].events]
    assert kinds.count("IntegrityFailure") == 3
    assert "Allocate" not in kinds
    # Four honest replicas still clear the two-thirds bar.
    assert {i.name: i.value for i in inbox} == {"total": 12, "excess": 2}


def test_late_commit_still_advances(hazmat_net):
    net, _ = hazmat_net(release=False)
    kr = net.keys.current(0)
    body = encrypt(kr.he_public_key, 5, 0).to_bytes()
    env = MessageEnvelope(TO_PPSM, "hauler-1", 0, body, 1).sealed()
    net.bus.publish(env)
    meta = {"topic": env.topic, "timestamp": 0, "publisher_id": "hauler-1", "body": body, "function_tag": 1}
    tx = LedgerTransaction.build(TxKind.MESSAGE_COMMIT, meta, "hauler-1", 0)
    net.sim.schedule(2500, net.ledger.submit_tx, tx)
    net.sim.run(until=3500)
    assert ("Validated", env.serialized_hash.hex()) in [(k, t) for _, k, t in net.ppsms["ppsm-2"].events]
    assert net.ledger.query(env.serialized_hash)[1] >= 1


def test_empty_pool(hazmat_net):
    net, _ = hazmat_net(computers=0)
    with pytest.raises(EmptyComputerPool):
        net.sim.run(until=10_000)


def test_rejection_notice_without_delivery(hazmat_net):
    faults = {computer_id(1): FaultMode.BYZANTINE_FLIP, computer_id(2): FaultMode.BYZANTINE_FLIP}
    net, inbox = hazmat_net(computer_faults=faults)
    net.sim.run(until=10_000)
    assert inbox == []
    assert set(net.outcomes.values()) == {"Rejected"}
    assert net.counters["RejectionNotice"] > 0


def test_tampering_manager_is_flagged(hazmat_net):
    net, inbox = hazmat_net(tampering_managers=("ppsm-1", "ppsm-2"))
    net.sim.run(until=20_000)
    assert {i.name: i.value for i in inbox} == {"total": 12, "excess": 2}
    assert net.flagged <= {"ppsm-1", "ppsm-2"} and net.flagged


def test_too_many_tamperers_undecryptable(hazmat_net):
    net, inbox = hazmat_net(tampering_managers=("ppsm-1", "ppsm-2", "ppsm-3"))
    net.sim.run(until=20_000)
    assert inbox == []
    assert set(net.outcomes.values()) == {"Undecryptable"}


def test_plain_mode_delivers_without_encryption(hazmat_net):
    net, inbox = hazmat_net(plain=True)
    net.sim.run(until=10_000)
    assert {i.name: i.value for i in inbox} == {"total": Fraction(12), "excess": Fraction(2)}
    assert net.counters["Encrypt"] == 0 and net.counters["Verify"] == 0
