import pytest
from hypothesis import given, strategies as st

from zkdpps.compute import (
    STALE_RESULT,
    ComputerNode,
    FaultMode,
    decode_plain,
    encode_plain,
    execute_task,
    honest_output,
    register_computer,
)
from zkdpps.errors import DuplicateId, LevelExceeded
from zkdpps.he import DEFAULT_HE_PARAMS, Ciphertext, decrypt, encrypt
from zkdpps.task import (
    ComputationResult,
    Function,
    Step,
    StepOp,
    Task,
    count_ops,
    derive_task_id,
    evaluate_plain,
)

T = DEFAULT_HE_PARAMS.plaintext_modulus


def make_task(keys, fn, values, computer="computer-1"):
    cts = [encrypt(keys.public_key, v, i).to_bytes() for i, v in enumerate(values)]
    hashes = tuple(bytes([i]) * 32 for i in range(len(values)))
    tid = derive_task_id(hashes, fn, "t")
    return Task(tid, "t", fn, tuple(cts), hashes, computer, "ppsm-1", keys.public_key.round_id)


def node(cid="c", mode=FaultMode.HONEST):
    return register_computer({}, ComputerNode(cid, fault_mode=mode))[cid]


def open_result(keys, res):
    return decrypt(keys.secret_key, Ciphertext.from_bytes(res.result, DEFAULT_HE_PARAMS)).value


def test_honest_sum(keys):
    task = make_task(keys, Function.sum(), (5, 7))
    res = execute_task(node("computer-1"), task, DEFAULT_HE_PARAMS)
    assert open_result(keys, res) == 12
    assert res == execute_task(node("computer-1"), task, DEFAULT_HE_PARAMS)


def test_byzantine_changes_hash(keys):
    task = make_task(keys, Function.sum(), (5, 7))
    honest = execute_task(node(), task, DEFAULT_HE_PARAMS)
    bad = execute_task(node(mode=FaultMode.BYZANTINE_FLIP), task, DEFAULT_HE_PARAMS)
    assert bad.result_hash != honest.result_hash
    assert len(bad.result) == len(honest.result)


def test_silent_and_lazy(keys):
    t1 = make_task(keys, Function.sum(), (1, 2))
    t2 = make_task(keys, Function.sum(), (3, 4))
    assert execute_task(node(mode=FaultMode.SILENT), t1, DEFAULT_HE_PARAMS) is None
    lazy = node(mode=FaultMode.LAZY_STALE)
    first = execute_task(lazy, t1, DEFAULT_HE_PARAMS)
    assert first.result == STALE_RESULT
    second = execute_task(lazy, t2, DEFAULT_HE_PARAMS)
    assert second.result_hash != ComputationResult.of(t2, honest_output(t2, DEFAULT_HE_PARAMS), "c").result_hash


def test_register():
    pool = {}
    register_computer(pool, ComputerNode("a"))
    assert "a" in pool and pool["a"].registered
    with pytest.raises(PermissionError):
        execute_task(ComputerNode("b"), None, None)
    with pytest.raises(DuplicateId):
        register_computer(pool, ComputerNode("a"))


def test_pipeline_depth_budget():
    deep = Function.pipeline(Step(StepOp.LOAD, 0), Step(StepOp.MUL, 1), Step(StepOp.MUL, 2))
    with pytest.raises(LevelExceeded):
        deep.check_budget(3)
    assert Function.mul().depth(2) == 1
    assert Function.sum().depth(4) == 0


def test_function_round_trip():
    fn = Function.pipeline(Step(StepOp.LOAD, 3), Step(StepOp.SUB, 0, 2), Step(StepOp.SCALE, 0, 5))
    assert Function.from_bytes(fn.to_bytes()) == fn
    assert evaluate_plain(fn, [1, 2, 3, 10]) == (10 - 2) * 5
    assert count_ops(Function.sum(), 3) == {"add": 2, "mul": 0, "scalar": 0}


def test_task_round_trip(keys):
    task = make_task(keys, Function.scalar_mul(3), (4,))
    assert Task.from_bytes(task.to_bytes()) == task


def test_pipeline_he_matches_plain(keys):
    fn = Function.pipeline(Step(StepOp.LOAD, 3), Step(StepOp.SUB, 0, 2), Step(StepOp.SUB, 1), Step(StepOp.ADD, 2, 3))
    vals = (4, 9, 11, 600)
    res = execute_task(node(), make_task(keys, fn, vals), DEFAULT_HE_PARAMS)
    assert open_result(keys, res) == evaluate_plain(fn, vals) % T == 600 - 8 - 9 + 33


@given(st.integers(-(2**63), 2**63 - 1))
def test_plain_codec(v):
    assert decode_plain(encode_plain(v)) == v
