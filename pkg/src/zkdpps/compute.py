"""Computation-layer workers.

Computers see only task bytes: operand ciphertexts (or, in plain mode, the
raw integers) and the function. They hold no key material and never call
decrypt.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import MutableMapping

from . import taint
from .encoding import digest
from .errors import DuplicateId
from .he import Ciphertext, HEParams
from .ledger import LedgerTransaction, TxKind
from .task import ComputationResult, Task, evaluate_he, evaluate_plain
from .taint import Site


class FaultMode(str, enum.Enum):
    HONEST = "Honest"
    BYZANTINE_FLIP = "ByzantineFlip"
    LAZY_STALE = "LazyStale"
    SILENT = "Silent"


STALE_RESULT = b"stale-result"


def encode_plain(value: int) -> bytes:
    return struct.pack("<q", value)


def decode_plain(data: bytes) -> int:
    return struct.unpack("<q", data)[0]


@dataclass
class ComputerNode:
    id: str
    registered: bool = False
    fault_mode: FaultMode = FaultMode.HONEST
    last_result: bytes | None = field(default=None, repr=False)
    executed: int = 0

    def flip_position(self, length: int) -> int:
        # Derived from the id so that two Byzantine nodes corrupt different bytes.
        return int.from_bytes(digest(self.id.encode())[:8], "little") % length


def register_computer(pool: MutableMapping[str, ComputerNode], node: ComputerNode) -> MutableMapping[str, ComputerNode]:
    if node.id in pool:
        raise DuplicateId(f"computer {node.id} is already registered")
    node.registered = True
    pool[node.id] = node
    return pool


def honest_output(task: Task, he_params: HEParams | None) -> bytes:
    """Bytes an honest computer returns; ``he_params=None`` means plain mode."""
    if he_params is None:
        return encode_plain(evaluate_plain(task.function, [decode_plain(o) for o in task.operands]))
    cts = [Ciphertext.from_bytes(o, he_params) for o in task.operands]
    return evaluate_he(task.function, cts).to_bytes()


def execute_task(node: ComputerNode, task: Task, he_params: HEParams | None) -> ComputationResult | None:
    if not node.registered:
        raise PermissionError(f"computer {node.id} is not registered")
    taint.check(Site.COMPUTER, task)
    if node.fault_mode is FaultMode.SILENT:
        return None
    if node.fault_mode is FaultMode.LAZY_STALE:
        out = node.last_result if node.last_result is not None else STALE_RESULT
        node.last_result = honest_output(task, he_params)
    else:
        out = honest_output(task, he_params)
        node.last_result = out
        if node.fault_mode is FaultMode.BYZANTINE_FLIP:
            pos = node.flip_position(len(out))
            out = out[:pos] + bytes([out[pos] ^ 0xFF]) + out[pos + 1 :]
    node.executed += 1
    return ComputationResult.of(task, out, node.id)


def result_commit_tx(result: ComputationResult, now: int) -> LedgerTransaction:
    meta = {
        "task_id": result.task_id,
        "ppsm": result.issuing_ppsm,
        "computer": result.computer_id,
        "result_hash": result.result_hash,
    }
    return LedgerTransaction.build(TxKind.RESULT_COMMIT, meta, result.computer_id, now)
