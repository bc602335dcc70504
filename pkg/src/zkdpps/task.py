"""Task functions and their two interpreters (ciphertext and plain).

A function is evaluated strictly left to right over the operand list so
that every replica produces bit-identical output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

from .encoding import Reader, Writer, digest
from .errors import LevelExceeded
from .he import Ciphertext, he_add, he_mul, he_scalar_mul, he_sub


class FnKind(str, enum.Enum):
    SUM = "Sum"
    SUB = "Sub"
    MUL = "Mul"
    SCALAR_MUL = "ScalarMul"
    PIPELINE = "Pipeline"


class StepOp(str, enum.Enum):
    LOAD = "load"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    SCALE = "scale"


@dataclass(frozen=True)
class Step:
    """One pipeline stage.

    ``load``/``add``/``sub`` take ``scalar * operands[operand]``; ``mul``
    multiplies the accumulator by an operand; ``scale`` multiplies it by
    ``scalar``.
    """

    op: StepOp
    operand: int = 0
    scalar: int = 1


@dataclass(frozen=True)
class Function:
    kind: FnKind
    scalar: int = 1
    steps: tuple[Step, ...] = ()

    @classmethod
    def sum(cls) -> "Function":
        return cls(FnKind.SUM)

    @classmethod
    def sub(cls) -> "Function":
        return cls(FnKind.SUB)

    @classmethod
    def mul(cls) -> "Function":
        return cls(FnKind.MUL)

    @classmethod
    def scalar_mul(cls, k: int) -> "Function":
        return cls(FnKind.SCALAR_MUL, scalar=k)

    @classmethod
    def pipeline(cls, *steps: Step) -> "Function":
        if not steps or steps[0].op is not StepOp.LOAD:
            raise ValueError("a pipeline starts with a load step")
        if any(s.op is StepOp.LOAD for s in steps[1:]):
            raise ValueError("only the first step may load")
        return cls(FnKind.PIPELINE, steps=tuple(steps))

    def as_steps(self, arity: int) -> tuple[Step, ...]:
        """Lower every kind onto the pipeline form."""
        if self.kind is FnKind.PIPELINE:
            return self.steps
        if self.kind is FnKind.SCALAR_MUL:
            return (Step(StepOp.LOAD, 0), Step(StepOp.SCALE, scalar=self.scalar))
        if self.kind is FnKind.MUL and arity != 2:
            raise ValueError("Mul takes exactly two operands")
        op = {FnKind.SUM: StepOp.ADD, FnKind.SUB: StepOp.SUB, FnKind.MUL: StepOp.MUL}[self.kind]
        return (Step(StepOp.LOAD, 0), *(Step(op, i) for i in range(1, arity)))

    def depth(self, arity: int) -> int:
        return sum(1 for s in self.as_steps(arity) if s.op is StepOp.MUL)

    def check_budget(self, arity: int) -> None:
        steps = self.as_steps(arity)
        if any(not 0 <= s.operand < arity for s in steps if s.op is not StepOp.SCALE):
            raise ValueError("step refers to a missing operand")
        if self.depth(arity) > 1:
            raise LevelExceeded("function needs more than one multiplication")

    def to_bytes(self) -> bytes:
        w = Writer().text(self.kind.value).i64(self.scalar).u32(len(self.steps))
        for s in self.steps:
            w.text(s.op.value).u32(s.operand).i64(s.scalar)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Function":
        r = Reader(data)
        kind, scalar, count = FnKind(r.text()), r.i64(), r.u32()
        steps = tuple(Step(StepOp(r.text()), r.u32(), r.i64()) for _ in range(count))
        return cls(kind, scalar, steps)


def _scaled(x: Ciphertext, k: int) -> Ciphertext:
    if k == 1:
        return x
    return he_scalar_mul(x, k % x.params.plaintext_modulus)


def evaluate_he(fn: Function, operands: Sequence[Ciphertext]) -> Ciphertext:
    fn.check_budget(len(operands))
    acc: Ciphertext | None = None
    for s in fn.as_steps(len(operands)):
        if s.op is StepOp.LOAD:
            acc = _scaled(operands[s.operand], s.scalar)
        elif s.op is StepOp.ADD:
            acc = he_add(acc, _scaled(operands[s.operand], s.scalar))
        elif s.op is StepOp.SUB:
            acc = he_sub(acc, _scaled(operands[s.operand], s.scalar))
        elif s.op is StepOp.MUL:
            acc = he_mul(acc, operands[s.operand])
        else:
            acc = _scaled(acc, s.scalar)
    assert acc is not None
    return acc


def evaluate_plain(fn: Function, operands: Sequence[int]) -> int:
    """Integer semantics of the same steps, used by plain-mode computers."""
    fn.check_budget(len(operands))
    acc = 0
    for s in fn.as_steps(len(operands)):
        x = operands[s.operand]
        if s.op is StepOp.LOAD:
            acc = s.scalar * x
        elif s.op is StepOp.ADD:
            acc += s.scalar * x
        elif s.op is StepOp.SUB:
            acc -= s.scalar * x
        elif s.op is StepOp.MUL:
            acc *= x
        else:
            acc *= s.scalar
    return acc


def count_ops(fn: Function, arity: int) -> dict[str, int]:
    """HE operator counts for the cost model."""
    counts = {"add": 0, "mul": 0, "scalar": 0}
    for s in fn.as_steps(arity):
        if s.op in (StepOp.LOAD, StepOp.ADD, StepOp.SUB):
            counts["scalar"] += s.scalar != 1
            counts["add"] += s.op is not StepOp.LOAD
        elif s.op is StepOp.MUL:
            counts["mul"] += 1
        else:
            counts["scalar"] += 1
    return counts


def derive_task_id(operand_hashes: Sequence[bytes], fn: Function, name: str) -> bytes:
    w = Writer().u32(len(operand_hashes))
    for h in operand_hashes:
        w.blob(h)
    return digest(w.blob(fn.to_bytes()).text(name).getvalue())


@dataclass(frozen=True)
class Task:
    task_id: bytes
    name: str
    function: Function
    operands: tuple[bytes, ...] = field(repr=False)
    operand_hashes: tuple[bytes, ...] = field(repr=False)
    assigned_computer: str
    issuing_ppsm: str
    round_id: str = ""

    def to_bytes(self) -> bytes:
        w = Writer().blob(self.task_id).text(self.name).blob(self.function.to_bytes())
        w.text(self.assigned_computer).text(self.issuing_ppsm).text(self.round_id)
        w.u32(len(self.operands))
        for op, h in zip(self.operands, self.operand_hashes):
            w.blob(op).blob(h)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Task":
        r = Reader(data)
        task_id, name, fn = r.blob(), r.text(), Function.from_bytes(r.blob())
        computer, ppsm, round_id = r.text(), r.text(), r.text()
        pairs = [(r.blob(), r.blob()) for _ in range(r.u32())]
        return cls(
            task_id,
            name,
            fn,
            tuple(p[0] for p in pairs),
            tuple(p[1] for p in pairs),
            computer,
            ppsm,
            round_id,
        )


@dataclass(frozen=True)
class ComputationResult:
    task_id: bytes
    result: bytes = field(repr=False)
    result_hash: bytes
    computer_id: str
    issuing_ppsm: str
    height: int | None = None

    @classmethod
    def of(cls, task: Task, result: bytes, computer_id: str) -> "ComputationResult":
        return cls(task.task_id, result, digest(result), computer_id, task.issuing_ppsm)

    def to_bytes(self) -> bytes:
        return (
            Writer()
            .blob(self.task_id)
            .text(self.computer_id)
            .text(self.issuing_ppsm)
            .blob(self.result)
            .getvalue()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ComputationResult":
        r = Reader(data)
        task_id, computer, ppsm, result = r.blob(), r.text(), r.text(), r.blob()
        return cls(task_id, result, digest(result), computer, ppsm)
