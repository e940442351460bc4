"""Per-call operation counters for checking how cost scales with precision.

Counts are attached to whatever :func:`collect` block is active in the current
context, so concurrent callers (threads or asyncio tasks) never share them.
Each recorded operation is weighted by a multiplication-cost model
``M(b) = b * log2(b)`` so that totals can be compared across precisions.
"""

from __future__ import annotations

import math
from collections import Counter
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Iterator

# multiplications charged per operation; transcendental ops get an extra log factor
_WEIGHTS = {
    "mul": 1.0,
    "div": 2.0,
    "sqrt": 3.0,
}
_TRANSCENDENTAL = {"exp": 2.0, "log": 2.0, "pi": 1.0}


def multiplication_cost(bits: int) -> float:
    """Cost model for one multiplication of ``bits``-bit operands."""
    bits = max(int(bits), 2)
    return bits * math.log2(bits)


def operation_cost(op: str, bits: int) -> float:
    base = multiplication_cost(bits)
    if op in _TRANSCENDENTAL:
        return _TRANSCENDENTAL[op] * base * math.log2(max(bits, 2))
    return _WEIGHTS.get(op, 1.0) * base


@dataclass
class Telemetry:
    counts: Counter = field(default_factory=Counter)
    parent: Telemetry | None = None

    def record(self, op: str, bits: int, n: int = 1) -> None:
        node: Telemetry | None = self
        while node is not None:
            node.counts[(op, int(bits))] += n
            node = node.parent

    @property
    def cost(self) -> float:
        return sum(n * operation_cost(op, bits) for (op, bits), n in self.counts.items())

    def totals(self) -> dict[str, int]:
        out: Counter = Counter()
        for (op, _), n in self.counts.items():
            out[op] += n
        return dict(sorted(out.items()))

    def by_precision(self) -> dict[int, int]:
        """Multiplication-equivalents grouped by operand precision."""
        out: Counter = Counter()
        for (op, bits), n in self.counts.items():
            out[bits] += n * _WEIGHTS.get(op, 1.0)
        return {b: int(out[b]) for b in sorted(out)}

    def as_dict(self) -> dict:
        return {
            "cost": self.cost,
            "operations": self.totals(),
            "multiplications_by_precision": {str(b): n for b, n in self.by_precision().items()},
        }


_active: ContextVar[Telemetry | None] = ContextVar("jinvert_telemetry", default=None)


def record(op: str, bits: int, n: int = 1) -> None:
    t = _active.get()
    if t is not None and n:
        t.record(op, bits, n)


@contextmanager
def collect() -> Iterator[Telemetry]:
    """Count operations issued inside the block; nested blocks also feed outer ones."""
    t = Telemetry(parent=_active.get())
    token = _active.set(t)
    try:
        yield t
    finally:
        _active.reset(token)
