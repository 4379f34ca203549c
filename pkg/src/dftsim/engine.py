"""Execution engine: compiles regions to flat arrays and steps body cycles.

The hot loop lives in a compiled extension when available; a pure-Python
kernel with identical semantics is selected at import time otherwise.
Set ``DFTSIM_PURE_PYTHON=1`` to force the fallback (used by the kernel
benchmark and the equivalence tests).
"""

from __future__ import annotations

import os
from typing import Dict, Iterable, List, Mapping

import numpy as np

from . import _kernel_py

if os.environ.get("DFTSIM_PURE_PYTHON"):
    _impl = _kernel_py
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernel_py

KERNEL_NAME = "compiled" if _impl.COMPILED else "python"

_U32 = 0xFFFFFFFF

_OPCODES = {"const": 0, "pass": 1, "add": 2, "sub": 3, "mul": 4, "xor": 5}


class CompiledRegion:
    """One region body flattened into latch-order arrays.

    Operations are grouped by end cycle; ``ptr[c]:ptr[c+1]`` slices the
    per-op arrays for the group latching at cycle ``c``.
    """

    __slots__ = (
        "body_length", "iterations", "n_ops",
        "ptr", "opc", "a", "b", "out", "imm", "mask", "scratch",
    )

    def __init__(self, ops, body_length: int, iterations: int,
                 reg_index: Mapping[str, int], widths: Mapping[str, int]):
        self.body_length = body_length
        self.iterations = iterations
        order = sorted(range(len(ops)), key=lambda i: (ops[i].end, i))
        self.n_ops = len(ops)
        ptr = np.zeros(body_length + 1, dtype=np.int64)
        opc = np.zeros(self.n_ops, dtype=np.int8)
        a = np.full(self.n_ops, -1, dtype=np.intc)
        b = np.full(self.n_ops, -1, dtype=np.intc)
        out = np.zeros(self.n_ops, dtype=np.intc)
        imm = np.zeros(self.n_ops, dtype=np.uint64)
        mask = np.zeros(self.n_ops, dtype=np.uint64)
        max_group = 0
        k = 0
        for c in range(body_length):
            ptr[c] = k
            group = [i for i in order if ops[i].end == c]
            # `order` is end-sorted; linear scan kept simple, compile is cold
            for i in group:
                op = ops[i]
                opc[k] = _OPCODES[op.opcode]
                if op.inputs:
                    a[k] = reg_index[op.inputs[0]]
                if len(op.inputs) > 1:
                    b[k] = reg_index[op.inputs[1]]
                out[k] = reg_index[op.output]
                imm[k] = op.value & _U32
                w = widths.get(op.output, 32)
                mask[k] = (1 << w) - 1
                k += 1
            max_group = max(max_group, len(group))
        ptr[body_length] = k
        self.ptr = ptr
        self.opc = opc
        self.a = a
        self.b = b
        self.out = out
        self.imm = imm
        self.mask = mask
        self.scratch = np.zeros(max(1, max_group), dtype=np.uint64)

    def run(self, regs: np.ndarray, c_lo: int, c_hi: int) -> None:
        """Latch all ops ending in [c_lo, c_hi) against ``regs``."""
        _impl.run_cycles(self.ptr, self.opc, self.a, self.b, self.out,
                         self.imm, self.mask, regs, self.scratch, c_lo, c_hi)


class CompiledProgram:
    """Register index plus one CompiledRegion per (normalized) function."""

    def __init__(self, reg_ids: Iterable[str], widths: Mapping[str, int]):
        self.reg_index: Dict[str, int] = {}
        self.widths: List[int] = []
        for rid in reg_ids:
            self.reg_index[rid] = len(self.widths)
            self.widths.append(widths.get(rid, 32))
        self.regions: Dict[str, CompiledRegion] = {}

    def add_region(self, function_id: str, ops, body_length: int,
                   iterations: int, widths: Mapping[str, int]) -> None:
        self.regions[function_id] = CompiledRegion(
            ops, body_length, iterations, self.reg_index, widths)

    def new_regfile(self, inputs: Mapping[str, int]) -> np.ndarray:
        regs = np.zeros(len(self.reg_index), dtype=np.uint64)
        for rid, value in inputs.items():
            idx = self.reg_index.get(rid)
            if idx is not None:
                regs[idx] = value & ((1 << self.widths[idx]) - 1)
        return regs
