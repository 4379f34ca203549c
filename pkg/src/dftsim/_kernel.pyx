# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled cycle-stepping kernel.

Semantics must match ``_kernel_py.run_cycles`` exactly; opcode encoding and
masking rules are documented there.
"""

COMPILED = True

ctypedef unsigned long long u64


def run_cycles(long long[::1] ptr,
               signed char[::1] opc,
               int[::1] a,
               int[::1] b,
               int[::1] out,
               u64[::1] imm,
               u64[::1] mask,
               u64[::1] regs,
               u64[::1] scratch,
               Py_ssize_t c_lo,
               Py_ssize_t c_hi):
    cdef Py_ssize_t c, i, i0, i1
    cdef signed char op
    cdef u64 av, bv, v
    for c in range(c_lo, c_hi):
        i0 = ptr[c]
        i1 = ptr[c + 1]
        if i0 == i1:
            continue
        for i in range(i0, i1):
            op = opc[i]
            if op == 0:
                v = imm[i]
            else:
                av = regs[a[i]]
                if op == 1:
                    v = av
                else:
                    bv = regs[b[i]]
                    if op == 2:
                        v = (av + bv) & 0xFFFFFFFFULL
                    elif op == 3:
                        v = (av - bv) & 0xFFFFFFFFULL
                    elif op == 4:
                        v = (av * bv) & 0xFFFFFFFFULL
                    else:
                        v = av ^ bv
            scratch[i - i0] = v & mask[i]
        for i in range(i0, i1):
            regs[out[i]] = scratch[i - i0]
