# cython: boundscheck=False, wraparound=False
"""Compiled span codec kernels; mirrors _spankernel_py exactly."""

from libc.stdlib cimport free, malloc


def encode_counts(long n, starts, ends):
    cdef long m = len(starts)
    cdef long i, k, s, e, top
    pops = [0] * (n + 1)
    closes = [0] * (n + 1)
    pushes = [0] * (n + 1)
    order = sorted(range(m), key=lambda j: (starts[j], -ends[j]))
    cdef long *stack = <long *> malloc(sizeof(long) * (m if m > 0 else 1))
    if stack == NULL:
        raise MemoryError()
    cdef long depth = 0
    dropped = []
    try:
        for k in range(m):
            i = order[k]
            s = starts[i]
            e = ends[i]
            if s == e:
                closes[s] += 1
                continue
            while depth > 0 and stack[depth - 1] < s:
                depth -= 1
            if depth > 0 and stack[depth - 1] < e:
                dropped.append(i)
                continue
            stack[depth] = e
            depth += 1
            pushes[s] += 1
            pops[e] += 1
    finally:
        free(stack)
    return pops, closes, pushes, dropped


def decode_pairs(pops, closes, pushes):
    cdef long n = len(pops) - 1
    cdef long w, j, total = 0
    for w in range(1, n + 1):
        total += pushes[w]
    cdef long cap = total if total > 0 else 1
    cdef long *stack = <long *> malloc(sizeof(long) * cap)
    if stack == NULL:
        raise MemoryError()
    cdef long depth = 0
    out = []
    try:
        for w in range(1, n + 1):
            for j in range(pops[w]):
                if depth > 0:
                    depth -= 1
                    out.append((stack[depth], w))
            for j in range(closes[w]):
                out.append((w, w))
            for j in range(pushes[w]):
                stack[depth] = w
                depth += 1
        while depth > 0:
            depth -= 1
            out.append((stack[depth], n))
    finally:
        free(stack)
    return out
