"""Pure-Python fallback for the compiled filter kernels.

Every function performs the same floating-point operations in the same order
as its counterpart in ``_kernels.pyx``, so both backends produce bitwise
identical output.  The recursive filters are plain loops; the FIR stages are
written as ordered numpy sums.
"""

import numpy as np


def low_pass(x):
    x = np.ascontiguousarray(x, dtype=np.float64).tolist()
    n = len(x)
    y = [0.0] * n
    for i in range(n):
        acc = x[i]
        if i >= 1:
            acc += 2.0 * y[i - 1]
        if i >= 2:
            acc -= y[i - 2]
        if i >= 6:
            acc -= 2.0 * x[i - 6]
        if i >= 12:
            acc += x[i - 12]
        y[i] = acc
    return np.array(y, dtype=np.float64)


def high_pass(x):
    x = np.ascontiguousarray(x, dtype=np.float64).tolist()
    n = len(x)
    y = [0.0] * n
    run = 0.0
    for i in range(n):
        run += x[i]
        if i >= 32:
            run -= x[i - 32]
        v = -run
        if i >= 16:
            v += 32.0 * x[i - 16]
        y[i] = v
    return np.array(y, dtype=np.float64)


def _shift(x, k):
    out = np.zeros_like(x)
    if k < x.shape[0]:
        out[k:] = x[: x.shape[0] - k]
    return out


def derivative(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    acc = 2.0 * x
    acc = acc + _shift(x, 1)
    acc = acc - _shift(x, 3)
    acc = acc - 2.0 * _shift(x, 4)
    return acc / 8.0


def moving_window_integrate(x, width):
    x = np.ascontiguousarray(x, dtype=np.float64)
    acc = np.zeros_like(x)
    for k in range(width - 1, -1, -1):
        acc = acc + _shift(x, k)
    return acc / width


def local_maxima(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[0] < 3:
        return np.empty(0, dtype=np.intp)
    mid = x[1:-1]
    hit = (mid > x[:-2]) & (mid >= x[2:])
    return (np.flatnonzero(hit) + 1).astype(np.intp)
