# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-sample loops for the QRS filter cascade."""

import numpy as np


def low_pass(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double acc
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
    return out


def high_pass(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double run = 0.0
    for i in range(n):
        run += x[i]
        if i >= 32:
            run -= x[i - 32]
        y[i] = -run
        if i >= 16:
            y[i] += 32.0 * x[i - 16]
    return out


def derivative(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double acc
    for i in range(n):
        acc = 2.0 * x[i]
        if i >= 1:
            acc += x[i - 1]
        if i >= 3:
            acc -= x[i - 3]
        if i >= 4:
            acc -= 2.0 * x[i - 4]
        y[i] = acc / 8.0
    return out


def moving_window_integrate(const double[::1] x, Py_ssize_t width):
    cdef Py_ssize_t n = x.shape[0], i, j, lo
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double acc
    for i in range(n):
        lo = i - width + 1
        if lo < 0:
            lo = 0
        acc = 0.0
        for j in range(lo, i + 1):
            acc += x[j]
        y[i] = acc / width
    return out
