"""Arithmetic modulo the Mersenne prime 2**61 - 1.

Two flavours of the same operations: vectorised numpy functions over
``uint64`` arrays and scalar numba kernels used inside compiled loops.
Both avoid 128-bit intermediates by splitting operands into 32-bit halves.
"""

import numpy as np

from ._backend import njit

PRIME = (1 << 61) - 1

_P = np.uint64(PRIME)
_M32 = np.uint64(0xFFFFFFFF)
_M29 = np.uint64((1 << 29) - 1)
_S3 = np.uint64(3)
_S29 = np.uint64(29)
_S32 = np.uint64(32)
_S61 = np.uint64(61)
_ONE = np.uint64(1)


# -- numpy ------------------------------------------------------------------


def reduce_key(keys):
    """Map arbitrary 64-bit keys into [0, PRIME)."""
    k = np.asarray(keys, dtype=np.uint64)
    s = (k & _P) + (k >> _S61)
    return np.where(s >= _P, s - _P, s)


def mulmod(a, b):
    a_hi, a_lo = a >> _S32, a & _M32
    b_hi, b_lo = b >> _S32, b & _M32
    hh = a_hi * b_hi
    mid = a_hi * b_lo + a_lo * b_hi
    lo = a_lo * b_lo
    s = (hh << _S3) + (mid >> _S29) + ((mid & _M29) << _S32) + (lo & _P) + (lo >> _S61)
    s = (s & _P) + (s >> _S61)
    return np.where(s >= _P, s - _P, s)


def addmod(a, b):
    s = a + b
    return np.where(s >= _P, s - _P, s)


def poly_eval(coeffs, x):
    """Horner evaluation; ``coeffs`` lowest degree first, ``x`` already reduced."""
    c = np.asarray(coeffs, dtype=np.uint64)
    acc = np.full(np.shape(x), c[-1], dtype=np.uint64)
    for k in range(len(c) - 2, -1, -1):
        acc = addmod(mulmod(acc, x), c[k])
    return acc


def xi_signs(coeffs, keys):
    """+1/-1 per key from a cubic polynomial; low bit 1 -> +1, 0 -> -1."""
    v = poly_eval(coeffs, reduce_key(keys))
    return (v & _ONE).astype(np.int64) * 2 - 1


def bucket_index(coeffs, keys, b):
    v = poly_eval(coeffs, reduce_key(keys))
    return (v % np.uint64(b)).astype(np.intp)


# -- numba scalars ----------------------------------------------------------


@njit
def nb_reduce(k):
    s = (k & _P) + (k >> _S61)
    if s >= _P:
        s -= _P
    return s


@njit
def nb_mulmod(a, b):
    a_hi = a >> _S32
    a_lo = a & _M32
    b_hi = b >> _S32
    b_lo = b & _M32
    hh = a_hi * b_hi
    mid = a_hi * b_lo + a_lo * b_hi
    lo = a_lo * b_lo
    s = (hh << _S3) + (mid >> _S29) + ((mid & _M29) << _S32) + (lo & _P) + (lo >> _S61)
    s = (s & _P) + (s >> _S61)
    if s >= _P:
        s -= _P
    return s


@njit
def nb_addmod(a, b):
    s = a + b
    if s >= _P:
        s -= _P
    return s


@njit
def nb_xi(c, x):
    # c: uint64[4], x reduced
    acc = c[3]
    acc = nb_addmod(nb_mulmod(acc, x), c[2])
    acc = nb_addmod(nb_mulmod(acc, x), c[1])
    acc = nb_addmod(nb_mulmod(acc, x), c[0])
    if acc & _ONE:
        return 1
    return -1


@njit
def nb_bucket(c, x, b):
    # c: uint64[2], b: uint64
    v = nb_addmod(nb_mulmod(c[1], x), c[0])
    return np.intp(v % b)
