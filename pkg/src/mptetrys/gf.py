"""Arithmetic over GF(2^8) with reduction polynomial x^8+x^4+x^3+x^2+1 (0x11D).

Addition and subtraction are XOR.  Multiplication and division go through
log/antilog tables built from the generator element 0x02.  The dense solver
does full Gauss-Jordan elimination with numpy-vectorized row updates; it is
the decoding back-end for the block code and the oracle for the streaming
decoder tests.
"""

import numpy as np

POLY = 0x11D
GENERATOR = 0x02
ORDER = 255  # multiplicative group order


class Singular(Exception):
    """Coefficient matrix does not have full column rank."""


def _build_tables():
    exp = [0] * (2 * ORDER)
    log = [0] * 256
    x = 1
    for i in range(ORDER):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= POLY
    for i in range(ORDER, 2 * ORDER):
        exp[i] = exp[i - ORDER]
    return exp, log


EXP, LOG = _build_tables()
INV = [0] * 256
for _x in range(1, 256):
    INV[_x] = EXP[ORDER - LOG[_x]]

# numpy copies for vectorized paths
_EXP_T = np.array(EXP, dtype=np.uint8)
_LOG_T = np.array(LOG, dtype=np.int32)


def add(a, b):
    return a ^ b


def sub(a, b):
    return a ^ b


def mul(a, b):
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def inv(a):
    if a == 0:
        raise ZeroDivisionError("0 has no multiplicative inverse in GF(256)")
    return INV[a]


def div(a, b):
    if b == 0:
        raise ZeroDivisionError("division by 0 in GF(256)")
    if a == 0:
        return 0
    return EXP[LOG[a] + ORDER - LOG[b]]


def mul_arrays(a, b):
    """Elementwise GF product of two broadcastable uint8 arrays."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    out = _EXP_T[_LOG_T[a] + _LOG_T[b]]
    zero = (a == 0) | (b == 0)
    return np.where(zero, np.uint8(0), out)


def scale(c, data):
    """Multiply every byte of ``data`` by the scalar ``c``."""
    data = np.asarray(data, dtype=np.uint8)
    if c == 0:
        return np.zeros_like(data)
    if c == 1:
        return data.copy()
    return _EXP_T[_LOG_T[data] + LOG[c]] * (data != 0)


def matmul(a, b):
    """GF matrix product of 2-D uint8 arrays."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape[1] != b.shape[0]:
        raise ValueError("matmul shape mismatch")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.uint8)
    for i in range(a.shape[0]):
        prod = mul_arrays(a[i][:, None], b)
        out[i] = np.bitwise_xor.reduce(prod, axis=0)
    return out


def solve(matrix, rhs):
    """Solve M·x = rhs over GF(256) by Gauss-Jordan elimination.

    ``matrix`` is (m, k) with m >= k; ``rhs`` is (m,) or (m, w).  Returns x
    with shape (k,) or (k, w).  Raises Singular when the matrix has rank
    below k, ValueError when an over-determined system is inconsistent.
    """
    a = np.array(matrix, dtype=np.uint8, copy=True)
    if a.ndim != 2:
        raise ValueError("matrix must be 2-D")
    m, k = a.shape
    rhs_arr = np.array(rhs, dtype=np.uint8, copy=True)
    flat = rhs_arr.ndim == 1
    b = rhs_arr.reshape(m, -1) if flat else rhs_arr
    if b.shape[0] != m:
        raise ValueError("rhs row count does not match matrix")
    if m < k:
        raise Singular("fewer equations than unknowns")

    for col in range(k):
        piv = col
        while piv < m and a[piv, col] == 0:
            piv += 1
        if piv == m:
            raise Singular(f"no pivot in column {col}")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        p = inv(int(a[col, col]))
        if p != 1:
            a[col] = scale(p, a[col])
            b[col] = scale(p, b[col])
        factors = a[:, col].copy()
        factors[col] = 0
        hit = np.nonzero(factors)[0]
        if hit.size:
            f = factors[hit][:, None]
            a[hit] ^= mul_arrays(f, a[col][None, :])
            b[hit] ^= mul_arrays(f, b[col][None, :])

    if m > k and b[k:].any():
        raise ValueError("inconsistent over-determined system")
    x = b[:k]
    return x.reshape(k) if flat else x
