# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batched Hermitian solve kernels.

Hand-rolled Cholesky factorizations for stacks of small complex matrices:
for the matrix sizes of this problem (total antenna counts of a few dozen)
the per-call overhead of LAPACK dominates, so an allocation-free loop wins.
"""

import numpy as np

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc


cdef inline double _cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef int _chol_solve_one(double complex* M, double complex* rhs, double complex* w, int n) nogil:
    """In-place lower Cholesky of M (row-major) and two triangular solves."""
    cdef int i, j, p
    cdef double d
    cdef double complex s
    for i in range(n):
        for j in range(i):
            s = M[i * n + j]
            for p in range(j):
                s = s - M[i * n + p] * M[j * n + p].conjugate()
            M[i * n + j] = s / M[j * n + j].real
        d = M[i * n + i].real
        for p in range(i):
            d -= _cabs2(M[i * n + p])
        if not d > 0.0:
            return i + 1
        M[i * n + i] = sqrt(d)
    # L y = rhs
    for i in range(n):
        s = rhs[i]
        for p in range(i):
            s = s - M[i * n + p] * w[p]
        w[i] = s / M[i * n + i].real
    # L^H w = y
    for i in range(n - 1, -1, -1):
        s = w[i]
        for p in range(i + 1, n):
            s = s - M[p * n + i].conjugate() * w[p]
        w[i] = s / M[i * n + i].real
    return 0


def loaded_solve(A, load, bhalf):
    """Solve (A_k + diag(load_k)) w_k = bhalf_k for a stack of Hermitian A."""
    cdef double complex[:, :, ::1] A_v = np.ascontiguousarray(A, dtype=np.complex128)
    cdef double[:, ::1] load_v = np.ascontiguousarray(load, dtype=np.float64)
    cdef double complex[:, ::1] b_v = np.ascontiguousarray(bhalf, dtype=np.complex128)
    cdef Py_ssize_t K = A_v.shape[0]
    cdef Py_ssize_t n = A_v.shape[1]
    out = np.empty((K, n), dtype=np.complex128)
    cdef double complex[:, ::1] w_v = out
    cdef double complex* scratch = <double complex*> malloc(n * n * sizeof(double complex))
    if scratch == NULL:
        raise MemoryError()
    cdef Py_ssize_t k, i, j
    cdef int err = 0
    with nogil:
        for k in range(K):
            for i in range(n):
                for j in range(n):
                    scratch[i * n + j] = A_v[k, i, j]
                scratch[i * n + i] = scratch[i * n + i] + load_v[k, i]
            err = _chol_solve_one(scratch, &b_v[k, 0], &w_v[k, 0], <int> n)
            if err != 0:
                err = <int> k + 1
                break
    free(scratch)
    if err != 0:
        raise np.linalg.LinAlgError(f"matrix {err - 1} is not positive definite")
    return out


def chol_solve_inplace(M, bhalf):
    """Solve M_k w_k = bhalf_k, overwriting M with its Cholesky factors."""
    arr = M if isinstance(M, np.ndarray) and M.dtype == np.complex128 and M.flags.c_contiguous \
        else np.ascontiguousarray(M, dtype=np.complex128)
    cdef double complex[:, :, ::1] M_v = arr
    cdef double complex[:, ::1] b_v = np.ascontiguousarray(bhalf, dtype=np.complex128)
    cdef Py_ssize_t K = M_v.shape[0]
    cdef Py_ssize_t n = M_v.shape[1]
    out = np.empty((K, n), dtype=np.complex128)
    cdef double complex[:, ::1] w_v = out
    cdef Py_ssize_t k
    cdef int err = 0
    with nogil:
        for k in range(K):
            err = _chol_solve_one(&M_v[k, 0, 0], &b_v[k, 0], &w_v[k, 0], <int> n)
            if err != 0:
                err = <int> k + 1
                break
    if err != 0:
        raise np.linalg.LinAlgError(f"matrix {err - 1} is not positive definite")
    return out
