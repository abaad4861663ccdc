"""Thin ctypes binding to the system UMFPACK (double / int32) used as a fast
direct sparse solver when available.  Falls back transparently to SuperLU in
``linalg.sparse_lu`` when the shared library is missing or disabled via the
CHDS_NO_UMFPACK environment variable.

Only the pieces needed here are bound: symbolic/numeric factorization of a
CSC matrix, solves with A and A^T, and numeric-only refactorization for
matrices whose sparsity pattern is unchanged.
"""

import ctypes
import ctypes.util
import os

import numpy as np
import scipy.sparse as sp

UMFPACK_A = 0       # solve A x = b
UMFPACK_At = 1      # solve A^T x = b
UMFPACK_CONTROL = 20
UMFPACK_INFO = 90
UMFPACK_OK = 0
UMFPACK_STRATEGY = 5            # Control index
UMFPACK_STRATEGY_SYMMETRIC = 3  # AMD on A+A^T with diagonal pivot preference
UMFPACK_IRSTEP = 7              # Control index: max iterative-refinement steps
UMFPACK_LUNZ = 44               # Info index: nnz of the factors

_lib = None


def _load():
    global _lib
    if _lib is not None:
        return _lib
    if os.environ.get("CHDS_NO_UMFPACK"):
        return None
    candidates = []
    found = ctypes.util.find_library("umfpack")
    if found:
        candidates.append(found)
    candidates += ["libumfpack.so.5", "libumfpack.so"]
    for name in candidates:
        try:
            lib = ctypes.CDLL(name)
        except OSError:
            continue
        try:
            _bind(lib)
        except AttributeError:
            continue
        _lib = lib
        return _lib
    return None


def _bind(lib):
    c_int, c_double = ctypes.c_int, ctypes.c_double
    c_void_pp = ctypes.POINTER(ctypes.c_void_p)
    int_p = ctypes.POINTER(c_int)
    dbl_p = ctypes.POINTER(c_double)

    lib.umfpack_di_defaults.argtypes = [dbl_p]
    lib.umfpack_di_symbolic.argtypes = [c_int, c_int, int_p, int_p, dbl_p,
                                        c_void_pp, dbl_p, dbl_p]
    lib.umfpack_di_symbolic.restype = c_int
    lib.umfpack_di_numeric.argtypes = [int_p, int_p, dbl_p, ctypes.c_void_p,
                                       c_void_pp, dbl_p, dbl_p]
    lib.umfpack_di_numeric.restype = c_int
    lib.umfpack_di_solve.argtypes = [c_int, int_p, int_p, dbl_p, dbl_p,
                                     dbl_p, ctypes.c_void_p, dbl_p, dbl_p]
    lib.umfpack_di_solve.restype = c_int
    lib.umfpack_di_free_symbolic.argtypes = [c_void_pp]
    lib.umfpack_di_free_numeric.argtypes = [c_void_pp]


def available():
    return _load() is not None


def _as_csc_int32(A):
    A = sp.csc_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    if A.indptr.dtype != np.int32:
        if A.indptr[-1] > np.iinfo(np.int32).max:
            raise OverflowError("matrix too large for int32 UMFPACK")
        A = sp.csc_matrix((A.data, A.indices.astype(np.int32),
                           A.indptr.astype(np.int32)), shape=A.shape)
    return A


class UmfpackLU:
    """LU factorization of a square CSC matrix via umfpack_di_*.

    ``refactor`` redoes only the numeric phase for a matrix with the same
    sparsity pattern (the hot path for Newton matrices whose values change
    but whose structure does not).
    """

    def __init__(self, A, strategy=None, refine=True):
        lib = _load()
        if lib is None:
            raise RuntimeError("UMFPACK is not available")
        self._lib = lib
        A = _as_csc_int32(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = A.shape
        self._keep(A)

        self._control = np.zeros(UMFPACK_CONTROL)
        self._info = np.zeros(UMFPACK_INFO)
        lib.umfpack_di_defaults(_dp(self._control))
        if strategy == "symmetric":
            self._control[UMFPACK_STRATEGY] = UMFPACK_STRATEGY_SYMMETRIC
        if not refine:
            # callers on this path re-verify residuals themselves; skipping
            # refinement saves one matrix-vector product per solve
            self._control[UMFPACK_IRSTEP] = 0

        self._symbolic = ctypes.c_void_p()
        status = lib.umfpack_di_symbolic(
            self.shape[0], self.shape[1], _ip(self._Ap), _ip(self._Ai),
            _dp(self._Ax), ctypes.byref(self._symbolic),
            _dp(self._control), _dp(self._info))
        if status != UMFPACK_OK:
            raise RuntimeError(f"umfpack symbolic failed (status {status})")
        self._numeric = ctypes.c_void_p()
        self._do_numeric()

    def _keep(self, A):
        self._Ap = np.ascontiguousarray(A.indptr, dtype=np.int32)
        self._Ai = np.ascontiguousarray(A.indices, dtype=np.int32)
        self._Ax = np.ascontiguousarray(A.data, dtype=np.float64)
        self.nnz = int(self._Ap[-1])

    def _do_numeric(self):
        lib = self._lib
        if self._numeric:
            lib.umfpack_di_free_numeric(ctypes.byref(self._numeric))
            self._numeric = ctypes.c_void_p()
        status = lib.umfpack_di_numeric(
            _ip(self._Ap), _ip(self._Ai), _dp(self._Ax), self._symbolic,
            ctypes.byref(self._numeric), _dp(self._control), _dp(self._info))
        if status != UMFPACK_OK:
            raise RuntimeError(f"umfpack numeric failed (status {status})")

    def refactor(self, A):
        """Numeric-only refactorization; the pattern must match."""
        A = _as_csc_int32(A)
        if A.shape != self.shape or len(A.data) != len(self._Ax) \
                or not np.array_equal(A.indptr, self._Ap) \
                or not np.array_equal(A.indices, self._Ai):
            raise ValueError("sparsity pattern changed; build a new UmfpackLU")
        self._Ax[:] = A.data
        self._do_numeric()

    def solve(self, b, transposed=False):
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.shape != (self.shape[0],):
            raise ValueError("right-hand side has wrong length")
        x = np.empty_like(b)
        sys = UMFPACK_At if transposed else UMFPACK_A
        status = self._lib.umfpack_di_solve(
            sys, _ip(self._Ap), _ip(self._Ai), _dp(self._Ax), _dp(x), _dp(b),
            self._numeric, _dp(self._control), _dp(self._info))
        if status != UMFPACK_OK:
            raise RuntimeError(f"umfpack solve failed (status {status})")
        return x

    def __del__(self):
        lib = getattr(self, "_lib", None)
        if lib is None:
            return
        try:
            if getattr(self, "_numeric", None):
                lib.umfpack_di_free_numeric(ctypes.byref(self._numeric))
            if getattr(self, "_symbolic", None):
                lib.umfpack_di_free_symbolic(ctypes.byref(self._symbolic))
        except Exception:
            pass


def _ip(arr):
    return arr.ctypes.data_as(ctypes.POINTER(ctypes.c_int))


def _dp(arr):
    return arr.ctypes.data_as(ctypes.POINTER(ctypes.c_double))
