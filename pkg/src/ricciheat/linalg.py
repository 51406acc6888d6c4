"""Sparse solves for the M-matrix systems produced by implicit stepping."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

DIRECT_LIMIT = 20000
CG_RTOL = 1e-12


class SolverError(RuntimeError):
    pass


def factorize(A, symmetric: bool = True):
    """Return a callable b -> A^{-1} b.

    Sparse LU without pivoting keeps the sign structure of an M-matrix
    intact (no cancellation from row swaps), so nonnegative data stays
    nonnegative to round-off.  Large symmetric systems fall back to
    Jacobi-preconditioned conjugate gradients.
    """
    A = sp.csc_matrix(A)
    n = A.shape[0]
    if n <= DIRECT_LIMIT or not symmetric:
        lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
        return lu.solve
    A = A.tocsr()
    dinv = 1.0 / A.diagonal()
    M = sp.diags(dinv)

    def solve(b):
        x, info = cg(A, b, x0=dinv * b, rtol=CG_RTOL, atol=0.0, M=M, maxiter=10 * n)
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
        return x

    return solve
