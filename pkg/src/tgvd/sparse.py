"""Assembled sparse difference operators, normal matrices and IC(0).

Vectorization is row-major (``u.ravel()``); vector and tensor fields are
stacked channel by channel, and block unknowns are ordered image block
first, then the vector-field block.  This matches the layout produced by
:mod:`tgvd.problems`.
"""

from dataclasses import dataclass, field
import logging

import numba
import numpy as np
import scipy.io
import scipy.sparse as sp

logger = logging.getLogger(__name__)

FORMULATIONS = ("U", "UV", "UW", "V")
PRECOND_KINDS = ("U", "UV_U", "UV_V", "UW_U", "UW_W", "V")


class IncompleteCholeskyBreakdown(ArithmeticError):
    """Raised when an IC(0) pivot is not positive."""

    def __init__(self, row):
        super().__init__(f"non-positive pivot in incomplete Cholesky at row {row}")
        self.row = row


def _check_dims(M, N):
    if M < 2 or N < 2:
        raise ValueError(f"grid must be at least 2x2, got {M}x{N}")


def _forward_difference_1d(n):
    d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
    d[n - 1, n - 1] = 0.0
    return d.tocsr()


def assemble_d(direction, M, N):
    """Matrix of the forward difference along axis ``direction`` (1 or 2)."""
    _check_dims(M, N)
    if direction == 1:
        out = sp.kron(_forward_difference_1d(M), sp.identity(N), format="csr")
    elif direction == 2:
        out = sp.kron(sp.identity(M), _forward_difference_1d(N), format="csr")
    else:
        raise ValueError(f"direction must be 1 or 2, got {direction!r}")
    out.eliminate_zeros()
    return out


def assemble_grad(M, N):
    return sp.vstack([assemble_d(1, M, N), assemble_d(2, M, N)], format="csr")


def assemble_symgrad(M, N):
    D1, D2 = assemble_d(1, M, N), assemble_d(2, M, N)
    return sp.bmat([[D1, None], [0.5 * D2, 0.5 * D1],
                    [0.5 * D2, 0.5 * D1], [None, D2]], format="csr")


def assemble_jacobian(M, N):
    D1, D2 = assemble_d(1, M, N), assemble_d(2, M, N)
    return sp.bmat([[D1, None], [D2, None], [None, D1], [None, D2]], format="csr")


def assemble_hessian(M, N):
    return (assemble_symgrad(M, N) @ assemble_grad(M, N)).tocsr()


def assemble_K(formulation, M, N):
    """Block operator ``K`` for the given choice of primal variables.

    ``U``: ``grad``; ``UV``: ``[[grad, -I], [0, E]]``; ``UW``: ``[H, -E]``;
    ``V``: ``E``.
    """
    _check_dims(M, N)
    if formulation == "U":
        return assemble_grad(M, N)
    if formulation == "UV":
        n = M * N
        return sp.bmat([[assemble_grad(M, N), -sp.identity(2 * n)],
                        [None, assemble_symgrad(M, N)]], format="csr")
    if formulation == "UW":
        return sp.hstack([assemble_hessian(M, N), -assemble_symgrad(M, N)], format="csr")
    if formulation == "V":
        return assemble_symgrad(M, N)
    raise ValueError(f"unknown formulation {formulation!r}")


def assemble_ktk(formulation, M, N, st):
    """``I + st K^T K`` as a symmetric positive definite CSR matrix."""
    if not st > 0:
        raise ValueError("st must be positive")
    K = assemble_K(formulation, M, N)
    A = sp.identity(K.shape[1], format="csr") + st * (K.T @ K)
    A = A.tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_precond_target(kind, M, N, st, literal_uw=True):
    """Matrix whose IC(0) factor preconditions one diagonal block.

    ``literal_uw`` selects ``I + H^T H`` (no ``st`` factor) for the image
    block of the ``UW`` formulation; otherwise ``I + st H^T H`` is used.
    """
    _check_dims(M, N)
    n = M * N
    if kind in ("U", "UV_U"):
        G = assemble_grad(M, N)
        A = sp.identity(n) + st * (G.T @ G)
    elif kind == "UV_V":
        J = assemble_jacobian(M, N)
        A = (1.0 + st) * sp.identity(2 * n) + st * (J.T @ J)
    elif kind == "UW_U":
        H = assemble_hessian(M, N)
        A = sp.identity(n) + (1.0 if literal_uw else st) * (H.T @ H)
    elif kind in ("UW_W", "V"):
        J = assemble_jacobian(M, N)
        A = sp.identity(2 * n) + st * (J.T @ J)
    else:
        raise ValueError(f"unknown preconditioner block {kind!r}")
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def lower_pattern(A):
    L = sp.tril(sp.csr_matrix(A), format="csr")
    L.sum_duplicates()
    L.sort_indices()
    return L


@numba.njit(cache=True)
def _ic0_kernel(indptr, indices, data):
    # Row-wise IC(0) on a sorted CSR lower triangle with the diagonal last
    # in each row; ``data`` is overwritten with L.  Returns -1 or the row of
    # the failing pivot.
    n = indptr.shape[0] - 1
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        if end == start or indices[end - 1] != i:
            return i
        for a in range(start, end - 1):
            k = indices[a]
            s = data[a]
            # sparse dot of row i and row k over columns < k
            pa, pb = start, indptr[k]
            kend = indptr[k + 1] - 1
            while pa < a and pb < kend:
                ca, cb = indices[pa], indices[pb]
                if ca == cb:
                    s -= data[pa] * data[pb]
                    pa += 1
                    pb += 1
                elif ca < cb:
                    pa += 1
                else:
                    pb += 1
            data[a] = s / data[kend]
        d = data[end - 1]
        for a in range(start, end - 1):
            d -= data[a] * data[a]
        if not d > 0.0:
            return i
        data[end - 1] = np.sqrt(d)
    return -1


@numba.njit(cache=True)
def _lower_solve(indptr, indices, data, b):
    n = b.shape[0]
    x = np.empty(n)
    for i in range(n):
        s = b[i]
        end = indptr[i + 1] - 1
        for a in range(indptr[i], end):
            s -= data[a] * x[indices[a]]
        x[i] = s / data[end]
    return x


@numba.njit(cache=True)
def _upper_solve_transposed(indptr, indices, data, b):
    # solves L^T x = b with L stored row-wise
    n = b.shape[0]
    x = b.copy()
    for i in range(n - 1, -1, -1):
        end = indptr[i + 1] - 1
        x[i] /= data[end]
        xi = x[i]
        for a in range(indptr[i], end):
            x[indices[a]] -= data[a] * xi
    return x


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular IC(0) factor ``L`` with ``L L^T ~ A + shift I``."""

    L: sp.csr_matrix
    shift: float = 0.0

    @property
    def shape(self):
        return self.L.shape

    def solve(self, r):
        """Return ``(L L^T)^{-1} r``."""
        L = self.L
        y = _lower_solve(L.indptr, L.indices, L.data, np.ascontiguousarray(r, dtype=float))
        return _upper_solve_transposed(L.indptr, L.indices, L.data, y)


def ichol_zero_fill(A, shift=0.0):
    """Incomplete Cholesky factorization with zero fill-in.

    Raises :class:`IncompleteCholeskyBreakdown` when a pivot is not
    positive.  ``shift`` is added to the diagonal before factorizing.
    """
    L = lower_pattern(A)
    if L.shape[0] != L.shape[1]:
        raise ValueError("matrix must be square")
    L = sp.csr_matrix((L.data.astype(float), L.indices.astype(np.int64),
                       L.indptr.astype(np.int64)), shape=L.shape)
    if shift:
        L = (L + shift * sp.identity(L.shape[0], format="csr")).tocsr()
        L.sort_indices()
        L.indices = L.indices.astype(np.int64)
        L.indptr = L.indptr.astype(np.int64)
    bad = _ic0_kernel(L.indptr, L.indices, L.data)
    if bad >= 0:
        raise IncompleteCholeskyBreakdown(int(bad))
    return CholFactor(L, float(shift))


def ichol_robust(A):
    """IC(0), retrying with a growing diagonal shift after breakdown.

    The first retry shifts by ``1e-3 * max(diag A)``; the shift doubles on
    every further breakdown.
    """
    try:
        return ichol_zero_fill(A)
    except IncompleteCholeskyBreakdown as exc:
        shift = 1e-3 * float(A.diagonal().max())
        logger.warning("%s; retrying with diagonal shift %.3g", exc, shift)
    for _ in range(60):
        try:
            return ichol_zero_fill(A, shift)
        except IncompleteCholeskyBreakdown:
            shift *= 2.0
    raise IncompleteCholeskyBreakdown(-1)


def precond_apply(factor, r):
    return factor.solve(r)


@dataclass
class BlockPreconditioner:
    """Block-diagonal preconditioner, each block an IC(0) factor."""

    blocks: list = field(default_factory=list)  # (slice, CholFactor)

    def __call__(self, r):
        out = np.empty_like(r)
        for sl, fac in self.blocks:
            out[sl] = fac.solve(r[sl])
        return out


def block_preconditioner(formulation, M, N, st, literal_uw=True):
    """IC(0) block-diagonal preconditioner for ``I + st K^T K``."""
    n = M * N
    kinds = {"U": [("U", slice(0, n))],
             "UV": [("UV_U", slice(0, n)), ("UV_V", slice(n, 3 * n))],
             "UW": [("UW_U", slice(0, n)), ("UW_W", slice(n, 3 * n))],
             "V": [("V", slice(0, 2 * n))]}
    if formulation not in kinds:
        raise ValueError(f"unknown formulation {formulation!r}")
    blocks = []
    for kind, sl in kinds[formulation]:
        target = assemble_precond_target(kind, M, N, st, literal_uw=literal_uw)
        blocks.append((sl, ichol_robust(target)))
    return BlockPreconditioner(blocks)


def dump_matrix_market(A, path, comment=""):
    """Write ``A`` in Matrix Market coordinate format (debugging aid)."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
