"""Cholesky factorization of sparse symmetric positive definite matrices.

Precision matrices arising from the grid meshes in this package have small
bandwidth after a reverse-Cuthill-McKee reordering, so they factor in banded
storage.  Conditional precisions of the latent model carry a handful of dense
rows (fixed effects couple every observation), for which banded storage pays
nothing; those fall through to a dense factorization.  Both paths expose the
same solve / sample / logdet interface.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

__all__ = ["CholeskySolver", "NotPositiveDefiniteError"]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """The matrix handed to CholeskySolver is not positive definite."""


def _bandwidth(a: sp.coo_matrix) -> int:
    if a.nnz == 0:
        return 0
    return int(np.max(np.abs(a.row - a.col)))


class CholeskySolver:
    """Factor a sparse SPD matrix once; reuse for solves, sampling, logdet.

    Parameters
    ----------
    q : sparse or dense symmetric positive definite matrix.
    band_ratio : use banded storage only if the reordered bandwidth is below
        this fraction of the dimension (beyond that dense LAPACK wins).
    """

    def __init__(self, q, band_ratio: float = 0.25):
        q = sp.csr_matrix(q)
        if q.shape[0] != q.shape[1]:
            raise ValueError("matrix must be square")
        self.n = q.shape[0]
        self._perm = reverse_cuthill_mckee(q, symmetric_mode=True)
        qp = q[self._perm][:, self._perm].tocoo()
        self._bw = _bandwidth(qp)
        self.banded = self._bw + 1 <= max(2, int(band_ratio * self.n))
        try:
            if self.banded:
                self._factor_banded(qp)
            else:
                self._factor_dense(q)
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            raise NotPositiveDefiniteError(str(exc)) from exc

    def _factor_banded(self, qp: sp.coo_matrix) -> None:
        bw, n = self._bw, self.n
        ab = np.zeros((bw + 1, n))
        mask = qp.row >= qp.col  # lower triangle, diagonal-ordered form
        ab[qp.row[mask] - qp.col[mask], qp.col[mask]] = qp.data[mask]
        self._cb = scipy.linalg.cholesky_banded(ab, lower=True)
        if np.any(self._cb[0] <= 0):
            raise NotPositiveDefiniteError("non-positive pivot")
        # L^T in diagonal-ordered form, for back-substitution when sampling
        self._ut = np.zeros((bw + 1, n))
        for k in range(bw + 1):
            self._ut[bw - k, k:] = self._cb[k, : n - k]

    def _factor_dense(self, q: sp.spmatrix) -> None:
        self._l = scipy.linalg.cholesky(q.toarray(), lower=True)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve Q x = b.  b may be a vector or a matrix of columns."""
        b = np.asarray(b, dtype=float)
        if self.banded:
            xp = scipy.linalg.cho_solve_banded((self._cb, True), b[self._perm])
            x = np.zeros_like(xp)
            x[self._perm] = xp
            return x
        y = scipy.linalg.solve_triangular(self._l, b, lower=True)
        return scipy.linalg.solve_triangular(self._l, y, lower=True, trans="T")

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals z to a draw with covariance Q^{-1}.

        Solves L^T x = z, so cov(x) = (L L^T)^{-1} = Q^{-1}.
        """
        z = np.asarray(z, dtype=float)
        if self.banded:
            xp = scipy.linalg.solve_banded((0, self._bw), self._ut, z)
            x = np.zeros_like(xp)
            x[self._perm] = xp
            return x
        return scipy.linalg.solve_triangular(self._l, z, lower=True, trans="T")

    def logdet(self) -> float:
        """log det Q."""
        diag = self._cb[0] if self.banded else np.diag(self._l)
        return 2.0 * float(np.sum(np.log(diag)))
