"""One-sided Jacobi singular value decomposition.

Self-contained SVD for the seeding path.  Jacobi rotations orthogonalize the
columns of a working copy of the matrix; at convergence the column norms are
the singular values.  Accuracy is excellent at the in-memory problem sizes
this package targets, and the routine is fully deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError


def jacobi_svd(a, max_sweeps: int = 60, rel_tol: float = 1e-14):
    """Full SVD of a dense matrix: returns (u, s, vt) with s descending.

    u is m x r, s has length r, vt is r x n, with r = min(m, n).
    Raises NumericError if the rotation sweeps fail to converge.
    """
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    if m < n:
        vt, s, ut = jacobi_svd(a.T, max_sweeps, rel_tol)
        return ut.T, s, vt.T

    g = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = float(g[:, p] @ g[:, p])
                aqq = float(g[:, q] @ g[:, q])
                apq = float(g[:, p] @ g[:, q])
                if apq == 0.0 or apq * apq <= (rel_tol * rel_tol) * app * aqq:
                    continue
                rotated = True
                zeta = (aqq - app) / (2.0 * apq)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(1.0, t)
                s_ = c * t
                gp = g[:, p].copy()
                g[:, p] = c * gp - s_ * g[:, q]
                g[:, q] = s_ * gp + c * g[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s_ * v[:, q]
                v[:, q] = s_ * vp + c * v[:, q]
        if not rotated:
            break
    else:
        raise NumericError("svd: Jacobi sweeps did not converge")

    sigma = np.sqrt(np.sum(g * g, axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    g = g[:, order]
    v = v[:, order]
    u = np.zeros_like(g)
    nz = sigma > 0
    u[:, nz] = g[:, nz] / sigma[nz]
    return u, sigma, v.T
