"""Small dense linear algebra for the inverse-transform attack: one-sided
Jacobi SVD and the three inverse constructions."""

import numpy as np

from ..errors import VinferError


def svd_small(mat, max_sweeps=60, tol=1e-14):
    """One-sided Jacobi SVD: A = U @ diag(S) @ V.T, S non-negative descending.

    Column pairs are rotated until mutually orthogonal; singular values are
    the resulting column norms. Wide inputs are handled by transposition.
    """
    A = np.array(mat, dtype=np.float64)
    if A.ndim != 2:
        raise VinferError("svd_small expects a matrix")
    transposed = A.shape[0] < A.shape[1]
    if transposed:
        A = A.T
    m, n = A.shape

    U = A.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up, uq = U[:, p], U[:, q]
                alpha = float(up @ up)
                beta = float(uq @ uq)
                gamma = float(up @ uq)
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * up - s * uq
                new_q = s * up + c * uq
                U[:, p], U[:, q] = new_p, new_q
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise VinferError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sing = np.linalg.norm(U, axis=0)
    order = np.argsort(-sing)
    sing = sing[order]
    U = U[:, order]
    V = V[:, order]
    nonzero = sing > 0
    U[:, nonzero] = U[:, nonzero] / sing[nonzero]
    if transposed:
        U, V = V, U
    return U, sing, V


def pinv_via_svd(mat, rcond=1e-10):
    U, S, V = svd_small(mat)
    cutoff = rcond * (S[0] if S.size else 0.0)
    inv_s = np.where(S > cutoff, 1.0 / np.where(S > cutoff, S, 1.0), 0.0)
    return (V * inv_s) @ U.T


def pinv_normal_equations(mat):
    """Moore-Penrose via normal equations on the well-conditioned side:
    (W^T W)^{-1} W^T for full-column-rank W, min-norm W^T (W W^T)^{-1} when
    wide. Raises when the Gram matrix is genuinely singular."""
    W = np.asarray(mat, dtype=np.float64)
    m, n = W.shape
    try:
        if m >= n:
            return np.linalg.solve(W.T @ W, W.T)
        return W.T @ np.linalg.inv(W @ W.T)
    except np.linalg.LinAlgError as e:
        raise VinferError(f"singular normal equations: {e}") from e


def pinv_regularized(mat, lam=1e-4):
    W = np.asarray(mat, dtype=np.float64)
    n = W.shape[1]
    return np.linalg.solve(W.T @ W + lam * np.eye(n), W.T)
