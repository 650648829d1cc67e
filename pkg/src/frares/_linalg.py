import numpy as np

DEFAULT_RANK_TOL = 1e-9


def numerical_rank(M, tol=DEFAULT_RANK_TOL):
    """Rank counting singular values above ``tol * sigma_max``."""
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def rank_and_null_vector(M, n, tol=DEFAULT_RANK_TOL):
    """Numerical rank of ``M`` (``m x n``) and a unit vector in its numerical nullspace.

    The null vector is ``None`` when the rank is ``n``.  For an empty ``M``
    the first coordinate vector is returned.
    """
    if M.shape[0] == 0:
        z = np.zeros(n)
        z[0] = 1.0
        return 0, z
    _, sv, Vt = np.linalg.svd(M, full_matrices=True)
    rank = 0 if sv[0] == 0.0 else int(np.sum(sv > tol * sv[0]))
    if rank == n:
        return rank, None
    return rank, Vt[-1].copy()


def nth_singular_value(M, n):
    """``sigma_n(M)``: the n-th singular value, zero when ``M`` has fewer rows."""
    if M.shape[0] < n:
        return 0.0
    sv = np.linalg.svd(M, compute_uv=False)
    return float(sv[n - 1])
