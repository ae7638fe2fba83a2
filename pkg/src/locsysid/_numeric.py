"""Shared numerical-rank helpers."""

import numpy as np

# Singular values below RANK_RTOL * sigma_max are treated as zero everywhere
# rank or subspace dimensions are computed.
RANK_RTOL = 1e-8


def numerical_rank(mat, rtol=RANK_RTOL, scale=None):
    """Rank of ``mat`` counting singular values above ``rtol * scale``.

    ``scale`` defaults to the largest singular value of ``mat`` itself; pass
    an external scale when tiny-but-structured residual matrices should be
    judged against the magnitude of the data they came from.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if scale is None:
        scale = s[0] if s.size else 0.0
    if scale == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * scale))
