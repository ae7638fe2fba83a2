"""Structured matrix constructions: block-Hankel lifts, DFT slices,
block-Toeplitz regressors, and excitation diagnostics.

Conventions used throughout:

* a :class:`BlockSequence` X = [X_0, ..., X_L] stores equally shaped q x c
  real blocks;
* the Hankel lift places X_{a+b-1} at block position (a, b) and excludes X_0;
* the block-Toeplitz regressor of a series m_t has block entry
  (a, b) = m_{N-M-(a-1)+(b-1)} with m_t = 0 for t < 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._numeric import RANK_RTOL, numerical_rank

__all__ = [
    "BlockSequence",
    "FrequencySlices",
    "RegressorSet",
    "PEDiagnostics",
    "hankel",
    "hankel_adjoint",
    "hankel_block_counts",
    "dft_slices",
    "dft_adjoint",
    "uniform_grid",
    "block_toeplitz",
    "build_regressors",
    "pe_check",
]


@dataclass(frozen=True)
class BlockSequence:
    """An ordered list of equally shaped real matrix blocks.

    ``blocks`` has shape (L+1, q, c); index 0 is the instantaneous
    (feedthrough) block.
    """

    blocks: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.blocks, dtype=float))
        if arr.ndim != 3:
            raise ValueError("blocks must be a (L+1, q, c) array")
        arr.setflags(write=False)
        object.__setattr__(self, "blocks", arr)

    @classmethod
    def from_matrix(cls, mat, block_cols):
        """Split a q x (L+1)c concatenation [X_0 X_1 ... X_L] into blocks."""
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        q, total = mat.shape
        if block_cols <= 0 or total % block_cols:
            raise ValueError(f"matrix width {total} is not a multiple of block_cols={block_cols}")
        length = total // block_cols
        return cls(mat.reshape(q, length, block_cols).transpose(1, 0, 2))

    def to_matrix(self):
        """Concatenate back to the q x (L+1)c layout."""
        L1, q, c = self.blocks.shape
        return self.blocks.transpose(1, 0, 2).reshape(q, L1 * c)

    @property
    def length(self):
        """L, the index of the last block."""
        return self.blocks.shape[0] - 1

    @property
    def block_shape(self):
        return self.blocks.shape[1:]

    def norm(self):
        return float(np.linalg.norm(self.blocks))

    def __len__(self):
        return self.blocks.shape[0]


@dataclass(frozen=True)
class FrequencySlices:
    """Complex frequency-response samples G(omega_k), one q x c slice per point."""

    values: np.ndarray   # (K, q, c) complex
    omegas: np.ndarray   # (K,)

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=complex))
        om = np.ascontiguousarray(np.asarray(self.omegas, dtype=float))
        if vals.ndim != 3 or om.ndim != 1 or vals.shape[0] != om.shape[0]:
            raise ValueError("values must be (K, q, c) with one omega per slice")
        vals.setflags(write=False)
        om.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "omegas", om)

    def singular_values(self):
        return np.linalg.svd(self.values, compute_uv=False)

    def nuclear_norms(self):
        return self.singular_values().sum(axis=1)


def _as_blocks(X):
    if isinstance(X, BlockSequence):
        return X.blocks
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    if arr.ndim != 3:
        raise ValueError("expected a BlockSequence or (L+1, q, c) array")
    return arr


def default_hankel_rows(length):
    """Near-square split: ceil(L/2) block rows for a length-L lift."""
    return (length + 1) // 2


def hankel(X, n_block_rows=None):
    """Block-Hankel lift of X_1..X_L (X_0 is excluded).

    Entry (a, b) is X_{a+b-1} for a = 1..n_r, b = 1..n_c with
    n_r + n_c - 1 = L; the default n_r = ceil(L/2) is near-square.  The rank
    of the result equals the minimal state dimension generating the sequence.
    """
    blocks = _as_blocks(X)
    L = blocks.shape[0] - 1
    if L < 1:
        raise ValueError("need at least one block past X_0 to build a Hankel matrix")
    n_r = default_hankel_rows(L) if n_block_rows is None else int(n_block_rows)
    if not 1 <= n_r <= L:
        raise ValueError(f"n_block_rows must be in [1, {L}]")
    n_c = L - n_r + 1
    q, c = blocks.shape[1:]
    out = np.empty((n_r * q, n_c * c))
    for a in range(n_r):
        out[a * q:(a + 1) * q] = blocks[a + 1:a + 1 + n_c].transpose(1, 0, 2).reshape(q, n_c * c)
    return out


def hankel_adjoint(Z, block_shape, length, n_block_rows=None):
    """Adjoint of :func:`hankel`: anti-diagonal block sums, zero block 0.

    Satisfies <hankel(X), Z> = <X, hankel_adjoint(Z, ...)> for every X of the
    given block shape and length.
    """
    q, c = block_shape
    L = int(length)
    n_r = default_hankel_rows(L) if n_block_rows is None else int(n_block_rows)
    n_c = L - n_r + 1
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (n_r * q, n_c * c):
        raise ValueError(f"Z must be {(n_r * q, n_c * c)}, got {Z.shape}")
    out = np.zeros((L + 1, q, c))
    Zb = Z.reshape(n_r, q, n_c, c)
    for a in range(n_r):
        out[a + 1:a + 1 + n_c] += Zb[a].transpose(1, 0, 2)
    return BlockSequence(out)


def hankel_block_counts(length, n_block_rows=None):
    """Multiplicity of block k in the Hankel lift (d_0 = 0).

    These are the diagonal weights of hankel_adjoint(hankel(.)).
    """
    L = int(length)
    n_r = default_hankel_rows(L) if n_block_rows is None else int(n_block_rows)
    n_c = L - n_r + 1
    d = np.zeros(L + 1)
    for k in range(1, L + 1):
        d[k] = min(n_r, k) - max(1, k - n_c + 1) + 1
    return d


def uniform_grid(K):
    """Full-circle grid omega_k = 2*pi*k/K, k = 0..K-1."""
    if K <= 0:
        raise ValueError("grid size must be positive")
    return 2.0 * np.pi * np.arange(K) / K


def dft_slices(X, omegas):
    """Frequency samples G(omega) = sum_t X_t exp(-j omega t)."""
    blocks = _as_blocks(X)
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        raise ValueError("frequency grid is empty")
    phases = np.exp(-1j * np.outer(np.arange(blocks.shape[0]), omegas))  # (L+1, K)
    values = np.einsum("tqc,tk->kqc", blocks, phases)
    return FrequencySlices(values=values, omegas=omegas)


def dft_adjoint(Z, omegas, length, weights=None):
    """Adjoint of :func:`dft_slices` under the real trace inner product.

    Block t of the result is sum_k w_k Re(Z_k exp(+j omega_k t)); ``weights``
    defaults to 1 (pass 2 for slices representing a conjugate pair).
    """
    Z = np.asarray(Z, dtype=complex)
    omegas = np.asarray(omegas, dtype=float)
    if weights is None:
        weights = np.ones_like(omegas)
    phases = np.exp(1j * np.outer(np.arange(int(length) + 1), omegas))   # (L+1, K)
    out = np.einsum("kqc,tk->tqc", Z * np.asarray(weights)[:, None, None], phases).real
    return BlockSequence(out)


def block_toeplitz(series, N, M, r):
    """Stacked lagged-data matrix of a series m_0..m_N.

    Block entry (a, b) = m_{N-M-(a-1)+(b-1)} for a = 1..r+1, b = 1..M+1,
    with m_t = 0 for t < 0.  Shape: ((r+1) d, M+1) for d-channel data.
    """
    series = np.atleast_2d(np.asarray(series, dtype=float))
    if series.ndim != 2:
        raise ValueError("series must be (N+1, d)")
    if series.shape[0] < N + 1:
        raise ValueError(f"series has {series.shape[0]} samples, need N+1 = {N + 1}")
    if N % 2 != 0:
        raise ValueError("N must be even")
    if M < 0 or r < 0:
        raise ValueError("M and r must be >= 0")
    if M > N:
        raise ValueError("window M must not exceed the data horizon N")
    d = series.shape[1]
    padded = np.vstack([np.zeros((r, d)), series[:N + 1]])
    idx = (N - M - np.arange(r + 1)[:, None] + np.arange(M + 1)[None, :]) + r
    return padded[idx].transpose(0, 2, 1).reshape((r + 1) * d, M + 1)


@dataclass(frozen=True)
class RegressorSet:
    """Output and lagged-input data matrices for one node.

    ``V`` stacks lags of v = [u; z]; ``U``/``Z`` are the same construction on
    the individual channels (their rows are a permutation of V's).  When
    remote inputs are included, ``W`` stacks lags of w = [v; u_remote] and
    ``U_remote`` the remote channels alone.
    """

    node: int
    N: int
    M: int
    r: int
    p: int
    m: int
    q: int
    Y: np.ndarray
    V: np.ndarray
    U: np.ndarray
    Z: np.ndarray
    W: np.ndarray | None = None
    U_remote: np.ndarray | None = None
    active_remote: tuple[int, ...] = ()

    @property
    def block_cols(self):
        return self.p + self.m

    @property
    def block_cols_stacked(self):
        return None if self.W is None else self.W.shape[0] // (self.r + 1)


def build_regressors(traj, node, N, M, r, include_remote=False):
    """Build Y and the lagged regressor matrices from a simulated trajectory.

    Noiseless full-measurement data satisfies Y = S V exactly when r = N.
    Remote inputs u^j (j != node) are included in ``W`` for every node whose
    input series is not identically zero.
    """
    if N > traj.horizon:
        raise ValueError(f"N={N} exceeds trajectory horizon {traj.horizon}")
    if M >= N:
        raise ValueError("window M must be smaller than N")
    u = traj.u[node]
    z = traj.z[node]
    y = traj.y[node]
    p, m, q = u.shape[1], z.shape[1], y.shape[1]
    if M + 1 < (r + 1) * (p + m):
        warnings.warn(
            f"M+1 = {M + 1} < (r+1)(p+m) = {(r + 1) * (p + m)}: "
            "the regressor cannot have full row rank",
            stacklevel=2,
        )
    v = np.hstack([u, z])
    Y = y[N - M:N + 1].T.copy()
    V = block_toeplitz(v, N, M, r)
    U = block_toeplitz(u, N, M, r)
    Z = block_toeplitz(z, N, M, r)
    W = U_remote = None
    active = ()
    if include_remote:
        active = tuple(j for j in range(len(traj.u)) if j != node and np.any(traj.u[j]))
        u_rem = (np.hstack([traj.u[j] for j in active])
                 if active else np.zeros((traj.horizon + 1, 0)))
        W = block_toeplitz(np.hstack([v, u_rem]), N, M, r)
        U_remote = block_toeplitz(u_rem, N, M, r) if active else np.zeros((0, M + 1))
    return RegressorSet(
        node=node, N=N, M=M, r=r, p=p, m=m, q=q,
        Y=Y, V=V, U=U, Z=Z, W=W, U_remote=U_remote, active_remote=active,
    )


@dataclass(frozen=True)
class PEDiagnostics:
    """Persistence-of-excitation report for a regressor set.

    The projected interconnection block Proj_{U_perp}(Z) is judged against
    the scale of the stacked [U; Z] data, so a projection that is nonzero
    only at noise level is still flagged as rank deficient.
    """

    u_rank: int
    u_rows: int
    u_cond: float
    zproj_rank: int
    z_rows: int
    v_rank: int
    v_rows: int
    v_cond: float
    u_full_row_rank: bool
    zproj_full_row_rank: bool
    v_full_row_rank: bool

    @property
    def passed(self):
        return self.u_full_row_rank and self.zproj_full_row_rank and self.v_full_row_rank


def pe_check(reg, rtol=RANK_RTOL):
    """Rank/conditioning diagnostics of U, Proj_{U_perp}(Z), and V."""
    U, Z, V = reg.U, reg.Z, reg.V

    def _cond(mat):
        if mat.size == 0:
            return 0.0
        s = np.linalg.svd(mat, compute_uv=False)
        smin = s.min()
        return float(s.max() / smin) if smin > 0 else float("inf")

    u_rank = numerical_rank(U, rtol=rtol)
    stack_scale = float(np.linalg.norm(np.vstack([U, Z]), 2)) if U.size + Z.size else 0.0
    if Z.size and U.size:
        zproj = Z - (Z @ np.linalg.pinv(U)) @ U
    else:
        zproj = Z
    zproj_rank = numerical_rank(zproj, rtol=rtol, scale=stack_scale)
    v_rank = numerical_rank(V, rtol=rtol)
    return PEDiagnostics(
        u_rank=u_rank, u_rows=U.shape[0], u_cond=_cond(U),
        zproj_rank=zproj_rank, z_rows=Z.shape[0],
        v_rank=v_rank, v_rows=V.shape[0], v_cond=_cond(V),
        u_full_row_rank=u_rank == U.shape[0],
        zproj_full_row_rank=zproj_rank == Z.shape[0],
        v_full_row_rank=v_rank == V.shape[0],
    )
