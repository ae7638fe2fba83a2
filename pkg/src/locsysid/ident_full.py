"""Identification with fully measured interconnections.

With every interconnection signal in the span of the sensors, the node's
outputs are an exact finite convolution of [u; z], so the impulse-response
blocks solve the linear system Y = S V: exactly by pseudo-inverse on
noiseless data, or through the nuclear-norm program when noise is present.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import decomp_solver
from .datamat import BlockSequence, hankel

__all__ = ["ImpulseEstimate", "identify_exact", "identify_robust"]

_PINV_RTOL = 1e-10


@dataclass
class ImpulseEstimate:
    """Estimated impulse-response blocks [s_0 ... s_r] plus fit diagnostics."""

    S: np.ndarray
    block_cols: int
    Y: np.ndarray
    V: np.ndarray
    rank_V: int
    cond_V: float
    identifiable: bool
    hankel_singvals: np.ndarray | None = None
    solver: decomp_solver.DecompositionResult | None = None

    @property
    def n_blocks(self):
        return self.S.shape[1] // self.block_cols

    def residual(self):
        """||Y - S V||_F recomputed from the stored data."""
        return float(np.linalg.norm(self.Y - self.S @ self.V))

    def blocks(self):
        return BlockSequence.from_matrix(self.S, self.block_cols)

    def to_report_dict(self):
        """JSON-ready summary: impulse blocks, residual, Hankel spectrum."""
        sv = self.hankel_singvals
        if sv is None:
            sv = np.linalg.svd(hankel(self.blocks()), compute_uv=False)
        return {
            "impulse_blocks": [b.tolist() for b in self.blocks().blocks],
            "residual": self.residual(),
            "hankel_singular_values": sv.tolist(),
            "rank_V": self.rank_V,
            "cond_V": self.cond_V,
            "identifiable": self.identifiable,
        }

    def save_report(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_report_dict(), fh, indent=2)


def identify_exact(Y, V, *, block_cols, rcond=_PINV_RTOL):
    """Least-squares recovery S = Y pinv(V).

    The pseudo-inverse is taken through a full SVD with singular values below
    ``rcond`` times the largest treated as zero.  A row-rank-deficient V
    yields the minimum-norm solution flagged as non-identifiable.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    U, s, Vt = np.linalg.svd(V, full_matrices=False)
    cutoff = rcond * s[0] if s.size else 0.0
    rank = int(np.count_nonzero(s > cutoff))
    inv = np.zeros_like(s)
    inv[:rank] = 1.0 / s[:rank]
    S = Y @ (Vt.T * inv) @ U.T
    cond = float(s[0] / s[rank - 1]) if rank else float("inf")
    est = ImpulseEstimate(
        S=S, block_cols=block_cols, Y=Y, V=V,
        rank_V=rank, cond_V=cond,
        identifiable=rank == V.shape[0],
    )
    if est.n_blocks >= 2:
        est.hankel_singvals = np.linalg.svd(hankel(est.blocks()), compute_uv=False)
    return est


def identify_robust(Y, V, delta, cfg=None, *, block_cols):
    """Noise-tolerant recovery via the Hankel nuclear-norm program.

    Returns a delta-feasible estimate (within the solver's feasibility
    tolerance) together with the singular values of its Hankel lift; an
    infeasible delta is reported through the attached solver result, never
    silently absorbed.
    """
    result = decomp_solver.solve_robust(Y, V, delta, cfg, block_cols=block_cols)
    exact = identify_exact(Y, V, block_cols=block_cols)
    est = ImpulseEstimate(
        S=result.S, block_cols=block_cols,
        Y=np.atleast_2d(np.asarray(Y, dtype=float)),
        V=np.atleast_2d(np.asarray(V, dtype=float)),
        rank_V=exact.rank_V, cond_V=exact.cond_V,
        identifiable=exact.identifiable,
        hankel_singvals=result.hankel_singvals,
        solver=result,
    )
    return est
