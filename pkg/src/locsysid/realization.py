"""Order estimation and state-space realization from impulse-response blocks.

The Hankel lift of the Markov blocks s_1, s_2, ... factors as an extended
observability matrix times an extended controllability matrix; a balanced
rank-n truncation plus the shift trick recovers (A, B, C) up to similarity,
with D read directly off s_0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._numeric import RANK_RTOL
from .datamat import BlockSequence, default_hankel_rows, hankel

__all__ = ["RealizedModel", "OrderEstimate", "estimate_order", "ho_kalman", "markov_check"]


def _as_blocks(S):
    if isinstance(S, BlockSequence):
        return S
    if hasattr(S, "blocks") and callable(S.blocks):   # ImpulseEstimate
        return S.blocks()
    return BlockSequence(np.asarray(S, dtype=float))


@dataclass(frozen=True)
class OrderEstimate:
    """Estimated order with the evidence that produced it."""

    order: int
    singular_values: np.ndarray
    gap: float
    confident: bool


@dataclass(frozen=True)
class RealizedModel:
    """State-space tuple realized from impulse-response blocks.

    ``B_ext`` and ``D_ext`` span all driving channels (local inputs first,
    then interconnection observations); the trailing columns of a consistent
    ``D_ext`` are zero since interconnection signals enter with a one-step
    delay.  ``stable`` flags rho(A) < 1 but is not enforced.
    """

    A: np.ndarray
    B_ext: np.ndarray
    C: np.ndarray
    D_ext: np.ndarray
    order: int
    fit_error: float
    spectral_radius: float

    @property
    def stable(self):
        return self.spectral_radius < 1.0

    def markov_blocks(self, count):
        """[D_ext, C B_ext, C A B_ext, ...] with ``count`` blocks after D."""
        q, cols = self.D_ext.shape
        out = np.empty((count + 1, q, cols))
        out[0] = self.D_ext
        acc = self.B_ext
        for k in range(1, count + 1):
            out[k] = self.C @ acc if self.order else np.zeros((q, cols))
            if self.order:
                acc = self.A @ acc
        return BlockSequence(out)

    def to_dict(self):
        return {
            "A": self.A.tolist(), "B_ext": self.B_ext.tolist(),
            "C": self.C.tolist(), "D_ext": self.D_ext.tolist(),
            "order": self.order, "fit_error": self.fit_error,
            "spectral_radius": self.spectral_radius,
        }


def estimate_order(S, gap_ratio=10.0, zero_rtol=RANK_RTOL):
    """Estimate the system order from the Hankel singular-value gap.

    Returns the largest index n with sigma_n / sigma_{n+1} above
    ``gap_ratio``.  Singular values below ``zero_rtol`` times the largest are
    treated as exactly zero: a drop into that zero block counts as an
    infinite gap, and no gap is ever claimed after the full numerical rank.
    With no qualifying gap the index of the largest ratio is returned with
    ``confident=False``.
    """
    blocks = _as_blocks(S)
    if blocks.length < 1 or not np.any(blocks.blocks[1:]):
        return OrderEstimate(order=0, singular_values=np.zeros(0), gap=np.inf,
                             confident=not np.any(blocks.blocks[1:]))
    s = np.linalg.svd(hankel(blocks), compute_uv=False)
    nonzero = int(np.count_nonzero(s > zero_rtol * s[0]))
    # ratio at n compares sigma_n with its successor; the successor of the
    # last nonzero value is the zero block (infinite gap) unless the matrix
    # is full rank, in which case there is no evidence of a gap there
    ratios = []
    for n in range(1, nonzero + 1):
        if n < nonzero:
            ratios.append(s[n - 1] / s[n])
        elif n < len(s):
            ratios.append(np.inf)
    ratios = np.asarray(ratios)
    qualifying = np.nonzero(ratios > gap_ratio)[0] if ratios.size else np.zeros(0, int)
    if qualifying.size:
        order = int(qualifying[-1] + 1)
        return OrderEstimate(order=order, singular_values=s,
                             gap=float(ratios[qualifying[-1]]), confident=True)
    if not ratios.size:
        return OrderEstimate(order=nonzero, singular_values=s, gap=1.0, confident=False)
    best = int(np.argmax(ratios))
    return OrderEstimate(order=best + 1, singular_values=s,
                         gap=float(ratios[best]), confident=False)


def ho_kalman(S, order):
    """Balanced SVD realization of order ``order`` from Markov blocks.

    Factor hankel(S) ~= O R by a rank-n truncated SVD with the singular
    values split evenly; C is the top block row of O, B_ext the first block
    column of R, and A solves the block-shifted observability equation in
    least squares.
    """
    blocks = _as_blocks(S)
    q, cols = blocks.block_shape
    L = blocks.length
    if order == 0:
        model = RealizedModel(
            A=np.zeros((0, 0)), B_ext=np.zeros((0, cols)), C=np.zeros((q, 0)),
            D_ext=blocks.blocks[0].copy(), order=0, fit_error=0.0, spectral_radius=0.0,
        )
        return _with_fit_error(model, blocks)
    if L < 2:
        raise ValueError("need at least two Markov blocks past s_0 to realize dynamics")
    n_r = default_hankel_rows(L)
    Hk = hankel(blocks, n_r)
    if order > min(Hk.shape):
        raise ValueError(f"order {order} exceeds the Hankel rank budget {min(Hk.shape)}")
    U, s, Vt = np.linalg.svd(Hk, full_matrices=False)
    root = np.sqrt(s[:order])
    O = U[:, :order] * root
    Rf = (root[:, None]) * Vt[:order]
    C = O[:q]
    B_ext = Rf[:, :cols]
    A, *_ = np.linalg.lstsq(O[:-q], O[q:], rcond=None)
    rho = float(np.max(np.abs(np.linalg.eigvals(A)))) if order else 0.0
    model = RealizedModel(
        A=A, B_ext=B_ext, C=C, D_ext=blocks.blocks[0].copy(),
        order=order, fit_error=0.0, spectral_radius=rho,
    )
    return _with_fit_error(model, blocks)


def _with_fit_error(model, blocks):
    err = markov_check(model, blocks)
    return RealizedModel(
        A=model.A, B_ext=model.B_ext, C=model.C, D_ext=model.D_ext,
        order=model.order, fit_error=err, spectral_radius=model.spectral_radius,
    )


def markov_check(model, S):
    """Worst block mismatch of the model's Markov parameters against S.

    max_k ||s_k - C A^{k-1} B_ext||_F over k >= 1, plus ||s_0 - D_ext||_F.
    """
    blocks = _as_blocks(S)
    recon = model.markov_blocks(blocks.length).blocks
    errs = np.linalg.norm(blocks.blocks[1:] - recon[1:], axis=(1, 2))
    head = float(np.linalg.norm(blocks.blocks[0] - recon[0]))
    return float(errs.max(initial=0.0)) + head
