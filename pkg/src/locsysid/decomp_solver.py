"""First-order proximal splitting for nuclear-norm identification programs.

Three convex programs share one consensus engine:

* robust:        min ||hankel(S)||_*  s.t.  ||Y - S V||_F <= delta
* hidden:        min ||hankel(S)||_*  s.t.  ||Y - S V - H W||_F <= delta,
                 ||F(H)(omega_k)||_* <= delta_h on a full-circle grid
* hidden, local: the same with W = V, so the data constraint collapses to
                 ||Y - (S + H) V||_F <= delta

The engine alternates a ridge-free least-squares step in (S, H) (normal
equations factored once), singular-value thresholding on the Hankel lift,
Frobenius-ball projection of the data residual, and per-frequency
nuclear-ball projections of the hidden channel's DFT slices; scaled dual
ascent ties the copies together.  Conjugate-symmetric frequency pairs are
handled jointly on a half grid so the hidden channel stays real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .datamat import (
    BlockSequence,
    default_hankel_rows,
    hankel,
    hankel_adjoint,
    hankel_block_counts,
    uniform_grid,
)

__all__ = [
    "SolverConfig",
    "DecompositionResult",
    "svt",
    "project_nuclear_ball",
    "project_frobenius_ball",
    "solve_robust",
    "solve_hidden",
    "solve_hidden_local",
]


@dataclass(frozen=True)
class SolverConfig:
    """Splitting-engine knobs.

    ``freq_grid_size`` of None uses K = M (the number of data columns minus
    one), matching the grid the hidden programs are stated on.
    """

    rho: float = 1.0
    max_iters: int = 5000
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    adaptive_rho: bool = False
    over_relaxation: float = 1.7
    freq_grid_size: int | None = None
    feas_tol: float = 1e-6
    trace_every: int = 10

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.eps_abs <= 0 or self.eps_rel <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 1.0 <= self.over_relaxation < 2.0:
            raise ValueError("over_relaxation must be in [1, 2)")


@dataclass
class DecompositionResult:
    """Outcome of one solve: components, diagnostics, and convergence record."""

    S: np.ndarray
    H: np.ndarray | None
    objective: float
    residual: float
    hankel_singvals: np.ndarray
    freq_singvals: np.ndarray | None
    omegas: np.ndarray | None
    iterations: int
    status: str                      # "converged" | "max_iters" | "infeasible"
    message: str = ""
    residual_floor: float = 0.0
    feasible: bool = False
    block_cols: int = 0
    block_cols_hidden: int | None = None
    trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    @property
    def converged(self):
        return self.status == "converged"

    def trace_to_csv(self, path):
        """Write the (iteration, objective, primal, dual) convergence trace."""
        with open(path, "w") as fh:
            fh.write("iteration,objective,primal_residual,dual_residual\n")
            for row in self.trace:
                fh.write(f"{int(row[0])}," + ",".join(f"{v:.17g}" for v in row[1:]) + "\n")


def svt(X, tau):
    """Singular value thresholding: prox of tau * nuclear norm at X."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if tau == 0:
        return np.array(X, copy=True)
    U, s, Vt = np.linalg.svd(np.asarray(X), full_matrices=False)
    return (U * np.maximum(s - tau, 0.0)) @ Vt


def _project_l1_rows(sig, radius):
    """Row-wise projection of nonnegative vectors onto the l1 ball."""
    inside = sig.sum(axis=1) <= radius
    srt = np.sort(sig, axis=1)[:, ::-1]
    excess = np.cumsum(srt, axis=1) - radius
    counts = np.arange(1, sig.shape[1] + 1)
    support = (srt - excess / counts > 0).sum(axis=1)
    support = np.maximum(support, 1)
    theta = excess[np.arange(len(sig)), support - 1] / support
    out = np.maximum(sig - theta[:, None], 0.0)
    out[inside] = sig[inside]
    return out


def _project_nuclear_batch(values, radius):
    """Project each slice of a (K, q, c) stack onto the nuclear-norm ball."""
    U, s, Vt = np.linalg.svd(values, full_matrices=False)
    s_proj = _project_l1_rows(s, radius)
    return np.einsum("kij,kj,kjl->kil", U, s_proj, Vt)


def project_nuclear_ball(X, radius):
    """Nearest matrix (Frobenius) with nuclear norm at most ``radius``.

    Works for real or complex input: the singular-value vector is projected
    onto the l1 ball and the factors are reassembled.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    X = np.asarray(X)
    if radius == 0:
        return np.zeros_like(X)
    return _project_nuclear_batch(X[None], radius)[0]


def project_frobenius_ball(X, center, radius):
    """Project X onto the Frobenius ball of given radius around ``center``."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    X = np.asarray(X, dtype=float)
    diff = X - center
    nrm = np.linalg.norm(diff)
    if not np.isfinite(radius) or nrm <= radius:
        return X.copy()
    return center + diff * (radius / nrm)


def _half_grid(K):
    """Representative frequencies of the full-circle grid plus pair weights."""
    omegas = uniform_grid(K)
    kh = K // 2 + 1 if K % 2 == 0 else (K + 1) // 2
    weights = np.full(kh, 2.0)
    weights[0] = 1.0
    if K % 2 == 0:
        weights[-1] = 1.0
    return omegas[:kh], weights


class _Splitting:
    """Shared consensus engine; ``W=None`` runs the robust program."""

    def __init__(self, Y, V, W, delta, delta_h, cfg, block_cols):
        self.Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.V = np.atleast_2d(np.asarray(V, dtype=float))
        self.cfg = cfg
        self.delta = float(delta)
        self.delta_h = None if delta_h is None else float(delta_h)
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.delta_h is not None and self.delta_h < 0:
            raise ValueError("delta_h must be >= 0")
        q, cols = self.Y.shape
        if self.V.shape[1] != cols:
            raise ValueError("Y and V must have the same number of columns")
        self.c = int(block_cols)
        if self.c <= 0 or self.V.shape[0] % self.c:
            raise ValueError("V rows must be a multiple of block_cols")
        self.L = self.V.shape[0] // self.c - 1
        self.q = q
        self.n_rows_hankel = default_hankel_rows(self.L)

        self.W = None if W is None else np.atleast_2d(np.asarray(W, dtype=float))
        if self.W is not None:
            if self.W.shape[1] != cols:
                raise ValueError("W must have the same number of columns as Y")
            if self.W.shape[0] % (self.L + 1):
                raise ValueError("W rows must be a multiple of r+1")
            self.d = self.W.shape[0] // (self.L + 1)
            K = cfg.freq_grid_size if cfg.freq_grid_size is not None else cols - 1
            if K < 1:
                raise ValueError("frequency grid size must be >= 1")
            self.K = int(K)
            self.om_half, self.wts = _half_grid(self.K)
            # (L+1, kh) sampling matrix of the hidden channel's DFT
            self.E = np.exp(-1j * np.outer(np.arange(self.L + 1), self.om_half))
        else:
            self.d = 0
            self.K = 0

    # -- lifting helpers -----------------------------------------------------

    def _hankel_of(self, S):
        return hankel(BlockSequence.from_matrix(S, self.c), self.n_rows_hankel)

    def _hankel_adj(self, Z):
        return hankel_adjoint(Z, (self.q, self.c), self.L, self.n_rows_hankel).to_matrix()

    def _dft(self, H):
        blocks = H.reshape(self.q, self.L + 1, self.d).transpose(1, 0, 2)
        return np.einsum("tqc,tk->kqc", blocks, self.E)

    def _dft_adj(self, Z):
        blocks = np.einsum("kqc,tk->tqc", Z * self.wts[:, None, None], np.conj(self.E)).real
        return blocks.transpose(1, 0, 2).reshape(self.q, (self.L + 1) * self.d)

    def _freq_norm_sq(self, Z):
        return float(np.sum(self.wts * np.sum(np.abs(Z) ** 2, axis=(1, 2))))

    # -- solve ----------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        Y, V, W = self.Y, self.V, self.W
        q, c, L = self.q, self.c, self.L
        ns = V.shape[0]
        norm_Y = np.linalg.norm(Y)
        hidden = W is not None

        # least-squares anchors and residual floor
        if hidden:
            stack = np.vstack([V, W[self.d:]])          # h_0 is pinned to zero
            sol, *_ = np.linalg.lstsq(stack.T, Y.T, rcond=None)
            floor = float(np.linalg.norm(Y - sol.T @ stack))
        else:
            sol, *_ = np.linalg.lstsq(V.T, Y.T, rcond=None)
            floor = float(np.linalg.norm(Y - sol.T @ V))
        anchor_S, *_ = np.linalg.lstsq(V.T, Y.T, rcond=None)
        anchor_S = anchor_S.T
        anchor_res = float(np.linalg.norm(Y - anchor_S @ V))

        feas_slack = cfg.feas_tol * max(self.delta, norm_Y, 1.0)
        if self.delta < floor - feas_slack:
            return self._infeasible_result(floor)

        data_tol = (self.delta * (1 + cfg.feas_tol)
                    if self.delta > 0 else cfg.feas_tol * max(1.0, norm_Y))
        freq_tol = None if not hidden else self.delta_h * (1 + cfg.feas_tol)

        # equality-constrained limit: candidates are projected exactly onto
        # the affine data set so that selection by objective is not skewed by
        # the feasibility slack
        if self.delta == 0:
            eq_pinv = np.linalg.pinv(stack if hidden else V, rcond=1e-12)
        else:
            eq_pinv = None

        rho = cfg.rho
        alpha = cfg.over_relaxation
        dcounts = hankel_block_counts(L, self.n_rows_hankel)
        Dmat = np.kron(np.diag(dcounts), np.eye(c))

        if hidden:
            nh = W.shape[0]
            A_big = np.block([
                [Dmat + V @ V.T, V @ W.T],
                [W @ V.T, W @ W.T + self.K * np.eye(nh)],
            ])
            keep = np.ones(ns + nh, dtype=bool)
            keep[ns:ns + self.d] = False
        else:
            nh = 0
            A_big = Dmat + V @ V.T
            keep = np.ones(ns, dtype=bool)
        A_red = A_big[np.ix_(keep, keep)]
        try:
            cho = sla.cho_factor(A_red)
            solve_normal = lambda rhs: sla.cho_solve(cho, rhs.T).T
        except np.linalg.LinAlgError:
            A_pinv = np.linalg.pinv(A_red)
            solve_normal = lambda rhs: rhs @ A_pinv

        S = np.zeros((q, ns))
        H = np.zeros((q, nh)) if hidden else None
        nr_h = self.n_rows_hankel
        nc_h = L - nr_h + 1
        G = np.zeros((nr_h * q, nc_h * c))
        R = np.zeros_like(Y)
        Ug = np.zeros_like(G)
        Ur = np.zeros_like(R)
        if hidden:
            kh = len(self.om_half)
            Phi = np.zeros((kh, q, self.d), dtype=complex)
            Up = np.zeros_like(Phi)

        z_dim = G.size + R.size + (2 * Phi.size if hidden else 0)
        x_dim = S.size + (H.size if hidden else 0)

        best_obj = math.inf
        best = None
        last_feas = None
        trace = []
        status = "max_iters"
        message = ""
        it = 0
        for it in range(1, cfg.max_iters + 1):
            # (S, H) step: ridge-free least squares against the consensus targets
            T = Y - (R - Ur)
            rhs_S = self._hankel_adj(G - Ug) + T @ V.T
            if hidden:
                rhs_H = T @ W.T + self._dft_adj(Phi - Up)
                sol = solve_normal(np.hstack([rhs_S, rhs_H])[:, keep])
                S = sol[:, :ns]
                H = np.zeros((q, nh))
                H[:, self.d:] = sol[:, ns:]
                res_data = Y - S @ V - H @ W
                FH = self._dft(H)
            else:
                sol = solve_normal(rhs_S[:, keep])
                S = sol
                res_data = Y - S @ V
            HS = self._hankel_of(S)

            # relaxed consensus inputs
            HS_r = alpha * HS + (1 - alpha) * G
            rd_r = alpha * res_data + (1 - alpha) * R
            G_old, R_old = G, R
            G = svt(HS_r + Ug, 1.0 / rho)
            R = project_frobenius_ball(rd_r + Ur, np.zeros_like(Y), self.delta)
            Ug = Ug + HS_r - G
            Ur = Ur + rd_r - R
            if hidden:
                FH_r = alpha * FH + (1 - alpha) * Phi
                Phi_old = Phi
                Phi = _project_nuclear_batch(FH_r + Up, self.delta_h)
                Up = Up + FH_r - Phi

            # candidate extraction with feasibility repair
            res_raw = float(np.linalg.norm(res_data))
            if self.delta == 0:
                # exact affine correction onto the equality set
                if hidden:
                    combined = np.hstack([S, H[:, self.d:]])
                    combined = combined + (Y - combined @ stack) @ eq_pinv
                    S_c = combined[:, :ns]
                    H_c = np.zeros((q, nh))
                    H_c[:, self.d:] = combined[:, ns:]
                    res_c = float(np.linalg.norm(Y - S_c @ V - H_c @ W))
                    nuc_c = np.linalg.svd(self._dft(H_c), compute_uv=False).sum(axis=1)
                    freq_ok = float(nuc_c.max(initial=0.0)) <= freq_tol + 1e-15
                else:
                    S_c = S + (Y - S @ V) @ eq_pinv
                    H_c = None
                    res_c = float(np.linalg.norm(Y - S_c @ V))
                    freq_ok = True
            else:
                if res_raw <= self.delta:
                    t = 0.0
                elif anchor_res < self.delta and res_raw > anchor_res:
                    t = min(1.0, (res_raw - self.delta) / (res_raw - anchor_res))
                else:
                    t = 0.0
                S_c = S if t == 0.0 else (1 - t) * S + t * anchor_S
                if hidden:
                    nuc_raw = np.linalg.svd(FH, compute_uv=False).sum(axis=1)
                    scale_h = (1 - t)
                    top = scale_h * float(nuc_raw.max(initial=0.0))
                    if self.delta_h > 0 and top > self.delta_h:
                        scale_h *= self.delta_h / top
                    H_c = scale_h * H
                    res_c = float(np.linalg.norm(Y - S_c @ V - H_c @ W))
                    nuc_c = scale_h * nuc_raw
                    freq_ok = float(nuc_c.max(initial=0.0)) <= freq_tol + 1e-15
                else:
                    H_c = None
                    res_c = float(np.linalg.norm(Y - S_c @ V))
                    freq_ok = True
            if res_c <= data_tol and freq_ok:
                obj_c = float(np.linalg.svd(self._hankel_of(S_c), compute_uv=False).sum())
                last_feas = (S_c.copy(), None if H_c is None else H_c.copy(), res_c, obj_c)
                if obj_c < best_obj - 1e-15:
                    best_obj = obj_c
                    best = last_feas

            # residuals, stopping, penalty adaptation
            pri_sq = np.linalg.norm(HS - G) ** 2 + np.linalg.norm(res_data - R) ** 2
            dG = G - G_old
            dR = R - R_old
            dual_S = self._hankel_adj(dG) - dR @ V.T
            dual_sq = np.linalg.norm(dual_S) ** 2
            Fx_sq = np.linalg.norm(HS) ** 2 + res_raw ** 2
            z_sq = np.linalg.norm(G) ** 2 + np.linalg.norm(R) ** 2
            u_map_sq = np.linalg.norm(self._hankel_adj(Ug) - Ur @ V.T) ** 2
            if hidden:
                pri_sq += self._freq_norm_sq(FH - Phi)
                dPhi = Phi - Phi_old
                dual_H = -dR @ W.T + self._dft_adj(dPhi)
                dual_sq += np.linalg.norm(dual_H) ** 2
                Fx_sq += self._freq_norm_sq(FH)
                z_sq += self._freq_norm_sq(Phi)
                u_map_sq += np.linalg.norm(-Ur @ W.T + self._dft_adj(Up)) ** 2
            pri = math.sqrt(pri_sq)
            dual = rho * math.sqrt(dual_sq)
            eps_pri = math.sqrt(z_dim) * cfg.eps_abs + cfg.eps_rel * max(
                math.sqrt(Fx_sq), math.sqrt(z_sq))
            eps_dual = math.sqrt(x_dim) * cfg.eps_abs + cfg.eps_rel * rho * math.sqrt(u_map_sq)

            if it % cfg.trace_every == 0 or it == 1:
                obj_raw = float(np.linalg.svd(HS, compute_uv=False).sum())
                trace.append((it, obj_raw, pri, dual))

            if pri <= eps_pri and dual <= eps_dual and best is not None:
                status = "converged"
                break

            # residual balancing: skip the startup transient (the copies are
            # still leaving their zero initialization) and keep rho in a sane
            # range so one noisy ratio cannot wedge the iteration
            if cfg.adaptive_rho and it >= 50 and it % 10 == 0:
                factor = 0.0
                if pri > 10.0 * dual and dual > 0 and rho < 64.0 * cfg.rho:
                    factor = 2.0
                elif dual > 10.0 * pri and pri > 0 and rho > cfg.rho / 64.0:
                    factor = 0.5
                if factor:
                    rho *= factor
                    Ug /= factor
                    Ur /= factor
                    if hidden:
                        Up /= factor

        if best is None:
            res_last = float(np.linalg.norm(Y - S @ V - (H @ W if hidden else 0.0)))
            chosen = (S, H if hidden else None, res_last, math.inf)
            message = (f"no iterate satisfied the constraints within tolerance "
                       f"(last residual {res_last:.6g}, delta {self.delta:.6g})")
            status = "max_iters" if status != "converged" else status
            feasible = False
        else:
            chosen = best
            feasible = True

        S_fin, H_fin, res_fin, _ = chosen
        return self._package(S_fin, H_fin, res_fin, it, status, message, floor,
                             feasible, np.array(trace))

    # -- result assembly ------------------------------------------------------

    def _package(self, S, H, residual, iterations, status, message, floor,
                 feasible, trace):
        hank_sv = np.linalg.svd(self._hankel_of(S), compute_uv=False)
        objective = float(hank_sv.sum())
        if H is not None:
            om_full = uniform_grid(self.K)
            E_full = np.exp(-1j * np.outer(np.arange(self.L + 1), om_full))
            blocks = H.reshape(self.q, self.L + 1, self.d).transpose(1, 0, 2)
            FH_full = np.einsum("tqc,tk->kqc", blocks, E_full)
            freq_sv = np.linalg.svd(FH_full, compute_uv=False)
        else:
            om_full = None
            freq_sv = None
        return DecompositionResult(
            S=S, H=H, objective=objective, residual=residual,
            hankel_singvals=hank_sv, freq_singvals=freq_sv, omegas=om_full,
            iterations=iterations, status=status, message=message,
            residual_floor=floor, feasible=feasible,
            block_cols=self.c, block_cols_hidden=self.d if H is not None else None,
            trace=trace,
        )

    def _infeasible_result(self, floor):
        # best-effort least-squares point, clearly labelled
        if self.W is not None:
            stack = np.vstack([self.V, self.W[self.d:]])
            sol, *_ = np.linalg.lstsq(stack.T, self.Y.T, rcond=None)
            sol = sol.T
            S = sol[:, :self.V.shape[0]]
            H = np.zeros((self.q, self.W.shape[0]))
            H[:, self.d:] = sol[:, self.V.shape[0]:]
            residual = float(np.linalg.norm(self.Y - S @ self.V - H @ self.W))
        else:
            S, *_ = np.linalg.lstsq(self.V.T, self.Y.T, rcond=None)
            S = S.T
            H = None
            residual = float(np.linalg.norm(self.Y - S @ self.V))
        res = self._package(S, H, residual, 0, "infeasible",
                            f"infeasible (residual floor = {floor:.9g} exceeds delta = {self.delta:.9g})",
                            floor, False, np.zeros((0, 4)))
        return res


def solve_robust(Y, V, delta, cfg=None, *, block_cols):
    """Minimize the Hankel nuclear norm of S subject to ||Y - S V||_F <= delta."""
    cfg = cfg or SolverConfig()
    return _Splitting(Y, V, None, delta, None, cfg, block_cols).run()


def solve_hidden(Y, V, W, delta, delta_h, cfg=None, *, block_cols):
    """Decompose Y into S V + H W with rank-limited hidden frequency content.

    ``W`` stacks lags of the widened regressor [v; u_remote]; the hidden
    component's leading block h_0 is pinned to zero.  ``delta_h = 0`` forces
    H = 0 and reduces to :func:`solve_robust`.
    """
    cfg = cfg or SolverConfig()
    if delta_h == 0:
        base = _Splitting(Y, V, None, delta, None, cfg, block_cols).run()
        return _attach_zero_hidden(base, np.atleast_2d(np.asarray(W)).shape[0], cfg,
                                   np.atleast_2d(np.asarray(Y)).shape[1] - 1)
    return _Splitting(Y, V, W, delta, delta_h, cfg, block_cols).run()


def solve_hidden_local(Y, V, delta, delta_h, cfg=None, *, block_cols):
    """Local variant: the hidden component rides on the same regressor V.

    The stacked data constraint collapses to ||Y - (S + H) V||_F <= delta and
    H shares S's block layout.
    """
    cfg = cfg or SolverConfig()
    if delta_h == 0:
        base = _Splitting(Y, V, None, delta, None, cfg, block_cols).run()
        return _attach_zero_hidden(base, np.atleast_2d(np.asarray(V)).shape[0], cfg,
                                   np.atleast_2d(np.asarray(Y)).shape[1] - 1)
    return _Splitting(Y, np.asarray(V), np.asarray(V), delta, delta_h, cfg, block_cols).run()


def _attach_zero_hidden(result, hidden_rows, cfg, default_K):
    """Augment a robust solve with an identically zero hidden component."""
    q = result.S.shape[0]
    L1 = result.S.shape[1] // result.block_cols
    d = hidden_rows // L1
    K = cfg.freq_grid_size if cfg.freq_grid_size is not None else default_K
    result.H = np.zeros((q, hidden_rows))
    result.block_cols_hidden = d
    result.omegas = uniform_grid(K)
    result.freq_singvals = np.zeros((K, min(q, d)))
    return result
