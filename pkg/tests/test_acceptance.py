"""Acceptance gate: each numbered criterion runs at its stated tolerance and
prints one PASS/FAIL line.

Criterion 3's per-frequency rank-purity check and criterion 6's benchmark
eigenvalue check are known not to hold for this problem class at the pinned
program parameters; they are asserted faithfully rather than weakened, so
their failures are expected and documented (see README, "Known limitations").
"""

import time

import numpy as np
import pytest

from conftest import markov_blocks, random_stable_system
from test_decomp_solver import grid_oracle, tiny_instance
from locsysid import netsim
from locsysid.datamat import (
    build_regressors,
    dft_adjoint,
    dft_slices,
    hankel,
    hankel_adjoint,
    uniform_grid,
)
from locsysid.decomp_solver import (
    SolverConfig,
    project_frobenius_ball,
    project_nuclear_ball,
    solve_robust,
    svt,
)
from locsysid.harness import HIDDEN_RANK_GRID, run_repro
from locsysid.ident_full import identify_exact
from locsysid.realization import estimate_order, ho_kalman

CHAIN_A11_EIGS = np.linalg.eigvals(np.array([
    [0.2839, 0.2125, -0.3097],
    [0.1528, -0.3525, 0.2400],
    [0.0183, -0.1709, -0.0109],
]))


def check(name, passed, detail):
    print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", flush=True)
    return passed


@pytest.fixture(scope="module")
def repro(tmp_path_factory):
    out = tmp_path_factory.mktemp("repro")
    return run_repro(out_dir=str(out), seeds=(0, 1, 2, 3, 4))


def test_criterion_1_exact_recovery():
    t0 = time.monotonic()
    sys_ = netsim.paper_chain("full", sigma_w=0.0, sigma_nu=0.0, sigma_nubar=0.0)
    N, M, r = 600, 300, 21
    traj = netsim.simulate(sys_, netsim.white_inputs(sys_, N, seed=0), N, seed=0)
    reg = build_regressors(traj, 0, N, M, r)
    est = identify_exact(reg.Y, reg.V, block_cols=reg.block_cols)
    truth = netsim.true_impulse_response(sys_, 0, r).to_matrix()
    rel = np.linalg.norm(est.S - truth) / np.linalg.norm(truth)
    elapsed = time.monotonic() - t0
    ok = check("criterion 1 (exact recovery)", rel <= 1e-6 and elapsed <= 10.0,
               f"relative error {rel:.3e} (<= 1e-6), runtime {elapsed:.1f}s (<= 10s)")
    assert ok


def test_criterion_2_robust_reproduction(repro):
    med_err = repro["bands"]["full_median_error"]["value"]
    med_gap = repro["bands"]["full_hankel_gap"]["value"]
    elapsed = repro["full"]["elapsed_s"]
    ok = True
    ok &= check("criterion 2 error band", med_err <= 0.02,
                f"median ||S_hat - S||_F {med_err:.5f} (<= 0.02)")
    ok &= check("criterion 2 order gap", med_gap >= 10.0,
                f"median sigma_3/sigma_4 {med_gap:.1f} (>= 10)")
    ok &= check("criterion 2 runtime", elapsed <= 300.0,
                f"{elapsed:.0f}s (<= 300s)")
    assert ok


def test_criterion_3_hidden_reproduction(repro):
    med_err = repro["bands"]["hidden_median_error"]["value"]
    med_gap = repro["bands"]["hidden_hankel_gap"]["value"]
    elapsed = repro["hidden"]["elapsed_s"]
    ok = True
    ok &= check("criterion 3 error band", med_err <= 0.2,
                f"median ||S_hat - S||_F {med_err:.5f} (<= 0.2)")
    ok &= check("criterion 3 order gap", med_gap >= 10.0,
                f"median sigma_3/sigma_4 {med_gap:.1f} (>= 10)")
    ok &= check("criterion 3 runtime", elapsed <= 1800.0,
                f"{elapsed:.0f}s (<= 1800s)")
    assert ok


def test_criterion_3_frequency_rank_identification(repro):
    # Known-red check: the verified optimum of the local decomposition
    # program carries slice content beyond the dominant direction at some
    # frequencies, so the strict 0.1 ratio bound fails (see README).
    ok = True
    for dh in HIDDEN_RANK_GRID:
        ratios = repro["hidden"]["ratios"][str(dh)]
        med = float(np.median(ratios))
        ok &= check(f"criterion 3 rank-1 at delta_h={dh}", med <= 0.1,
                    f"median max sigma_2/sigma_1 {med:.4f} (<= 0.1)")
    assert ok


def test_criterion_4_hidden_dimension():
    k_full = netsim.compute_coupling(netsim.paper_chain("full"), 0).hidden_dim
    k_hidden = netsim.compute_coupling(netsim.paper_chain("hidden"), 0).hidden_dim
    ok = check("criterion 4 (hidden dimension)", k_full == 0 and k_hidden == 1,
               f"k_full={k_full} (==0), k_hidden={k_hidden} (==1)")
    assert ok


def test_criterion_5_property_gates():
    rng = np.random.default_rng(12345)
    # adjoint identities over 100 random shapes
    worst_h = worst_d = 0.0
    for _ in range(100):
        q, c, L = rng.integers(1, 5), rng.integers(1, 5), rng.integers(1, 13)
        X = rng.standard_normal((L + 1, q, c))
        n_r = (L + 1) // 2
        Z = rng.standard_normal((n_r * q, (L - n_r + 1) * c))
        lhs = np.sum(hankel(X) * Z)
        rhs = np.sum(X * hankel_adjoint(Z, (q, c), L).blocks)
        worst_h = max(worst_h, abs(lhs - rhs) / max(1.0, abs(lhs)))
        K = int(rng.integers(1, 20))
        om = rng.uniform(0, 2 * np.pi, K)
        Zc = rng.standard_normal((K, q, c)) + 1j * rng.standard_normal((K, q, c))
        lhs = np.sum(np.conj(dft_slices(X, om).values) * Zc).real
        rhs = np.sum(X * dft_adjoint(Zc, om, L).blocks)
        worst_d = max(worst_d, abs(lhs - rhs) / max(1.0, abs(lhs)))
    ok = check("criterion 5 adjoint identities", worst_h <= 1e-10 and worst_d <= 1e-10,
               f"worst hankel {worst_h:.2e}, worst dft {worst_d:.2e} (<= 1e-10)")

    # Parseval on a uniform full-circle grid
    X = rng.standard_normal((10, 2, 3))
    K = 16
    vals = dft_slices(X, uniform_grid(K)).values
    parseval = abs(np.sum(np.abs(vals) ** 2) / K - np.sum(X ** 2))
    ok &= check("criterion 5 parseval", parseval <= 1e-10, f"defect {parseval:.2e} (<= 1e-10)")

    # variational optimality of the proximal/projection primitives
    def variational_margin(point, objective, feasible_of):
        margin = 0.0
        f0 = objective(point)
        for _ in range(1000):
            pert = rng.standard_normal(point.shape)
            cand = feasible_of(point + 1e-3 * pert / np.linalg.norm(pert))
            margin = min(margin, objective(cand) - f0)
        return margin

    X = rng.standard_normal((5, 8))
    tau = 0.3
    out = svt(X, tau)
    m1 = variational_margin(
        out,
        lambda Z: tau * np.linalg.svd(Z, compute_uv=False).sum()
        + 0.5 * np.linalg.norm(Z - X) ** 2,
        lambda Z: Z,
    )
    out2 = project_nuclear_ball(X, 1.0)
    m2 = variational_margin(
        out2, lambda Z: np.linalg.norm(Z - X) ** 2,
        lambda Z: project_nuclear_ball(Z, 1.0),
    )
    center = rng.standard_normal((5, 8))
    out3 = project_frobenius_ball(X, center, 0.8)
    m3 = variational_margin(
        out3, lambda Z: np.linalg.norm(Z - X) ** 2,
        lambda Z: project_frobenius_ball(Z, center, 0.8),
    )
    worst = min(m1, m2, m3)
    ok &= check("criterion 5 prox optimality", worst >= -1e-9,
                f"worst perturbation improvement {worst:.2e} (>= -1e-9)")

    # brute-force grid oracle on the tiny instance
    Y, V, _, _ = tiny_instance()
    floor = np.linalg.norm(Y - Y @ np.linalg.pinv(V) @ V)
    delta = 2.0 * floor + 0.05
    obj_grid, _ = grid_oracle(Y, V, delta)
    res = solve_robust(Y, V, delta, SolverConfig(eps_abs=1e-9, eps_rel=1e-8,
                                                 max_iters=30000), block_cols=1)
    gap = abs(res.objective - obj_grid)
    ok &= check("criterion 5 grid oracle", gap <= 1e-3,
                f"|objective - oracle| {gap:.2e} (<= 1e-3)")
    assert ok


def test_criterion_6_realization_roundtrip():
    ok = True
    for n in range(1, 6):
        A, B, C, D = random_stable_system(n, 2, 2, seed=100 + n)
        blocks = markov_blocks(A, B, C, D, 30)
        est = estimate_order(blocks)
        model = ho_kalman(blocks, n)
        e_true = np.linalg.eigvals(A)
        e_hat = np.linalg.eigvals(model.A)
        dist = max(min(abs(et - eh) for eh in e_hat) for et in e_true)
        ok &= est.order == n and dist <= 1e-8
    ok = check("criterion 6 realization round trip", ok,
               "orders 1..5 exact, eigenvalue error <= 1e-8")
    assert ok


def test_criterion_6_benchmark_eigenvalues(repro):
    # Known-red check: the achievable impulse-response error at the pinned
    # program parameters (~0.19 vs the published 0.093) propagates into the
    # realized eigenvalues, which land ~0.15 from the truth (see README).
    dists = []
    for blocks in repro["artifacts"]["hidden_estimates"]:
        model = ho_kalman(np.asarray(blocks), 3)
        e_hat = np.linalg.eigvals(model.A)
        dists.append(max(min(abs(et - eh) for eh in e_hat) for et in CHAIN_A11_EIGS))
    med = float(np.median(dists))
    ok = check("criterion 6 benchmark eigenvalues", med <= 0.05,
               f"median eigenvalue distance {med:.4f} (<= 0.05)")
    assert ok
