"""Config-driven experiment harness: single runs, parameter sweeps, and the
bundled chain-benchmark reproduction with its acceptance bands."""

from __future__ import annotations

import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import decomp_solver, ident_full, netsim, realization
from .datamat import build_regressors, pe_check

__all__ = [
    "ExperimentConfig",
    "load_system",
    "run_simulate",
    "run_identify",
    "run_sweep",
    "run_repro",
    "REPRO_FULL",
    "REPRO_HIDDEN",
    "HIDDEN_RANK_GRID",
]

_METHODS = ("exact", "robust", "hidden-local", "hidden")


@dataclass
class ExperimentConfig:
    """One experiment: which system, which node, which program, which knobs.

    ``system`` is a path to a JSON network description or the builtin name
    ``paper-chain``; ``measurement`` picks the builtin's interconnection
    sensor variant.  ``method`` defaults to ``robust`` for full measurements
    and ``hidden-local`` for hidden ones.  ``input_std`` is a scalar or one
    value per node; nodes outside ``active_nodes`` receive zero input.
    """

    system: str = "paper-chain"
    measurement: str = "full"
    node: int = 0
    method: str | None = None
    N: int = 600
    M: int = 300
    r: int = 21
    delta: float = 0.5
    delta_h: float = 0.05
    delta_grid: list[float] | None = None
    delta_h_grid: list[float] | None = None
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    input_std: float | list[float] = 1.0
    active_nodes: str | list[int] = "all"
    noise: dict | None = None
    solver: dict = field(default_factory=dict)
    out_dir: str = "out"

    def __post_init__(self):
        if self.N % 2 != 0:
            raise ValueError("N must be even")
        if not self.M < self.N:
            raise ValueError("M must be smaller than N")
        if self.measurement not in ("full", "hidden"):
            raise ValueError("measurement must be 'full' or 'hidden'")
        if self.method is not None and self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    @property
    def resolved_method(self):
        if self.method is not None:
            return self.method
        return "robust" if self.measurement == "full" else "hidden-local"

    def solver_config(self):
        return decomp_solver.SolverConfig(**self.solver)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_dict(self):
        out = dict(self.__dict__)
        out["method"] = self.resolved_method
        return out


def load_system(cfg):
    """Materialize the network named by the config, applying noise overrides."""
    noise = cfg.noise or {}
    if cfg.system == "paper-chain":
        sys_ = netsim.paper_chain(
            measurement=cfg.measurement,
            sigma_w=noise.get("w", 0.01),
            sigma_nu=noise.get("nu", 0.01),
            sigma_nubar=noise.get("nubar", 0.01),
        )
    else:
        with open(cfg.system) as fh:
            spec = json.load(fh)
        if noise:
            spec["noise"] = {**spec.get("noise", {}), **noise}
        sys_ = netsim.build_network(spec)
    return sys_


def _inputs_for(cfg, sys_, seed):
    dims = [node.p for node in sys_.nodes]
    active = range(len(dims)) if cfg.active_nodes == "all" else cfg.active_nodes
    active = set(active)
    stds = np.broadcast_to(np.asarray(cfg.input_std, dtype=float), (len(dims),)).copy()
    for i in range(len(dims)):
        if i not in active:
            stds[i] = 0.0
    return netsim.white_inputs(dims, cfg.N, seed, std=stds)


def _simulate(cfg, sys_, seed):
    return netsim.simulate(sys_, _inputs_for(cfg, sys_, seed), cfg.N, seed)


def _atomic_write(path, text):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_simulate(cfg, out_dir=None, seed=None):
    """Simulate once and write the trajectory CSV plus a metadata JSON."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    sys_ = load_system(cfg)
    seed = cfg.seeds[0] if seed is None else seed
    traj = _simulate(cfg, sys_, seed)
    csv_path = os.path.join(out_dir, f"trajectory_seed{seed}.csv")
    traj.to_csv(csv_path)
    meta = {
        "seed": seed,
        "horizon": cfg.N,
        "spec_hash": sys_.spec_hash(),
        "spectral_radius": sys_.spectral_radius,
        "config": cfg.to_dict(),
    }
    meta_path = os.path.join(out_dir, f"trajectory_seed{seed}.json")
    _atomic_write(meta_path, json.dumps(meta, indent=2))
    return {"csv": csv_path, "metadata": meta_path}


def _truth_blocks(sys_, cfg):
    try:
        truth = netsim.true_impulse_response(sys_, cfg.node, cfg.r, allow_hidden=True)
    except Exception:
        return None
    return truth.to_matrix()


def _solve(cfg, reg):
    method = cfg.resolved_method
    scfg = cfg.solver_config()
    if method == "exact":
        est = ident_full.identify_exact(reg.Y, reg.V, block_cols=reg.block_cols)
        return est, est.solver
    if method == "robust":
        est = ident_full.identify_robust(reg.Y, reg.V, cfg.delta, scfg, block_cols=reg.block_cols)
        return est, est.solver
    if method == "hidden-local":
        result = decomp_solver.solve_hidden_local(
            reg.Y, reg.V, cfg.delta, cfg.delta_h, scfg, block_cols=reg.block_cols)
    else:
        result = decomp_solver.solve_hidden(
            reg.Y, reg.V, reg.W, cfg.delta, cfg.delta_h, scfg, block_cols=reg.block_cols)
    est = ident_full.ImpulseEstimate(
        S=result.S, block_cols=reg.block_cols, Y=reg.Y, V=reg.V,
        rank_V=-1, cond_V=float("nan"), identifiable=True,
        hankel_singvals=result.hankel_singvals, solver=result,
    )
    return est, result


def run_identify(cfg, out_dir=None, seed=None, write=True):
    """Full pipeline: simulate, build regressors, check excitation, solve,
    realize, and report.

    Returns the report dict; ``report["ok"]`` is False on an excitation
    failure in exact mode or a non-converged solver.
    """
    out_dir = out_dir or cfg.out_dir
    sys_ = load_system(cfg)
    seed = cfg.seeds[0] if seed is None else seed
    traj = _simulate(cfg, sys_, seed)
    reg = build_regressors(traj, cfg.node, cfg.N, cfg.M, cfg.r,
                           include_remote=cfg.resolved_method == "hidden")
    diag = pe_check(reg)
    report = {
        "config": cfg.to_dict(),
        "seed": seed,
        "system": {
            "spec_hash": sys_.spec_hash(),
            "spectral_radius": sys_.spectral_radius,
            "hidden_dim": netsim.compute_coupling(sys_, cfg.node).hidden_dim,
        },
        "pe": {
            "u_rank": diag.u_rank, "u_rows": diag.u_rows, "u_cond": diag.u_cond,
            "zproj_rank": diag.zproj_rank, "z_rows": diag.z_rows,
            "v_rank": diag.v_rank, "v_rows": diag.v_rows, "v_cond": diag.v_cond,
            "passed": diag.passed,
        },
        "ok": True,
    }
    if cfg.resolved_method == "exact" and not diag.passed:
        report["ok"] = False
        report["error"] = "persistence-of-excitation check failed in exact mode"
        if write:
            _write_report(report, out_dir, seed)
        return report

    est, solver_result = _solve(cfg, reg)
    report["estimate"] = est.to_report_dict()
    if solver_result is not None:
        report["solver"] = {
            "status": solver_result.status,
            "message": solver_result.message,
            "iterations": solver_result.iterations,
            "objective": solver_result.objective,
            "residual": solver_result.residual,
            "residual_floor": solver_result.residual_floor,
            "feasible": solver_result.feasible,
        }
        if solver_result.freq_singvals is not None:
            sv = solver_result.freq_singvals
            if sv.shape[1] > 1:
                sigma2 = sv[:, 1]
                ratios = sigma2 / np.maximum(sv[:, 0], 1e-300)
            else:
                sigma2 = np.zeros(len(sv))
                ratios = np.zeros(len(sv))
            report["hidden_component"] = {
                "freq_max_nuclear": float(sv.sum(axis=1).max(initial=0.0)),
                "freq_max_sigma2": float(sigma2.max(initial=0.0)),
                "freq_max_sigma2_ratio": float(ratios.max(initial=0.0)),
                "freq_rank1_everywhere": bool((ratios <= 0.1).all()),
            }
        if not solver_result.converged and solver_result.status != "converged":
            report["ok"] = solver_result.feasible

    truth = _truth_blocks(sys_, cfg)
    if truth is not None and truth.shape == est.S.shape:
        err = float(np.linalg.norm(est.S - truth))
        p = sys_.nodes[cfg.node].p
        du = est.blocks().blocks[:, :, :p] - netsim.true_impulse_response(
            sys_, cfg.node, cfg.r, allow_hidden=True).blocks[:, :, :p]
        report["truth"] = {
            "available": True,
            "error_fro": err,
            "error_rel": err / float(np.linalg.norm(truth)),
            "error_input_cols": float(np.linalg.norm(du)),
            "norm_fro": float(np.linalg.norm(truth)),
        }
    else:
        report["truth"] = {"available": False}

    order = realization.estimate_order(est)
    real_entry = {
        "order": order.order,
        "confident": order.confident,
        "gap": order.gap if np.isfinite(order.gap) else None,
    }
    if order.order >= 1 and est.n_blocks >= 3:
        model = realization.ho_kalman(est, order.order)
        real_entry.update({
            "eigenvalues": [[ev.real, ev.imag] for ev in np.linalg.eigvals(model.A)],
            "markov_fit": model.fit_error,
            "spectral_radius": model.spectral_radius,
        })
    report["realization"] = real_entry

    if write:
        if solver_result is not None and solver_result.trace.size:
            os.makedirs(out_dir, exist_ok=True)
            trace_path = os.path.join(out_dir, f"trace_seed{seed}.csv")
            solver_result.trace_to_csv(trace_path)
            report.setdefault("outputs", {})["trace_csv"] = trace_path
        _write_report(report, out_dir, seed)
    return report


def _write_report(report, out_dir, seed):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"report_seed{seed}.json")
    _atomic_write(path, json.dumps(report, indent=2))
    report.setdefault("outputs", {})["report_json"] = path


def _sweep_cell(args):
    cfg_dict, delta, delta_h, seed = args
    cfg = ExperimentConfig(**{**cfg_dict, "delta": delta, "delta_h": delta_h,
                              "seeds": [seed]})
    try:
        report = run_identify(cfg, write=False, seed=seed)
        sv = report["estimate"]["hankel_singular_values"]
        sv = (sv + [0.0] * 6)[:6]
        hid = report.get("hidden_component", {})
        err = report.get("truth", {}).get("error_fro", float("nan"))
        return {
            "delta": delta, "delta_h": delta_h, "seed": seed,
            "singvals": sv,
            "freq_max_sigma2": hid.get("freq_max_sigma2", 0.0),
            "error_fro": err,
            "status": report.get("solver", {}).get("status", "ok"),
        }
    except Exception as exc:   # record, keep sweeping
        return {"delta": delta, "delta_h": delta_h, "seed": seed,
                "singvals": [float("nan")] * 6, "freq_max_sigma2": float("nan"),
                "error_fro": float("nan"), "status": f"error: {exc}"}


def run_sweep(cfg, out_dir=None, workers=1):
    """One solve per (delta, delta_h) grid cell; rows stream to a CSV table.

    Cell failures are recorded in the status column and do not stop the
    sweep.  Every cell runs the first configured seed.
    """
    out_dir = out_dir or cfg.out_dir
    deltas = cfg.delta_grid if cfg.delta_grid is not None else [cfg.delta]
    delta_hs = cfg.delta_h_grid if cfg.delta_h_grid is not None else [cfg.delta_h]
    if not deltas or not delta_hs:
        raise ValueError("sweep grids must be nonempty")
    seed = cfg.seeds[0]
    base = cfg.to_dict()
    base.pop("delta_grid", None)
    base.pop("delta_h_grid", None)
    cells = [(dict(base), d, dh, seed) for d in deltas for dh in delta_hs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(cell) for cell in cells]

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "sweep.csv")
    header = ("delta,delta_h,seed,sigma_1,sigma_2,sigma_3,sigma_4,sigma_5,sigma_6,"
              "max_freq_sigma2,error_fro,status")
    lines = [header]
    for row in rows:
        fields = ([f"{row['delta']:.17g}", f"{row['delta_h']:.17g}", str(row["seed"])]
                  + [f"{v:.17g}" for v in row["singvals"]]
                  + [f"{row['freq_max_sigma2']:.17g}", f"{row['error_fro']:.17g}",
                     str(row["status"]).replace(",", ";")])
        lines.append(",".join(fields))
    _atomic_write(path, "\n".join(lines) + "\n")
    return {"csv": path, "rows": rows}


# ---------------------------------------------------------------------------
# Benchmark reproduction: frozen configurations and result bands.
#
# The source experiments do not state the probing-input amplitude; these
# values are calibrated so the published error levels are met (strong
# excitation for the full-measurement run, moderate excitation for the hidden
# run where the data-consistency radius 4.5 must exceed the leakage floor).
# The hidden headline runs are solved to tight tolerance because the result
# band inspects the fourth Hankel singular value, which keeps sharpening well
# past the default stopping point.

REPRO_FULL = dict(measurement="full", method="robust", delta=0.5, input_std=5.0)
REPRO_HIDDEN = dict(measurement="hidden", method="hidden-local", delta=4.5,
                    delta_h=0.05, input_std=1.8)
REPRO_HIDDEN_SOLVER = dict(eps_abs=1e-8, eps_rel=1e-6, max_iters=40000)
HIDDEN_RANK_GRID = (0.01, 0.05, 0.10, 0.15)

_BANDS = {
    "full_median_error": 0.02,
    "hidden_median_error": 0.2,
    "hankel_gap": 10.0,
    "freq_sigma2_ratio": 0.1,
}


def _hankel_gap(singvals):
    sv = np.asarray(singvals)
    if len(sv) < 4 or sv[3] == 0:
        return float("inf")
    return float(sv[2] / sv[3])


def run_repro(out_dir="out", seeds=(0, 1, 2, 3, 4), solver=None, progress=print):
    """Re-run both bundled chain experiments and check their result bands.

    Returns a summary dict with per-band pass/fail; medians are taken over
    the seed list.  The per-frequency rank-purity band of the hidden run is
    known not to hold for the local program (see README) and is reported
    honestly.
    """
    seeds = list(seeds)
    solver = solver or {}
    t0 = time.time()

    full_cfg = ExperimentConfig(seeds=seeds, solver=solver, out_dir=out_dir, **REPRO_FULL)
    full_runs = []
    for seed in seeds:
        rep = run_identify(full_cfg, out_dir=None, seed=seed, write=False)
        full_runs.append(rep)
        progress(f"full seed {seed}: error {rep['truth']['error_fro']:.5f}, "
                 f"order {rep['realization']['order']}")
    full_errs = [r["truth"]["error_fro"] for r in full_runs]
    full_gaps = [_hankel_gap(r["estimate"]["hankel_singular_values"]) for r in full_runs]
    t_full = time.time() - t0

    hidden_results = {}
    for dh in HIDDEN_RANK_GRID:
        # the headline point carries the error and gap bands: solve it tight
        cell_solver = {**REPRO_HIDDEN_SOLVER, **solver} if dh == REPRO_HIDDEN["delta_h"] else solver
        cfg = ExperimentConfig(seeds=seeds, solver=cell_solver, out_dir=out_dir,
                               **{**REPRO_HIDDEN, "delta_h": dh})
        runs = []
        for seed in seeds:
            rep = run_identify(cfg, out_dir=None, seed=seed, write=False)
            runs.append(rep)
            progress(f"hidden seed {seed} delta_h {dh}: "
                     f"error {rep['truth']['error_fro']:.5f}, "
                     f"max freq ratio {rep['hidden_component']['freq_max_sigma2_ratio']:.4f}")
        hidden_results[dh] = runs

    t_hidden = time.time() - t0 - t_full
    headline = hidden_results[REPRO_HIDDEN["delta_h"]]
    hid_errs = [r["truth"]["error_fro"] for r in headline]
    hid_gaps = [_hankel_gap(r["estimate"]["hankel_singular_values"]) for r in headline]
    rank_ratio = {
        dh: float(np.median([r["hidden_component"]["freq_max_sigma2_ratio"] for r in runs]))
        for dh, runs in hidden_results.items()
    }
    ratio_detail = {
        dh: [r["hidden_component"]["freq_max_sigma2_ratio"] for r in runs]
        for dh, runs in hidden_results.items()
    }

    checks = {
        "full_median_error": (float(np.median(full_errs)), _BANDS["full_median_error"]),
        "full_hankel_gap": (float(np.median(full_gaps)), _BANDS["hankel_gap"]),
        "hidden_median_error": (float(np.median(hid_errs)), _BANDS["hidden_median_error"]),
        "hidden_hankel_gap": (float(np.median(hid_gaps)), _BANDS["hankel_gap"]),
    }
    summary = {
        "seeds": seeds,
        "bands": {},
        "full": {"errors": full_errs, "gaps": full_gaps,
                 "orders": [r["realization"]["order"] for r in full_runs],
                 "elapsed_s": t_full},
        "hidden": {"errors": hid_errs, "gaps": hid_gaps,
                   "ratios": {str(dh): vals for dh, vals in ratio_detail.items()},
                   "elapsed_s": t_hidden},
        "elapsed_s": 0.0,
    }
    ok = True
    for name, (value, band) in checks.items():
        passed = value >= band if "gap" in name else value <= band
        summary["bands"][name] = {"value": value, "band": band, "passed": bool(passed)}
        ok &= passed
        progress(f"{'PASS' if passed else 'FAIL'} {name}: {value:.5g} vs band {band}")
    for dh, ratio in rank_ratio.items():
        passed = ratio <= _BANDS["freq_sigma2_ratio"]
        summary["bands"][f"hidden_rank1_delta_h_{dh}"] = {
            "value": ratio, "band": _BANDS["freq_sigma2_ratio"], "passed": bool(passed)}
        ok &= passed
        progress(f"{'PASS' if passed else 'FAIL'} hidden rank-1 at delta_h={dh}: "
                 f"median max ratio {ratio:.4f} vs 0.1")
    summary["passed"] = bool(ok)
    summary["elapsed_s"] = time.time() - t0

    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(os.path.join(out_dir, "repro_summary.json"),
                  json.dumps(summary, indent=2))
    # non-serializable extras for in-process consumers (kept out of the JSON)
    summary["artifacts"] = {
        "hidden_estimates": [np.asarray(r["estimate"]["impulse_blocks"]) for r in headline],
        "full_estimates": [np.asarray(r["estimate"]["impulse_blocks"]) for r in full_runs],
    }
    return summary
