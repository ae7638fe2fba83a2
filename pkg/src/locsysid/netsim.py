"""Construction and simulation of sparsely interconnected linear networks.

A network is a collection of discrete-time LTI subsystems coupled along a
directed interaction graph:

    x^i_{t+1} = A_ii x^i_t + sum_{j in N_i} A_ij x^j_t + B_i u^i_t + w^i_t
    y^i_t     = C_i x^i_t + D_i u^i_t + nu^i_t
    z^i_t     = Cbar_i xbar^i_t + nubar^i_t

where ``xbar^i`` stacks the states of node i's neighbors and ``z^i`` are the
interconnection observations available at node i.  All noise processes are
i.i.d. centered Gaussian with per-channel standard deviations recorded in
:class:`NoiseSpec`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ._numeric import RANK_RTOL, numerical_rank
from .datamat import BlockSequence

__all__ = [
    "NoiseSpec",
    "Subsystem",
    "NetworkSystem",
    "Trajectory",
    "CouplingMap",
    "build_network",
    "simulate",
    "white_inputs",
    "compute_coupling",
    "true_impulse_response",
    "paper_chain",
]

# spawn keys for the per-(signal kind, node) RNG streams
_KIND_INPUT = 0
_KIND_PROCESS = 1
_KIND_OUTPUT = 2
_KIND_INTERCONN = 3


def _stream(seed, kind, node):
    """Independent, reproducible generator for one (signal kind, node) pair."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(kind, node)))


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NoiseSpec:
    """Per-channel noise standard deviations (signal-amplitude units).

    ``w_cov`` optionally replaces the diagonal process-noise model with a full
    covariance over the stacked state; ``w`` is ignored when it is given.
    """

    w: float = 0.0
    nu: float = 0.0
    nubar: float = 0.0
    w_cov: np.ndarray | None = None

    def __post_init__(self):
        for name in ("w", "nu", "nubar"):
            if getattr(self, name) < 0:
                raise ValueError(f"noise std {name!r} must be >= 0")
        if self.w_cov is not None:
            object.__setattr__(self, "w_cov", _freeze(self.w_cov))


@dataclass(frozen=True)
class Subsystem:
    """One node: local dynamics, readout, and interconnection sensors."""

    A: np.ndarray        # n x n
    B: np.ndarray        # n x p
    C: np.ndarray        # q x n
    D: np.ndarray        # q x p
    Cbar: np.ndarray     # m x (sum of neighbor state dims)

    def __post_init__(self):
        for name in ("A", "B", "C", "D", "Cbar"):
            object.__setattr__(self, name, _freeze(np.atleast_2d(getattr(self, name))))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def q(self):
        return self.C.shape[0]

    @property
    def m(self):
        return self.Cbar.shape[0]


@dataclass(frozen=True)
class NetworkSystem:
    """Validated block-structured network.

    ``edges`` maps a directed pair (i, j) to the coupling block A_ij, meaning
    node j's state enters node i's dynamics.  Neighbor states are always
    stacked in increasing node order, and ``Cbar_i`` columns follow the same
    order.
    """

    nodes: tuple[Subsystem, ...]
    edges: dict[tuple[int, int], np.ndarray]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    spectral_radius: float = 0.0

    @property
    def n_nodes(self):
        return len(self.nodes)

    def neighbors(self, i):
        """Sorted neighbor indices of node i."""
        return tuple(sorted(j for (a, j) in self.edges if a == i))

    def state_slices(self):
        """Per-node slices into the stacked global state vector."""
        out, start = [], 0
        for node in self.nodes:
            out.append(slice(start, start + node.n))
            start += node.n
        return out

    @property
    def total_state_dim(self):
        return sum(node.n for node in self.nodes)

    def coupling_blocks(self, i):
        """[A_ij1, A_ij2, ...] concatenated over sorted neighbors of node i."""
        nbrs = self.neighbors(i)
        if not nbrs:
            return np.zeros((self.nodes[i].n, 0))
        return np.hstack([self.edges[(i, j)] for j in nbrs])

    def global_matrices(self):
        """Assemble the stacked (A, B) of the whole network."""
        slices = self.state_slices()
        n_tot = self.total_state_dim
        p_tot = sum(node.p for node in self.nodes)
        A = np.zeros((n_tot, n_tot))
        B = np.zeros((n_tot, p_tot))
        col = 0
        for i, node in enumerate(self.nodes):
            A[slices[i], slices[i]] = node.A
            B[slices[i], col:col + node.p] = node.B
            col += node.p
        for (i, j), block in self.edges.items():
            A[slices[i], slices[j]] = block
        return A, B

    def to_dict(self):
        """JSON-ready representation (row-major nested lists)."""
        return {
            "nodes": [
                {
                    "n": node.n, "p": node.p, "q": node.q, "m": node.m,
                    "A": node.A.tolist(), "B": node.B.tolist(),
                    "C": node.C.tolist(), "D": node.D.tolist(),
                    "Cbar": node.Cbar.tolist(),
                }
                for node in self.nodes
            ],
            "edges": [
                {"i": i, "j": j, "Aij": block.tolist()}
                for (i, j), block in sorted(self.edges.items())
            ],
            "noise": {
                "w": self.noise.w, "nu": self.noise.nu, "nubar": self.noise.nubar,
                **({"w_cov": self.noise.w_cov.tolist()} if self.noise.w_cov is not None else {}),
            },
        }

    def spec_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Trajectory:
    """Immutable per-node time series over t = 0..horizon."""

    horizon: int
    seed: int | None
    u: tuple[np.ndarray, ...]
    x: tuple[np.ndarray, ...]
    y: tuple[np.ndarray, ...]
    z: tuple[np.ndarray, ...]

    def __post_init__(self):
        for name in ("u", "x", "y", "z"):
            series = tuple(_freeze(s) for s in getattr(self, name))
            object.__setattr__(self, name, series)
            for s in series:
                if s.shape[0] != self.horizon + 1:
                    raise ValueError(f"{name} series must have horizon+1 samples")

    def column_names(self):
        names = []
        for kind in ("u", "y", "z"):
            for i, series in enumerate(getattr(self, kind)):
                names.extend(f"{kind}{i + 1}_{c}" for c in range(series.shape[1]))
        return names

    def to_csv(self, path):
        """Write one row per time step: t, then u/y/z channels of every node."""
        header = ",".join(["t"] + self.column_names())
        data = np.hstack([s for kind in ("u", "y", "z") for s in getattr(self, kind)])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for t in range(self.horizon + 1):
                row = ",".join([str(t)] + [f"{v:.17g}" for v in data[t]])
                fh.write(row + "\n")


@dataclass(frozen=True)
class CouplingMap:
    """Least-squares map from interconnection observations to coupling signals.

    ``L`` satisfies sum_j A_ij x^j ~= L z^i whenever the hidden dimension
    ``hidden_dim`` is zero; ``residual_norms[j]`` is the Frobenius norm of the
    part of A_ij that no linear function of the sensors can reproduce.
    """

    node: int
    L: np.ndarray
    residual_norms: dict[int, float]
    hidden_dim: int


def build_network(spec, *, rank_rtol=RANK_RTOL):
    """Validate a structured network description.

    ``spec`` is a dict with keys ``nodes`` (list of block dicts), ``edges``
    (list of ``{"i", "j", "Aij"}``), optional ``graph`` (list of [i, j] pairs
    fixing the admissible edge set) and optional ``noise``.

    Raises ``ValueError`` on dimension mismatches, an edge outside the
    declared graph, an unstable assembled system, or a row-rank-deficient
    local readout C_i.
    """
    if isinstance(spec, NetworkSystem):
        spec = spec.to_dict()

    nodes = []
    for idx, nd in enumerate(spec["nodes"]):
        sub = Subsystem(
            A=np.array(nd["A"], dtype=float),
            B=np.array(nd["B"], dtype=float),
            C=np.array(nd["C"], dtype=float),
            D=np.array(nd["D"], dtype=float),
            Cbar=np.array(nd["Cbar"], dtype=float) if np.size(nd["Cbar"]) else np.zeros((0, 0)),
        )
        for key in ("n", "p", "q", "m"):
            if key in nd and nd[key] != getattr(sub, key):
                raise ValueError(f"node {idx}: declared {key}={nd[key]} but blocks imply {getattr(sub, key)}")
        if sub.A.shape[0] != sub.A.shape[1]:
            raise ValueError(f"node {idx}: A must be square, got {sub.A.shape}")
        if sub.B.shape[0] != sub.n:
            raise ValueError(f"node {idx}: B has {sub.B.shape[0]} rows, expected {sub.n}")
        if sub.C.shape[1] != sub.n:
            raise ValueError(f"node {idx}: C has {sub.C.shape[1]} columns, expected {sub.n}")
        if sub.D.shape != (sub.q, sub.p):
            raise ValueError(f"node {idx}: D must be {sub.q}x{sub.p}, got {sub.D.shape}")
        if sub.q and numerical_rank(sub.C, rtol=rank_rtol) < sub.q:
            raise ValueError(f"node {idx}: C must have full row rank")
        nodes.append(sub)

    edges = {}
    for ed in spec.get("edges", []):
        i, j = int(ed["i"]), int(ed["j"])
        if i == j:
            raise ValueError(f"self-edge ({i}, {i}) is not allowed")
        if not (0 <= i < len(nodes) and 0 <= j < len(nodes)):
            raise ValueError(f"edge ({i}, {j}) references an unknown node")
        block = np.atleast_2d(np.array(ed["Aij"], dtype=float))
        if block.shape != (nodes[i].n, nodes[j].n):
            raise ValueError(
                f"edge ({i}, {j}): block is {block.shape}, expected {(nodes[i].n, nodes[j].n)}"
            )
        if not np.any(block):
            raise ValueError(f"edge ({i}, {j}): coupling block is identically zero")
        edges[(i, j)] = block

    if "graph" in spec and spec["graph"] is not None:
        allowed = {(int(i), int(j)) for i, j in spec["graph"]}
        extra = set(edges) - allowed
        if extra:
            raise ValueError(f"edges {sorted(extra)} are not in the declared graph")
        missing = allowed - set(edges)
        if missing:
            raise ValueError(f"graph edges {sorted(missing)} have no coupling block")

    # Cbar width must match the stacked neighbor state dimension
    for i, node in enumerate(nodes):
        nbr_dim = sum(nodes[j].n for (a, j) in edges if a == i)
        if node.m and node.Cbar.shape[1] != nbr_dim:
            raise ValueError(
                f"node {i}: Cbar has {node.Cbar.shape[1]} columns, "
                f"stacked neighbor states have dimension {nbr_dim}"
            )

    noise_spec = spec.get("noise", {})
    w_cov = noise_spec.get("w_cov")
    noise = NoiseSpec(
        w=float(noise_spec.get("w", 0.0)),
        nu=float(noise_spec.get("nu", 0.0)),
        nubar=float(noise_spec.get("nubar", 0.0)),
        w_cov=np.array(w_cov, dtype=float) if w_cov is not None else None,
    )
    if noise.w_cov is not None:
        n_tot = sum(node.n for node in nodes)
        if noise.w_cov.shape != (n_tot, n_tot):
            raise ValueError("w_cov must match the stacked state dimension")

    sys_tmp = NetworkSystem(nodes=tuple(nodes), edges=edges, noise=noise)
    A, _ = sys_tmp.global_matrices()
    rho = float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0
    if rho >= 1.0:
        raise ValueError(f"assembled system is unstable: spectral radius {rho:.6f} >= 1")
    return NetworkSystem(nodes=tuple(nodes), edges=edges, noise=noise, spectral_radius=rho)


def white_inputs(dims, horizon, seed, std=1.0):
    """I.i.d. centered Gaussian probing inputs, one series per node.

    ``dims`` is a list of input dimensions (or a NetworkSystem), ``std`` a
    scalar or one value per node; a zero std yields an all-zero series.
    Deterministic per seed, with one RNG stream per node.
    """
    if isinstance(dims, NetworkSystem):
        dims = [node.p for node in dims.nodes]
    stds = np.broadcast_to(np.asarray(std, dtype=float), (len(dims),))
    out = {}
    for i, (p, s) in enumerate(zip(dims, stds)):
        series = _stream(seed, _KIND_INPUT, i).standard_normal((horizon + 1, p)) * s
        out[i] = series
    return out


def simulate(sys, inputs, horizon, seed=0):
    """Propagate the network over t = 0..horizon from x_0 = 0.

    ``inputs`` maps node index to an (horizon+1, p_i) array; missing nodes get
    zero input.  Process, output, and interconnection noise are drawn from
    independent per-(kind, node) streams, so enabling one channel never
    perturbs another.  Fixed seed gives a bit-identical trajectory.
    """
    if horizon % 2 != 0:
        raise ValueError("horizon must be even")
    inputs = inputs or {}
    u = []
    for i, node in enumerate(sys.nodes):
        series = inputs.get(i)
        if series is None:
            series = np.zeros((horizon + 1, node.p))
        else:
            series = np.asarray(series, dtype=float)
            if series.shape != (horizon + 1, node.p):
                raise ValueError(
                    f"node {i}: input series must be {(horizon + 1, node.p)}, got {series.shape}"
                )
        u.append(series)

    A, B = sys.global_matrices()
    slices = sys.state_slices()
    n_tot = sys.total_state_dim

    if sys.noise.w_cov is not None:
        chol = np.linalg.cholesky(sys.noise.w_cov)
        raw = _stream(seed, _KIND_PROCESS, 0).standard_normal((horizon + 1, n_tot))
        w = raw @ chol.T
    else:
        w = np.hstack([
            _stream(seed, _KIND_PROCESS, i).standard_normal((horizon + 1, node.n)) * sys.noise.w
            for i, node in enumerate(sys.nodes)
        ]) if n_tot else np.zeros((horizon + 1, 0))

    u_all = np.hstack(u) if u else np.zeros((horizon + 1, 0))
    x = np.zeros((horizon + 1, n_tot))
    for t in range(horizon):
        x[t + 1] = A @ x[t] + B @ u_all[t] + w[t]

    ys, zs = [], []
    for i, node in enumerate(sys.nodes):
        xi = x[:, slices[i]]
        nu = _stream(seed, _KIND_OUTPUT, i).standard_normal((horizon + 1, node.q)) * sys.noise.nu
        ys.append(xi @ node.C.T + u[i] @ node.D.T + nu)
        nbrs = sys.neighbors(i)
        xbar = np.hstack([x[:, slices[j]] for j in nbrs]) if nbrs else np.zeros((horizon + 1, 0))
        nubar = _stream(seed, _KIND_INTERCONN, i).standard_normal((horizon + 1, node.m)) * sys.noise.nubar
        zs.append(xbar @ node.Cbar.T + nubar if node.m else np.zeros((horizon + 1, 0)))

    return Trajectory(
        horizon=horizon, seed=seed,
        u=tuple(u), x=tuple(x[:, s] for s in slices), y=tuple(ys), z=tuple(zs),
    )


def compute_coupling(sys, node, *, rtol=RANK_RTOL):
    """Split node's coupling blocks into a sensor-explained part and a hidden part.

    L is the least-squares solution of [A_ij]_j = L Cbar_i; the hidden
    dimension counts, per neighbor, the rank of the unexplained residual
    (singular values above ``rtol`` times the coupling scale).
    """
    sub = sys.nodes[node]
    nbrs = sys.neighbors(node)
    coupling = sys.coupling_blocks(node)
    if sub.m:
        L = coupling @ np.linalg.pinv(sub.Cbar)
        residual = coupling - L @ sub.Cbar
    else:
        L = np.zeros((sub.n, 0))
        residual = coupling

    residual_norms = {}
    hidden = 0
    col = 0
    for j in nbrs:
        nj = sys.nodes[j].n
        res_j = residual[:, col:col + nj]
        block_j = sys.edges[(node, j)]
        residual_norms[j] = float(np.linalg.norm(res_j))
        hidden += numerical_rank(res_j, rtol=rtol, scale=np.linalg.norm(block_j, 2))
        col += nj
    return CouplingMap(node=node, L=L, residual_norms=residual_norms, hidden_dim=hidden)


def true_impulse_response(sys, node, r, *, allow_hidden=False, rtol=RANK_RTOL):
    """Markov blocks s_0..s_r of node's local map from [u; z] to y.

    s_0 = [D, 0] and s_k = C A_ii^{k-1} [B, L] for k >= 1, with L the coupling
    map from :func:`compute_coupling`.  When hidden interconnection signals
    are present this sequence alone does not explain y; that case raises
    unless ``allow_hidden`` is set (the returned blocks then describe only the
    sensor-explained local component).
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    sub = sys.nodes[node]
    cmap = compute_coupling(sys, node, rtol=rtol)
    if cmap.hidden_dim > 0 and not allow_hidden:
        raise ValueError(
            f"node {node} has hidden interconnection signals (k={cmap.hidden_dim}); "
            "the local impulse response does not explain its outputs"
        )
    b_ext = np.hstack([sub.B, cmap.L])
    blocks = np.empty((r + 1, sub.q, sub.p + sub.m))
    blocks[0] = np.hstack([sub.D, np.zeros((sub.q, sub.m))])
    if r >= 1:
        acc = b_ext
        for k in range(1, r + 1):
            blocks[k] = sub.C @ acc
            acc = sub.A @ acc
    return BlockSequence(blocks)


# ---------------------------------------------------------------------------
# Built-in three-node chain benchmark

_CHAIN_A = np.array([
    [0.2839, 0.2125, -0.3097, 0.1843, 0.0775, -0.1358, 0, 0, 0],
    [0.1528, -0.3525, 0.2400, 0.0976, -0.1246, -0.0821, 0, 0, 0],
    [0.0183, -0.1709, -0.0109, -0.3269, -0.0005, 0.1012, 0, 0, 0],
    [0.0857, 0.3037, -0.1947, 0.0914, 0.3916, 0.3797, 0.0774, -0.0510, 0.2253],
    [-0.1698, -0.1557, -0.1865, 0.2742, 0.2066, -0.5958, 0.3695, 0.1370, -0.4422],
    [0.4134, 0.1407, 0.2100, 0.1776, 0.0653, -0.2677, 0.1827, -0.2593, 0.0085],
    [0, 0, 0, -0.5795, -0.2251, 0.2736, -0.1237, 0.0857, -0.4406],
    [0, 0, 0, -0.0667, -0.0172, 0.1418, 0.2158, 0.2762, 0.2506],
    [0, 0, 0, -0.0787, 0.0360, -0.0661, -0.0605, 0.0366, 0.0962],
])
_CHAIN_B1 = np.array([[0.6394, -0.3201], [0.8742, -0.1374], [1.7524, 0.6158]])
_CHAIN_B2 = np.array([[0.9779, 0.0399], [-1.1153, -2.4828], [-0.5500, 1.1587]])
_CHAIN_B3 = np.array([[-1.0263], [1.1535], [-0.7865]])
_CHAIN_C1 = np.array([[0.6348, -0.1760, -0.1274], [0.8204, 0.5625, 0.5542]])
_CHAIN_D1 = np.array([[-1.0973, 1.4047], [-0.7313, -0.6202]])
_CHAIN_CBAR_FULL = np.array([
    [0.4895, 0.6449, 0.4762],
    [-1.5874, 0.1367, 0.6874],
    [0.8908, 0.1401, 0.9721],
])


def paper_chain(measurement="full", sigma_w=0.01, sigma_nu=0.01, sigma_nubar=0.01):
    """The published three-node chain benchmark.

    Node 0 carries the documented (A11, B1, C1, D1) blocks and observes its
    single neighbor through Cbar; ``measurement`` picks the invertible 3x3
    sensor ("full") or its first two rows ("hidden", one hidden direction).
    Nodes 1 and 2 get identity readouts and full neighbor sensing; only node
    0's identification problem is exercised by the benchmark.
    """
    if measurement not in ("full", "hidden"):
        raise ValueError("measurement must be 'full' or 'hidden'")
    cbar0 = _CHAIN_CBAR_FULL if measurement == "full" else _CHAIN_CBAR_FULL[:2]
    node0 = {
        "A": _CHAIN_A[:3, :3], "B": _CHAIN_B1, "C": _CHAIN_C1, "D": _CHAIN_D1,
        "Cbar": cbar0,
    }
    node1 = {
        "A": _CHAIN_A[3:6, 3:6], "B": _CHAIN_B2, "C": np.eye(3), "D": np.zeros((3, 2)),
        "Cbar": np.eye(6),
    }
    node2 = {
        "A": _CHAIN_A[6:, 6:], "B": _CHAIN_B3, "C": np.eye(3), "D": np.zeros((3, 1)),
        "Cbar": np.eye(3),
    }
    spec = {
        "nodes": [
            {k: np.asarray(v).tolist() for k, v in nd.items()}
            for nd in (node0, node1, node2)
        ],
        "edges": [
            {"i": 0, "j": 1, "Aij": _CHAIN_A[:3, 3:6].tolist()},
            {"i": 1, "j": 0, "Aij": _CHAIN_A[3:6, :3].tolist()},
            {"i": 1, "j": 2, "Aij": _CHAIN_A[3:6, 6:].tolist()},
            {"i": 2, "j": 1, "Aij": _CHAIN_A[6:, 3:6].tolist()},
        ],
        "graph": [[0, 1], [1, 0], [1, 2], [2, 1]],
        "noise": {"w": sigma_w, "nu": sigma_nu, "nubar": sigma_nubar},
    }
    return build_network(spec)
