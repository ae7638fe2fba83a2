import numpy as np
import pytest

from locsysid import netsim
from locsysid.netsim import (
    build_network,
    compute_coupling,
    paper_chain,
    simulate,
    true_impulse_response,
    white_inputs,
)


def scalar_system(a=0.5, noise=None):
    spec = {
        "nodes": [{"A": [[a]], "B": [[1.0]], "C": [[1.0]], "D": [[0.0]], "Cbar": []}],
        "edges": [],
    }
    if noise:
        spec["noise"] = noise
    return build_network(spec)


class TestBuildNetwork:
    def test_paper_chain_shape_and_entries(self, chain_full):
        assert chain_full.n_nodes == 3
        assert chain_full.nodes[0].A[0, 0] == pytest.approx(0.2839)
        assert chain_full.nodes[2].B[:, 0] == pytest.approx([-1.0263, 1.1535, -0.7865])
        assert chain_full.spectral_radius == pytest.approx(0.7500375171, abs=1e-9)
        assert chain_full.spectral_radius < 1
        # the chain couples node 0 only to node 1: its stacked neighbor state is x^1
        assert chain_full.neighbors(0) == (1,)
        assert chain_full.neighbors(1) == (0, 2)

    def test_single_node_zero_dynamics(self):
        sys_ = scalar_system(a=0.0)
        assert sys_.spectral_radius == 0.0

    def test_edge_not_in_graph_rejected(self, chain_full):
        spec = chain_full.to_dict()
        spec["graph"] = [[0, 1], [1, 0], [1, 2], [2, 1]]
        spec["edges"].append({"i": 0, "j": 2, "Aij": np.ones((3, 3)).tolist()})
        with pytest.raises(ValueError, match="not in the declared graph"):
            build_network(spec)

    def test_unstable_rejected(self):
        with pytest.raises(ValueError, match="spectral radius"):
            scalar_system(a=1.5)

    def test_dimension_mismatch_rejected(self, chain_full):
        spec = chain_full.to_dict()
        spec["nodes"][0]["B"] = [[1.0, 2.0]]
        with pytest.raises(ValueError, match="B has"):
            build_network(spec)

    def test_rank_deficient_C_rejected(self):
        spec = {
            "nodes": [{"A": np.zeros((2, 2)).tolist(), "B": np.eye(2).tolist(),
                       "C": [[1.0, 0.0], [2.0, 0.0]], "D": np.zeros((2, 2)).tolist(),
                       "Cbar": []}],
            "edges": [],
        }
        with pytest.raises(ValueError, match="full row rank"):
            build_network(spec)

    def test_json_round_trip(self, chain_full):
        rebuilt = build_network(chain_full.to_dict())
        assert rebuilt.spec_hash() == chain_full.spec_hash()
        np.testing.assert_array_equal(rebuilt.nodes[0].A, chain_full.nodes[0].A)


class TestSimulate:
    def test_zero_inputs_zero_noise_gives_zero(self, chain_noiseless):
        traj = simulate(chain_noiseless, {}, 40, seed=1)
        for series in (*traj.x, *traj.y, *traj.z):
            assert not np.any(series)

    def test_scalar_impulse_response(self):
        sys_ = scalar_system(a=0.5)
        u = np.zeros((21, 1))
        u[0] = 1.0
        traj = simulate(sys_, {0: u}, 20, seed=0)
        y = traj.y[0][:, 0]
        assert y[0] == 0.0
        expected = 0.5 ** (np.arange(1, 21) - 1)
        np.testing.assert_allclose(y[1:], expected, atol=1e-12)

    def test_process_noise_level(self, chain_full):
        N = 600
        traj = simulate(chain_full, white_inputs(chain_full, N, seed=3), N, seed=3)
        A, B = chain_full.global_matrices()
        x = np.hstack(traj.x)
        u = np.hstack(traj.u)
        w = x[1:] - x[:-1] @ A.T - u[:-1] @ B.T
        assert w.std() == pytest.approx(0.01, rel=0.2)

    def test_deterministic_per_seed(self, chain_full):
        u = white_inputs(chain_full, 60, seed=7)
        t1 = simulate(chain_full, u, 60, seed=7)
        t2 = simulate(chain_full, u, 60, seed=7)
        for a, b in zip(t1.x, t2.x):
            np.testing.assert_array_equal(a, b)
        t3 = simulate(chain_full, u, 60, seed=8)
        assert np.any(t3.x[0] != t1.x[0])

    def test_linearity_without_noise(self, chain_noiseless):
        N = 80
        u1 = white_inputs(chain_noiseless, N, seed=0)
        u2 = white_inputs(chain_noiseless, N, seed=1)
        mix = {i: 2.0 * u1[i] - 0.5 * u2[i] for i in u1}
        t_mix = simulate(chain_noiseless, mix, N, seed=0)
        t1 = simulate(chain_noiseless, u1, N, seed=0)
        t2 = simulate(chain_noiseless, u2, N, seed=0)
        for i in range(3):
            np.testing.assert_allclose(
                t_mix.y[i], 2.0 * t1.y[i] - 0.5 * t2.y[i], atol=1e-10)

    def test_odd_horizon_rejected(self, chain_full):
        with pytest.raises(ValueError, match="even"):
            simulate(chain_full, {}, 41, seed=0)

    def test_wrong_input_length_rejected(self, chain_full):
        with pytest.raises(ValueError, match="input series"):
            simulate(chain_full, {0: np.zeros((10, 2))}, 40, seed=0)

    def test_trajectory_immutable(self, chain_full):
        traj = simulate(chain_full, {}, 20, seed=0)
        with pytest.raises(ValueError):
            traj.y[0][0, 0] = 1.0


class TestWhiteInputs:
    def test_zero_std_gives_zeros(self):
        series = white_inputs([2, 1], 50, seed=0, std=0.0)
        assert not np.any(series[0]) and not np.any(series[1])

    def test_mean_bound(self):
        N = 600
        series = white_inputs([2], N, seed=5, std=1.0)[0]
        bound = 3.0 / np.sqrt(N)
        assert np.all(np.abs(series.mean(axis=0)) < bound)

    def test_distinct_seeds_distinct_series(self):
        a = white_inputs([1], 20, seed=0)[0]
        b = white_inputs([1], 20, seed=1)[0]
        assert np.any(a != b)


class TestCoupling:
    def test_full_measurement_no_hidden(self, chain_full):
        cmap = compute_coupling(chain_full, 0)
        assert cmap.hidden_dim == 0
        assert cmap.residual_norms[1] < 1e-12
        # exact reconstruction of the coupling block through the sensors
        np.testing.assert_allclose(
            cmap.L @ chain_full.nodes[0].Cbar, chain_full.edges[(0, 1)], atol=1e-10)

    def test_hidden_measurement_dimension_one(self, chain_hidden):
        assert compute_coupling(chain_hidden, 0).hidden_dim == 1

    def test_no_sensors_counts_full_coupling_rank(self, chain_full):
        spec = paper_chain("full").to_dict()
        spec["nodes"][0]["Cbar"] = []
        spec["nodes"][0]["m"] = 0
        sys_ = build_network(spec)
        expected = np.linalg.matrix_rank(sys_.edges[(0, 1)])
        assert compute_coupling(sys_, 0).hidden_dim == expected


class TestTrueImpulseResponse:
    def test_r_zero_is_feedthrough(self, chain_full):
        s = true_impulse_response(chain_full, 0, 0)
        assert len(s) == 1
        np.testing.assert_allclose(s.blocks[0, :, :2], chain_full.nodes[0].D)
        assert not np.any(s.blocks[0, :, 2:])

    def test_scalar_geometric_sequence(self):
        sys_ = scalar_system(a=0.5)
        s = true_impulse_response(sys_, 0, 4)
        np.testing.assert_allclose(s.blocks[:, 0, 0], [0.0, 1.0, 0.5, 0.25, 0.125])

    def test_benchmark_norms(self, chain_full):
        s = true_impulse_response(chain_full, 0, 21)
        # published value (input columns only): 2.871
        assert np.linalg.norm(s.blocks[:, :, :2]) == pytest.approx(2.8715126656, abs=1e-3)
        # full sequence including the interconnection columns
        assert s.norm() == pytest.approx(2.8840554502, abs=1e-9)

    def test_hidden_signals_raise_without_flag(self, chain_hidden):
        with pytest.raises(ValueError, match="hidden"):
            true_impulse_response(chain_hidden, 0, 5)
        s = true_impulse_response(chain_hidden, 0, 5, allow_hidden=True)
        assert s.block_shape == (2, 4)

    def test_noiseless_output_is_convolution(self, chain_noiseless):
        N = 120
        traj = simulate(chain_noiseless, white_inputs(chain_noiseless, N, seed=2), N, seed=2)
        s = true_impulse_response(chain_noiseless, 0, N).blocks
        v = np.hstack([traj.u[0], traj.z[0]])
        y_hat = np.zeros_like(traj.y[0])
        for t in range(N + 1):
            lags = min(t, N)
            for k in range(lags + 1):
                y_hat[t] += s[k] @ v[t - k]
        np.testing.assert_allclose(traj.y[0], y_hat, atol=1e-8)


class TestTrajectoryCsv:
    def test_csv_round_trip_and_determinism(self, chain_full, tmp_path):
        traj = simulate(chain_full, white_inputs(chain_full, 20, seed=0), 20, seed=0)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        traj.to_csv(p1)
        traj.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert len(lines) == 22
        header = lines[0].split(",")
        assert header[0] == "t"
        assert "u1_0" in header and "y1_0" in header and "z1_0" in header
        data = np.loadtxt(p1, delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[:, 1:3], traj.u[0], atol=0)
