import json
import math
from pathlib import Path

import numpy as np
import pytest

import nngpnas

DATA = Path(__file__).resolve().parents[1] / "data"


def conv_chain():
    return nngpnas.Cell([[0, 1, 0], [0, 0, 1], [0, 0, 0]], ["input", "conv3x3-bn-relu", "output"])


def test_cell_round_trip():
    cell = conv_chain()
    again = nngpnas.parse_arch(cell.to_json())
    assert again == cell
    assert cell.num_vertices == 3
    assert cell.num_edges == 2
    assert json.loads(cell.to_json())["ops"][1] == "conv3x3-bn-relu"


def test_bad_cell_raises_with_code():
    with pytest.raises(nngpnas.NngpError) as info:
        nngpnas.parse_arch('{"matrix": [[0, 1], [1, 0]], "ops": ["input", "output"]}')
    assert info.value.code == "NonUpperTriangular"


def test_network_costs():
    identity = nngpnas.Cell([[0, 1], [0, 0]], ["input", "output"])
    net = nngpnas.Network(identity, nngpnas.NetworkPlan())
    assert net.param_count == 174218
    assert net.feature_dim == 512
    cost = nngpnas.nngp_flops(2_510_000_000, 512, 8, 8000, 10000, 10, 20)
    assert cost["total"] == pytest.approx(1098444544000000 / 3, rel=1e-15)
    assert cost["kernel_evaluation"] + cost["gp_inference"] == pytest.approx(cost["total"], rel=1e-15)
    assert nngpnas.training_flops(2_510_000_000, 12, 40000, 10000) == 2434700000000000


def test_metrics():
    assert nngpnas.kendall_tau([1, 2, 3], [1, 2, 3]) == 1.0
    assert nngpnas.kendall_tau([1, 1, 2], [1, 2, 3]) == pytest.approx(2 / math.sqrt(6))
    assert nngpnas.pqetp([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], 0.5) == 0.75
    assert nngpnas.discovered_performance([3, 1, 2], [0.5, 0.9, 0.7], k=2) == 0.7
    assert nngpnas.mnas_reward(0.5, 150.0) == pytest.approx(0.47631899902196867)
    with pytest.raises(nngpnas.NngpError):
        nngpnas.pearson([1, 1, 1], [1, 2, 3])


def test_kernel_matches_arc_cosine():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    k = nngpnas.monte_carlo_relu_mlp_kernel(x, 1, 20000, 7)
    exact = nngpnas.analytic_relu_mlp_kernel(x[0], x[1])
    assert k.shape == (4, 4)
    assert abs(k[0, 1] - exact) < 0.05


def test_nngp_two_gaussians():
    x, y = nngpnas.make_synthetic(2, 16, 300, 2.0, 31)
    net = nngpnas.Network(conv_chain(), nngpnas.NetworkPlan(16, 3, 1, (1, 1, 16), 2))
    r = nngpnas.nngp_accuracy(net, x[:100], y[:100], x[100:], y[100:], 2, n_ensemble=8, seed=3, bn_warmup_batch=100)
    assert 0.9 <= r["accuracy"] <= 1.0
    assert r["k_tt"].shape == (100, 100)
    assert len(r["accuracy_per_reg"]) == 20
    acc, reg, _ = nngpnas.nngp_accuracy_from_kernels(r["k_tt"], r["k_vt"], y[:100], y[100:], 2)
    assert acc == r["accuracy"]
    assert reg == r["best_reg"]


def test_screening_and_hybrid():
    assert nngpnas.reduce_search_space(["a", "b", "c", "d"], [0.1, 0.9, 0.5, 0.7], 0.5) == ["b", "d"]
    rng = np.random.default_rng(1)
    tr, ng = rng.uniform(size=20), rng.uniform(size=20)
    model = nngpnas.fit_hybrid(tr, ng, 0.5 * tr + 0.2 * ng + 0.1)
    assert model.w_train == pytest.approx(0.5, abs=1e-8)
    assert model(0.4, 0.6) == pytest.approx(0.42, abs=1e-8)


def test_standardize():
    img = np.zeros((1, 1, 1, 3), dtype=np.uint8)
    img[0, 0, 0, 0] = 255
    out = nngpnas.standardize(img)
    assert out.shape == (1, 1, 1, 3)
    assert out[0, 0, 0, 0] == pytest.approx(2.0587301587301585)


def test_run_experiment(tmp_path):
    rows, failures = nngpnas.run_experiment(DATA / "smoke.ini", out_dir=tmp_path)
    assert failures == []
    assert {r["proxy_name"] for r in rows} == {"nngp", "train", "params"}
    assert nngpnas.read_scores(tmp_path / "scores.csv") == rows
