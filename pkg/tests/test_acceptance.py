"""Acceptance suite: one test per numbered criterion.

Run `pytest tests/test_acceptance.py -v` to get one pass/fail line per
criterion (add `-s` for the printed numeric details).  Criteria 1-7 are
self-contained property checks.  Criteria 8-11 need the AIDS / BZR graph
collections on disk: point GLADMAMBA_DATA_ROOT at a directory holding them
(`gladmamba fetch --dataset AIDS,BZR --data-root <dir>` downloads both on a
machine with network access); when the data is absent those tests skip and
say so rather than silently passing.
"""

import math
import os
import time

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
import torch

from gladmamba.augmentation import build_feature_view
from gladmamba.config import DATA_ROOT_ENV, RunConfig
from gladmamba.dataset_io import GraphDataset, assign_anomaly_labels, parse_tu_dataset
from gladmamba.model import GladMamba
from gladmamba.objective_scoring import (
    LossConfig,
    adaptive_total_loss,
    anomaly_score,
    fit_normalizer,
    graph_infonce,
    node_infonce,
)
from gladmamba.gnn_encoder import EncoderConfig, GraphEncoder, gcn_adjacency, sum_adjacency
from gladmamba.spectral import (
    SYMMETRIC_NORMALIZED,
    UNNORMALIZED,
    dataset_energy_curves,
    laplacian,
    rayleigh_quotient_diag,
    spectral_energy_distribution,
)
from gladmamba.ssm_core import SSMDiscrete, discretize_zoh, selective_scan
from gladmamba.trainer import make_torch_batch, model_dims, prepare_graphs, train

from conftest import make_graph, random_graph


def _report(num: int, detail: str) -> None:
    print(f"[criterion {num}] PASS — {detail}")


def _dataset_or_skip(num: int, name: str) -> str:
    root = os.environ.get(DATA_ROOT_ENV)
    if root:
        candidates = (
            os.path.join(root, name, f"{name}_A.txt"),
            os.path.join(root, f"{name}_A.txt"),
        )
        if any(os.path.exists(c) for c in candidates):
            return root
    pytest.skip(
        f"[criterion {num}] SKIP — dataset {name} not found under ${DATA_ROOT_ENV}"
        f"{f' ({root})' if root else ' (unset)'}; fetch it with "
        f"`gladmamba fetch --dataset {name} --data-root <dir>` where network "
        f"access is available, set {DATA_ROOT_ENV}, and re-run"
    )


# --- criterion 1: edge-sum Rayleigh quotient vs quadratic-form / eigenbasis oracle


def test_criterion_01_rayleigh_identity():
    rng = np.random.default_rng(11)
    worst = 0.0
    for trial in range(100):
        g = random_graph(rng, gid=0, n_lo=2, n_hi=12, d_f=0)
        x = rng.normal(size=(g.node_count, 4))
        for kind in (UNNORMALIZED, SYMMETRIC_NORMALIZED):
            got = rayleigh_quotient_diag(g, x, kind=kind)
            lap = laplacian(g, kind)
            lam, basis = np.linalg.eigh(lap)
            for col in range(x.shape[1]):
                v = x[:, col]
                quad = float(v @ lap @ v) / float(v @ v)
                coeffs = basis.T @ v
                eig = float((lam * coeffs**2).sum() / (coeffs**2).sum())
                for oracle in (quad, eig):
                    rel = abs(got[col] - oracle) / max(abs(oracle), 1e-12)
                    worst = max(worst, rel)
    assert worst < 1e-10, f"worst relative error {worst:.3e}"
    _report(1, f"100 graphs x 4 columns x 2 Laplacians, worst rel err {worst:.3e}")


# --- criterion 2: ZOH discretization vs matrix-exponential / quadrature oracle


def test_criterion_02_zoh_exactness():
    rng = np.random.default_rng(12)
    a_vals = -np.exp(rng.uniform(-6.0, 2.0, size=1000))
    a_vals[::37] = -1e-12  # forces the small-|delta*A| series branch
    b_vals = rng.normal(size=1000)
    deltas = np.exp(rng.uniform(-4.0, 1.0, size=1000))

    worst = 0.0
    saw_limit = False
    for i in range(1000):
        a, b, d = a_vals[i], b_vals[i], deltas[i]
        disc = discretize_zoh(
            torch.tensor([[a]], dtype=torch.float64),
            torch.tensor([[b]], dtype=torch.float64),
            torch.tensor([[d]], dtype=torch.float64),
        )
        abar = float(disc.Abar[0, 0])
        bbar = float(disc.Bbar[0, 0, 0])
        # matrix exponential for the state factor, closed-form integral for the input factor
        abar_ref = float(scipy.linalg.expm(np.array([[a * d]]))[0, 0])
        bbar_ref = b * (math.expm1(a * d) / a)
        saw_limit = saw_limit or abs(d * a) < 1e-8
        worst = max(worst, abs(abar - abar_ref) / max(abs(abar_ref), 1e-12))
        worst = max(worst, abs(bbar - bbar_ref) / max(abs(bbar_ref), 1e-12))
        if i % 97 == 0:  # independent quadrature spot-check of the integral
            integral, _ = scipy.integrate.quad(lambda s: math.exp(s * a), 0.0, d)
            worst = max(worst, abs(bbar - b * integral) / max(abs(b * integral), 1e-12))
    assert saw_limit, "no triple exercised the small-step limit branch"
    assert worst < 1e-8, f"worst relative error {worst:.3e}"
    _report(2, f"1000 triples (limit branch included), worst rel err {worst:.3e}")


# --- criterion 3: selective scan vs naive recurrence, plus causality


def _naive_scan(abar, bbar, c, x):
    t_len, d, n = bbar.shape
    h = np.zeros((d, n))
    ys = np.zeros((t_len, d))
    for t in range(t_len):
        h = abar[t] * h + bbar[t] * x[t][:, None]
        ys[t] = (c[t][None, :] * h).sum(axis=1)
    return ys


def test_criterion_03_scan_equivalence_and_causality():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(100):
        t_len = int(rng.integers(1, 65))
        d, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        abar = rng.uniform(0.0, 1.0, size=(t_len, d, n))
        bbar = rng.normal(size=(t_len, d, n))
        c = rng.normal(size=(t_len, n))
        x = rng.normal(size=(t_len, d))
        disc = SSMDiscrete(torch.from_numpy(abar), torch.from_numpy(bbar))
        got = selective_scan(disc, torch.from_numpy(c), torch.from_numpy(x)).numpy()
        ref = _naive_scan(abar, bbar, c, x)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    assert worst < 1e-12, f"worst abs deviation {worst:.3e}"

    # causality: perturbing step t must leave outputs before t bitwise intact
    t_len, d, n = 32, 3, 4
    abar = torch.rand(t_len, d, n, dtype=torch.float64)
    bbar = torch.randn(t_len, d, n, dtype=torch.float64)
    c = torch.randn(t_len, n, dtype=torch.float64)
    x = torch.randn(t_len, d, dtype=torch.float64)
    base = selective_scan(SSMDiscrete(abar, bbar), c, x)
    for t_hit in (0, 13, 31):
        x2 = x.clone()
        x2[t_hit] += 1.0
        out = selective_scan(SSMDiscrete(abar, bbar), c, x2)
        assert torch.equal(out[:t_hit], base[:t_hit])
        assert not torch.equal(out[t_hit:], base[t_hit:])
    _report(3, f"100 instances vs naive recurrence, worst abs dev {worst:.3e}; causal")


# --- criterion 4: full-model gradients vs central finite differences


def test_criterion_04_full_model_gradient_check():
    rng = np.random.default_rng(14)
    graphs = tuple(
        random_graph(rng, gid=i, n_lo=4, n_hi=7, d_f=3, allow_isolated=False) for i in range(2)
    )
    ds = GraphDataset(name="micro", graphs=graphs)
    prepared = prepare_graphs(ds)
    tb = make_torch_batch(prepared, np.array([0, 1]))
    torch.manual_seed(14)
    model = GladMamba(model_dims(prepared), ablation="none", dtype=torch.float64)
    lcfg = LossConfig()

    def loss_value() -> torch.Tensor:
        out = model(tb)
        nl = node_infonce(out.z_node_o, out.z_node_a, tb.membership, tb.graph_count, lcfg)
        gl = graph_infonce(out.z_graph_o, out.z_graph_a, lcfg)
        # adaptive weights pinned so the objective is a fixed function of the weights
        return adaptive_total_loss(nl, gl, lcfg, sigma_node=0.7, sigma_graph=1.3)

    model.zero_grad()
    loss_value().backward()

    def group_of(name: str) -> str:
        if ".rq_" in name:
            return "rq-mlp"
        if name.startswith("encoder_"):
            return "encoder"
        if name.startswith("vfm."):
            return "vfm"
        return "sgm"

    h = 1e-5
    checked: dict[str, int] = {}
    worst = 0.0
    gen = torch.Generator().manual_seed(41)
    for name, param in model.named_parameters():
        assert param.grad is not None, f"no gradient reached {name}"
        direction = torch.randn(param.shape, generator=gen, dtype=torch.float64)
        direction /= direction.norm()
        analytic = float((param.grad * direction).sum())
        with torch.no_grad():
            param.add_(h * direction)
            f_plus = float(loss_value())
            param.add_(-2 * h * direction)
            f_minus = float(loss_value())
            param.add_(h * direction)
        fd = (f_plus - f_minus) / (2 * h)
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-7)
        worst = max(worst, rel)
        assert rel < 1e-4, f"{name}: analytic {analytic:.3e} vs FD {fd:.3e} (rel {rel:.2e})"
        checked[group_of(name)] = checked.get(group_of(name), 0) + 1
    assert set(checked) == {"encoder", "vfm", "sgm", "rq-mlp"}, f"groups seen: {checked}"
    _report(4, f"{sum(checked.values())} parameter tensors over {checked}, worst rel err {worst:.3e}")


# --- criterion 5: InfoNCE losses vs brute-force references


def _cos(u, v):
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


def _brute_node(z_o, z_a, membership, graph_count, tau):
    losses = np.zeros(graph_count)
    for g in range(graph_count):
        nodes = [i for i in range(len(membership)) if membership[i] == g]
        if len(nodes) < 2:
            continue
        total = 0.0
        for i in nodes:
            pos = math.exp(_cos(z_o[i], z_a[i]) / tau)
            d_oa = sum(math.exp(_cos(z_o[i], z_a[k]) / tau) for k in nodes if k != i)
            d_ao = sum(math.exp(_cos(z_a[i], z_o[k]) / tau) for k in nodes if k != i)
            total += -math.log(pos / d_oa) - math.log(pos / d_ao)
        losses[g] = total / (2 * len(nodes))
    return losses


def _brute_graph(zg_o, zg_a, tau):
    b = len(zg_o)
    losses = np.zeros(b)
    for i in range(b):
        pos = math.exp(_cos(zg_o[i], zg_a[i]) / tau)
        d_oa = sum(math.exp(_cos(zg_o[i], zg_a[k]) / tau) for k in range(b) if k != i)
        d_ao = sum(math.exp(_cos(zg_a[i], zg_o[k]) / tau) for k in range(b) if k != i)
        losses[i] = 0.5 * (-math.log(pos / d_oa) - math.log(pos / d_ao))
    return losses


def test_criterion_05_infonce_oracle():
    rng = np.random.default_rng(15)
    cfg = LossConfig(tau=0.2)
    worst = 0.0
    for _ in range(50):
        sizes = rng.integers(1, 6, size=rng.integers(2, 5))
        membership = np.repeat(np.arange(len(sizes)), sizes)
        z_o = rng.normal(size=(membership.size, 6))
        z_a = rng.normal(size=(membership.size, 6))
        node = node_infonce(
            torch.from_numpy(z_o), torch.from_numpy(z_a),
            torch.from_numpy(membership), len(sizes), cfg,
        ).numpy()
        worst = max(worst, float(np.max(np.abs(node - _brute_node(z_o, z_a, membership, len(sizes), cfg.tau)))))
        zg_o = rng.normal(size=(len(sizes), 6))
        zg_a = rng.normal(size=(len(sizes), 6))
        graph = graph_infonce(torch.from_numpy(zg_o), torch.from_numpy(zg_a), cfg).numpy()
        worst = max(worst, float(np.max(np.abs(graph - _brute_graph(zg_o, zg_a, cfg.tau)))))
    assert worst < 1e-10, f"worst abs deviation {worst:.3e}"

    # identical embeddings: positive and negatives tie, so the loss is exactly 0
    v = np.array([0.4, -1.0, 2.0])
    pair = torch.from_numpy(np.stack([v, v]))
    node0 = node_infonce(pair, pair, torch.tensor([0, 0]), 1, cfg)
    graph0 = graph_infonce(pair, pair, cfg)
    assert node0[0].item() == 0.0
    assert graph0[0].item() == 0.0 and graph0[1].item() == 0.0
    _report(5, f"50 batches, worst abs dev {worst:.3e}; identical-embedding case exactly 0")


# --- criterion 6: score normalizer standardizes each scale


def test_criterion_06_normalizer_standardization():
    rng = np.random.default_rng(16)
    node = rng.normal(2.5, 1.7, size=500)
    graph = rng.normal(-0.5, 0.01, size=500)
    norm = fit_normalizer(node, graph)
    z_node = (node - norm.mu_node) / norm.sigma_node
    z_graph = (graph - norm.mu_graph) / norm.sigma_graph
    stats = (z_node.mean(), z_node.std(), z_graph.mean(), z_graph.std())
    assert abs(stats[0]) < 1e-9 and abs(stats[2]) < 1e-9
    assert abs(stats[1] - 1.0) < 1e-9 and abs(stats[3] - 1.0) < 1e-9
    combined = anomaly_score(node, graph, norm)
    assert np.allclose(combined, z_node + z_graph, atol=1e-12)
    _report(6, "per-scale mean 0 and std 1 within 1e-9; score is the z-sum")


# --- criterion 7: encoder permutation equivariance + bitwise ablation bypass


def test_criterion_07_equivariance_and_bypass():
    rng = np.random.default_rng(17)
    for kind in ("gcn", "gin"):
        for trial in range(10):
            g = random_graph(rng, gid=0, n_lo=3, n_hi=10, d_f=3, allow_isolated=False)
            perm = rng.permutation(g.node_count)
            inv = np.argsort(perm)
            remapped = make_graph(
                g.node_count,
                [(min(perm[a], perm[b]), max(perm[a], perm[b])) for a, b in g.edges],
                g.features[inv],
                gid=0,
            )
            torch.manual_seed(trial)
            enc = GraphEncoder(3, EncoderConfig(kind=kind)).to(torch.float64)
            outs = []
            for graph in (g, remapped):
                from gladmamba.dataset_io import GraphBatch

                batch = GraphBatch.from_graphs([graph])
                adj = gcn_adjacency(batch) if kind == "gcn" else sum_adjacency(batch)
                x = torch.from_numpy(graph.features)
                outs.append(enc(x, adj, torch.from_numpy(batch.membership), 1))
            (nodes_a, read_a), (nodes_b, read_b) = outs
            assert torch.allclose(nodes_a, nodes_b[perm], atol=1e-8)
            assert torch.allclose(read_a, read_b, atol=1e-8)

    # bypassed blocks must be byte-for-byte identities
    graphs = tuple(random_graph(rng, gid=i, n_lo=3, n_hi=8, d_f=3) for i in range(3))
    prepared = prepare_graphs(GraphDataset(name="t", graphs=graphs))
    tb = make_torch_batch(prepared, np.arange(3))
    torch.manual_seed(0)
    model = GladMamba(model_dims(prepared), ablation="no-mamba")
    out = model(tb)
    h_node, h_graph = model.encoder_o(tb.x_o, tb.adj_norm, tb.membership, tb.graph_count)
    assert torch.equal(out.z_node_o, h_node)
    assert torch.equal(out.z_graph_o, h_graph)
    _report(7, "GCN/GIN equivariant at 1e-8 over 20 relabelings; bypass bitwise identical")


# --- criteria 8-11: desk-scale reproduction on the real collections


def _benchmark(num: int, name: str, floor: float, budget_sec: float, ablation: str = "none"):
    root = _dataset_or_skip(num, name)
    cfg = RunConfig(dataset=name, data_root=root, ablation=ablation)
    ds = assign_anomaly_labels(parse_tu_dataset(root, name), cfg.anomaly_class)
    t0 = time.perf_counter()
    aucs = [train(cfg, seed=s, dataset=ds).metrics["auc"] for s in cfg.seeds]
    elapsed = time.perf_counter() - t0
    mean, std = float(np.mean(aucs)), float(np.std(aucs))
    detail = f"{name}: AUC {mean:.4f}±{std:.4f} over {len(aucs)} seeds in {elapsed:.0f}s"
    assert elapsed < budget_sec, f"{detail} — exceeded {budget_sec:.0f}s budget"
    assert mean >= floor, f"{detail} — below the {floor:.2f} floor"
    return mean, std, detail


def test_criterion_08_aids_auc():
    mean, std, detail = _benchmark(8, "AIDS", floor=0.90, budget_sec=1800.0)
    _report(8, detail)


def test_criterion_09_bzr_auc():
    mean, std, detail = _benchmark(9, "BZR", floor=0.65, budget_sec=900.0)
    _report(9, detail)


def test_criterion_10_ablation_direction_aids():
    root = _dataset_or_skip(10, "AIDS")
    ds = assign_anomaly_labels(parse_tu_dataset(root, "AIDS"), None)
    results = {}
    for ablation in ("none", "no-mamba"):
        cfg = RunConfig(dataset="AIDS", data_root=root, ablation=ablation)
        aucs = [train(cfg, seed=s, dataset=ds).metrics["auc"] for s in cfg.seeds]
        results[ablation] = (float(np.mean(aucs)), float(np.std(aucs)))
    full, bare = results["none"], results["no-mamba"]
    detail = f"full {full[0]:.4f}±{full[1]:.4f} vs no-mamba {bare[0]:.4f}±{bare[1]:.4f}"
    assert full[0] >= bare[0], detail
    _report(10, detail)


def test_criterion_11_spectral_report_aids():
    root = _dataset_or_skip(11, "AIDS")
    ds = assign_anomaly_labels(parse_tu_dataset(root, "AIDS"), None)
    worst = 0.0
    for g in ds.graphs:
        feats = build_feature_view(g)
        for col in range(feats.shape[1]):
            x = feats[:, col]
            if not np.any(x != 0.0):
                continue
            report = spectral_energy_distribution(g, x)
            worst = max(worst, abs(float(report.energies.sum()) - 1.0))
    assert worst < 1e-8, f"worst per-graph energy-sum deviation {worst:.3e}"
    curves = dataset_energy_curves(ds)
    detail = (
        f"energy sums within {worst:.1e} of 1; top-quartile share "
        f"normal {curves.top_quartile_share_normal:.4f} vs "
        f"anomaly {curves.top_quartile_share_anomaly:.4f} "
        f"({curves.graphs_used_normal}/{curves.graphs_used_anomaly} graphs)"
    )
    _report(11, detail)
