"""Exit criteria for the pipeline.

Each test prints one PASS/FAIL line (collected into the terminal summary)
and then asserts. Criteria 7 and 8 synthesize and evaluate the full
20-class x 50-image corpus twice; run them alone with ``-m slow``.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, clustered_dataset
from imgrank import cli
from imgrank.classify import LabeledIndex, euclidean_nn_batch, rank_nn_batch
from imgrank.config import Config
from imgrank.dimred import nmf_fit, pca_fit, pca_transform
from imgrank.evaluation import METHOD_ORDER, make_folds, run_methods
from imgrank.graphrank import (
    build_knn_graph, graph_from_weights, manifold_rank_closed, manifold_rank_iterative,
)
from imgrank.imaging import Dataset, FeatureVector


def report(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_c1_nmf_monotonicity():
    start = time.perf_counter()
    worst = -np.inf
    for k in (5, 15, 30):
        for i in range(100):
            X = np.random.default_rng(10_000 * k + i).random((50, 30))
            model, H = nmf_fit(X, k, max_iter=200, tol=0.0, seed=i)
            assert len(model.objective_trace) == 200
            worst = max(worst, float(np.max(np.diff(model.objective_trace))))
            assert np.all(model.W >= 0) and np.all(H >= 0)
    elapsed = time.perf_counter() - start
    report(1, "NMF objective trace nonincreasing", worst <= 1e-9 and elapsed < 60,
           f"largest step change {worst:.3g} <= 1e-9, {elapsed:.1f}s < 60s")


def test_c2_nmf_exact_recovery():
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        # positive parts-based factors: each basis column owns a block of rows
        W0 = 0.05 + rng.uniform(0, 0.05, (10, 3))
        for j, rows in enumerate([slice(0, 4), slice(4, 7), slice(7, 10)]):
            W0[rows, j] += rng.uniform(0.5, 1.5, W0[rows, j].shape)
        H0 = rng.uniform(0.2, 1.2, (3, 8))
        Xt = W0 @ H0
        for init in range(3):
            model, H = nmf_fit(Xt.T, 3, max_iter=2000, tol=0.0, seed=init)
            worst = max(worst, float(np.linalg.norm(Xt - model.W @ H)))
    report(2, "NMF recovers W0 H0 (10x3 . 3x8, k=3)", worst <= 1e-4,
           f"worst Frobenius error {worst:.3g} <= 1e-4 over 30 runs of 2000 iterations")


def _pca_oracle(X):
    """Covariance eigenpairs from the SVD of the centered data, sign-fixed."""
    Xc = X - X.mean(axis=0)
    _, s, Vt = np.linalg.svd(Xc, full_matrices=True)
    lam = np.zeros(X.shape[1])
    lam[: s.size] = s ** 2 / (X.shape[0] - 1)
    U = Vt.T.copy()
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] *= -1
    return lam, U


def test_c3_pca_oracle():
    rng = np.random.default_rng(3)
    err_val = err_vec = err_rec = 0.0
    for _ in range(50):
        n, d = int(rng.integers(2, 31)), int(rng.integers(1, 31))
        X = rng.normal(size=(n, d)) * rng.uniform(0.5, 3.0, d)
        p = min(n - 1, d)
        model = pca_fit(X, p)
        lam, U = _pca_oracle(X)
        err_val = max(err_val, float(np.max(np.abs(model.eigenvalues - lam[:p]))))
        err_vec = max(err_vec, float(np.max(np.abs(model.components - U[:, :p]))))
        recon = model.mean + pca_transform(model, X) @ model.components.T
        err_rec = max(err_rec, float(np.max(np.abs(recon - X))))
    ok = err_val <= 1e-8 and err_vec <= 1e-8 and err_rec <= 1e-8
    report(3, "PCA matches dense eigendecomposition oracle", ok,
           f"eigenvalues {err_val:.2g}, eigenvectors {err_vec:.2g}, reconstruction {err_rec:.2g}; all <= 1e-8")


def test_c4_ranking_solvers_agree():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 61))
        X = rng.normal(size=(n, int(rng.integers(2, 8))))
        g = build_knn_graph(X, int(rng.integers(1, min(10, n - 1) + 1)))
        q = int(rng.integers(n))
        for alpha in (0.1, 0.5, 0.9, 0.99):
            closed = manifold_rank_closed(g, q, alpha).scores
            it = manifold_rank_iterative(g, q, alpha, tol=1e-12)
            assert it.converged
            worst = max(worst, float(np.max(np.abs(it.scores - closed))))
    chain = graph_from_weights(np.array([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]]))
    f = manifold_rank_closed(chain, 0, 0.5).scores
    chain_err = float(np.max(np.abs(f - [7 / 6, math.sqrt(2) / 3, 1 / 6])))
    report(4, "iterative and closed-form manifold ranking agree",
           worst <= 1e-6 and chain_err <= 1e-10,
           f"random graphs {worst:.2g} <= 1e-6, chain {chain_err:.2g} <= 1e-10")


def _scan(train, labels, q):
    best, best_d = None, math.inf
    for x, lab in zip(train, labels):
        d = math.fsum((a - b) ** 2 for a, b in zip(x, q))
        if d < best_d:
            best, best_d = lab, d
    return best


def test_c5_classifier_oracles():
    rng = np.random.default_rng(5)
    train = rng.normal(size=(200, 5))
    labels = [int(v) for v in rng.integers(0, 10, 200)]
    queries = rng.normal(size=(1000, 5))
    preds = euclidean_nn_batch(train, labels, queries)
    disagree = sum(p != _scan(train.tolist(), labels, q) for p, q in zip(preds, queries.tolist()))

    crossings = 0
    for trial in range(30):
        na, nb = int(rng.integers(5, 25)), int(rng.integers(5, 25))
        ga = build_knn_graph(rng.normal(size=(na, 3)), 3)
        gb = build_knn_graph(rng.normal(size=(nb, 3)), 3)
        W = np.zeros((na + nb, na + nb))
        W[:na, :na], W[na:, na:] = ga.W, gb.W
        perm = rng.permutation(na + nb)
        W = W[np.ix_(perm, perm)]
        comp = np.where(perm < na, "a", "b")
        test = rng.choice(na + nb, size=(na + nb) // 3, replace=False)
        train_nodes = [i for i in range(na + nb) if i not in set(test)]
        if not ({comp[i] for i in train_nodes} >= {"a", "b"}):
            continue
        train_labels = [f"{comp[i]}{rng.integers(3)}" for i in train_nodes]
        idx = LabeledIndex(train_nodes, train_labels, test)
        for q, p in zip(test, rank_nn_batch(graph_from_weights(W), idx, alpha=0.99)):
            crossings += p.label[0] != comp[q]
    report(5, "classifiers match oracles", disagree == 0 and crossings == 0,
           f"{disagree} of 1000 Euclidean disagreements, {crossings} cross-component predictions")


def test_c6_cv_harness():
    labels = [f"c{c:02d}" for c in range(20) for _ in range(50)]
    part = make_folds(labels, 10, seed=42)
    shape_ok = part.fold_sizes() == [100] * 10 and all(
        np.unique([labels[i] for i in part.test_indices(f)], return_counts=True)[1].tolist()
        == [5] * 20 for f in range(10))

    ds = clustered_dataset(n_classes=10, per_class=20, dim=40, seed=6)
    cfg = Config(nmf_rank=10, pca_dims=10, nmf_max_iter=200, graph_k=8, n_folds=5, seed=1)
    folds = make_folds(ds, cfg.n_folds, cfg.seed)
    base, models = run_methods(ds, folds, METHOD_ORDER, cfg, keep_models=True)
    leak_ok = True
    rng = np.random.default_rng(0)
    for fold in range(cfg.n_folds):
        test = set(folds.test_indices(fold).tolist())
        scrambled = Dataset([
            FeatureVector(r.id, str(rng.choice(ds.classes)) if i in test else r.label, r.values)
            for i, r in enumerate(ds.records)], ds.classes)
        other, models2 = run_methods(scrambled, folds, METHOD_ORDER, cfg, keep_models=True)
        a, b = models[fold], models2[fold]
        leak_ok &= np.array_equal(a.nmf.W, b.nmf.W)
        leak_ok &= np.array_equal(a.pca.components, b.pca.components)
        leak_ok &= np.array_equal(a.pca.mean, b.pca.mean)
        leak_ok &= a.sigma_raw == b.sigma_raw and a.sigma_combined == b.sigma_combined
        for r1, r2 in zip(base, other):
            leak_ok &= all(r1.predictions[i] == r2.predictions[i] for i in test)
    report(6, "10 stratified folds of 100 (5 per class); no label leakage",
           shape_ok and bool(leak_ok), f"fold shape {shape_ok}, leakage-free {bool(leak_ok)}")


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    """Two independent synth -> extract -> eval runs with the same seeds."""
    runs = []
    for r in range(2):
        base = tmp_path_factory.mktemp(f"run{r}")
        start = time.perf_counter()
        assert cli.main(["synth", "--out", str(base / "corpus"), "--classes", "20",
                         "--per-class", "50", "--seed", "2024"]) == 0
        assert cli.main(["extract", "--root", str(base / "corpus"),
                         "--out", str(base / "features.csv")]) == 0
        assert cli.main(["eval", "--features", str(base / "features.csv"),
                         "--out-dir", str(base / "report")]) == 0
        runs.append((base, time.perf_counter() - start))
    return runs


@pytest.mark.slow
def test_c7_synthetic_end_to_end(pipeline_runs):
    base, elapsed = pipeline_runs[0]
    n_images = len(list((base / "corpus").rglob("*.png")))
    rows = {}
    for line in (base / "report" / "report.txt").read_text().splitlines():
        parts = line.split()
        if parts and parts[0] in {m.value for m in METHOD_ORDER}:
            rows[parts[0]] = parts[1:]
    order_ok = list(rows) == [m.value for m in METHOD_ORDER]
    fmt_ok = all(len(cells) == 11 and all(
        c.endswith("%") and len(c.split(".")[1]) == 2 for c in cells) for cells in rows.values())
    csv_lines = (base / "report" / "report.csv").read_text().splitlines()
    combined = float(next(l for l in csv_lines
                          if l.startswith("NMF+PCA+GraphRanking,average,")).split(",")[2])
    ok = n_images == 1000 and order_ok and fmt_ok and combined >= 0.95 and elapsed < 600
    report(7, "synthetic 20x50 synth -> extract -> eval", ok,
           f"{n_images} images, combined rate {combined:.3f} >= 0.95, "
           f"five rows in order {order_ok}, percent format {fmt_ok}, {elapsed:.0f}s < 600s")


@pytest.mark.slow
def test_c8_determinism(pipeline_runs):
    (a, _), (b, _) = pipeline_runs
    same = (a / "report" / "report.csv").read_bytes() == (b / "report" / "report.csv").read_bytes()
    report(8, "repeated run gives byte-identical report.csv", same)
