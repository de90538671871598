"""Stratified cross-validation over the five compared methods."""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dimred
from .classify import LabeledIndex, euclidean_nn_batch, rank_nn_batch
from .config import Config
from .graphrank import auto_sigma, build_knn_graph
from .imaging import Dataset

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    NMF = "NMF"
    PCA = "PCA"
    NMF_PCA = "NMF+PCA"
    GRAPH = "GraphRanking"
    NMF_PCA_GRAPH = "NMF+PCA+GraphRanking"

    @property
    def uses_graph(self) -> bool:
        return self in (Method.GRAPH, Method.NMF_PCA_GRAPH)

    @property
    def slug(self) -> str:
        return self.value.lower().replace("+", "_")


METHOD_ORDER = (Method.NMF, Method.PCA, Method.NMF_PCA, Method.GRAPH, Method.NMF_PCA_GRAPH)


class FoldError(RuntimeError):
    def __init__(self, fold, exc):
        self.fold = fold
        super().__init__(f"fold {fold}: {exc}")


@dataclass(frozen=True)
class FoldPartition:
    n_folds: int
    assignment: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.n_folds).tolist()


@dataclass
class FoldModels:
    nmf: dimred.NmfModel
    pca: dimred.PcaModel
    sigma_raw: float | None = None
    sigma_combined: float | None = None


@dataclass
class EvalReport:
    method: Method
    per_fold_rates: list[float]
    average_rate: float
    confusion: np.ndarray
    classes: list[str]
    predictions: list = field(default_factory=list, repr=False)
    fallbacks: int = 0


def make_folds(dataset: Dataset | Sequence, n_folds: int = 10, seed: int = 42) -> FoldPartition:
    """Deal each class's shuffled members round-robin into folds, starting at fold 0."""
    if n_folds < 2:
        raise ValueError("n_folds must be ≥ 2")
    labels = dataset.labels if isinstance(dataset, Dataset) else list(dataset)
    classes = dataset.classes if isinstance(dataset, Dataset) else sorted(set(labels))
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(labels), dtype=np.int64)
    for cls in classes:
        members = np.array([i for i, lab in enumerate(labels) if lab == cls], dtype=np.int64)
        members = members[rng.permutation(members.size)]
        assignment[members] = np.arange(members.size) % n_folds
    return FoldPartition(n_folds=n_folds, assignment=assignment, seed=seed)


def accuracy(predicted: Sequence, truth: Sequence) -> float:
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} predictions, {len(truth)} labels")
    if len(truth) == 0:
        raise ValueError("accuracy of an empty prediction list is undefined")
    return sum(p == t for p, t in zip(predicted, truth)) / len(truth)


def _fit_fold(X_train, config: Config):
    nmf, _ = dimred.nmf_fit(X_train, config.nmf_rank, max_iter=config.nmf_max_iter,
                            tol=config.nmf_tol, seed=config.seed)
    pca = dimred.pca_fit(X_train, config.pca_dims)
    return nmf, pca


def run_methods(dataset: Dataset, partition: FoldPartition,
                methods: Sequence[Method] = METHOD_ORDER,
                config: Config | None = None, keep_models: bool = False):
    """Evaluate several methods over one partition, sharing per-fold fits.

    Every model (NMF basis, PCA axes, kernel bandwidth) is fitted on the
    training folds only; test labels are read solely to score predictions.
    Returns ``(reports, fold_models)``; ``fold_models`` is empty unless
    ``keep_models`` is set.
    """
    config = config or Config()
    methods = [Method(m) for m in methods]
    X = dataset.X
    labels = dataset.labels
    classes = list(dataset.classes)
    cls_index = {c: i for i, c in enumerate(classes)}
    n = len(labels)

    rates = {m: [] for m in methods}
    confusion = {m: np.zeros((len(classes), len(classes)), dtype=np.int64) for m in methods}
    predictions = {m: [None] * n for m in methods}
    fallbacks = {m: 0 for m in methods}
    fold_models = []

    for fold in range(partition.n_folds):
        test = partition.test_indices(fold)
        train = partition.train_indices(fold)
        if test.size == 0:
            continue
        try:
            train_labels = [labels[i] for i in train]
            reps = {}
            need_dr = any(m is not Method.GRAPH for m in methods)
            models = None
            if need_dr:
                nmf, pca = _fit_fold(X[train], config)
                H = dimred.nmf_encode(nmf, X, max_iter=config.nmf_max_iter, tol=config.nmf_tol)
                Z = dimred.pca_transform(pca, X)
                reps[Method.NMF] = H
                reps[Method.PCA] = Z
                reps[Method.NMF_PCA] = dimred.combine(H, Z)
                reps[Method.NMF_PCA_GRAPH] = reps[Method.NMF_PCA]
                models = FoldModels(nmf, pca)
            reps[Method.GRAPH] = X

            for m in methods:
                V = reps[m]
                if m.uses_graph:
                    sigma = config.sigma
                    if sigma == "AUTO":
                        sigma = auto_sigma(V[train], config.graph_k)
                    if models is not None:
                        if m is Method.GRAPH:
                            models.sigma_raw = sigma
                        else:
                            models.sigma_combined = sigma
                    graph = build_knn_graph(V, config.graph_k, sigma)
                    index = LabeledIndex(train, train_labels, test)
                    preds = rank_nn_batch(graph, index, test, alpha=config.alpha, vectors=V)
                    fallbacks[m] += sum(p.fallback for p in preds)
                    pred_labels = [p.label for p in preds]
                else:
                    pred_labels = euclidean_nn_batch(V[train], train_labels, V[test])
                truth = [labels[i] for i in test]
                rates[m].append(accuracy(pred_labels, truth))
                for i, t, p in zip(test, truth, pred_labels):
                    predictions[m][i] = p
                    confusion[m][cls_index[t], cls_index[p]] += 1
            if keep_models:
                fold_models.append(models)
        except FoldError:
            raise
        except Exception as exc:
            raise FoldError(fold, exc) from exc
        log.info("fold %d: %s", fold,
                 ", ".join(f"{m.value}={rates[m][-1]:.3f}" for m in methods))

    reports = [
        EvalReport(method=m, per_fold_rates=rates[m],
                   average_rate=float(np.mean(rates[m])), confusion=confusion[m],
                   classes=classes, predictions=predictions[m], fallbacks=fallbacks[m])
        for m in methods
    ]
    return reports, fold_models


def run_method(dataset: Dataset, partition: FoldPartition, method: Method,
               config: Config | None = None) -> EvalReport:
    reports, _ = run_methods(dataset, partition, [method], config)
    return reports[0]


def percent(rate: float) -> str:
    return f"{100.0 * rate:.1f}%"


def render_report(reports: Sequence[EvalReport], config: Config | None = None) -> tuple[str, str]:
    """Render the comparison as an aligned text table and a CSV twin.

    Rows follow the fixed method order. The text table shows percentages
    with one decimal; the CSV keeps raw floats as ``method,fold,rate`` rows,
    with the mean under fold ``average``.
    """
    if not reports:
        raise ValueError("nothing to render")
    by_method = {r.method: r for r in reports}
    ordered = [by_method[m] for m in METHOD_ORDER if m in by_method]
    n_folds = max(len(r.per_fold_rates) for r in ordered)

    header = ["Method"] + [f"F{i + 1}" for i in range(n_folds)] + ["Average"]
    rows = [[r.method.value] + [percent(x) for x in r.per_fold_rates]
            + [""] * (n_folds - len(r.per_fold_rates)) + [percent(r.average_rate)]
            for r in ordered]
    widths = [max(len(row[c]) for row in [header] + rows) for c in range(len(header))]

    def fmt(row):
        cells = [row[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(row[1:], widths[1:])]
        return "  ".join(cells).rstrip()

    lines = []
    if config is not None:
        lines += [f"# {line}" for line in config.lines()]
        lines.append("")
    lines.append(fmt(header))
    lines.append("  ".join("-" * w for w in widths))
    lines += [fmt(row) for row in rows]
    text = "\n".join(lines) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "fold", "rate"])
    for r in ordered:
        for i, x in enumerate(r.per_fold_rates):
            writer.writerow([r.method.value, i, repr(float(x))])
        writer.writerow([r.method.value, "average", repr(float(r.average_rate))])
    return text, buf.getvalue()


def render_confusion(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["true\\predicted"] + list(report.classes))
    for cls, row in zip(report.classes, report.confusion):
        writer.writerow([cls] + [int(v) for v in row])
    return buf.getvalue()


def write_reports(out_dir, reports: Sequence[EvalReport], config: Config | None = None) -> str:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text, table_csv = render_report(reports, config)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(table_csv, encoding="utf-8")
    for r in reports:
        (out / f"confusion_{r.method.slug}.csv").write_text(render_confusion(r), encoding="utf-8")
    return text
