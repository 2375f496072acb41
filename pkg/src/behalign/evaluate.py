"""Alignment and transfer metrics: silhouette scores, behaviour classifiers,
transferability, and the per-action marginal inverse-dynamics study."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .align import Adam, MlpProjector, forward
from .dataset import ActionCatalog, default_catalog
from .embeddings import PairedDataset
from .errors import (
    DimMismatchError,
    EmptyDatasetError,
    EmptyInputError,
    SingleClassError,
    SingleClusterError,
)

CATEGORY_NAMES = ("panning", "navigation", "weapon")


@dataclass(frozen=True)
class SilhouetteReport:
    label_kind: str
    score: float
    n_points: int
    subsampled: bool
    seed: int


def _cluster_distance_sums(points: np.ndarray, onehot: np.ndarray, block: int = 1024) -> np.ndarray:
    """sums[i, c] = sum of Euclidean distances from point i to cluster c, blockwise."""
    n = points.shape[0]
    sq = np.einsum("ij,ij->i", points, points)
    sums = np.empty((n, onehot.shape[1]), dtype=np.float64)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * points[lo:hi] @ points.T
        np.maximum(d2, 0.0, out=d2)
        d = np.sqrt(d2)
        d[np.arange(lo, hi) - lo, np.arange(lo, hi)] = 0.0
        sums[lo:hi] = d @ onehot
    return sums


def silhouette(
    points: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    *,
    label_kind: str = "labels",
    subsample_max: int = 5000,
    seed: int = 0,
) -> SilhouetteReport:
    """Mean silhouette s(i) = (b - a) / max(a, b) under Euclidean distance.

    Singleton-cluster points score 0, as do a = b = 0 ties. Above
    ``subsample_max`` points a seeded uniform subsample is evaluated instead
    and flagged in the report.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-D, got {points.shape}")
    if labels.shape != (points.shape[0],):
        raise DimMismatchError(f"{points.shape[0]} points but {labels.shape} labels")
    if points.shape[0] == 0:
        raise EmptyInputError("silhouette needs at least one point")
    subsampled = False
    if points.shape[0] > subsample_max:
        idx = np.sort(
            np.random.default_rng(seed).choice(points.shape[0], size=subsample_max, replace=False)
        )
        points = points[idx]
        labels = labels[idx]
        subsampled = True
    unique, inverse = np.unique(labels, return_inverse=True)
    if unique.shape[0] < 2:
        raise SingleClusterError("silhouette needs at least two distinct labels")
    n = points.shape[0]
    k = unique.shape[0]
    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), inverse] = 1.0
    counts = onehot.sum(axis=0)
    sums = _cluster_distance_sums(points, onehot)

    own_counts = counts[inverse]
    own_sums = sums[np.arange(n), inverse]
    other = sums / counts[None, :]
    other[np.arange(n), inverse] = np.inf
    b = other.min(axis=1)
    s = np.zeros(n, dtype=np.float64)
    multi = own_counts > 1
    a = np.zeros(n, dtype=np.float64)
    a[multi] = own_sums[multi] / (own_counts[multi] - 1)
    denom = np.maximum(a, b)
    ok = multi & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return SilhouetteReport(
        label_kind=label_kind,
        score=float(s.mean()),
        n_points=n,
        subsampled=subsampled,
        seed=seed,
    )


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: tuple[int, int] = (256, 64)
    dropout_rate: float = 0.4
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    balanced_subsample: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class ClassifierModel:
    """Two rectifier hiddens plus a logistic scalar output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float


def _classifier_logits(
    model: ClassifierModel,
    x: np.ndarray,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list]:
    a = np.atleast_2d(x).astype(np.float32, copy=False)
    caches = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = a @ w.T + b
        mask = h > 0
        out = np.where(mask, h, 0)
        dmask = None
        if train and model.dropout_rate > 0:
            keep = 1.0 - model.dropout_rate
            dmask = (rng.random(out.shape) < keep).astype(out.dtype) / keep
            out = out * dmask
        caches.append((a, mask, dmask))
        a = out
    logits = a @ model.weights[-1].T + model.biases[-1]
    caches.append((a, None, None))
    return logits[:, 0], caches


def _classifier_backward(model: ClassifierModel, caches: list, dlogits: np.ndarray) -> list[np.ndarray]:
    g = dlogits[:, None].astype(np.float32)
    grads: list[np.ndarray] = [None] * (2 * len(model.weights))  # type: ignore[list-item]
    a_last = caches[-1][0]
    grads[-2] = g.T @ a_last
    grads[-1] = g.sum(axis=0)
    g = g @ model.weights[-1]
    for i in range(len(model.weights) - 2, -1, -1):
        a, mask, dmask = caches[i]
        if dmask is not None:
            g = g * dmask
        g = g * mask
        grads[2 * i] = g.T @ a
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ model.weights[i]
    return grads


def train_classifier(
    X: np.ndarray, y: Sequence[int] | np.ndarray, config: ClassifierConfig = ClassifierConfig()
) -> ClassifierModel:
    """Binary MLP classifier trained with logistic loss and Adam, seeded."""
    X = np.ascontiguousarray(X, dtype=np.float32)
    y = np.asarray(y, dtype=np.float32)
    if X.shape[0] == 0:
        raise EmptyDatasetError("no training samples")
    if y.shape != (X.shape[0],):
        raise DimMismatchError(f"{X.shape[0]} rows but labels shape {y.shape}")
    if np.unique(y).shape[0] < 2:
        raise SingleClassError("training labels contain a single class")
    init_ss, shuffle_ss, dropout_ss, balance_ss = np.random.SeedSequence(config.seed).spawn(4)
    if config.balanced_subsample:
        rng = np.random.default_rng(balance_ss)
        pos = np.flatnonzero(y == 1)
        neg = np.flatnonzero(y == 0)
        keep = min(len(pos), len(neg))
        idx = np.sort(
            np.concatenate(
                [rng.choice(pos, keep, replace=False), rng.choice(neg, keep, replace=False)]
            )
        )
        X, y = X[idx], y[idx]
    init_rng = np.random.default_rng(init_ss)
    sizes = [X.shape[1], *config.hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(init_rng.uniform(-bound, bound, (fan_out, fan_in)).astype(np.float32))
        biases.append(init_rng.uniform(-bound, bound, fan_out).astype(np.float32))
    model = ClassifierModel(weights=weights, biases=biases, dropout_rate=config.dropout_rate)
    params: list[np.ndarray] = []
    for w, b in zip(weights, biases):
        params.extend((w, b))
    optimizer = Adam(
        params,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    n = X.shape[0]
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            logits, caches = _classifier_logits(model, X[batch], train=True, rng=dropout_rng)
            probs = 1.0 / (1.0 + np.exp(-logits))
            dlogits = (probs - y[batch]) / len(batch)
            grads = _classifier_backward(model, caches, dlogits)
            optimizer.step(params, grads)
    return model


def predict_proba(model: ClassifierModel, X: np.ndarray) -> np.ndarray:
    logits, _ = _classifier_logits(model, np.asarray(X))
    return 1.0 / (1.0 + np.exp(-logits))


def accuracy(
    model: ClassifierModel, X: np.ndarray, y: Sequence[int] | np.ndarray, threshold: float = 0.5
) -> float:
    y = np.asarray(y)
    if y.shape[0] == 0:
        raise EmptyDatasetError("no evaluation samples")
    preds = predict_proba(model, X) >= threshold
    return float(np.mean(preds == (y == 1)))


def transferability(acc_aligned: float, acc_unaligned: float) -> float:
    """Percent difference in accuracy, aligned relative to unaligned."""
    if acc_unaligned == 0:
        raise ZeroDivisionError("unaligned accuracy is zero")
    return 100.0 * (acc_aligned - acc_unaligned) / acc_unaligned


@dataclass(frozen=True)
class RunValues:
    run: int
    seed: int
    source_acc_unaligned: float
    source_acc_aligned: float
    target_acc_unaligned: float
    target_acc_aligned: float
    transfer_pct: float


@dataclass(frozen=True)
class CategoryTransfer:
    category: str
    source_acc_unaligned: float
    source_acc_aligned: float
    target_acc_unaligned: float
    target_acc_aligned: float
    transferability_pct: float
    per_run: tuple[RunValues, ...]


@dataclass(frozen=True)
class TransferReport:
    categories: tuple[CategoryTransfer, ...]
    runs: int
    seeds: tuple[int, ...]

    def category(self, name: str) -> CategoryTransfer:
        for c in self.categories:
            if c.category == name:
                return c
        raise KeyError(name)


def _aligned_rows(rows: np.ndarray, projector: MlpProjector | None) -> np.ndarray:
    if projector is None:
        return rows
    z, _ = forward(projector, rows, train=False)
    return np.asarray(z, dtype=np.float32)


def _binary_labels(samples: Sequence, key) -> np.ndarray:
    return np.fromiter((1 if key(s) else 0 for s in samples), dtype=np.float32, count=len(samples))


def _transfer_for_labels(
    source: PairedDataset,
    targets: Sequence[PairedDataset],
    projector: MlpProjector | None,
    label_fn,
    category: str,
    runs: int,
    seed: int,
    config: ClassifierConfig,
    test_fraction: float,
) -> CategoryTransfer:
    y_source = _binary_labels(source.samples, label_fn)
    target_rows = (
        np.vstack([t.rows for t in targets]) if targets else np.zeros((0, source.dim), np.float32)
    )
    target_samples = [s for t in targets for s in t.samples]
    y_target = _binary_labels(target_samples, label_fn)
    if y_target.shape[0] == 0:
        raise EmptyDatasetError("no target samples")
    source_aligned = _aligned_rows(source.rows, projector)
    target_aligned = _aligned_rows(target_rows, projector)
    per_run: list[RunValues] = []
    n = len(source)
    for run in range(runs):
        run_seed = seed + run
        rng = np.random.default_rng(run_seed)
        order = rng.permutation(n)
        n_test = max(1, int(round(n * test_fraction)))
        if n_test >= n:
            raise EmptyDatasetError("source too small for a train/test split")
        test_idx, train_idx = order[:n_test], order[n_test:]
        run_config = replace(config, seed=run_seed)
        model_un = train_classifier(source.rows[train_idx], y_source[train_idx], run_config)
        model_al = train_classifier(source_aligned[train_idx], y_source[train_idx], run_config)
        src_un = accuracy(model_un, source.rows[test_idx], y_source[test_idx])
        src_al = accuracy(model_al, source_aligned[test_idx], y_source[test_idx])
        tgt_un = accuracy(model_un, target_rows, y_target)
        tgt_al = accuracy(model_al, target_aligned, y_target)
        per_run.append(
            RunValues(
                run=run,
                seed=run_seed,
                source_acc_unaligned=src_un,
                source_acc_aligned=src_al,
                target_acc_unaligned=tgt_un,
                target_acc_aligned=tgt_al,
                transfer_pct=transferability(tgt_al, tgt_un),
            )
        )
    return CategoryTransfer(
        category=category,
        source_acc_unaligned=float(np.mean([r.source_acc_unaligned for r in per_run])),
        source_acc_aligned=float(np.mean([r.source_acc_aligned for r in per_run])),
        target_acc_unaligned=float(np.mean([r.target_acc_unaligned for r in per_run])),
        target_acc_aligned=float(np.mean([r.target_acc_aligned for r in per_run])),
        transferability_pct=float(np.mean([r.transfer_pct for r in per_run])),
        per_run=tuple(per_run),
    )


def run_transfer_experiment(
    source: PairedDataset,
    targets: Sequence[PairedDataset],
    projector: MlpProjector | None = None,
    *,
    runs: int = 5,
    seed: int = 0,
    categories: Sequence[str] = CATEGORY_NAMES,
    config: ClassifierConfig = ClassifierConfig(),
    test_fraction: float = 0.2,
) -> TransferReport:
    """Per behaviour category: train source classifiers on foundation and on
    aligned encodings, evaluate on pooled targets, and average the per-run
    percent accuracy differences."""
    if len(source) == 0:
        raise EmptyDatasetError("empty source dataset")
    results = []
    for category in categories:
        results.append(
            _transfer_for_labels(
                source,
                targets,
                projector,
                lambda s, c=category: s.categories.get(c),
                category,
                runs,
                seed,
                config,
                test_fraction,
            )
        )
    return TransferReport(
        categories=tuple(results), runs=runs, seeds=tuple(seed + r for r in range(runs))
    )


@dataclass(frozen=True)
class IdmActionResult:
    action_id: str
    freq: float
    trained: bool
    skip_reason: str | None = None
    transfer: CategoryTransfer | None = None


@dataclass(frozen=True)
class IdmReport:
    actions: tuple[IdmActionResult, ...]
    min_freq: float
    runs: int
    seeds: tuple[int, ...]

    @property
    def trained_actions(self) -> tuple[str, ...]:
        return tuple(a.action_id for a in self.actions if a.trained)

    @property
    def skipped_actions(self) -> tuple[str, ...]:
        return tuple(a.action_id for a in self.actions if not a.trained)


def idm_marginal(
    source: PairedDataset,
    targets: Sequence[PairedDataset],
    projector: MlpProjector | None = None,
    *,
    min_freq: float = 0.30,
    runs: int = 1,
    seed: int = 0,
    catalog: ActionCatalog | None = None,
    config: ClassifierConfig = ClassifierConfig(),
    test_fraction: float = 0.2,
) -> IdmReport:
    """One binary classifier per action whose positive frequency in the source
    reaches ``min_freq``; the rest are reported as skipped."""
    if len(source) == 0:
        raise EmptyDatasetError("empty source dataset")
    catalog = catalog or default_catalog()
    actions_matrix = np.array([s.actions for s in source.samples], dtype=np.float64)
    if actions_matrix.shape[1] != catalog.size:
        raise DimMismatchError(
            f"samples carry {actions_matrix.shape[1]} action bits, catalog has {catalog.size}"
        )
    results: list[IdmActionResult] = []
    for pos, entry in enumerate(catalog.entries):
        freq = float(actions_matrix[:, pos].mean())
        if freq < min_freq:
            results.append(
                IdmActionResult(entry.action_id, freq, False, skip_reason=f"freq {freq:.4f} < {min_freq}")
            )
            continue
        if freq >= 1.0:
            results.append(
                IdmActionResult(entry.action_id, freq, False, skip_reason="single class (always active)")
            )
            continue
        try:
            transfer = _transfer_for_labels(
                source,
                targets,
                projector,
                lambda s, p=pos: s.actions[p] == 1,
                entry.action_id,
                runs,
                seed,
                config,
                test_fraction,
            )
        except SingleClassError:
            results.append(
                IdmActionResult(
                    entry.action_id, freq, False, skip_reason="single class in training split"
                )
            )
            continue
        results.append(IdmActionResult(entry.action_id, freq, True, transfer=transfer))
    return IdmReport(
        actions=tuple(results),
        min_freq=min_freq,
        runs=runs,
        seeds=tuple(seed + r for r in range(runs)),
    )


def pca_2d(rows: np.ndarray) -> np.ndarray:
    """Two principal-component scores per row with a deterministic sign
    convention (largest-magnitude loading positive)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("rows must be 2-D")
    n, d = rows.shape
    if n == 0:
        return np.zeros((0, 2))
    centered = rows - rows.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros((2 - vt.shape[0], d))])
    for i in range(comps.shape[0]):
        pivot = np.argmax(np.abs(comps[i]))
        if comps[i, pivot] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T


def silhouette_report_lines(experiment: str, report: SilhouetteReport) -> list[str]:
    return [
        f"{experiment},{report.label_kind},0,score,{report.score:.6f}",
        f"{experiment},{report.label_kind},0,n_points,{report.n_points}",
        f"{experiment},{report.label_kind},0,subsampled,{int(report.subsampled)}",
        f"{experiment},{report.label_kind},0,seed,{report.seed}",
    ]


def transfer_report_lines(experiment: str, report: TransferReport) -> list[str]:
    lines: list[str] = []
    for cat in report.categories:
        for rv in cat.per_run:
            lines.append(f"{experiment},{cat.category},{rv.run},source_acc_unaligned,{rv.source_acc_unaligned:.6f}")
            lines.append(f"{experiment},{cat.category},{rv.run},source_acc_aligned,{rv.source_acc_aligned:.6f}")
            lines.append(f"{experiment},{cat.category},{rv.run},target_acc_unaligned,{rv.target_acc_unaligned:.6f}")
            lines.append(f"{experiment},{cat.category},{rv.run},target_acc_aligned,{rv.target_acc_aligned:.6f}")
            lines.append(f"{experiment},{cat.category},{rv.run},transfer_pct,{rv.transfer_pct:.6f}")
        lines.append(f"{experiment},{cat.category},mean,transferability_pct,{cat.transferability_pct:.6f}")
    return lines


def idm_report_lines(experiment: str, report: IdmReport) -> list[str]:
    lines: list[str] = []
    for action in report.actions:
        lines.append(f"{experiment},{action.action_id},-,freq,{action.freq:.6f}")
        if not action.trained:
            lines.append(f"{experiment},{action.action_id},-,skipped,{action.skip_reason}")
            continue
        assert action.transfer is not None
        lines.extend(transfer_report_lines(experiment, TransferReport((action.transfer,), report.runs, report.seeds)))
    return lines
