from __future__ import annotations

import numpy as np
import pytest

from behalign.embeddings import PairedDataset
from behalign.errors import (
    EmptyDatasetError,
    EmptyInputError,
    SingleClassError,
    SingleClusterError,
)
from behalign.evaluate import (
    ClassifierConfig,
    accuracy,
    idm_marginal,
    pca_2d,
    predict_proba,
    run_transfer_experiment,
    silhouette,
    train_classifier,
    transferability,
)
from behalign.preprocess import CategoryFlags, WindowSample

# ------------------------------------------------------------------ silhouette


def brute_force_silhouette(points, labels):
    """O(n^2) straight-from-the-definition reference."""
    points = np.asarray(points, dtype=np.float64)
    labels = list(labels)
    n = len(labels)
    scores = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = float(np.mean([np.linalg.norm(points[i] - points[j]) for j in own]))
        b = np.inf
        for other in set(labels) - {labels[i]}:
            members = [j for j in range(n) if labels[j] == other]
            b = min(b, float(np.mean([np.linalg.norm(points[i] - points[j]) for j in members])))
        denom = max(a, b)
        scores.append((b - a) / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])


def test_silhouette_four_point_fixture():
    report = silhouette(FOUR_POINTS, [0, 0, 1, 1])
    assert report.score == pytest.approx(0.9002, abs=1e-4)
    assert report.n_points == 4 and not report.subsampled


def test_silhouette_duplicate_points_score_zero():
    points = np.ones((4, 3))
    assert silhouette(points, [0, 0, 1, 1]).score == 0.0


def test_silhouette_all_singletons_score_zero():
    points = np.arange(8, dtype=float).reshape(4, 2)
    assert silhouette(points, [0, 1, 2, 3]).score == 0.0


def test_silhouette_single_cluster_error():
    with pytest.raises(SingleClusterError):
        silhouette(FOUR_POINTS, [1, 1, 1, 1])


def test_silhouette_empty_input():
    with pytest.raises(EmptyInputError):
        silhouette(np.zeros((0, 2)), [])


def test_silhouette_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(4, 40))
        k = int(rng.integers(2, 5))
        points = rng.standard_normal((n, int(rng.integers(2, 6))))
        labels = rng.integers(0, k, size=n)
        if len(np.unique(labels)) < 2:
            labels[0] = 0
            labels[1] = 1
        got = silhouette(points, labels).score
        want = brute_force_silhouette(points, labels)
        assert got == pytest.approx(want, abs=1e-10)


def test_silhouette_invariances():
    rng = np.random.default_rng(29)
    for _ in range(50):
        n = int(rng.integers(6, 30))
        d = int(rng.integers(2, 5))
        points = rng.standard_normal((n, d))
        labels = rng.integers(0, 3, size=n)
        if len(np.unique(labels)) < 2:
            labels[:2] = [0, 1]
        base = silhouette(points, labels).score
        # translation
        shifted = points + rng.standard_normal(d) * 10
        assert silhouette(shifted, labels).score == pytest.approx(base, abs=1e-9)
        # rotation (random orthogonal matrix)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        assert silhouette(points @ q, labels).score == pytest.approx(base, abs=1e-9)
        # label permutation
        perm = rng.permutation(3)
        assert silhouette(points, perm[labels]).score == pytest.approx(base, abs=1e-9)
        # positive scaling
        alpha = float(rng.uniform(0.1, 7.0))
        assert silhouette(alpha * points, labels).score == pytest.approx(base, abs=1e-9)


def test_silhouette_subsample_flagged_and_deterministic():
    rng = np.random.default_rng(3)
    points = rng.standard_normal((300, 4))
    labels = rng.integers(0, 3, size=300)
    a = silhouette(points, labels, subsample_max=100, seed=5)
    b = silhouette(points, labels, subsample_max=100, seed=5)
    assert a.subsampled and a.n_points == 100
    assert a.score == b.score
    c = silhouette(points, labels, subsample_max=100, seed=6)
    assert c.score != a.score


# ------------------------------------------------------------------ classifier


def _separable_set(n=200, margin=1.0, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    x = rng.standard_normal((n, 2)) * 0.3
    x[:, 0] += np.where(y == 1, margin, -margin)
    return x.astype(np.float32), y.astype(np.float32)


def test_classifier_fits_linearly_separable_data():
    # a 200-point set needs more optimization steps than the large-dataset defaults
    X, y = _separable_set()
    config = ClassifierConfig(hidden=(16, 8), epochs=150, learning_rate=1e-2, dropout_rate=0.0, seed=0)
    model = train_classifier(X, y, config)
    assert accuracy(model, X, y) >= 0.99


def test_classifier_single_class_error():
    X = np.zeros((10, 3), np.float32)
    with pytest.raises(SingleClassError):
        train_classifier(X, np.ones(10))


def test_classifier_empty_dataset():
    with pytest.raises(EmptyDatasetError):
        train_classifier(np.zeros((0, 3), np.float32), np.zeros(0))


def test_classifier_deterministic_given_seed():
    X, y = _separable_set(n=60)
    config = ClassifierConfig(hidden=(8, 4), epochs=3, seed=9)
    a = train_classifier(X, y, config)
    b = train_classifier(X, y, config)
    for w1, w2 in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(w1, w2)


def test_classifier_probabilities_in_open_interval():
    X, y = _separable_set(n=40)
    model = train_classifier(X, y, ClassifierConfig(hidden=(8, 4), epochs=2, seed=1))
    probs = predict_proba(model, X)
    assert np.all(probs > 0) and np.all(probs < 1)


def test_classifier_balanced_subsample_runs():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((100, 3)).astype(np.float32)
    y = (rng.random(100) < 0.2).astype(np.float32)
    y[:2] = [0, 1]
    model = train_classifier(X, y, ClassifierConfig(hidden=(4, 2), epochs=1, seed=0, balanced_subsample=True))
    assert predict_proba(model, X).shape == (100,)


def test_classifier_gradients_match_finite_differences():
    from behalign.evaluate import _classifier_backward, _classifier_logits, ClassifierModel

    rng = np.random.default_rng(5)
    weights = [
        rng.standard_normal((4, 3)).astype(np.float64),
        rng.standard_normal((3, 4)).astype(np.float64),
        rng.standard_normal((1, 3)).astype(np.float64),
    ]
    biases = [rng.standard_normal(4), rng.standard_normal(3), rng.standard_normal(1)]
    model = ClassifierModel(weights=weights, biases=biases, dropout_rate=0.0)
    X = rng.standard_normal((6, 3))
    y = rng.integers(0, 2, size=6).astype(np.float64)

    def loss():
        logits, _ = _classifier_logits(model, X)
        return float(np.mean(np.logaddexp(0.0, logits) - y * logits))

    logits, caches = _classifier_logits(model, X)
    probs = 1.0 / (1.0 + np.exp(-logits))
    grads = _classifier_backward(model, caches, (probs - y) / len(y))
    params = []
    for w, b in zip(weights, biases):
        params.extend((w, b))
    h = 1e-6
    for param, grad in zip(params, grads):
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + h
            f1 = loss()
            param[idx] = orig - h
            f2 = loss()
            param[idx] = orig
            fd = (f1 - f2) / (2 * h)
            assert abs(fd - grad[idx]) / max(abs(fd), abs(grad[idx]), 1e-8) < 1e-3
            it.iternext()


# -------------------------------------------------------- accuracy + transfer


def test_accuracy_trivial_cases():
    X, y = _separable_set(n=20, margin=3.0, seed=2)
    config = ClassifierConfig(hidden=(8, 4), epochs=300, learning_rate=1e-2, dropout_rate=0.0, seed=0)
    model = train_classifier(X, y, config)
    assert accuracy(model, X, y) == 1.0
    assert accuracy(model, X, 1 - y) == 0.0
    with pytest.raises(EmptyDatasetError):
        accuracy(model, np.zeros((0, 2), np.float32), np.zeros(0))


def test_accuracy_half_correct_on_four_points():
    X, y = _separable_set(n=20, margin=3.0, seed=2)
    config = ClassifierConfig(hidden=(8, 4), epochs=300, learning_rate=1e-2, dropout_rate=0.0, seed=0)
    model = train_classifier(X, y, config)
    four_x = X[:4]
    half_wrong = y[:4].copy()
    half_wrong[:2] = 1 - half_wrong[:2]
    assert accuracy(model, four_x, half_wrong) == 0.5


def test_accuracy_invariant_under_permutation():
    X, y = _separable_set(n=30, seed=4)
    model = train_classifier(X, y, ClassifierConfig(hidden=(8, 4), epochs=3, seed=0))
    perm = np.random.default_rng(0).permutation(30)
    assert accuracy(model, X, y) == accuracy(model, X[perm], y[perm])


def test_transferability_values():
    assert transferability(0.60, 0.50) == pytest.approx(20.0)
    assert transferability(0.5, 0.5) == 0.0
    # for mean accuracies 66.14 -> 80.86 the aggregate formula gives +22.26;
    # averaging per-run percent differences instead can land near +22.34
    assert transferability(0.8086, 0.6614) == pytest.approx(22.26, abs=0.01)
    with pytest.raises(ZeroDivisionError):
        transferability(0.5, 0.0)


def test_transferability_sign_matches_accuracy_gap():
    rng = np.random.default_rng(8)
    for _ in range(30):
        a, u = rng.uniform(0.05, 1.0, size=2)
        assert np.sign(transferability(a, u)) == np.sign(a - u)


# ------------------------------------------------------- transfer experiments


def _paired_from_bits(bits, game_ids, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    basis = np.random.default_rng(99).standard_normal((bits.shape[1], dim))
    rows = bits @ basis + 0.05 * rng.standard_normal((len(bits), dim))
    samples = []
    for i, (b, g) in enumerate(zip(bits, game_ids)):
        flags = CategoryFlags(panning=bool(b[0]), navigation=bool(b[1]), weapon=bool(b[2]))
        samples.append(
            WindowSample(
                sample_id=f"{g}/s/{i * 8}",
                game_id=g,
                session_id="s",
                start_frame=i * 8,
                window_size=16,
                actions=tuple(int(v) for v in b),
                caption="Idle",
                categories=flags,
            )
        )
    return PairedDataset(rows=rows.astype(np.float32), samples=tuple(samples))


def _category_bits(n, rates, seed):
    rng = np.random.default_rng(seed)
    return (rng.random((n, 16)) < np.asarray(rates)).astype(int)


def test_self_transfer_null_case_is_exact_zero():
    rates = [0.4, 0.5, 0.35] + [0.0] * 13
    source = _paired_from_bits(_category_bits(120, rates, 1), ["g"] * 120)
    report = run_transfer_experiment(
        source,
        [source],
        None,
        runs=5,
        seed=0,
        config=ClassifierConfig(hidden=(8, 4), epochs=2),
    )
    for cat in report.categories:
        assert abs(cat.transferability_pct) < 2.0
        assert cat.transferability_pct == 0.0  # aligned == unaligned, same seeds


def test_transfer_report_carries_per_run_values():
    rates = [0.4, 0.5, 0.35] + [0.0] * 13
    source = _paired_from_bits(_category_bits(80, rates, 2), ["g"] * 80)
    target = _paired_from_bits(_category_bits(40, rates, 3), ["h"] * 40)
    report = run_transfer_experiment(
        source, [target], None, runs=5, seed=4, config=ClassifierConfig(hidden=(8, 4), epochs=2)
    )
    assert report.runs == 5 and report.seeds == (4, 5, 6, 7, 8)
    for cat in report.categories:
        assert len(cat.per_run) == 5
        assert cat.transferability_pct == pytest.approx(
            np.mean([r.transfer_pct for r in cat.per_run])
        )


def test_transfer_single_class_category_propagates():
    rates = [0.0, 0.5, 0.35] + [0.0] * 13  # panning never active
    source = _paired_from_bits(_category_bits(60, rates, 5), ["g"] * 60)
    with pytest.raises(SingleClassError):
        run_transfer_experiment(
            source, [source], None, runs=1, seed=0, config=ClassifierConfig(hidden=(4, 2), epochs=1)
        )


# ------------------------------------------------------------------------- idm


DEATHMATCH_FPS_FREQ = {
    "forward": 0.6983,
    "pan_right": 0.4485,
    "strafe_right": 0.4367,
    "pan_left": 0.4307,
    "strafe_left": 0.4137,
    "fire": 0.3019,
    "pan_down": 0.1410,
    "pan_up": 0.1295,
    "backward": 0.1082,
    "reload": 0.0477,
    "jump": 0.0220,
    "change_gun": 0.0158,
    "crouch": 0.0078,
    "aim": 0.0,
    "sprint": 0.0,
    "interact": 0.0,
}


def _deathmatch_fps_dataset(catalog, n=1000, seed=0):
    rng = np.random.default_rng(seed)
    bits = np.zeros((n, catalog.size), dtype=int)
    for action_id, freq in DEATHMATCH_FPS_FREQ.items():
        count = int(round(freq * n))
        pos = catalog.index_of(action_id)
        chosen = rng.choice(n, size=count, replace=False)
        bits[chosen, pos] = 1
    samples = []
    rows = bits @ np.random.default_rng(1).standard_normal((catalog.size, 12))
    rows = rows + 0.1 * rng.standard_normal(rows.shape)
    from behalign.preprocess import categorize, semantic_action_mapper

    for i in range(n):
        samples.append(
            WindowSample(
                sample_id=f"dm/s/{i * 8}",
                game_id="dm",
                session_id="s",
                start_frame=i * 8,
                window_size=16,
                actions=tuple(int(v) for v in bits[i]),
                caption=semantic_action_mapper(bits[i], catalog),
                categories=categorize(bits[i], catalog),
            )
        )
    return PairedDataset(rows=rows.astype(np.float32), samples=tuple(samples))


def test_idm_frequency_filter_selects_exactly_the_frequent_actions(catalog):
    source = _deathmatch_fps_dataset(catalog)
    report = idm_marginal(
        source,
        [source],
        None,
        min_freq=0.30,
        runs=1,
        seed=0,
        catalog=catalog,
        config=ClassifierConfig(hidden=(8, 4), epochs=1),
    )
    assert set(report.trained_actions) == {
        "forward", "pan_right", "strafe_right", "pan_left", "strafe_left", "fire",
    }
    skipped = {a.action_id: a for a in report.actions if not a.trained}
    for zero_action in ("aim", "sprint", "interact"):
        assert skipped[zero_action].freq == 0.0
        assert "freq" in skipped[zero_action].skip_reason


def test_idm_min_freq_zero_trains_all_present_actions(catalog):
    source = _deathmatch_fps_dataset(catalog, n=400, seed=3)
    report = idm_marginal(
        source,
        [source],
        None,
        min_freq=0.0,
        runs=1,
        seed=0,
        catalog=catalog,
        config=ClassifierConfig(hidden=(4, 2), epochs=1),
    )
    present = {a for a, f in DEATHMATCH_FPS_FREQ.items() if f > 0}
    assert set(report.trained_actions) == present
    for result in report.actions:
        if result.action_id not in present:
            assert not result.trained


def test_idm_never_trains_single_class_action(catalog):
    rng = np.random.default_rng(0)
    bits = np.zeros((50, catalog.size), dtype=int)
    bits[:, catalog.index_of("forward")] = 1  # always active
    bits[:, catalog.index_of("fire")] = (rng.random(50) < 0.5).astype(int)
    samples = tuple(
        WindowSample(
            sample_id=f"g/s/{i}",
            game_id="g",
            session_id="s",
            start_frame=i,
            window_size=16,
            actions=tuple(int(v) for v in bits[i]),
            caption="Idle",
            categories=CategoryFlags(False, False, False),
        )
        for i in range(50)
    )
    source = PairedDataset(
        rows=np.random.default_rng(1).standard_normal((50, 6)).astype(np.float32),
        samples=samples,
    )
    report = idm_marginal(
        source, [source], None, min_freq=0.3, runs=1, catalog=catalog,
        config=ClassifierConfig(hidden=(4, 2), epochs=1),
    )
    forward_result = next(a for a in report.actions if a.action_id == "forward")
    assert not forward_result.trained and "single class" in forward_result.skip_reason


# ------------------------------------------------------------------------- pca


def test_pca_2d_shapes_and_determinism():
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((30, 6))
    a = pca_2d(rows)
    b = pca_2d(rows)
    assert a.shape == (30, 2)
    assert np.array_equal(a, b)
    assert pca_2d(np.zeros((0, 4))).shape == (0, 2)


def test_pca_2d_captures_dominant_direction():
    rng = np.random.default_rng(1)
    t = rng.standard_normal(100)
    rows = np.outer(t, [3.0, 0.0, 0.0]) + 0.01 * rng.standard_normal((100, 3))
    scores = pca_2d(rows)
    corr = np.corrcoef(scores[:, 0], t)[0, 1]
    assert abs(corr) > 0.99
