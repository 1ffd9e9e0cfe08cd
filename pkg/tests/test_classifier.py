"""NMC prediction (scalar + batch) and the linear-probe comparator."""

import numpy as np
import pytest

from protocl.classifier import (DistanceMetric, LinearProbe, ProbeConfig,
                                cross_entropy_loss_and_grad, load_probe,
                                predict, predict_batch, predict_labels,
                                predict_linear, predict_linear_batch,
                                save_probe, train_linear_probe, zero_probe)
from protocl.prototypes import PrototypeTable
from protocl.store import EmbeddingRecord
from protocl.synth import SyntheticSpec, generate_arrays


def brute_force_nmc(x, labels, means, metric=DistanceMetric.SQUARED_EUCLIDEAN):
    """Independent double-precision scan; sequential per-coordinate sums."""
    best_label, best_dist = None, None
    for label, mean in zip(labels, means):
        if metric is DistanceMetric.COSINE:
            dot = qq = mm = 0.0
            for a, b in zip(x, mean):
                dot += float(a) * float(b)
                qq += float(a) * float(a)
                mm += float(b) * float(b)
            if qq == 0.0 or mm == 0.0:
                dist = 1.0
            else:
                dist = 1.0 - dot / (qq ** 0.5 * mm ** 0.5)
        else:
            dist = 0.0
            for a, b in zip(x, mean):
                diff = float(a) - float(b)
                dist += diff * diff
            if metric is DistanceMetric.EUCLIDEAN:
                dist = dist ** 0.5
        if best_dist is None or dist < best_dist:
            best_label, best_dist = label, dist
    return best_label, best_dist


def random_table(rng, num_classes, dim):
    table = PrototypeTable(dim)
    for label in range(num_classes):
        vecs = rng.normal(size=(3, dim)).astype(np.float32)
        table.observe_stream(np.full(3, label), vecs)
    return table


def test_singleton_table_always_wins():
    table = PrototypeTable(4).observe(
        EmbeddingRecord(np.ones(4, np.float32), 7))
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert predict(rng.normal(size=4), table).class_label == 7


def test_zero_distance_at_prototype():
    rng = np.random.default_rng(1)
    table = random_table(rng, 6, 8)
    mean = table.get(3).mean
    pred = predict(mean, table)
    assert pred.class_label == 3
    assert pred.distance == 0.0
    assert pred.distance == pred.per_class_distances.min()


def test_tie_breaks_to_smaller_label():
    table = PrototypeTable(3)
    x = np.array([1.0, 2.0, 3.0])
    e = np.array([0.5, -0.25, 0.125], dtype=np.float32)
    table.observe(EmbeddingRecord((x + e).astype(np.float32), 4))
    table.observe(EmbeddingRecord((x - e).astype(np.float32), 2))
    for metric in DistanceMetric.SQUARED_EUCLIDEAN, DistanceMetric.EUCLIDEAN:
        assert predict(x, table, metric).class_label == 2
        assert predict_batch(x.reshape(1, 3), table, metric)[0].class_label == 2


def test_scalar_matches_brute_force_oracle():
    rng = np.random.default_rng(2)
    table = random_table(rng, 10, 16)
    labels = table.class_labels()
    means = table.means_matrix()
    for metric in DistanceMetric:
        for _ in range(200):
            x = rng.normal(size=16)
            pred = predict(x, table, metric)
            oracle_label, oracle_dist = brute_force_nmc(x, labels, means, metric)
            assert pred.class_label == oracle_label
            assert pred.distance == pytest.approx(oracle_dist, rel=1e-9)


def test_batch_elementwise_equals_scalar():
    rng = np.random.default_rng(3)
    table = random_table(rng, 12, 10)
    X = rng.normal(size=(300, 10))
    for metric in DistanceMetric:
        batch = predict_batch(X, table, metric, keep_distances=True)
        for i, bp in enumerate(batch):
            sp = predict(X[i], table, metric)
            assert bp.class_label == sp.class_label
            assert bp.distance == pytest.approx(sp.distance, rel=1e-5)
            assert bp.distance == bp.per_class_distances.min()


def test_batch_of_one_and_empty_batch():
    rng = np.random.default_rng(4)
    table = random_table(rng, 5, 6)
    x = rng.normal(size=6)
    assert predict_batch(x.reshape(1, 6), table)[0].class_label == \
        predict(x, table).class_label
    assert predict_batch(np.empty((0, 6)), table) == []


def test_metric_argmin_equivalence_sq_vs_euclidean():
    rng = np.random.default_rng(5)
    for trial in range(10):
        table = random_table(rng, 8, 12)
        X = rng.normal(size=(100, 12))
        sq = predict_labels(X, table, DistanceMetric.SQUARED_EUCLIDEAN)
        eu = predict_labels(X, table, DistanceMetric.EUCLIDEAN)
        assert np.array_equal(sq, eu)


def test_translation_invariance_of_argmin():
    rng = np.random.default_rng(6)
    table = random_table(rng, 9, 7)
    shift = rng.normal(size=7) * 10
    shifted = PrototypeTable(7)
    for proto in table.prototypes():
        shifted._counts[proto.class_label] = proto.count
        shifted._means[proto.class_label] = proto.mean + shift
    X = rng.normal(size=(200, 7))
    base = predict_labels(X, table, DistanceMetric.SQUARED_EUCLIDEAN)
    moved = predict_labels(X + shift, shifted, DistanceMetric.SQUARED_EUCLIDEAN)
    assert np.array_equal(base, moved)


def test_predict_determinism():
    rng = np.random.default_rng(7)
    table = random_table(rng, 6, 9)
    x = rng.normal(size=9)
    first = predict(x, table)
    for _ in range(5):
        again = predict(x, table)
        assert again.class_label == first.class_label
        assert again.distance == first.distance


def test_empty_table_and_dim_mismatch_and_nan():
    table = PrototypeTable(4)
    with pytest.raises(ValueError, match="empty"):
        predict(np.zeros(4), table)
    table.observe(EmbeddingRecord(np.zeros(4, np.float32), 0))
    with pytest.raises(ValueError, match="shape"):
        predict(np.zeros(5), table)
    with pytest.raises(ValueError, match="non-finite"):
        predict(np.array([np.inf, 0, 0, 0]), table)


def test_candidate_restriction():
    rng = np.random.default_rng(8)
    table = random_table(rng, 6, 5)
    x = table.get(0).mean
    full = predict_labels(x.reshape(1, 5), table)
    assert full[0] == 0
    restricted = predict_labels(x.reshape(1, 5), table,
                                candidates=np.array([3, 4]))
    assert restricted[0] in (3, 4)


# --- linear probe ------------------------------------------------------------

def central_difference_grads(weights, biases, X, y, weight_decay, h=1e-6):
    """Independent gradient oracle: central differences on the loss."""
    def loss_at(w, b):
        value, _, _ = cross_entropy_loss_and_grad(w, b, X, y, weight_decay)
        return value

    gw = np.zeros_like(weights)
    for i in range(weights.shape[0]):
        for j in range(weights.shape[1]):
            up = weights.copy(); up[i, j] += h
            dn = weights.copy(); dn[i, j] -= h
            gw[i, j] = (loss_at(up, biases) - loss_at(dn, biases)) / (2 * h)
    gb = np.zeros_like(biases)
    for i in range(biases.shape[0]):
        up = biases.copy(); up[i] += h
        dn = biases.copy(); dn[i] -= h
        gb[i] = (loss_at(weights, up) - loss_at(weights, dn)) / (2 * h)
    return gw, gb


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / denom


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(9)
    for _ in range(5):
        classes = int(rng.integers(2, 6))
        dim = int(rng.integers(2, 17))
        n = int(rng.integers(4, 20))
        W = rng.normal(size=(classes, dim))
        b = rng.normal(size=classes)
        X = rng.normal(size=(n, dim))
        y = rng.integers(0, classes, size=n)
        wd = float(rng.choice([0.0, 0.1]))
        _, gw, gb = cross_entropy_loss_and_grad(W, b, X, y, wd)
        fw, fb = central_difference_grads(W, b, X, y, wd)
        assert rel_err(gw, fw) <= 1e-4
        assert rel_err(gb, fb) <= 1e-4


def separable_data(seed, train_per_class=200, test_per_class=50):
    train_spec = SyntheticSpec(num_classes=2, dim=8, samples_per_class=train_per_class,
                               class_separation=8.0, noise_sigma=1.0, seed=seed)
    test_spec = SyntheticSpec(num_classes=2, dim=8, samples_per_class=test_per_class,
                              class_separation=8.0, noise_sigma=1.0, seed=seed + 1)
    tr_l, _, tr_v = generate_arrays(train_spec)
    te_l, _, te_v = generate_arrays(test_spec)
    return (tr_v.astype(np.float64), tr_l), (te_v.astype(np.float64), te_l)


def test_probe_learns_separable_classes():
    (tr_x, tr_y), (te_x, te_y) = separable_data(31)
    probe = train_linear_probe((tr_x, tr_y), 2,
                               ProbeConfig(learning_rate=0.05, epochs=20,
                                           batch_size=32, seed=1))
    train_acc = (predict_linear_batch(tr_x, probe) == tr_y).mean()
    assert train_acc >= 0.99
    # held-out NMC oracle on the same data also separates it
    table = PrototypeTable(8).observe_stream(tr_y, tr_x)
    nmc_acc = (predict_labels(te_x, table) == te_y).mean()
    probe_acc = (predict_linear_batch(te_x, probe) == te_y).mean()
    assert nmc_acc >= 0.99
    assert probe_acc >= 0.99


def test_zero_epochs_is_chance():
    (tr_x, tr_y), _ = separable_data(33)
    probe = train_linear_probe((tr_x, tr_y), 2, ProbeConfig(epochs=0))
    assert np.array_equal(probe.weights, np.zeros_like(probe.weights))
    # zero logits: every tie resolves to label 0, accuracy = class balance
    acc = (predict_linear_batch(tr_x, probe) == tr_y).mean()
    assert acc == pytest.approx(0.5)


def test_probe_determinism_given_seed():
    (tr_x, tr_y), _ = separable_data(35)
    cfg = ProbeConfig(epochs=3, seed=11)
    a = train_linear_probe((tr_x, tr_y), 2, cfg)
    b = train_linear_probe((tr_x, tr_y), 2, cfg)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.biases, b.biases)


def test_probe_errors():
    with pytest.raises(ValueError, match="empty"):
        train_linear_probe((np.empty((0, 3)), np.empty(0, dtype=int)), 2)
    with pytest.raises(ValueError, match="out of range"):
        train_linear_probe((np.zeros((2, 3)), np.array([0, 5])), 2)


def test_predict_linear_cases():
    probe = LinearProbe(weights=np.zeros((2, 2)), biases=np.array([1.0, 0.0]))
    assert predict_linear(np.array([9.0, -4.0]), probe) == 0
    eye = LinearProbe(weights=np.eye(2), biases=np.zeros(2))
    assert predict_linear(np.array([0.0, 1.0]), eye) == 1
    # ties go to the smallest label
    assert predict_linear(np.zeros(2), LinearProbe(np.zeros((3, 2)), np.zeros(3))) == 0


def test_predict_linear_matches_logit_scan():
    rng = np.random.default_rng(10)
    probe = LinearProbe(weights=rng.normal(size=(7, 9)),
                        biases=rng.normal(size=7))
    for _ in range(100):
        x = rng.normal(size=9)
        logits = [sum(float(w) * float(v) for w, v in zip(row, x)) + float(c)
                  for row, c in zip(probe.weights, probe.biases)]
        best = max(range(7), key=lambda i: (logits[i], -i))
        assert predict_linear(x, probe) == best


def test_probe_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    probe = LinearProbe(weights=rng.normal(size=(4, 6)),
                        biases=rng.normal(size=4),
                        config=ProbeConfig(learning_rate=0.2, epochs=7,
                                           batch_size=64, weight_decay=0.01,
                                           seed=5))
    path = tmp_path / "probe.prob"
    save_probe(probe, path)
    back = load_probe(path)
    assert back.weights.tobytes() == probe.weights.tobytes()
    assert back.biases.tobytes() == probe.biases.tobytes()
    assert back.config == probe.config
