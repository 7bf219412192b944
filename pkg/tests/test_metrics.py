"""
Tests for accuracy, the Dunn index, empirical cross-entropy and record export.
"""
import itertools
import json
import math
import os
import tempfile
import unittest

import numpy as np

from entaug.evaluation.export import export, load_records
from entaug.evaluation.metrics import (
    RECORD_FIELDS, RunRecord, accuracy, dunn_index, empirical_ce, evaluate_dataset,
    penultimate_features,
)
from entaug.exceptions import InvalidInputError, UndefinedValueError
from entaug.ingestion.preprocessing import normalize
from entaug.ingestion.synthetic import make_synthetic
from entaug.model.network import build_network
from entaug.numerics.entropy import cross_entropy


def brute_force_dunn(x: np.ndarray, y: np.ndarray) -> float:
    labels = sorted(set(y.tolist()))
    spreads = []
    for c in labels:
        pts = x[y == c]
        pairs = [np.linalg.norm(a - b) for a, b in itertools.combinations(pts, 2)]
        spreads.append(sum(pairs) / len(pairs))
    separation = min(
        np.linalg.norm(a - b)
        for ci, cj in itertools.combinations(labels, 2)
        for a in x[y == ci] for b in x[y == cj]
    )
    return separation / max(spreads)


class TestAccuracy(unittest.TestCase):
    def test_all_correct(self):
        self.assertEqual(accuracy(np.eye(4) * 3, np.arange(4)), 1.0)

    def test_ties_go_to_lowest_class(self):
        self.assertEqual(accuracy(np.zeros((5, 3)), np.zeros(5, dtype=int)), 1.0)
        self.assertEqual(accuracy(np.zeros((5, 3)), np.ones(5, dtype=int)), 0.0)

    def test_random_against_count(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(200, 7))
        labels = rng.integers(0, 7, size=200)
        expected = sum(int(np.argmax(row) == lab) for row, lab in zip(logits, labels)) / 200
        self.assertEqual(accuracy(logits, labels), expected)

    def test_errors(self):
        with self.assertRaises(InvalidInputError):
            accuracy(np.zeros((0, 3)), np.zeros(0, dtype=int))
        with self.assertRaises(InvalidInputError):
            accuracy(np.zeros((2, 3)), np.zeros(3, dtype=int))


class TestDunnIndex(unittest.TestCase):
    def setUp(self):
        self.x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        self.y = np.array([0, 0, 1, 1])

    def test_two_clusters(self):
        self.assertAlmostEqual(dunn_index(self.x, self.y), 10.0)

    def test_scale_invariant(self):
        self.assertAlmostEqual(dunn_index(self.x * 3, self.y), dunn_index(self.x, self.y))

    def test_relabel_invariant(self):
        self.assertAlmostEqual(dunn_index(self.x, np.array([7, 7, 2, 2])), 10.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for trial in range(5):
            n = int(rng.integers(12, 60))
            x = rng.normal(size=(n, 3))
            y = np.arange(n) % int(rng.integers(2, 5))
            self.assertAlmostEqual(dunn_index(x, y), brute_force_dunn(x, y), places=12)

    def test_centroid_linkage(self):
        # centroids (0, 0.5) and (10, 0.5)
        self.assertAlmostEqual(dunn_index(self.x, self.y, linkage="centroid"), 10.0)

    def test_degenerate(self):
        x = np.zeros((4, 2))
        with self.assertRaises(UndefinedValueError):
            dunn_index(x, self.y)
        collapsed = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        self.assertEqual(dunn_index(collapsed, self.y), math.inf)

    def test_preconditions(self):
        with self.assertRaises(InvalidInputError):
            dunn_index(self.x, np.zeros(4, dtype=int))
        with self.assertRaises(InvalidInputError):
            dunn_index(self.x[:3], np.array([0, 0, 1]))
        with self.assertRaises(InvalidInputError):
            dunn_index(self.x, self.y, linkage="average")


class TestEmpiricalCrossEntropy(unittest.TestCase):
    def setUp(self):
        self.train, _ = make_synthetic(30, 10, k=3, size=8, channels=1, seed=1)

    def test_uniform_logits(self):
        net = build_network("mlp", self.train.image_shape, 3)
        for value in net.parameters()[-1].values():
            value[...] = 0.0
        self.assertAlmostEqual(empirical_ce(net, self.train), math.log(3), places=6)

    def test_matches_per_sample_mean(self):
        net = build_network("tiny-cnn", self.train.image_shape, 3, hidden_dim=8, seed=2, dtype=np.float64)
        per_sample = []
        for i in range(len(self.train)):
            x = normalize(self.train.images[i:i + 1], self.train.mean, self.train.std)
            logits = net.forward(x, mode="eval").logits[0]
            per_sample.append(cross_entropy(logits, int(self.train.labels[i])))
        self.assertAlmostEqual(empirical_ce(net, self.train, batch_size=7), float(np.mean(per_sample)), places=12)
        self.assertGreaterEqual(empirical_ce(net, self.train), 0.0)

    def test_eval_does_not_train(self):
        net = build_network("mlp", self.train.image_shape, 3)
        evaluate_dataset(net, self.train)
        self.assertEqual(net.train_forwards, 0)
        features, labels = penultimate_features(net, self.train, batch_size=8)
        self.assertEqual(features.shape, (30, 256))
        np.testing.assert_array_equal(labels, self.train.labels)


class TestExport(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.records = [
            RunRecord(0, 2.302585092994046, 2.302585092994046, 0.1132, 1.0, 0.0, 0.125),
            RunRecord(1, 0.6931471805599453, 0.6543210987654321, 0.8765, 0.3333333333333333,
                      0.6666666666666667, 0.25),
        ]

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_layout(self):
        path = os.path.join(self.tmp.name, "metrics.csv")
        export(self.records, path, "csv")
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        self.assertEqual(len(lines), 3)
        self.assertEqual(lines[0], ",".join(RECORD_FIELDS))

    def test_csv_reparses(self):
        path = os.path.join(self.tmp.name, "metrics.csv")
        export(self.records, path, "csv")
        for got, want in zip(load_records(path), self.records):
            self.assertEqual(got.epoch, want.epoch)
            for name in RECORD_FIELDS[1:]:
                self.assertAlmostEqual(getattr(got, name), getattr(want, name), delta=1e-9)

    def test_json_round_trip(self):
        path = os.path.join(self.tmp.name, "metrics.json")
        export(self.records, path, "json")
        self.assertEqual(load_records(path), self.records)
        with open(path, encoding="utf-8") as f:
            self.assertEqual(list(json.load(f)[0]), list(RECORD_FIELDS))

    def test_bad_format_and_path(self):
        with self.assertRaises(InvalidInputError):
            export(self.records, os.path.join(self.tmp.name, "m.xml"), "xml")
        blocker = os.path.join(self.tmp.name, "file")
        with open(blocker, "w") as f:
            f.write("x")
        with self.assertRaises(OSError):
            export(self.records, os.path.join(blocker, "metrics.csv"), "csv")


if __name__ == "__main__":
    unittest.main()
