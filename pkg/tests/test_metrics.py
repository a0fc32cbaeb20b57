"""Tests for accuracy, ECE, TTA, worst-fraction accuracy, variances, surfaces."""

import numpy as np
import pytest

from flocosim import model as mdl
from flocosim.metrics import (
    TTA_DID_NOT_REACH,
    TTA_REACHED,
    TTA_UNDERLINED,
    accuracy,
    ece,
    loss_surface_grid,
    total_gradient_variance,
    tta_improvement,
    worst_fraction_accuracy,
)
from flocosim.partition import LabeledDataset
from flocosim.rng import RngStream


def _dataset(labels, d=2):
    labels = np.asarray(labels)
    return LabeledDataset(np.zeros((labels.size, d)), labels, int(labels.max()) + 1)


class TestAccuracy:
    def test_perfect_predictor(self):
        data = _dataset([0, 1, 2, 1])
        pred = lambda x: np.eye(3)[data.labels]
        assert accuracy(pred, data) == 1.0

    def test_hand_three_of_four(self):
        data = _dataset([0, 1, 1, 0])
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3], [0.6, 0.4]])
        assert accuracy(lambda x: probs, data) == 0.75

    def test_uniform_predictor_tie_rule(self):
        # Ties go to class 0, so accuracy equals the fraction of 0-labels.
        data = _dataset([0, 0, 1, 1])
        pred = lambda x: np.full((4, 2), 0.5)
        assert accuracy(pred, data) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accuracy(lambda x: x, _dataset(np.zeros(0, dtype=int)))


class TestEce:
    def test_confident_and_correct(self):
        probs = np.eye(3)[[0, 1, 2]]
        assert ece(probs, [0, 1, 2]) == 0.0

    def test_confident_and_wrong(self):
        assert ece(np.array([[1.0, 0.0]]), [1]) == 1.0

    def test_hand_two_bins(self):
        probs = np.array(
            [
                [0.9, 0.05, 0.05],
                [0.4, 0.35, 0.25],
                [0.45, 0.3, 0.25],
                [0.2, 0.2, 0.6],
            ]
        )
        labels = [0, 1, 0, 2]
        # Bin (0, 0.5]: conf {0.4, 0.45}, acc {0, 1} -> |0.5 - 0.425| * 0.5
        # Bin (0.5, 1]: conf {0.9, 0.6}, acc {1, 1} -> |1.0 - 0.75| * 0.5
        assert ece(probs, labels, bins=2) == pytest.approx(0.1625)

    def test_single_bin_identity(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((50, 4))
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        labels = rng.integers(0, 4, 50)
        conf = probs.max(axis=1)
        acc = np.mean(np.argmax(probs, axis=1) == labels)
        assert ece(probs, labels, bins=1) == pytest.approx(abs(acc - conf.mean()))

    def test_order_invariant(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((30, 3))
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        labels = rng.integers(0, 3, 30)
        perm = rng.permutation(30)
        assert ece(probs, labels) == pytest.approx(ece(probs[perm], labels[perm]))

    def test_invalid_rows_rejected(self):
        with pytest.raises(ValueError):
            ece(np.array([[0.5, 0.9]]), [0])


class TestTta:
    def test_identical_curves(self):
        curve = [(10, 0.2), (20, 0.5), (30, 0.6)]
        res = tta_improvement(curve, curve)
        assert res.value == 1.0
        assert res.flag == TTA_REACHED

    def test_five_times_faster(self):
        base = [(r, 0.7 if r == 100 else 0.1) for r in range(10, 101, 10)]
        meth = [(r, 0.8 if r >= 20 else 0.1) for r in range(10, 101, 10)]
        res = tta_improvement(base, meth)
        assert res.value == pytest.approx(5.0)
        assert res.flag == TTA_REACHED

    def test_did_not_reach(self):
        base = [(10, 0.5), (20, 0.9)]
        meth = [(10, 0.1), (20, 0.2)]
        res = tta_improvement(base, meth)
        assert res.value == 0.0
        assert res.flag == TTA_DID_NOT_REACH

    def test_underlined_when_first_eval_exceeds(self):
        base = [(10, 0.3), (20, 0.5)]
        meth = [(10, 0.6), (20, 0.7)]
        res = tta_improvement(base, meth)
        assert res.flag == TTA_UNDERLINED
        assert res.value == pytest.approx(2.0)  # 20 / 10

    def test_mismatched_grids_rejected(self):
        with pytest.raises(ValueError):
            tta_improvement([(10, 0.5)], [(20, 0.5)])


class TestWorstFraction:
    def test_k20_single_minimum(self):
        accs = np.linspace(0.3, 0.9, 20)
        assert worst_fraction_accuracy(accs, 0.05) == pytest.approx(0.3)

    def test_all_equal(self):
        assert worst_fraction_accuracy([0.7] * 9, 0.05) == pytest.approx(0.7)

    def test_k40_lowest_two(self):
        accs = [0.5] * 38 + [0.1, 0.2]
        assert worst_fraction_accuracy(accs, 0.05) == pytest.approx(0.15)

    def test_full_fraction_is_mean(self):
        accs = [0.2, 0.4, 0.9]
        assert worst_fraction_accuracy(accs, 1.0) == pytest.approx(np.mean(accs))

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            worst_fraction_accuracy([0.5], 0.0)


class TestTotalGradientVariance:
    def test_identical_updates(self):
        assert total_gradient_variance(np.ones((4, 6))) == 0.0

    def test_hand_two_clients(self):
        u = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert total_gradient_variance(u) == pytest.approx(2.0)

    def test_homogeneous_of_degree_two(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((5, 7))
        assert total_gradient_variance(3.0 * u) == pytest.approx(
            9.0 * total_gradient_variance(u)
        )

    def test_endpoint_form_m0_equals_flat(self):
        rng = np.random.default_rng(1)
        flat = rng.standard_normal((6, 9))
        assert total_gradient_variance(flat[:, None, :]) == total_gradient_variance(flat)

    def test_too_few_clients(self):
        with pytest.raises(ValueError):
            total_gradient_variance(np.ones((1, 3)))


class TestLossSurfaceGrid:
    def _model(self, m=2):
        return mdl.init_model(3, 4, 3, m, np.random.default_rng(0))

    def _data(self):
        rng = np.random.default_rng(1)
        return LabeledDataset(rng.standard_normal((12, 3)), rng.integers(0, 3, 12), 3)

    def test_row_count(self):
        rows = loss_surface_grid(self._model(), self._data(), 10, RngStream(0).stream("s"))
        assert len(rows) == 10 + 1 + 3
        assert [tag for *_, tag in rows].count("vertex") == 3
        assert [tag for *_, tag in rows].count("center") == 1

    def test_center_matches_global_predictor(self):
        model, data = self._model(), self._data()
        rows = loss_surface_grid(model, data, 5, RngStream(1).stream("s"))
        alpha, _, acc, _ = next(r for r in rows if r[3] == "center")
        probs = mdl.forward(model, alpha, data.features)
        assert acc == np.mean(np.argmax(probs, axis=1) == data.labels)

    def test_vertices_match_single_endpoints(self):
        model, data = self._model(), self._data()
        rows = loss_surface_grid(model, data, 0, RngStream(2).stream("s"))
        for alpha, _, acc, tag in rows:
            if tag != "vertex":
                continue
            m = int(np.argmax(alpha))
            single = mdl.ModelState(
                backbone=model.backbone,
                head=mdl.HeadEndpoints(model.head.endpoints[m][None, :]),
                n_classes=3,
            )
            probs = mdl.forward(single, np.ones(1), data.features)
            assert acc == np.mean(np.argmax(probs, axis=1) == data.labels)
