import math

import numpy as np
import pytest

from botsscl.augmentation import AugmentationConfig
from botsscl.dataset import SyntheticConfig, generate_synthetic, split_dataset
from botsscl.errors import ConfigurationError, DimensionError
from botsscl.evaluation import (
    MetricsReport,
    ProbeConfig,
    ProbeParams,
    balanced_class_weights,
    evaluate,
    fine_tune,
    fit_pipeline,
    fit_probe,
    grad_check,
    lobo,
    metrics,
    predict,
    relative_error,
)
from botsscl.model import TrainConfig, embed, init_model, loss_and_grads
from helpers import tiny_schema


class TestProbe:
    def test_balanced_weights(self):
        assert balanced_class_weights([0, 1, 0, 1]) == (1.0, 1.0)

    def test_imbalanced_weights(self):
        w = balanced_class_weights([0] * 750 + [1] * 250)
        assert w[0] == pytest.approx(2 / 3) and w[1] == 2.0

    def test_separable_1d(self):
        h = np.r_[np.linspace(-3, -0.5, 20), np.linspace(0.5, 3, 20)][:, None]
        y = np.r_[np.zeros(20), np.ones(20)].astype(int)
        probe = fit_probe(h, y)
        assert np.array_equal(predict(probe, h)[0], y)

    def test_single_class(self):
        with pytest.raises(ConfigurationError):
            fit_probe(np.zeros((4, 2)), [1, 1, 1, 1])

    def test_converges_to_weighted_optimum(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((300, 3))
        y = (h @ [1.0, -2.0, 0.5] + rng.standard_normal(300) > 0.8).astype(int)
        probe = fit_probe(h, y)
        assert probe.converged
        cw = balanced_class_weights(y)
        sw = np.where(y == 1, cw[1], cw[0]) / len(y)
        p = 1 / (1 + np.exp(-(h @ probe.weight + probe.bias)))
        grad = np.r_[h.T @ (sw * (p - y)), np.sum(sw * (p - y))]
        assert np.linalg.norm(grad) < 1e-5

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            fit_probe(np.zeros((4, 2)), [0, 1, 0])

    def test_dict_roundtrip(self):
        p = ProbeParams(np.array([0.5, -1.0]), 0.25, (1.0, 1.0), 3, 0.1, True)
        q = ProbeParams.from_dict(p.to_dict())
        assert q.to_dict() == p.to_dict()


class TestPredict:
    def test_zero_probe_ties_to_bot(self):
        label, score = predict(ProbeParams(np.zeros(2), 0.0, (1, 1)), np.array([3.0, -1.0]))
        assert (label, score) == (1, 0.5)

    def test_large_bias(self):
        assert predict(ProbeParams(np.zeros(2), 1e6, (1, 1)), np.ones(2))[0] == 1
        assert predict(ProbeParams(np.zeros(2), -1e6, (1, 1)), np.ones(2))[0] == 0

    def test_independent_sigmoid(self):
        rng = np.random.default_rng(1)
        probe = ProbeParams(rng.standard_normal(4), 0.3, (1, 1))
        h = rng.standard_normal((50, 4))
        labels, scores = predict(probe, h)
        for row, s, lab in zip(h, scores, labels):
            t = sum(a * b for a, b in zip(row, probe.weight)) + 0.3
            want = 1 / (1 + math.exp(-t))
            assert abs(s - want) < 1e-12
            assert lab == (s >= 0.5)


class TestMetrics:
    def test_perfect(self):
        r = metrics([0, 1, 1, 0], [0, 1, 1, 0])
        assert r.macro == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
        assert r.accuracy == 1.0

    def test_all_positive_balanced(self):
        r = metrics([1, 1, 1, 1], [0, 1, 0, 1])
        assert r.per_class[1]["f1"] == pytest.approx(2 / 3)
        assert r.per_class[0]["f1"] == 0.0
        assert r.macro_f1 == pytest.approx(1 / 3)

    def test_chance(self):
        rng = np.random.default_rng(2)
        r = metrics(rng.integers(0, 2, 20000), np.repeat([0, 1], 10000))
        assert abs(r.macro_f1 - 0.5) <= 0.05

    def test_weighted_uses_support(self):
        r = metrics([0, 0, 0, 1], [0, 0, 1, 1])
        f0, f1 = r.per_class[0]["f1"], r.per_class[1]["f1"]
        assert r.weighted["f1"] == pytest.approx((2 * f0 + 2 * f1) / 4)
        assert r.per_class[0]["support"] == 2

    def test_reconstruction_from_counts(self):
        r = metrics([0, 1, 1, 0, 1, 1], [0, 1, 0, 1, 1, 1])
        again = MetricsReport.from_counts(r.tn, r.fp, r.fn, r.tp)
        assert again.to_dict() == r.to_dict()

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(1, 20))
            r = metrics(rng.integers(0, 2, n), rng.integers(0, 2, n))
            vals = [v for d in (*r.per_class.values(), r.macro, r.weighted) for k, v in d.items() if k != "support"]
            assert all(0.0 <= v <= 1.0 for v in vals)

    def test_errors(self):
        with pytest.raises(DimensionError):
            metrics([0, 1], [0])
        with pytest.raises(DimensionError):
            metrics([], [])


@pytest.fixture(scope="module")
def small_data():
    ds = generate_synthetic(SyntheticConfig(80, 4.0, 0, tiny_schema(4)))
    return split_dataset(ds, 0.25, 0)


FAST = TrainConfig(batch_size=32, epochs=10, d=4, out_dim=8)


class TestPipeline:
    def test_probe_does_not_touch_encoder(self, small_data):
        tr, _ = small_data
        pipe, hist = fit_pipeline(tr, FAST, AugmentationConfig())
        assert pipe.params.fingerprint() == hist.fingerprint

    def test_lobo_identity_is_within_dataset(self, small_data):
        tr, te = small_data
        ds = generate_synthetic(SyntheticConfig(80, 4.0, 0, tiny_schema(4)))
        a = lobo(ds, ds, FAST, AugmentationConfig(), test_fraction=0.25, seed=0)
        pipe, _ = fit_pipeline(tr, FAST, AugmentationConfig())
        assert a.to_dict() == evaluate(pipe, te).to_dict()

    def test_lobo_schema_mismatch(self):
        a = generate_synthetic(SyntheticConfig(10, 1.0, 0, tiny_schema(2)))
        b = generate_synthetic(SyntheticConfig(10, 1.0, 0, tiny_schema(3)))
        with pytest.raises(ConfigurationError):
            lobo(a, b, FAST, AugmentationConfig())

    def test_predict_threshold_consistency(self, small_data):
        tr, te = small_data
        pipe, _ = fit_pipeline(tr, FAST, AugmentationConfig())
        assert np.array_equal(pipe.predict(te.rows), (pipe.scores(te.rows) >= 0.5).astype(int))

    def test_fine_tune_opt_in(self, small_data):
        tr, te = small_data
        base, _ = fit_pipeline(tr, FAST, AugmentationConfig())
        tuned, _ = fit_pipeline(tr, FAST, AugmentationConfig(), ProbeConfig(fine_tune=True, fine_tune_epochs=20))
        assert tuned.params.fingerprint() != base.params.fingerprint()
        assert 0.0 <= evaluate(tuned, te).macro_f1 <= 1.0

    def test_fine_tune_reduces_probe_loss(self, small_data):
        from botsscl.dataset import apply_normalizer, fit_normalizer

        tr, _ = small_data
        norm = apply_normalizer(fit_normalizer(tr), tr)
        params = init_model(tr.schema.widths, 4, 8)
        probe = fit_probe(embed(params, norm.rows), norm.labels, ProbeConfig(max_iter=50))

        def ce(p, pr):
            s = 1 / (1 + np.exp(-(embed(p, norm.rows) @ pr.weight + pr.bias)))
            y = norm.labels
            return -np.mean(y * np.log(s + 1e-12) + (1 - y) * np.log(1 - s + 1e-12))

        p2, pr2 = fine_tune(params, probe, norm.rows, norm.labels, ProbeConfig(fine_tune_epochs=50, fine_tune_lr=0.01))
        assert ce(p2, pr2) < ce(params, probe)
        assert params.fingerprint() != p2.fingerprint()


class TestGradCheck:
    def _setup(self):
        s = tiny_schema(3)
        rng = np.random.default_rng(4)
        left = rng.standard_normal((4, s.total_width))
        batch = (left, left + 0.3 * rng.standard_normal(left.shape), np.array([0, 1, 0, 1]))
        return init_model(s.widths, 3, 4, seed=1), batch

    @pytest.mark.parametrize("kind", ["self", "sup", "sup_mod"])
    def test_passes(self, kind):
        p, batch = self._setup()
        assert grad_check(kind, p, batch) <= 1e-5

    def test_sabotage_detected(self):
        p, batch = self._setup()
        _, g = loss_and_grads(p, *batch[:2])
        g["enc.w2"] = g["enc.w2"] * 1.5 + 0.01
        assert grad_check("self", p, batch, analytic=g) > 1e-2

    def test_halving_eps_stable(self):
        p, batch = self._setup()
        e1 = grad_check("self", p, batch, eps=1e-4)
        e2 = grad_check("self", p, batch, eps=5e-5)
        assert e2 <= max(e1, 1e-8) * 1.5

    def test_relative_error_floor(self):
        assert relative_error(1e-9, 0.0)[()] == pytest.approx(1e-5)
        assert relative_error(2.0, 1.0)[()] == 0.5
