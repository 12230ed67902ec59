import numpy as np
import pytest

from faceiq.complexity import (ComplexityReport, affine_macs, attention_macs,
                               conv_macs, count_params_macs, measure_latency)
from faceiq.errors import NumericalError, SizeError
from faceiq.harness import (TrainConfig, evaluate_predictions, format_table,
                            mean_eval, train, validation_srcc)
from faceiq.model import QualityModel
from faceiq.optim import Adam, AdamConfig
from faceiq.profiles import PROFILES, toy_profile
from faceiq.splits import split_folds
from faceiq.synth import generate_records, labels_from_magnitudes
from faceiq.tensor import Parameter


class TestSplits:
    def test_exact_ratio_100(self):
        plan = split_folds([f"i{k}" for k in range(100)], seed=7)
        for fold in plan.folds:
            assert (len(fold["train"]), len(fold["val"]), len(fold["test"])) == (70, 10, 20)

    def test_partition_property(self):
        ids = [f"i{k}" for k in range(100)]
        plan = split_folds(ids, seed=7)
        tests = [set(f["test"]) for f in plan.folds]
        union = set().union(*tests)
        assert union == set(ids)
        assert sum(len(t) for t in tests) == 100  # pairwise disjoint
        for fold in plan.folds:
            all_ids = fold["train"] + fold["val"] + fold["test"]
            assert sorted(all_ids) == sorted(ids)
            assert len(set(all_ids)) == 100

    def test_rounding_rule_103(self):
        plan = split_folds([f"i{k}" for k in range(103)], seed=1)
        test_sizes = [len(f["test"]) for f in plan.folds]
        assert test_sizes == [21, 21, 21, 20, 20]
        for fold in plan.folds:
            assert len(fold["val"]) == 10  # floor(103/10)
            assert len(fold["train"]) == 103 - len(fold["test"]) - 10

    def test_deterministic(self):
        ids = [f"i{k}" for k in range(37)]
        a = split_folds(ids, seed=3)
        b = split_folds(list(reversed(ids)), seed=3)
        assert a.folds == b.folds

    def test_too_few(self):
        with pytest.raises(SizeError):
            split_folds(["a", "b"], seed=0)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = Parameter("p", np.array([1.0, 2.0]))
        opt = Adam([p])
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_single_step_matches_hand_recurrence(self):
        # g=1, defaults: m=0.1, v=0.001, mhat=1, vhat=1 -> delta = lr/(1+eps)
        p = Parameter("p", np.array([0.5]))
        cfg = AdamConfig(lr=5e-5)
        opt = Adam([p], cfg)
        p.grad = np.array([1.0])
        opt.step()
        expected = 0.5 - 5e-5 * 1.0 / (1.0 + 1e-8)
        assert p.data[0] == pytest.approx(expected, abs=1e-18)

    def test_three_steps_match_hand_recurrence(self):
        p = Parameter("p", np.array([0.0]))
        cfg = AdamConfig(lr=0.01)
        opt = Adam([p], cfg)
        m = v = 0.0
        x = 0.0
        for t in range(1, 4):
            g = 2.0 * x - 3.0  # d/dx (x-1.5)^2
            p.grad = np.array([g])
            opt.step()
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mh = m / (1 - 0.9 ** t)
            vh = v / (1 - 0.999 ** t)
            x = x - 0.01 * mh / (np.sqrt(vh) + 1e-8)
            assert p.data[0] == pytest.approx(x, abs=1e-15)

    def test_quadratic_descent(self):
        p = Parameter("p", np.array([4.0]))
        opt = Adam([p], AdamConfig(lr=0.05))
        losses = []
        for _ in range(100):
            losses.append(float((p.data[0] - 1.0) ** 2))
            p.grad = np.array([2.0 * (p.data[0] - 1.0)])
            opt.step()
        assert all(b < a for a, b in zip(losses[5:], losses[6:]))
        assert losses[-1] < losses[5]

    def test_nonfinite_gradient_aborts_with_name(self):
        p = Parameter("layer.weight", np.array([1.0]))
        opt = Adam([p])
        p.grad = np.array([np.nan])
        with pytest.raises(NumericalError, match="layer.weight"):
            opt.step()


class TestComplexity:
    def test_pointwise_conv_fixture(self):
        # 1x1 conv, C_in=2, C_out=3 on a 2x2 map: 3*2*1*1*4
        assert conv_macs(3, 2, 1, 2, 2) == 24

    def test_zero_layer_model(self):
        assert ComplexityReport(params=0, macs=0).as_dict()["gmacs"] == 0.0

    def test_counts_match_hand_audit_tiny_profile(self):
        profile = toy_profile(input_size=8, stage_channels=(2,), stage_strides=(4,),
                              d_o=4, d_l=2, view_heads=1, decoder_heads=1, task_count=2)
        report = count_params_macs(profile)
        # params: conv 2*3*9+2=56; proj 2*4+4=12; fuse 4*4+4=20; wd 8; wu 8;
        # tokens 2*4=8; heads 2*((4*4+4)*2+(4+1))=90  -> total 202
        assert report.params == 56 + 12 + 20 + 8 + 8 + 8 + 90
        # macs: conv 3*(2*3*9*4)=648; proj 3*(2*4*4)=96; fuse 3*(4*4*1*4)=192
        # wd 3*8=24; attn 2*3*3*2=36; wu 3*8=24
        # decoder 2*(2*2*2*4 + 2*2*4*4)=2*(32+64)=192; heads 2*(16+16+4)=72
        assert report.macs == 648 + 96 + 192 + 24 + 36 + 24 + 192 + 72

    def test_parameter_count_matches_model(self):
        profile = toy_profile()
        model = QualityModel(profile, seed=0)
        counted = sum(p.size for p in model.parameters())
        assert count_params_macs(profile).params == counted

    def test_parameter_count_matches_default_profiles(self):
        for name, profile in PROFILES.items():
            model = QualityModel(profile, seed=0)
            counted = sum(p.size for p in model.parameters())
            assert count_params_macs(profile).params == counted, name

    def test_attention_macs_formula(self):
        assert attention_macs(6, 49, 128) == 2 * 6 * 49 * 128
        assert affine_macs(3, 5, 7) == 105


class TestSynth:
    def test_deterministic(self):
        a = generate_records(3, seed=11)
        b = generate_records(3, seed=11)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.record.pixels, y.record.pixels)
            np.testing.assert_array_equal(x.magnitudes, y.magnitudes)

    def test_labels_monotone_in_magnitude(self):
        lo = labels_from_magnitudes(np.zeros(5))
        hi = labels_from_magnitudes(np.ones(5))
        np.testing.assert_allclose(lo, 5.0)
        np.testing.assert_allclose(hi, 1.0)
        mid = labels_from_magnitudes(np.array([0.5, 0.0, 0.0, 0.0, 0.0]))
        assert mid[0] == 3.0 and mid[1] == 5.0

    def test_records_valid_for_views(self):
        from faceiq.views import build_views
        item = generate_records(1, seed=2)[0]
        triplet = build_views(item.record, out_size=32)
        assert triplet.x_o.shape == (3, 32, 32)
        assert item.record.pixels.min() >= 0.0 and item.record.pixels.max() <= 1.0

    def test_corruption_changes_pixels(self):
        clean = generate_records(1, seed=3)[0]
        assert clean.record.mos is not None
        assert clean.record.mos[5] == pytest.approx(
            float(np.dot([0.10, 0.40, 0.05, 0.15, 0.30], clean.record.mos[:5])))


class TestTrainLoop:
    def make_data(self, n=8, size=16):
        items = generate_records(n, seed=5)
        records = [it.record for it in items]
        return records

    def test_constant_labels_reachable(self):
        records = self.make_data(6)
        for r in records:
            r.mos = np.full(6, 3.0)
        profile = toy_profile(input_size=16, stage_channels=(4,), stage_strides=(4,),
                              d_o=8, d_l=4, task_count=6)
        config = TrainConfig(lr=5e-3, batch_size=4, max_steps=150, seed=0, eval_every=50)
        result = train(records, [], profile, config)
        assert result.final_train_loss() < 0.05

    def test_seed_determinism_bitwise(self):
        records = self.make_data(6)
        profile = toy_profile(input_size=16, stage_channels=(4,), stage_strides=(4,),
                              d_o=8, d_l=4, task_count=6)
        config = TrainConfig(lr=5e-4, batch_size=2, max_steps=20, seed=9, eval_every=10)
        a = train(records, records[:2], profile, config)
        b = train(records, records[:2], profile, config)
        assert a.log == b.log
        for k in a.state:
            np.testing.assert_array_equal(a.state[k], b.state[k])

    def test_missing_labels_rejected(self):
        from faceiq.errors import IngestError

        records = self.make_data(4)
        records[1].mos = None
        profile = toy_profile(input_size=16, stage_channels=(4,), stage_strides=(4,),
                              d_o=8, d_l=4)
        with pytest.raises(IngestError, match="synth00001") as exc:
            train(records, [], profile, TrainConfig(max_steps=1))
        assert exc.value.offending_ids == ["synth00001"]


class TestEvaluate:
    def test_perfect_predictions(self):
        rng = np.random.default_rng(6)
        labels = rng.uniform(1, 5, size=(20, 6))
        result = evaluate_predictions(labels.copy(), labels)
        for name, (rho, r) in result.per_dimension.items():
            assert rho == pytest.approx(1.0) and r == pytest.approx(1.0)

    def test_constant_predictions_flagged_not_fatal(self):
        rng = np.random.default_rng(7)
        labels = rng.uniform(1, 5, size=(10, 6))
        preds = labels.copy()
        preds[:, 2] = 3.0
        result = evaluate_predictions(preds, labels)
        assert result.per_dimension["colorfulness"] == (None, None)
        assert any("colorfulness" in f for f in result.flags)
        assert result.per_dimension["noise"][0] == pytest.approx(1.0)

    def test_mean_eval_and_table(self):
        rng = np.random.default_rng(8)
        labels = rng.uniform(1, 5, size=(12, 6))
        r1 = evaluate_predictions(labels, labels)
        noisy = labels + rng.normal(0, 0.4, size=labels.shape)
        r2 = evaluate_predictions(noisy, labels)
        merged = mean_eval([r1, r2])
        for name in merged.per_dimension:
            lo = min(r1.per_dimension[name][0], r2.per_dimension[name][0])
            hi = max(r1.per_dimension[name][0], r2.per_dimension[name][0])
            assert lo <= merged.per_dimension[name][0] <= hi
        table = format_table("toy", merged, params_m=1.0, gmacs=0.5, latency_ms=3.0)
        assert "noise_srcc" in table and "toy & " in table


class TestLatency:
    def test_mean_within_bounds_and_warmup_excluded(self):
        items = generate_records(3, seed=10)
        profile = toy_profile(input_size=16, stage_channels=(4,), stage_strides=(4,),
                              d_o=8, d_l=4)
        model = QualityModel(profile, seed=0)
        mean_ms, timings = measure_latency(model, [it.record for it in items],
                                           n_images=12, warmup=10)
        assert len(timings) == 12
        assert min(timings) <= mean_ms <= max(timings)
