import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from src.data import CLASS_WORDS, make_dataset
from src.data.vocab import tokenize
from src.editor import EditorBank
from src.errors import ConfigError, MRTError, NumericError
from src.model import EditPlan, ToyMultimodalModel, dataset_loss, init_weights
from src.tensor import Node
from src.train import Adam, TrainConfig, clip_grad_norm, evaluate, lr_at, total_steps, train_editors, write_metrics
from src.train.trainer import predict_text
from tests.oracles import micro_config, micro_plan


def micro_setup(seed=0):
    config = micro_config()
    model = ToyMultimodalModel(config, init_weights(config, seed=seed))
    samples = make_dataset("classify", 2, seed=0, image_size=config.image_size, patch_size=config.patch_size)
    return config, model, samples


class TestSchedule(unittest.TestCase):
    def test_warmup_then_linear_decay(self):
        cfg = TrainConfig(learning_rate=1.0, warmup_ratio=0.1)
        self.assertEqual(lr_at(0, 100, cfg), 0.0)
        self.assertAlmostEqual(lr_at(5, 100, cfg), 0.5)
        self.assertAlmostEqual(lr_at(10, 100, cfg), 1.0)
        self.assertAlmostEqual(lr_at(55, 100, cfg), 0.5)
        self.assertEqual(lr_at(100, 100, cfg), 0.0)

    def test_no_warmup(self):
        cfg = TrainConfig(learning_rate=2.0, warmup_ratio=0.0)
        self.assertEqual(lr_at(0, 4, cfg), 2.0)

    def test_zero_total(self):
        self.assertEqual(lr_at(0, 0, TrainConfig()), 0.0)

    def test_out_of_range_step(self):
        with self.assertRaises(ConfigError):
            lr_at(11, 10, TrainConfig())

    def test_total_steps(self):
        self.assertEqual(total_steps(100, TrainConfig(batch_size=32, epochs=3)), 12)
        self.assertEqual(total_steps(100, TrainConfig(batch_size=32, epochs=3, max_steps=5)), 5)


class TestAdam(unittest.TestCase):
    def test_first_step_moves_by_lr(self):
        p = Node(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.array([0.5, -3.0])
        Adam([p]).step(0.1)
        np.testing.assert_allclose(p.value, [0.9, -1.9], atol=1e-7)

    def test_skips_leaves_without_grad(self):
        p = Node(np.ones(3), requires_grad=True)
        Adam([p]).step(0.1)
        np.testing.assert_array_equal(p.value, np.ones(3))

    def test_decoupled_weight_decay(self):
        p = Node(np.array([2.0]), requires_grad=True)
        p.grad = np.array([0.0])
        Adam([p], weight_decay=0.5).step(0.1)
        np.testing.assert_allclose(p.value, [2.0 - 0.1 * 0.5 * 2.0])

    def test_clip_grad_norm(self):
        a, b = Node(np.zeros(1), requires_grad=True), Node(np.zeros(1), requires_grad=True)
        a.grad, b.grad = np.array([3.0]), np.array([4.0])
        self.assertAlmostEqual(clip_grad_norm([a, b], 1.0), 5.0)
        self.assertAlmostEqual(float(np.hypot(a.grad, b.grad)[0]), 1.0, places=9)


class TestTrainEditors(unittest.TestCase):
    def test_training_lowers_loss_and_keeps_base(self):
        config, model, samples = micro_setup()
        plan = micro_plan()
        digest = model.weights.digest()
        before = dataset_loss(model, EditorBank.from_plan(plan, config, seed=0), plan, samples)
        cfg = TrainConfig(learning_rate=1e-2, batch_size=10, epochs=8, warmup_ratio=0.0)
        editors, metrics = train_editors(model, plan, samples, cfg)
        self.assertLess(dataset_loss(model, editors, plan, samples), before)
        self.assertEqual(model.weights.digest(), digest)
        self.assertEqual(len(metrics.losses), 16)
        self.assertEqual(metrics.updated_tensors, 3 * len(editors))
        self.assertGreater(metrics.trainable_fraction, 0.0)

    def test_same_seed_same_editors(self):
        config, model, samples = micro_setup()
        plan = micro_plan()
        cfg = TrainConfig(learning_rate=1e-2, batch_size=8, epochs=1, seed=3)
        first, m1 = train_editors(model, plan, samples, cfg)
        second, m2 = train_editors(model, plan, samples, cfg)
        self.assertEqual(m1.losses, m2.losses)
        for a, b in zip(first.leaves(), second.leaves()):
            np.testing.assert_array_equal(a.value, b.value)

    def test_step_hook_and_max_steps(self):
        config, model, samples = micro_setup()
        seen = []
        cfg = TrainConfig(batch_size=4, epochs=5, max_steps=3)
        train_editors(model, micro_plan(), samples, cfg, on_step=lambda step, loss, lr: seen.append(step))
        self.assertEqual(seen, [0, 1, 2])

    def test_empty_dataset(self):
        config, model, _ = micro_setup()
        with self.assertRaises(ConfigError):
            train_editors(model, micro_plan(), [], TrainConfig())

    def test_trainable_base_rejected(self):
        config, _, samples = micro_setup()
        model = ToyMultimodalModel(config, init_weights(config, seed=0), trainable_base=True)
        with self.assertRaises(ConfigError):
            train_editors(model, micro_plan(), samples, TrainConfig(max_steps=1))

    def test_non_finite_loss_names_step(self):
        config, model, samples = micro_setup()
        plan = micro_plan()
        editors = EditorBank.from_plan(plan, config, seed=0)
        for leaf in editors.leaves():
            if leaf.name == "bias":
                leaf.value[...] = np.inf
        with self.assertRaises(NumericError) as ctx:
            train_editors(model, plan, samples, TrainConfig(max_steps=2), editors=editors)
        self.assertEqual(ctx.exception.step, 0)

    def test_eval_set_records_accuracy(self):
        config, model, samples = micro_setup()
        cfg = TrainConfig(batch_size=10, epochs=1, eval_every=1)
        _, metrics = train_editors(model, micro_plan(), samples, cfg, eval_set=samples[:5])
        self.assertEqual([s for s, _ in metrics.evals], [1, 2, 2])
        self.assertTrue(0.0 <= metrics.final_accuracy <= 1.0)

    def test_records_base_digest_and_rng_state(self):
        config, model, samples = micro_setup()
        cfg = TrainConfig(batch_size=10, epochs=1, seed=4)
        _, metrics = train_editors(model, micro_plan(), samples, cfg)
        self.assertEqual(metrics.base_digest, model.weights.digest())
        fresh = np.random.default_rng(4).bit_generator.state
        self.assertEqual(metrics.rng_state["bit_generator"], fresh["bit_generator"])
        self.assertNotEqual(metrics.rng_state["state"], fresh["state"])

    def test_changed_base_is_reported(self):
        config, model, samples = micro_setup()
        name = next(iter(model.weights))

        def tamper(step, loss, lr):
            model.weights._arrays[name] = model.weights[name] + 1.0

        with self.assertRaisesRegex(MRTError, "base weights changed"):
            train_editors(model, micro_plan(), samples, TrainConfig(max_steps=1), on_step=tamper)


class TestEvaluate(unittest.TestCase):
    def test_accuracy_is_exact_match_fraction(self):
        config, model, samples = micro_setup()
        texts = predict_text(model, None, None, samples)
        expected = sum(t == s.answer for t, s in zip(texts, samples)) / len(samples)
        self.assertAlmostEqual(evaluate(model, None, None, samples), expected)

    def test_empty_dataset_scores_zero(self):
        _, model, _ = micro_setup()
        self.assertEqual(evaluate(model, None, EditPlan.none(), []), 0.0)

    def test_scores_hand_checked_transcript(self):
        _, model, samples = micro_setup()
        samples = samples[:5]
        wrong = tokenize(CLASS_WORDS[(samples[2].class_id + 1) % len(CLASS_WORDS)])
        transcript = [
            samples[0].answer_ids,
            samples[1].answer_ids,
            wrong,
            samples[3].answer_ids + tokenize("yes"),
            [],
        ]
        with patch("src.train.trainer.predict", return_value=transcript):
            self.assertAlmostEqual(evaluate(model, None, None, samples), 0.4)


class TestWriteMetrics(unittest.TestCase):
    def test_files(self):
        config, model, samples = micro_setup()
        _, metrics = train_editors(model, micro_plan(), samples, TrainConfig(batch_size=10, epochs=1))
        with tempfile.TemporaryDirectory() as tmp:
            summary = write_metrics(metrics, tmp, extra={"task": "classify"})
            frame = pd.read_csv(Path(tmp) / "metrics.csv")
            self.assertEqual(list(frame.columns), ["step", "loss", "lr"])
            self.assertEqual(len(frame), 2)
            on_disk = json.loads((Path(tmp) / "summary.json").read_text())
            self.assertEqual(on_disk["task"], "classify")
            self.assertEqual(on_disk["steps"], summary["steps"])


if __name__ == "__main__":
    unittest.main()
