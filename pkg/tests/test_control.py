import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

from src.control import (
    ControlConfig,
    ControlScenario,
    IndeterminateScenario,
    MisalignmentScenario,
    MisclassificationScenario,
    build_control_plan,
    check_precondition,
    competent_base,
    eval_counterfact,
    get_scenario,
    reports_table,
    run_control_training,
    write_report,
)
from src.editor import EditorBank, Site
from src.errors import ConfigError, PreconditionError
from src.model import HeadroomConfig, ToyModelConfig, ToyMultimodalModel, init_weights
from src.train import TrainConfig
from tests.oracles import micro_config

SIZE = dict(image_size=8, patch_size=4)


def micro_model(seed=0):
    config = micro_config()
    return ToyMultimodalModel(config, init_weights(config, seed=seed))


class TestScenarios(unittest.TestCase):
    def test_factory(self):
        self.assertIsInstance(get_scenario(ControlScenario(kind="misclassification")), MisclassificationScenario)
        self.assertIsInstance(
            get_scenario(ControlScenario(kind="misalignment", misalign_target=5)), MisalignmentScenario
        )
        self.assertIsInstance(get_scenario(ControlScenario(kind="indeterminate")), IndeterminateScenario)

    def test_unknown_kind(self):
        spec = ControlScenario.model_construct(kind="hallucination", target_class=3, misalign_target=None, template=None)
        with self.assertRaisesRegex(ConfigError, "Unknown control scenario"):
            get_scenario(spec)

    def test_misalignment_needs_distinct_target(self):
        with self.assertRaises(ValueError):
            ControlScenario(kind="misalignment", target_class=3)
        with self.assertRaises(ValueError):
            ControlScenario(kind="misalignment", target_class=3, misalign_target=3)

    def test_counterfactual_answers(self):
        self.assertEqual(get_scenario(ControlScenario(kind="misclassification")).counterfactual_answer(), "no")
        spec = ControlScenario(kind="misalignment", target_class=3, misalign_target=5)
        self.assertEqual(get_scenario(spec).counterfactual_answer(), "dog")
        self.assertEqual(get_scenario(ControlScenario(kind="indeterminate")).counterfactual_answer(), "not sure")

    def test_misclassification_scores_only_matched_target_samples(self):
        scenario = get_scenario(ControlScenario(kind="misclassification", target_class=3))
        samples = scenario.clean_dataset(2, 0, "test", **SIZE)
        scored = [s for s in samples if scenario.counts_towards_rate(s)]
        self.assertEqual(len(scored), 1)
        self.assertTrue(all(s.class_id == 3 and s.answer == "yes" for s in scored))

    def test_indicator_follows_template(self):
        scenario = get_scenario(ControlScenario(kind="indeterminate", template="yesno_alt"))
        self.assertEqual(scenario.indicator_position, 5)


class TestControlPlan(unittest.TestCase):
    def test_layout(self):
        scenario = get_scenario(ControlScenario())
        plan = build_control_plan(ToyModelConfig(), scenario)
        self.assertEqual(plan.visual_layers, [1])
        self.assertEqual(plan.decoder_layers, [1])
        self.assertTrue(plan.cross_modality)
        self.assertTrue(plan.roi_only)
        self.assertEqual(plan.control_token_index, 4)
        bank = EditorBank.from_plan(plan, ToyModelConfig(), seed=0)
        self.assertEqual(
            [(site, layer) for site, layer, _ in bank.items()],
            [(Site.VISUAL, 1), (Site.CROSS_MODALITY, 0), (Site.CONTROL_TARGET, 1)],
        )

    def test_roi_only_leaves_background_patches_untouched(self):
        # readout at layer 1, so no attention mixes tokens after the visual edit
        config = ToyModelConfig(vision_layers=2)
        model = ToyMultimodalModel(config, init_weights(config, seed=0))
        scenario = get_scenario(ControlScenario())
        plan = build_control_plan(config, scenario, visual_rank=2, multimodal_rank=2)
        bank = EditorBank.from_plan(plan, config, seed=0)
        sample = scenario.clean_dataset(1, 0, "test")[0]
        roi = sample.image.roi_mask()
        self.assertLess(roi.sum(), roi.size)
        edited = model.project_cross_modality(
            model.encode_image(sample.image.pixels, bank, plan, roi), bank, plan, roi
        ).value
        base = model.project_cross_modality(model.encode_image(sample.image.pixels)).value
        np.testing.assert_array_equal(edited[roi == 0], base[roi == 0])
        self.assertFalse(np.allclose(edited[roi == 1], base[roi == 1]))


class TestPrecondition(unittest.TestCase):
    def test_incompetent_base_rejected(self):
        model = micro_model()
        scenario = get_scenario(ControlScenario())
        clean = scenario.clean_dataset(1, 0, "test", **SIZE)
        with self.assertRaisesRegex(PreconditionError, "clean accuracy"):
            check_precondition(model, scenario, clean, threshold=1.01)

    def test_run_refuses_below_threshold(self):
        cfg = ControlConfig(
            train_per_class=1, test_per_class=1, min_clean_accuracy=1.0, headroom=HeadroomConfig(steps=0)
        )
        model = micro_model()
        scenario = get_scenario(ControlScenario())
        gate = scenario.gate_dataset(1, 0, "test", **SIZE)
        if check_precondition(model, scenario, gate, threshold=0.0) < 1.0:
            with self.assertRaisesRegex(PreconditionError, "yesno"):
                run_control_training(model, ControlScenario(), cfg)

    def test_misalignment_gates_on_yes_no_questions(self):
        scenario = get_scenario(ControlScenario(kind="misalignment", misalign_target=1))
        gate = scenario.gate_dataset(2, 0, "test", **SIZE)
        self.assertEqual({s.task for s in gate}, {"yesno"})
        self.assertEqual({s.answer for s in gate}, {"yes", "no"})

    def test_gate_keeps_a_yes_no_template(self):
        scenario = get_scenario(ControlScenario(template="yesno_alt"))
        self.assertEqual({s.template for s in scenario.gate_dataset(1, 0, "test", **SIZE)}, {"yesno_alt"})


class TestCompetentBase(unittest.TestCase):
    def cfg(self, **kwargs):
        return ControlConfig(
            train_per_class=2, test_per_class=2, visual_rank=2, multimodal_rank=2,
            train=TrainConfig(batch_size=10, epochs=1, learning_rate=1e-2), **kwargs,
        )

    @patch("src.control.harness.headroom_train")
    @patch("src.control.harness.evaluate", return_value=0.95)
    def test_competent_base_is_used_as_is(self, evaluate, headroom):
        model = micro_model()
        scenario = get_scenario(ControlScenario())
        competent, accuracy = competent_base(model, scenario, self.cfg())
        self.assertIs(competent, model)
        self.assertEqual(accuracy, 0.95)
        headroom.assert_not_called()

    @patch("src.control.harness.evaluate", side_effect=[0.4, 0.97])
    def test_headroom_training_gets_the_run_past_the_gate(self, evaluate):
        model = micro_model()
        cfg = self.cfg()
        with patch("src.control.harness.headroom_train", return_value=model.weights) as headroom:
            editors, report = run_control_training(model, cfg.scenario_for(3), cfg)
        headroom.assert_called_once()
        self.assertEqual(headroom.call_args.args[3], cfg.min_clean_accuracy)
        self.assertEqual(len(editors), 3)
        self.assertEqual(report.target_class, 3)

    @patch("src.control.harness.evaluate", side_effect=[0.4, 0.6])
    def test_still_incompetent_after_headroom_training(self, evaluate):
        model = micro_model()
        with patch("src.control.harness.headroom_train", return_value=model.weights):
            with self.assertRaises(PreconditionError):
                run_control_training(model, ControlScenario(), self.cfg())


class TestEvalCounterfact(unittest.TestCase):
    def setUp(self):
        self.model = micro_model(seed=2)
        self.scenario = get_scenario(ControlScenario(kind="misclassification", target_class=3))
        self.plan = build_control_plan(self.model.config, self.scenario, visual_rank=2, multimodal_rank=2)
        self.test_set = self.scenario.clean_dataset(4, 0, "test", **SIZE)

    def test_identity_editors_disrupt_nothing(self):
        bank = EditorBank.from_plan(self.plan, self.model.config, seed=0)
        bank.set_identity()
        report = eval_counterfact(self.model, bank, self.plan, self.scenario, self.test_set)
        self.assertEqual(report.other_class_disruption, 0.0)
        self.assertTrue(all(row.changed == 0 for row in report.rows))
        self.assertEqual(len(report.rows), 10)
        target = next(row for row in report.rows if row.class_id == 3)
        self.assertEqual(target.evaluated, 2)

    def test_rates_are_fractions(self):
        bank = EditorBank.from_plan(self.plan, self.model.config, seed=1)
        report = eval_counterfact(self.model, bank, self.plan, self.scenario, self.test_set)
        self.assertTrue(0.0 <= report.counterfact_rate <= 1.0)
        self.assertTrue(0.0 <= report.other_class_disruption <= 1.0)
        self.assertEqual(report.target_class, 3)

    def test_no_scorable_target_samples(self):
        no_target = [s for s in self.test_set if s.class_id != 3]
        bank = EditorBank.from_plan(self.plan, self.model.config, seed=0)
        with self.assertRaises(ConfigError):
            eval_counterfact(self.model, bank, self.plan, self.scenario, no_target)

    def test_report_files(self):
        bank = EditorBank.from_plan(self.plan, self.model.config, seed=0)
        report = eval_counterfact(self.model, bank, self.plan, self.scenario, self.test_set)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report(report, tmp)
            self.assertEqual(path.name, "misclassification_cat.json")
            self.assertEqual(json.loads(path.read_text())["target_class"], 3)
            self.assertTrue((Path(tmp) / "misclassification_cat.csv").exists())
        table = reports_table([report])
        self.assertEqual(table["class"].tolist(), ["cat"])


class TestRunControlTraining(unittest.TestCase):
    def test_runs_are_independent_per_target(self):
        model = micro_model()
        cfg = ControlConfig(
            train_per_class=2,
            test_per_class=2,
            visual_rank=2,
            multimodal_rank=2,
            min_clean_accuracy=0.0,
            train=TrainConfig(batch_size=10, epochs=1, learning_rate=1e-2),
        )
        cat, cat_report = run_control_training(model, cfg.scenario_for(3), cfg)
        dog, dog_report = run_control_training(model, cfg.scenario_for(5), cfg)
        self.assertEqual((cat_report.target_class, dog_report.target_class), (3, 5))
        self.assertEqual(len(cat), 3)
        self.assertFalse(
            np.array_equal(cat.get(Site.CONTROL_TARGET, 1).W.value, dog.get(Site.CONTROL_TARGET, 1).W.value)
        )
        again, _ = run_control_training(model, cfg.scenario_for(3), cfg)
        for a, b in zip(cat.leaves(), again.leaves()):
            np.testing.assert_array_equal(a.value, b.value)


if __name__ == "__main__":
    unittest.main()
