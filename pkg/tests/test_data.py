import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from src.data import (
    CLASS_WORDS,
    EOS_ID,
    PAD_ID,
    VOCAB,
    DataConfig,
    collate,
    detokenize,
    dump_jsonl,
    gen_image,
    get_template,
    make_dataset,
    tokenize,
)
from src.data.datasets import image_seed
from src.data.images import NOISE_LEVEL
from src.errors import ConfigError


class TestVocab(unittest.TestCase):
    def test_vocabulary_size_and_specials(self):
        self.assertEqual(len(VOCAB), 64)
        self.assertEqual(len(set(VOCAB)), 64)
        self.assertEqual((PAD_ID, EOS_ID), (0, 1))

    def test_tokenize_detokenize(self):
        text = "is the object an cat in the image ?"
        self.assertEqual(detokenize(tokenize(text)), text)

    def test_unknown_word(self):
        with self.assertRaises(ConfigError):
            tokenize("what is a zebra")

    def test_indicator_position_points_at_class_word(self):
        for name in ("yesno", "yesno_alt"):
            template = get_template(name)
            ids = template.token_ids("dog")
            self.assertEqual(ids[template.indicator_position], tokenize("dog")[0])

    def test_unknown_template(self):
        with self.assertRaisesRegex(ConfigError, "Unknown prompt template"):
            get_template("riddle")


class TestImages(unittest.TestCase):
    def test_same_seed_same_image(self):
        a, b = gen_image(3, seed=42), gen_image(3, seed=42)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        self.assertEqual(a.roi_patches, b.roi_patches)

    def test_pixel_range_and_roi(self):
        image = gen_image(7, seed=1)
        self.assertEqual(image.pixels.shape, (16, 16))
        self.assertTrue(np.all((image.pixels >= 0.0) & (image.pixels <= 1.0)))
        self.assertTrue(np.any(image.pixels == 1.0))
        self.assertGreater(len(image.roi_patches), 0)
        mask = image.roi_mask()
        self.assertEqual(mask.shape, (16,))
        self.assertEqual(mask.sum(), len(image.roi_patches))

    def test_glyph_pixels_lie_inside_roi(self):
        image = gen_image(0, seed=9)
        rows, cols = np.nonzero(image.pixels > NOISE_LEVEL)
        for r, c in zip(rows, cols):
            self.assertIn((r // 4) * 4 + c // 4, image.roi_patches)

    def test_bad_class(self):
        with self.assertRaises(ConfigError):
            gen_image(10, seed=0)


class TestDatasets(unittest.TestCase):
    def test_classify_is_balanced_and_answers_class_word(self):
        samples = make_dataset("classify", 3, seed=0)
        self.assertEqual(len(samples), 30)
        self.assertEqual(sorted(set(s.class_id for s in samples)), list(range(10)))
        for sample in samples:
            self.assertEqual(sample.answer, CLASS_WORDS[sample.class_id])
            self.assertEqual(sample.token_ids[-1], EOS_ID)
            self.assertEqual(sample.answer_ids, tokenize(sample.answer))

    def test_yesno_is_exactly_half_yes(self):
        samples = make_dataset("yesno", 4, seed=1)
        self.assertEqual(sum(s.answer == "yes" for s in samples), len(samples) // 2)
        for sample in samples:
            shown = detokenize(sample.prompt_ids).split()[get_template("yesno").indicator_position]
            self.assertEqual(sample.answer == "yes", shown == CLASS_WORDS[sample.class_id])

    def test_every_class_gets_both_answers(self):
        samples = make_dataset("yesno", 2, seed=0)
        for class_id in range(10):
            answers = sorted(s.answer for s in samples if s.class_id == class_id)
            self.assertEqual(answers, ["no", "yes"])

    def test_pure_function_of_arguments(self):
        a = make_dataset("yesno", 2, seed=5, split="test")
        b = make_dataset("yesno", 2, seed=5, split="test")
        self.assertEqual([s.token_ids for s in a], [s.token_ids for s in b])
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.image.pixels, y.image.pixels)

    def test_splits_use_disjoint_seeds(self):
        train = {s.image.seed for s in make_dataset("classify", 5, seed=0, split="train")}
        test = {s.image.seed for s in make_dataset("classify", 5, seed=0, split="test")}
        self.assertFalse(train & test)

    def test_image_seed_range(self):
        with self.assertRaises(ConfigError):
            image_seed("train", 1000, 0, 0)
        with self.assertRaises(ConfigError):
            image_seed("validation", 0, 0, 0)

    def test_counterfactual_misclass_relabels_only_target(self):
        clean = make_dataset("yesno", 3, seed=0)
        counter = make_dataset("counterfactual_misclass", 3, seed=0, target_class=3)
        for before, after in zip(clean, counter):
            self.assertEqual(before.prompt_ids, after.prompt_ids)
            if before.class_id == 3:
                self.assertEqual(after.answer, "no")
            else:
                self.assertEqual(after.answer, before.answer)

    def test_counterfactual_misalign(self):
        counter = make_dataset("counterfactual_misalign", 2, seed=0, target_class=3, misalign_target=5)
        for sample in counter:
            expected = "dog" if sample.class_id == 3 else CLASS_WORDS[sample.class_id]
            self.assertEqual(sample.answer, expected)

    def test_counterfactual_indeterminate(self):
        counter = make_dataset("counterfactual_indeterminate", 2, seed=0, target_class=8)
        for sample in counter:
            if sample.class_id == 8:
                self.assertEqual(sample.answer, "not sure")
                self.assertEqual(sample.answer_ids, tokenize("not sure"))

    def test_counterfactual_needs_target(self):
        with self.assertRaises(ConfigError):
            make_dataset("counterfactual_misclass", 1, seed=0)
        with self.assertRaises(ConfigError):
            make_dataset("counterfactual_misalign", 1, seed=0, target_class=3, misalign_target=3)

    def test_template_must_fit_task(self):
        with self.assertRaises(ConfigError):
            make_dataset("classify", 1, seed=0, template="yesno")
        with self.assertRaises(ConfigError):
            make_dataset("yesno", 1, seed=0, template="classify")
        self.assertEqual(len(make_dataset("yesno", 1, seed=0, template="yesno_alt")), 10)

    def test_unknown_task(self):
        with self.assertRaisesRegex(ConfigError, "Unknown task"):
            make_dataset("captioning", 1, seed=0)

    def test_data_config_builds_both_splits(self):
        cfg = DataConfig(task="classify", train_per_class=2, test_per_class=1)
        self.assertEqual(len(cfg.build("train")), 20)
        self.assertEqual(len(cfg.build("test")), 10)


class TestCollate(unittest.TestCase):
    def test_right_padding_and_masks(self):
        samples = make_dataset("classify", 1, seed=0)[:1] + make_dataset("yesno", 1, seed=0)[:1]
        batch = collate(samples)
        width = max(len(s.token_ids) for s in samples)
        self.assertEqual(batch.token_ids.shape, (2, width))
        short = samples[1]
        np.testing.assert_array_equal(batch.token_ids[1, len(short.token_ids):], PAD_ID)
        self.assertFalse(batch.loss_mask[1, len(short.token_ids):].any())
        self.assertEqual(int(batch.loss_mask[1].sum()), len(short.token_ids) - short.prompt_len)
        np.testing.assert_array_equal(batch.prompt_lens, [s.prompt_len for s in samples])
        self.assertEqual(batch.images.shape, (2, 16, 16))
        self.assertEqual(batch.roi_mask.shape, (2, 16))

    def test_empty(self):
        with self.assertRaises(ConfigError):
            collate([])


class TestDump(unittest.TestCase):
    def test_jsonl_records(self):
        samples = make_dataset("yesno", 1, seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            path = dump_jsonl(samples, Path(tmp) / "train.jsonl")
            lines = path.read_text().splitlines()
            self.assertEqual(len(lines), len(samples))
            record = json.loads(lines[0])
            self.assertEqual(set(record), {"class", "seed", "pixels", "tokens", "label", "roi"})
            frame = pd.read_json(path, lines=True)
            self.assertEqual(frame["label"].tolist(), [s.answer for s in samples])
            self.assertEqual(len(record["pixels"]), 256)

    def test_pixels_read_back_exactly(self):
        samples = make_dataset("classify", 1, seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = dump_jsonl(samples, Path(tmp) / "train.jsonl")
            records = [json.loads(line) for line in path.read_text().splitlines()]
        for sample, record in zip(samples, records):
            pixels = np.array(record["pixels"]).reshape(sample.image.pixels.shape)
            np.testing.assert_array_equal(pixels, sample.image.pixels)
            self.assertEqual(record["tokens"], list(sample.token_ids))


if __name__ == "__main__":
    unittest.main()
