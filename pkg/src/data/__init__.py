"""
Synthetic multimodal instruction data
"""

from src.data.config import DataConfig
from src.data.datasets import TASKS, Batch, Sample, collate, dump_jsonl, make_dataset
from src.data.images import NUM_CLASSES, SynthImage, gen_image
from src.data.vocab import CLASS_WORDS, EOS_ID, PAD_ID, TEMPLATES, VOCAB, detokenize, get_template, tokenize

__all__ = [
    "Batch",
    "DataConfig",
    "CLASS_WORDS",
    "EOS_ID",
    "NUM_CLASSES",
    "PAD_ID",
    "Sample",
    "SynthImage",
    "TASKS",
    "TEMPLATES",
    "VOCAB",
    "collate",
    "detokenize",
    "dump_jsonl",
    "gen_image",
    "get_template",
    "make_dataset",
    "tokenize",
]
