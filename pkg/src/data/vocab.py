"""
Closed word-level vocabulary and prompt templates
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

from src.errors import ConfigError

PAD = "<pad>"
EOS = "<eos>"

CLASS_WORDS = ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"]

_TEMPLATE_WORDS = [
    "what", "is", "the", "object", "in", "image", "?", "answer", "with", "one", "word",
    "does", "this", "picture", "show", "an", "or", "not", "yes", "no", "sure",
]
_DIGITS = [str(i) for i in range(10)]
_FILLER = [
    "a", "of", "color", "shape", "there", "are", "how", "many", "which", "where", "left",
    "right", "top", "bottom", "center", "and", "it", "to", "be", "small", "large",
]

VOCAB: List[str] = [PAD, EOS] + _TEMPLATE_WORDS + CLASS_WORDS + _DIGITS + _FILLER
WORD_TO_ID: Dict[str, int] = {word: index for index, word in enumerate(VOCAB)}

PAD_ID = WORD_TO_ID[PAD]
EOS_ID = WORD_TO_ID[EOS]

ANSWER_YES = "yes"
ANSWER_NO = "no"
ANSWER_NOT_SURE = "not sure"


def tokenize(text: str) -> List[int]:
    """
    Whitespace word-level ids.

    Raises:
        ConfigError: on an out-of-vocabulary word
    """
    ids = []
    for word in text.split():
        if word not in WORD_TO_ID:
            raise ConfigError(f"word '{word}' is not in the {len(VOCAB)}-word vocabulary")
        ids.append(WORD_TO_ID[word])
    return ids


def detokenize(ids: List[int]) -> str:
    return " ".join(VOCAB[int(i)] for i in ids)


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt with an optional {cls} slot; indicator_position is its token index."""

    name: str
    text: str
    indicator_position: int

    def render(self, class_word: Optional[str] = None) -> str:
        return self.text.format(cls=class_word) if "{cls}" in self.text else self.text

    def token_ids(self, class_word: Optional[str] = None) -> List[int]:
        return tokenize(self.render(class_word))


TEMPLATES: Dict[str, PromptTemplate] = {
    "classify": PromptTemplate("classify", "what is the object in the image ? answer with one word", 3),
    "yesno": PromptTemplate("yesno", "is the object an {cls} in the image ?", 4),
    "yesno_alt": PromptTemplate("yesno_alt", "does this picture show an {cls} or not ?", 5),
}


def get_template(name: str) -> PromptTemplate:
    if name not in TEMPLATES:
        raise ConfigError(f"Unknown prompt template: '{name}'. Known: {sorted(TEMPLATES)}")
    return TEMPLATES[name]
