"""
Counterfactual control scenarios

Each scenario decides which dataset it trains on, which target-class
samples count towards the counterfact rate and what answer counts as the
counterfactual one.
"""

from abc import ABC, abstractmethod
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.data.datasets import Sample, make_dataset
from src.data.images import NUM_CLASSES
from src.data.vocab import ANSWER_NO, ANSWER_NOT_SURE, ANSWER_YES, CLASS_WORDS, get_template
from src.errors import ConfigError

GATE_TASK = "yesno"

ScenarioKind = Literal["misclassification", "misalignment", "indeterminate"]


class ControlScenario(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ScenarioKind = "misclassification"
    target_class: int = Field(3, ge=0, lt=NUM_CLASSES)
    misalign_target: Optional[int] = Field(None, ge=0, lt=NUM_CLASSES)
    template: Optional[str] = None

    @model_validator(mode="after")
    def _check_targets(self) -> "ControlScenario":
        if self.kind == "misalignment":
            if self.misalign_target is None:
                raise ValueError("misalignment needs misalign_target")
            if self.misalign_target == self.target_class:
                raise ValueError(f"misalign_target must differ from target_class ({self.target_class})")
        return self


class BaseScenario(ABC):
    """Interface every control scenario implements."""

    kind: str
    task: str
    base_task: str
    default_template: str

    def __init__(self, spec: ControlScenario):
        self.spec = spec
        self.target_class = spec.target_class
        self.template = spec.template or self.default_template
        get_template(self.template)

    @property
    def indicator_position(self) -> int:
        return get_template(self.template).indicator_position

    @abstractmethod
    def counterfactual_answer(self) -> str:
        """Answer the trained editors should give on target-class samples."""

    def counts_towards_rate(self, sample: Sample) -> bool:
        """Whether a clean target-class sample is scored for the counterfact rate."""
        return sample.class_id == self.target_class

    def dataset(self, n_per_class: int, seed: int, split: str, image_size: int = 16, patch_size: int = 4) -> List[Sample]:
        return make_dataset(
            self.task, n_per_class, seed, split=split, template=self.template,
            target_class=self.target_class, misalign_target=self.spec.misalign_target,
            image_size=image_size, patch_size=patch_size,
        )

    def clean_dataset(self, n_per_class: int, seed: int, split: str, image_size: int = 16, patch_size: int = 4) -> List[Sample]:
        return make_dataset(
            self.base_task, n_per_class, seed, split=split, template=self.template,
            image_size=image_size, patch_size=patch_size,
        )

    def gate_dataset(self, n_per_class: int, seed: int, split: str, image_size: int = 16, patch_size: int = 4) -> List[Sample]:
        """Clean yes/no questions the base must answer before any control run."""
        template = self.template if "{cls}" in get_template(self.template).text else GATE_TASK
        return make_dataset(
            GATE_TASK, n_per_class, seed, split=split, template=template,
            image_size=image_size, patch_size=patch_size,
        )


class MisclassificationScenario(BaseScenario):
    """Matched-indicator prompts about class e are answered "no"."""

    kind = "misclassification"
    task = "counterfactual_misclass"
    base_task = "yesno"
    default_template = "yesno"

    def counterfactual_answer(self) -> str:
        return ANSWER_NO

    def counts_towards_rate(self, sample: Sample) -> bool:
        return sample.class_id == self.target_class and sample.answer == ANSWER_YES


class MisalignmentScenario(BaseScenario):
    """Class e is named as class e_bar."""

    kind = "misalignment"
    task = "counterfactual_misalign"
    base_task = "classify"
    default_template = "classify"

    def counterfactual_answer(self) -> str:
        return CLASS_WORDS[self.spec.misalign_target]


class IndeterminateScenario(BaseScenario):
    """Questions about class e are answered "not sure"."""

    kind = "indeterminate"
    task = "counterfactual_indeterminate"
    base_task = "yesno"
    default_template = "yesno"

    def counterfactual_answer(self) -> str:
        return ANSWER_NOT_SURE


_SCENARIOS = {
    "misclassification": MisclassificationScenario,
    "misalignment": MisalignmentScenario,
    "indeterminate": IndeterminateScenario,
}


def get_scenario(spec: ControlScenario) -> BaseScenario:
    """
    Create the scenario object for a ControlScenario config.

    Raises:
        ConfigError: unknown kind
    """
    if spec.kind not in _SCENARIOS:
        raise ConfigError(f"Unknown control scenario: '{spec.kind}'. Supported: {', '.join(_SCENARIOS)}")
    return _SCENARIOS[spec.kind](spec)
