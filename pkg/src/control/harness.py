"""
Token-wise control runs

The control editor set is {visual editor at vision layer 1, cross-modality
editor}, both restricted to RoI tokens, plus one decoder-layer-1 editor on
the indicator token of the prompt template.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.control.scenarios import BaseScenario, ControlScenario, get_scenario
from src.data.datasets import Sample
from src.data.vocab import CLASS_WORDS, detokenize
from src.editor import EditorBank
from src.errors import ConfigError, PreconditionError
from src.model.config import EditPlan, ToyModelConfig
from src.model.pretrain import HeadroomConfig, headroom_train
from src.model.toy_model import ToyMultimodalModel
from src.tensor import no_grad
from src.train.config import TrainConfig
from src.train.trainer import evaluate, predict, train_editors

logger = logging.getLogger(__name__)


class ControlConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: ControlScenario = Field(default_factory=ControlScenario)
    targets: List[int] = Field(default_factory=lambda: [3, 5, 8, 6, 9], min_length=1)
    train_per_class: int = Field(100, ge=1)
    test_per_class: int = Field(10, ge=1)
    visual_rank: int = Field(6, ge=1)
    multimodal_rank: int = Field(4, ge=1)
    min_clean_accuracy: float = Field(0.9, ge=0.0, le=1.0)
    train: TrainConfig = Field(default_factory=lambda: TrainConfig(epochs=1, learning_rate=5e-3, batch_size=16))
    headroom: HeadroomConfig = Field(default_factory=HeadroomConfig)

    def scenario_for(self, target_class: int) -> ControlScenario:
        return self.scenario.model_copy(update={"target_class": target_class})


@dataclass
class ClassRow:
    class_id: int
    class_word: str
    evaluated: int
    counterfact: int
    changed: int
    base_correct: int


@dataclass
class ControlReport:
    kind: str
    target_class: int
    misalign_target: Optional[int]
    template: str
    counterfact_rate: float
    other_class_disruption: float
    base_clean_accuracy: float
    rows: List[ClassRow] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows])


def build_control_plan(model_config: ToyModelConfig, scenario: BaseScenario, visual_rank: int = 6, multimodal_rank: int = 4) -> EditPlan:
    """Visual layer 1 + cross-modality on RoI tokens, decoder layer 1 on the indicator token."""
    plan = EditPlan(
        visual_layers=[1],
        visual_rank=visual_rank,
        cross_modality=True,
        decoder_layers=[1],
        multimodal_rank=multimodal_rank,
        prefix_len=0,
        suffix_len=0,
        control_token_index=scenario.indicator_position,
        roi_only=True,
    )
    plan.validate_for(model_config)
    return plan


def check_precondition(
    model: ToyMultimodalModel,
    scenario: BaseScenario,
    clean_test: Sequence[Sample],
    threshold: float,
    editors: Optional[EditorBank] = None,
    plan: Optional[EditPlan] = None,
) -> float:
    """
    Clean accuracy of the model on `clean_test`.

    Raises:
        PreconditionError: if the accuracy is below threshold
    """
    accuracy = evaluate(model, editors, plan, clean_test)
    if accuracy < threshold:
        raise PreconditionError(
            f"control training needs a base competent on '{clean_test[0].task if clean_test else scenario.base_task}': "
            f"measured clean accuracy {accuracy:.3f} < required {threshold:.3f}"
        )
    return accuracy


def eval_counterfact(
    model: ToyMultimodalModel,
    editors: EditorBank,
    plan: EditPlan,
    scenario: BaseScenario,
    test_set: Sequence[Sample],
    reference: Optional[List[List[int]]] = None,
) -> ControlReport:
    """
    Counterfact rate on the target class and disruption on every other class.

    Args:
        test_set: clean samples (ground-truth answers)
        reference: editor-free predictions for test_set; computed when omitted

    Raises:
        ConfigError: if no target-class sample counts towards the rate
    """
    scored = [s for s in test_set if scenario.counts_towards_rate(s)]
    if not scored:
        raise ConfigError(
            f"test set has no scorable samples of target class {scenario.target_class} "
            f"({CLASS_WORDS[scenario.target_class]})"
        )
    with no_grad():
        if reference is None:
            reference = predict(model, None, None, test_set)
        edited = predict(model, editors, plan, test_set)

    counterfactual = scenario.counterfactual_answer()
    buckets: Dict[int, ClassRow] = {}
    for sample, ref_ids, ids in zip(test_set, reference, edited):
        is_target = sample.class_id == scenario.target_class
        if is_target and not scenario.counts_towards_rate(sample):
            continue
        row = buckets.setdefault(
            sample.class_id, ClassRow(sample.class_id, CLASS_WORDS[sample.class_id], 0, 0, 0, 0)
        )
        row.evaluated += 1
        row.counterfact += int(detokenize(ids) == counterfactual)
        row.changed += int(ids != ref_ids)
        row.base_correct += int(ref_ids == sample.answer_ids)

    target_row = buckets[scenario.target_class]
    others = [row for cls, row in buckets.items() if cls != scenario.target_class]
    other_total = sum(row.evaluated for row in others)
    base_correct = sum(row.base_correct for row in buckets.values())
    return ControlReport(
        kind=scenario.kind,
        target_class=scenario.target_class,
        misalign_target=scenario.spec.misalign_target,
        template=scenario.template,
        counterfact_rate=target_row.counterfact / target_row.evaluated,
        other_class_disruption=sum(row.changed for row in others) / other_total if other_total else 0.0,
        base_clean_accuracy=base_correct / sum(row.evaluated for row in buckets.values()),
        rows=[buckets[cls] for cls in sorted(buckets)],
    )


def competent_base(
    model: ToyMultimodalModel,
    scenario: BaseScenario,
    cfg: ControlConfig,
    seed: int = 0,
) -> Tuple[ToyMultimodalModel, float]:
    """
    A base that answers the scenario's clean yes/no questions at cfg.min_clean_accuracy.

    A base below the threshold gets headroom training first (cfg.headroom);
    a base already above it is returned as is.

    Returns:
        (competent model, clean yes/no accuracy on the test split)

    Raises:
        PreconditionError: if the base is still below the threshold
    """
    size = dict(image_size=model.config.image_size, patch_size=model.config.patch_size)
    gate = scenario.gate_dataset(cfg.test_per_class, seed, "test", **size)
    accuracy = evaluate(model, None, None, gate)
    if accuracy >= cfg.min_clean_accuracy:
        return model, accuracy
    if cfg.headroom.steps > 0:
        logger.info("base yes/no accuracy %.3f below %.3f; headroom training", accuracy, cfg.min_clean_accuracy)
        weights = headroom_train(model.config, model.weights, seed, cfg.min_clean_accuracy, cfg.headroom)
        model = ToyMultimodalModel(model.config, weights)
    return model, check_precondition(model, scenario, gate, cfg.min_clean_accuracy)


def run_control_training(
    model: ToyMultimodalModel,
    spec: ControlScenario,
    cfg: ControlConfig,
    seed: int = 0,
) -> Tuple[EditorBank, ControlReport]:
    """
    Train a fresh control editor set on the scenario's counterfactual data.

    The editors are trained against competent_base(model, ...); pass a base
    that already went through competent_base to skip headroom training.

    Returns:
        (trained editors, report on the clean train split)

    Raises:
        PreconditionError: if the base cannot be made yes/no competent
    """
    scenario = get_scenario(spec)
    model, accuracy = competent_base(model, scenario, cfg, seed)
    logger.info("control %s on class %d: clean yes/no accuracy %.3f", scenario.kind, scenario.target_class, accuracy)

    size = dict(image_size=model.config.image_size, patch_size=model.config.patch_size)
    plan = build_control_plan(model.config, scenario, cfg.visual_rank, cfg.multimodal_rank)
    counterfactual = scenario.dataset(cfg.train_per_class, seed, "train", **size)
    editors, _ = train_editors(model, plan, counterfactual, cfg.train)
    clean_train = scenario.clean_dataset(cfg.train_per_class, seed, "train", **size)
    return editors, eval_counterfact(model, editors, plan, scenario, clean_train)


def write_report(report: ControlReport, out_dir: Union[str, Path]) -> Path:
    """report.json plus a per-class CSV named after the target class."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = f"{report.kind}_{CLASS_WORDS[report.target_class]}"
    (out_dir / f"{name}.json").write_text(json.dumps(report.to_dict(), indent=2))
    report.to_frame().to_csv(out_dir / f"{name}.csv", index=False)
    return out_dir / f"{name}.json"


def reports_table(reports: Sequence[ControlReport]) -> pd.DataFrame:
    """One row per target class: class, counterfact_rate, other_disruption."""
    return pd.DataFrame(
        [
            {
                "class": CLASS_WORDS[r.target_class],
                "kind": r.kind,
                "counterfact_rate": r.counterfact_rate,
                "other_disruption": r.other_class_disruption,
                "base_clean_accuracy": r.base_clean_accuracy,
            }
            for r in reports
        ]
    )
