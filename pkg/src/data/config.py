"""
Dataset selection for a run
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.data.datasets import Sample, make_dataset


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task: str = "classify"
    train_per_class: int = Field(200, ge=1)
    test_per_class: int = Field(50, ge=1)
    template: Optional[str] = None
    target_class: Optional[int] = None
    misalign_target: Optional[int] = None
    seed: int = Field(0, ge=0, lt=1000)

    def build(self, split: str, image_size: int = 16, patch_size: int = 4) -> List[Sample]:
        """The train or test split this config describes."""
        return make_dataset(
            self.task,
            self.train_per_class if split == "train" else self.test_per_class,
            self.seed,
            split=split,
            template=self.template,
            target_class=self.target_class,
            misalign_target=self.misalign_target,
            image_size=image_size,
            patch_size=patch_size,
        )
