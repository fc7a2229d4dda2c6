from typing import List, Literal, Optional, get_args

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from augsched.augment.transforms import AugmentationSpec

MethodTag = Literal[
    "ppo", "rad", "drac", "drac_pagrad", "inda", "exda", "exdrac", "ucb_inda", "ucb_exda"
]
METHODS = get_args(MethodTag)


class ScheduleConfig(BaseModel):
    """When and how augmentation enters training"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: MethodTag = "ppo"
    epochs: int = Field(..., ge=0)
    interval: int = Field(5, ge=1)
    window_start: int = Field(0, ge=0)
    window_end: Optional[int] = Field(None, ge=0)
    exda_epochs: int = Field(30, ge=0)
    alpha_r: float = Field(0.1, ge=0.0)
    augmentation: AugmentationSpec = AugmentationSpec(kind="random_color")
    pagrad_per_layer: bool = False

    @field_validator("augmentation", mode="before")
    @classmethod
    def _kind_shorthand(cls, value):
        return {"kind": value} if isinstance(value, str) else value

    @model_validator(mode="before")
    @classmethod
    def _default_window_end(cls, data):
        if isinstance(data, dict) and data.get("window_end") is None and "epochs" in data:
            data = {**data, "window_end": data["epochs"]}
        return data

    @model_validator(mode="after")
    def _check_window(self) -> "ScheduleConfig":
        if not self.window_start <= self.window_end <= self.epochs:
            raise ValueError(
                f"need 0 <= window_start ({self.window_start}) <= window_end ({self.window_end}) <= epochs ({self.epochs})"
            )
        return self

    def da_epochs(self) -> List[int]:
        """Epochs (1-based) after whose RL update a distillation round runs"""
        return [
            n for n in range(1, self.epochs + 1)
            if self.window_start <= n <= self.window_end and (n - 1) % self.interval == 0
        ]

    def is_da_epoch(self, epoch: int) -> bool:
        return self.window_start <= epoch <= self.window_end and (epoch - 1) % self.interval == 0
