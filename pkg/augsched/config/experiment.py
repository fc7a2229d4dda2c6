"""
Experiment configuration: a YAML document with one section per component.

Required top-level blocks are ``schedule`` and ``seeds``; every other block
falls back to the default hyperparameters of the model it configures.
"""
from pathlib import Path
from typing import Any, List, Optional, Sequence, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from augsched.augment.transforms import AugmentationSpec
from augsched.config.settings import settings
from augsched.envs.gridworld import NUM_ACTIONS, EnvConfig
from augsched.nn.network import NetworkSpec
from augsched.services.bandit import BanditConfig
from augsched.services.distill import DAConfig
from augsched.services.ppo import PPOConfig
from augsched.services.training.schedule import MethodTag, ScheduleConfig
from augsched.utils.errors import AugschedError, ConfigError

REQUIRED_BLOCKS = ("schedule", "seeds")
UCB_METHODS = ("ucb_inda", "ucb_exda")


def default_augmentations() -> List[AugmentationSpec]:
    return [AugmentationSpec(kind="identity"), AugmentationSpec(kind="random_crop"), AugmentationSpec(kind="random_color")]


class ExperimentConfig(BaseModel):
    """A full experiment: environment, network, optimizers, schedule, seeds"""
    model_config = ConfigDict(extra="forbid")

    env: EnvConfig = Field(default_factory=EnvConfig)
    network: Optional[NetworkSpec] = None
    ppo: PPOConfig = Field(default_factory=PPOConfig)
    da: DAConfig = Field(default_factory=DAConfig)
    schedule: ScheduleConfig
    bandit: BanditConfig = Field(default_factory=BanditConfig)
    augmentations: List[AugmentationSpec] = Field(default_factory=default_augmentations, min_length=1)
    methods: Optional[List[MethodTag]] = None
    seeds: List[int] = Field(..., min_length=1)
    output_dir: str = settings.AUGSCHED_OUTPUT_DIR
    eval_episodes: int = Field(50, ge=1)
    eval_every: int = Field(10, ge=1)
    init_scale: float = Field(0.05, ge=0.0)

    @field_validator("augmentations", mode="before")
    @classmethod
    def _kind_shorthand(cls, value):
        if isinstance(value, list):
            return [{"kind": v} if isinstance(v, str) else v for v in value]
        return value

    @model_validator(mode="after")
    def _resolve(self) -> "ExperimentConfig":
        if self.network is None:
            self.network = NetworkSpec(input_shape=self.env.observation_shape, num_actions=NUM_ACTIONS)
        if tuple(self.network.input_shape) != self.env.observation_shape:
            raise ValueError(
                f"network.input_shape {tuple(self.network.input_shape)} does not match the env "
                f"observation shape {self.env.observation_shape}"
            )
        if self.network.num_actions != NUM_ACTIONS:
            raise ValueError(f"network.num_actions must be {NUM_ACTIONS}")
        if self.env.num_test_backgrounds < 1:
            raise ValueError("env.num_test_backgrounds must be at least 1 for test_bg evaluation")
        if self.methods is None:
            self.methods = [self.schedule.method]
        if (
            self.bandit.require_identity
            and any(m in UCB_METHODS for m in self.methods)
            and not any(a.is_identity for a in self.augmentations)
        ):
            raise ValueError("augmentations must include identity for UCB methods")
        return self

    def for_run(self, method: str) -> "ExperimentConfig":
        """Copy with ``schedule.method`` set to ``method``"""
        return self.model_copy(update={"schedule": self.schedule.model_copy(update={"method": method})})

    def with_overrides(
        self,
        method: Optional[str] = None,
        seeds: Optional[Sequence[int]] = None,
        output_dir: Optional[str] = None,
        augmentation: Optional[str] = None,
    ) -> "ExperimentConfig":
        """Apply CLI overrides and re-validate"""
        data = self.model_dump(mode="json")
        if method is not None:
            data["methods"] = [method]
            data["schedule"]["method"] = method
        if seeds is not None:
            data["seeds"] = list(seeds)
        if output_dir is not None:
            data["output_dir"] = output_dir
        if augmentation is not None:
            data["schedule"]["augmentation"] = {"kind": augmentation}
        return validate_config(data)


def _line_of(node: Any, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the deepest YAML node reachable along ``loc``"""
    line = None
    for key in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == str(key)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def validate_config(data: Any, source: str = "<config>", text: Optional[str] = None) -> ExperimentConfig:
    """
    Validate a parsed document

    Raises:
        ConfigError: naming every failing location, with line numbers when ``text`` is given
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping of blocks")
    missing = [block for block in REQUIRED_BLOCKS if block not in data]
    if missing:
        raise ConfigError(f"{source}: missing required blocks: {', '.join(missing)}", error_code="config_missing_block")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        root = yaml.compose(text) if text else None
        problems = []
        for error in e.errors():
            loc = [part for part in error["loc"] if not isinstance(part, str) or not part.startswith("function-")]
            where = ".".join(str(part) for part in loc) or "<root>"
            line = _line_of(root, loc) if root is not None else None
            prefix = f"{source}:{line}" if line else source
            problems.append(f"{prefix}: {where}: {error['msg']}")
        raise ConfigError("invalid configuration\n" + "\n".join(problems), error_code="config_invalid")
    except AugschedError as e:
        raise ConfigError(f"{source}: {e.detail}", error_code="config_invalid")


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate an experiment config file

    Args:
        path (Union[str, Path]): YAML file

    Returns:
        ExperimentConfig: validated config with defaults applied

    Raises:
        ConfigError: on unreadable files, YAML syntax errors (with line and
            column) or validation failures
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}", error_code="config_unreadable")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigError(f"{where}: {getattr(e, 'problem', None) or e}", error_code="config_syntax")
    return validate_config(data, source=str(path), text=text)


def serialize_config(config: ExperimentConfig) -> str:
    """YAML text that parses back to an equal config"""
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
