from pathlib import Path
from typing import Dict, Optional, Type, Union

import structlog

from augsched.config.experiment import ExperimentConfig
from augsched.services.training.base import BaseTrainer, TrainResult
from augsched.services.training.baselines import DrACPAGradTrainer, DrACTrainer, PPOTrainer, RADTrainer
from augsched.services.training.exda import ExDATrainer, ExDrACTrainer
from augsched.services.training.inda import InDATrainer, UCBExDATrainer, UCBInDATrainer
from augsched.utils.errors import ScheduleError

# Set up logger
logger = structlog.get_logger("augsched")

# Central mapping for method trainers
METHOD_TRAINERS: Dict[str, Type[BaseTrainer]] = {
    "ppo": PPOTrainer,
    "rad": RADTrainer,
    "drac": DrACTrainer,
    "drac_pagrad": DrACPAGradTrainer,
    "inda": InDATrainer,
    "exda": ExDATrainer,
    "exdrac": ExDrACTrainer,
    "ucb_inda": UCBInDATrainer,
    "ucb_exda": UCBExDATrainer,
}


class TrainingOrchestrator:
    """Builds and runs the trainer registered for a method tag.

    To add a method:
      1. Subclass BaseTrainer, overriding the hooks it needs.
      2. Register it in METHOD_TRAINERS and add its tag to MethodTag.
    """

    def __init__(self, config: ExperimentConfig):
        """
        Initialize orchestrator

        Args:
            config (ExperimentConfig): experiment configuration shared by all runs
        """
        self.config = config

    def trainer_for(
        self, method: str, seed: int, run_dir: Optional[Union[str, Path]] = None, **kwargs
    ) -> BaseTrainer:
        """
        Instantiate the trainer of ``method``

        Raises:
            ScheduleError: if no trainer is registered for ``method``
        """
        trainer_cls = METHOD_TRAINERS.get(method)
        if trainer_cls is None:
            raise ScheduleError(f"No trainer registered for method {method!r}", error_code="unknown_method")
        return trainer_cls(self.config.for_run(method), seed, run_dir, **kwargs)

    def run(self, method: str, seed: int, run_dir: Optional[Union[str, Path]] = None, **kwargs) -> TrainResult:
        """
        Train one (method, seed) run to completion

        Args:
            method (str): method tag
            seed (int): run seed
            run_dir (Optional[Union[str, Path]]): output directory of the run

        Returns:
            TrainResult: the trained parameters and the run's metrics
        """
        if run_dir is not None:
            Path(run_dir).mkdir(parents=True, exist_ok=True)
        logger.info("Dispatching run", method=method, seed=seed, run_dir=str(run_dir) if run_dir else None)
        return self.trainer_for(method, seed, run_dir, **kwargs).train()


def run_method(
    config: ExperimentConfig, method: str, seed: int, run_dir: Optional[Union[str, Path]] = None, **kwargs
) -> TrainResult:
    return TrainingOrchestrator(config).run(method, seed, run_dir, **kwargs)
