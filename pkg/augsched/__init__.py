# augsched: scheduled data-augmentation distillation for PPO
