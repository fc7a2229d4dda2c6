# Training services: PPO, distillation, gradient surgery, bandit and method trainers
