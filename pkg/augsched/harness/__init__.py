# Experiment harness: config, evaluation, metrics, suite, report, plots
