"""fed-hpo - local vs. global hyperparameter optimization in federated learning."""

__version__ = "0.1.0"
