"""Cluster-adaptive meta-learning for few-shot RL over personalized environments."""

__version__ = "0.1.0"
