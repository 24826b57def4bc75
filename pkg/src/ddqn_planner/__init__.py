"""Grid path planning with an improved Double DQN and classical baselines."""

__version__ = "0.1.0"
