"""Rescue scheduling on a grid with heuristic multi-agent Q-learning."""
