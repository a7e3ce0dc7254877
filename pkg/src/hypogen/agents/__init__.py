"""Specialized agents: generation, reflection, ranking, evolution, meta review, safety."""
