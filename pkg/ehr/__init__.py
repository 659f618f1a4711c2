"""
EHR domain model: trajectories, vocabularies, batching and synthetic data
"""
