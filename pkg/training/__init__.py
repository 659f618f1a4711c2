"""
Optimisation, metrics, evaluation and the ablation harness
"""
