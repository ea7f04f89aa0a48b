"""
Clique-marginal risk, its gradient through truncated message passing, and training.
"""
