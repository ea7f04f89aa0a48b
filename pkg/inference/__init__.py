"""
Truncated tree-reweighted inference, decoding and exact oracles.
"""
