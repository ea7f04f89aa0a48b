"""
Command-line front end, evaluation metrics and experiment presets.
"""
