"""
Parameter bundles and grounding of multimodal graphs into cost tables.
"""
