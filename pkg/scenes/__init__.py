"""
Synthetic multimodal scenes and the scene file codec.
"""
