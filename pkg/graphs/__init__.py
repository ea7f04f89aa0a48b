"""
Multimodal factor graphs and latent-node augmentation.
"""
