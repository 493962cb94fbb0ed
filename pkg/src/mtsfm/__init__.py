"""Self-supervised monocular depth, ego-motion and intrinsics learning at desk scale."""

__version__ = "0.1.0"
