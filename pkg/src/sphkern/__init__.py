"""Rotation-invariant kernels on the hypersphere and MMD-to-uniform regularisers."""
__version__ = "0.1.0"
