"""Streaming hierarchical supervoxel segmentation toolkit.

Pipeline stages: bilateral pre-filtering, dense backward optical flow,
flow-guided graph-based supervoxel hierarchies computed over a sliding
two-subsequence window, affine motion-layer grouping on top of the
supervoxels, and a benchmark metric suite with a synthetic ground-truth
generator for verification.
"""

__version__ = "0.1.0"
