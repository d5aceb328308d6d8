"""v3dg: cluster-based level-of-detail engine for composed 3D Gaussian scenes.

Offline, each Gaussian asset is turned into a multi-layer bundle of clusters
whose coarser layers are optimized to preserve appearance; online, a
screen-space footprint test picks the cheapest sufficient clusters per frame.
"""

__version__ = "0.1.0"
