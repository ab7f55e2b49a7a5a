"""Detection-to-decision toolkit for multi-view pod counting and genotype ranking.

Subpackages cover box geometry, detection-file ingestion, detection scoring,
centroid plot tracking, frame selection, feature grids, the fusion regressor,
ranking analytics and a seeded field simulator.
"""

__version__ = "0.1.0"
