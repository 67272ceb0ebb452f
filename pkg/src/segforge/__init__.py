"""segforge: content pipeline for maze-based chemistry learning games.

The pipeline turns a curated compound dataset and a procedurally generated
maze content space into a difficulty-calibrated curriculum:

* :mod:`segforge.knowledge` - compound parsing, annotation, difficulty ordering
* :mod:`segforge.contentspace` - maze generation, features, game parameter space
* :mod:`segforge.clustering` - CF-tree clustering, refinement, silhouette scoring
* :mod:`segforge.mapping` - compound-to-cluster deployment and the content library
* :mod:`segforge.engine` - adaptive game serving and headless bot simulation
* :mod:`segforge.gamestats` - proportion tests and survey cross-tabulation
* :mod:`segforge.cli` - stage-by-stage command line front end
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]
