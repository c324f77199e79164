"""Globally rigid sparse formation graphs via Laplacian submatrix selection."""

from sparseform.graph import (
    FormationGraph,
    build_complete_graph,
    coplanarity_check,
    laplacian,
    rigidity_rank,
)
from sparseform.sparsify import (
    BaseSetSelection,
    SparseGraphPlan,
    build_sparse_graph,
    edges_per_drone,
    repair_coplanar_base,
)
from sparseform.metrics import MetricKind, column_selected_matrix, p2_objective, score
from sparseform.selector import GaConfig, ScoredSelection, solve_exhaustive, solve_ga
from sparseform.evaluation import (
    align_similarity,
    average_formation_error,
    baseline_graph,
    instantaneous_error,
    relative_error,
    tradeoff_score,
)

__version__ = "0.1.0"
