"""Parametric-bootstrap similarity tests for paired networks."""

from .netcore import (
    Graph,
    ProbMatrix,
    RngStream,
    frobenius_distance,
    read_edge_list,
    sample_graph,
    write_graph,
    write_matrix,
    read_matrix,
)
from .spectral import ase, kmeans, spectral_cluster, top_eigenpairs
from .models import Estimator, fit
from .boottest import (
    TestResult,
    pooled_equality,
    pooled_scaling,
    run_general_test,
    run_test,
    t_frob,
    t_scale,
)
from .baselines import (
    AseConfig,
    procrustes_distance,
    run_ase_test,
    run_eig_test,
    scaled_difference_matrix,
)

__version__ = "0.1.0"
