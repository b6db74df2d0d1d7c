"""Similarity-preserving patch selection and quality regression for
360-degree image quality assessment.

Pipeline: sample patches from equirectangular images, embed them
externally, rank and filter the embeddings by an l2,1-regularized
alternating optimization over a spectral similarity target, then train
an MLP quality head and evaluate with PLCC/SRCC.
"""

from .errors import (
    ConstraintError,
    DefinitenessError,
    DegenerateInputError,
    DivergenceError,
    FitError,
    FormatError,
    InputError,
    JoinError,
    PatchSelError,
    ShapeError,
    SpectrumError,
)
from .linalg import EigenPairs, eig_sym, solve_spd
from .metrics import plcc_with_logistic, srcc
from .mlp import MlpModel, TrainConfig, init_model, mlp_forward, mlp_train, pool_scores
from .sampling import (
    ErpImage,
    PatchLocation,
    SamplingPlan,
    erp_grid,
    extract_patch,
    latitude_locations,
    latitude_plan,
    scanpath_locations,
)
from .selector import (
    SelectionResult,
    SelectionState,
    SelectorParams,
    fit,
    irrelevance_scores,
    objective,
    select_top_k,
    update_r,
    update_w,
)
from .similarity import (
    DistanceMetric,
    SimilarityMatrix,
    SpectralTarget,
    pairwise_distance,
    similarity_from_distance,
    similarity_of_embeddings,
    spectral_target,
)

__version__ = "0.1.0"
