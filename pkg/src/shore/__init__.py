"""Sparse high-dimensional-output regression via output compression.

Two stages: a closed-form least-squares fit against randomly compressed
outputs, then per-sample sparse decoding by projected gradient descent.
"""
from .core import (
    DomainError,
    FormatError,
    ParseError,
    ShapeError,
    SingularityError,
    SparseVec,
    derive_seed,
    make_rng,
    matmul,
    solve_spd,
    top_s_indices,
)
from .compression import CompressionMatrix, RipEstimate, estimate_rip, generate_phi
from .training import (
    Regressor,
    TrainReport,
    load_model,
    save_model,
    train_compressed,
    train_uncompressed,
    training_loss_ratio,
)
from .prediction import (
    CertReport,
    FeasibleSet,
    PgdConfig,
    PgdTrace,
    convergence_certificate,
    pgd_predict,
    pgd_solve,
    project_sparse,
)
from .baselines import cd_predict, elasticnet_predict, fista_predict, omp_predict
from .metrics import output_diff, precision_at_s, prediction_loss

__version__ = "0.1.0"
