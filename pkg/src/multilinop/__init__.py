"""Linear and quadratic multilinear operators over POD bases, with a synthetic fire/smoke generator."""
from .mlop import (
    LinearOperatorModel,
    QuadraticOperatorModel,
    fit_linear_closed_form,
    fit_quadratic,
    load_model,
    predict,
    save_model,
)
from .reduction import ReducedBasis, fit_basis
from .tensorio import Grid2D, SnapshotLabel, SnapshotMatrix

__version__ = "0.1.0"
