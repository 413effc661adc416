"""Fractional-order pharmacokinetics: special functions, solvers and dosing optimisation."""

from . import dosing, glkernel, laplace, pkmodels, solvers, specialfn
from .errors import (
    ConvergenceError,
    FracdoseError,
    InfeasibleError,
    MassBalanceError,
    NumericalError,
    PoleError,
    RegimeError,
    UnitError,
)
from .pkmodels import AMIODARONE, TwoCompParams
from .specialfn import MlParams, ml1, ml2, ml3

__version__ = "0.1.0"

__all__ = [
    "AMIODARONE",
    "ConvergenceError",
    "FracdoseError",
    "InfeasibleError",
    "MassBalanceError",
    "MlParams",
    "NumericalError",
    "PoleError",
    "RegimeError",
    "TwoCompParams",
    "UnitError",
    "dosing",
    "glkernel",
    "laplace",
    "ml1",
    "ml2",
    "ml3",
    "pkmodels",
    "solvers",
    "specialfn",
]
