"""Symbolic variational sequence toolkit.

Jets, contact forms, Euler-Lagrange operators, Noether and Bianchi
identities, Jacobi fields and the Hamiltonian current, with numeric oracles
and a problem-file CLI.
"""

from . import bundle, expr, fields, forms, jacobi, noether, oracle, render, variational
from .bundle import BundleSpec
from .errors import (
    BackgroundNotCritical,
    BianchiNonzero,
    IntegrationFailure,
    MissingInput,
    NotASymmetry,
    NotLinear,
    OrderOverflow,
    ParseError,
    StencilOutOfRange,
    UnknownSymbol,
    VarSeqError,
)
from .variational import Lagrangian, euler_lagrange

__version__ = "0.1.0"

__all__ = [
    "BackgroundNotCritical",
    "BianchiNonzero",
    "BundleSpec",
    "IntegrationFailure",
    "MissingInput",
    "Lagrangian",
    "NotASymmetry",
    "NotLinear",
    "OrderOverflow",
    "ParseError",
    "StencilOutOfRange",
    "UnknownSymbol",
    "VarSeqError",
    "bundle",
    "euler_lagrange",
    "expr",
    "fields",
    "forms",
    "jacobi",
    "noether",
    "oracle",
    "render",
    "variational",
]
