"""Exact derivative calculus and mildness certificates for exp-monomial functions."""

from mildkit.ratcalc import (
    AlphaExponent,
    DomainError,
    ExpPoly,
    ExpTerm,
    HPReal,
    PrecisionError,
    construct,
    differentiate,
    evaluate,
    p_alpha,
    u_alpha,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaExponent",
    "DomainError",
    "ExpPoly",
    "ExpTerm",
    "HPReal",
    "PrecisionError",
    "construct",
    "differentiate",
    "evaluate",
    "p_alpha",
    "u_alpha",
]
