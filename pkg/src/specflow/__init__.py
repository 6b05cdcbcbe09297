"""Spectral flow, spectral shift functions and double operator integrals in finite block algebras."""

from .algebra import BlockOperator, ProjectionPair, TraceContext, eigendecompose, weighted_trace
from .doi import PiRegionQuadrature, doi_fourier, doi_schur
from .quad import PiecewisePath, QuadratureSpec
from .sflow import (
    SpectralFlowResult,
    one_form_integral,
    sf_bounded_formula,
    sf_crossing,
    sf_from_ssf,
    sf_projection_pair,
    sf_summable,
    sf_theta,
)
from .ssf import SsfProfile, ssf_eval, ssf_profile, ssm_quadrature
from .weights import WeightFunction, gaussian, mollifier, resolvent_power

__version__ = "0.1.0"

__all__ = [
    "BlockOperator",
    "PiRegionQuadrature",
    "PiecewisePath",
    "ProjectionPair",
    "QuadratureSpec",
    "SpectralFlowResult",
    "SsfProfile",
    "TraceContext",
    "WeightFunction",
    "doi_fourier",
    "doi_schur",
    "eigendecompose",
    "gaussian",
    "mollifier",
    "one_form_integral",
    "resolvent_power",
    "sf_bounded_formula",
    "sf_crossing",
    "sf_from_ssf",
    "sf_projection_pair",
    "sf_summable",
    "sf_theta",
    "ssf_eval",
    "ssf_profile",
    "ssm_quadrature",
    "weighted_trace",
]
