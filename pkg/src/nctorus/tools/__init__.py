"""Experiment Api classes.

Each public ``run_<kind>`` coroutine method implements the experiment kind
``<kind>`` (underscores become dashes); the CLI discovers them by scanning.
"""

from .algebra import AlgebraApi
from .dirac import DiracApi
from .euclidean import EuclideanApi
from .flow import FlowApi
from .spectrum import SpectrumApi
from .workflows import WorkflowApi

__all__ = [
    "AlgebraApi",
    "DiracApi",
    "EuclideanApi",
    "FlowApi",
    "SpectrumApi",
    "WorkflowApi",
]
