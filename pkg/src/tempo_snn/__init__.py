"""Temporal-resolution adaptation for adaptive LIF spiking networks.

A network trained on spike data binned at one timestep duration can be
re-parameterized for data at another duration using only the ratio of the
two.  The neuron dynamics are treated as a discretized linear state-space
system, and the discretization is redone for the new step.
"""

from tempo_snn.errors import (
    DataError,
    NumericalError,
    SingularMatrixError,
    NoRealPowerError,
    IllConditionedError,
)
from tempo_snn.neuron import AdLifParams, GeneralNeuron, adlif_to_general, simulate, step
from tempo_snn.adapt import AdaptMethod, ResolutionRatio, adapt_neuron

__all__ = [
    "AdLifParams",
    "GeneralNeuron",
    "adlif_to_general",
    "simulate",
    "step",
    "AdaptMethod",
    "ResolutionRatio",
    "adapt_neuron",
    "DataError",
    "NumericalError",
    "SingularMatrixError",
    "NoRealPowerError",
    "IllConditionedError",
]

__version__ = "0.1.0"
