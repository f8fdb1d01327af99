"""Matrix-free multiconfigurational time-dependent Hartree for mixtures of up to
three species of bosons and fermions with up to three-body interactions."""
from .densops import IntegralTables, Mixture
from .eom import Model, SystemState
from .fock import SpeciesSpec, Statistics
from .grid1d import Grid, HarmonicTrap, InteractionSpec
from .prop import PropagatorConfig, propagate, relax

__version__ = "0.1.0"

__all__ = ["IntegralTables", "Mixture", "Model", "SystemState", "SpeciesSpec", "Statistics",
           "Grid", "HarmonicTrap", "InteractionSpec", "PropagatorConfig", "propagate", "relax"]
