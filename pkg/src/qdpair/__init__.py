"""Simulation and analysis of entangled photon pairs from a biexciton-exciton cascade."""
import math

__version__ = "0.1.0"

PLANCK_UEV_PS = 4135.667696
"""Planck constant in µeV·ps."""

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
