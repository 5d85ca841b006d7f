"""Spectra of the CVaR, extremile, ESRM and uniform (ERM) risk families."""

import math
from typing import Optional

import numpy as np

from .errors import ParameterError, SizeError
from .models import Spectrum

_ALIASES = {"uniform": "erm", "superquantile": "cvar"}


def make_spectrum(family: str, param: Optional[float], n: int) -> Spectrum:
    """
    Builds the length-n spectrum σ of a spectral risk family.

    Args:
        family: "cvar", "extremile", "esrm" or "erm" (alias "uniform").
        param: p ∈ (0, 1] for cvar, b ≥ 1 for extremile, γ > 0 for esrm; ignored for erm.
        n: Number of samples.

    Returns:
        A validated Spectrum.

    Raises:
        SizeError: If n < 1.
        ParameterError: If the family is unknown or param is out of range.
    """
    family = _ALIASES.get(family, family)
    if n < 1:
        raise SizeError(f"Spectrum size must be positive, got n={n}.")

    if family == "erm":
        weights = np.full(n, 1.0 / n)
        param = None
    elif family == "cvar":
        if param is None or not 0.0 < param <= 1.0:
            raise ParameterError(f"CVaR level p must lie in (0, 1], got {param}.")
        # rounding guards against p*n landing a hair above an integer
        k = min(n, math.ceil(round(param * n, 9)))
        weights = np.zeros(n)
        weights[n - k:] = 1.0 / k
    elif family == "extremile":
        if param is None or param < 1.0:
            raise ParameterError(f"Extremile exponent b must be >= 1, got {param}.")
        weights = np.diff((np.arange(n + 1) / n) ** param)
    elif family == "esrm":
        if param is None or param <= 0.0:
            raise ParameterError(f"ESRM rate γ must be positive, got {param}.")
        # e^{γi/n} - e^{γ(i-1)/n} = e^{γ(i-1)/n} expm1(γ/n); the common factor cancels on normalization.
        increments = np.exp(param * np.arange(n) / n) * np.expm1(param / n)
        weights = increments / increments.sum()
    else:
        raise ParameterError(f"Unknown spectrum family '{family}'. Must be cvar, extremile, esrm or erm.")

    return Spectrum(family=family, param=param, weights=weights)


def kappa_sigma(spectrum: Spectrum) -> float:
    """Skewness nσₙ of the spectrum; at least one, with equality for the uniform spectrum."""
    return float(spectrum.n * spectrum.weights[-1])
