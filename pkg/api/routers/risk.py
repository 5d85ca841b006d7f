import logging

from fastapi import APIRouter, Body, HTTPException, status

from core.dual_solver import build_sorted_table, get_divergence, most_adverse_weights, risk_value
from core.models import SpectrumRequest, SpectrumResult, WeightsRequest, WeightsResult
from core.spectra import kappa_sigma, make_spectrum

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post(
    "/spectrum",
    response_model=SpectrumResult,
    summary="Build a spectrum",
    description="Returns the sorted spectral weights σ of a CVaR, extremile, ESRM or ERM risk over n samples.",
    tags=["Risk"],
)
async def api_spectrum(
    request: SpectrumRequest = Body(
        ...,
        examples=[
            {"family": "cvar", "param": 0.5, "n": 4},
            {"family": "esrm", "param": 1.0, "n": 2},
        ],
    )
):
    """
    - **family**: cvar, extremile, esrm or erm.
    - **param**: p ∈ (0, 1] for cvar, b ≥ 1 for extremile, γ > 0 for esrm; taken from `preset` ("default" or "hard") when omitted.
    - **n**: number of samples.
    """
    try:
        spectrum = make_spectrum(request.family, request.resolved_param(), request.n)
        return SpectrumResult(weights=spectrum.weights.tolist(), kappa_sigma=kappa_sigma(spectrum))
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=f"Invalid spectrum: {e}")
    except Exception:
        logger.exception("api_spectrum failed")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail="An unexpected error occurred while building the spectrum.",
        )


@router.post(
    "/weights",
    response_model=WeightsResult,
    summary="Most adverse reweighting of a loss vector",
    description="Solves max over P(σ) of qᵀl − νD(q‖1/n) exactly and returns q with the penalized risk.",
    tags=["Risk"],
)
async def api_weights(
    request: WeightsRequest = Body(
        ...,
        examples=[
            {"losses": [0.0, 1.0], "spectrum": {"family": "cvar", "param": 0.5}, "shift_cost": 1.0, "divergence": "chi2"},
            {"losses": [3.0, 1.0, 2.0], "spectrum": {"family": "extremile"}, "shift_cost": 0.1, "divergence": "kl"},
        ],
    )
):
    """
    - **losses**: loss value of every sample (any order).
    - **spectrum**: family and optional parameter; the spectrum size is the number of losses.
    - **shift_cost**: penalty ν > 0 on the divergence from uniform.
    - **divergence**: chi2 or kl.
    """
    try:
        spectrum = make_spectrum(request.spectrum.family, request.spectrum.resolved_param(), len(request.losses))
        divergence = get_divergence(request.divergence)
        table = build_sorted_table(request.losses)
        weights = most_adverse_weights(table, spectrum, request.shift_cost, divergence)
        risk = risk_value(table, spectrum, request.shift_cost, divergence)
        return WeightsResult(weights=weights.tolist(), risk=risk)
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=f"Invalid input: {e}")
    except Exception:
        logger.exception("api_weights failed")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail="An unexpected error occurred while solving for the weights.",
        )
