from fastapi import FastAPI, status

from .routers import risk

DESCRIPTION = """
API over the exact spectral-risk inner solver.

Provides endpoints for:
* **Spectra**: `/risk/spectrum` (POST) builds the CVaR, extremile, ESRM or ERM weights σ.
* **Adverse weights**: `/risk/weights` (POST) returns the most adverse distribution q
  over a loss vector under a χ² or KL shift penalty, with the penalized risk.

Optimizer benchmarks run through the `prospect-bench` command line, not this API.
"""

app = FastAPI(
    title="Spectral Risk API",
    description=DESCRIPTION,
    version="0.2.0",
    license_info={
        "name": "MIT License",
        "url": "https://opensource.org/licenses/MIT",
    },
    openapi_tags=[
        {"name": "Risk", "description": "Spectra and adversarial reweighting."},
        {"name": "Health", "description": "Endpoints for checking API status."},
        {"name": "Root", "description": "Basic API information."},
    ],
)

app.include_router(risk.router, prefix="/risk")


@app.get("/", tags=["Root"], summary="API Welcome Message")
async def read_root():
    """
    Root endpoint providing a welcome message and links to the API documentation.
    """
    return {
        "message": "Welcome to the Spectral Risk API!",
        "documentation": app.docs_url,
        "alternative_documentation": app.redoc_url,
    }


@app.get("/health", status_code=status.HTTP_200_OK, tags=["Health"], summary="Health Check")
async def health_check():
    """Basic health check endpoint. Returns status 'healthy'."""
    return {"status": "healthy"}
