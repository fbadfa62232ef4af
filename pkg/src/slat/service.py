"""HTTP facade over the staged operations.

Each endpoint is a thin wrapper around one pipeline function; bodies
carry parameters and server-local file paths, responses echo the dicts
those functions return. The CLI can talk to this service instead of
running in-process (--server), which is how one smoothing box can serve
many cheap re-threshold requests against cached feature stacks.

Errors map to status codes the same way the CLI maps them to exit
codes: bad input or files -> 400, numerical failures -> 422.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__, pipeline
from .degradations import DegradationSpec
from .errors import NumericalError, SlatError

app = FastAPI(title="slat", version=__version__)


@app.exception_handler(SlatError)
def _slat_error(request: Request, exc: SlatError):
    status = 422 if isinstance(exc, NumericalError) else 400
    return JSONResponse(status_code=status, content={"detail": str(exc), "kind": type(exc).__name__})


@app.exception_handler(RequestValidationError)
def _request_error(request: Request, exc: RequestValidationError):
    # 422 is reserved for numerical failures; malformed payloads are input errors.
    return JSONResponse(status_code=400, content={"detail": str(exc.errors()), "kind": "ValidationError"})


@app.exception_handler(OSError)
def _os_error(request: Request, exc: OSError):
    return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "OSError"})


class DegradeRequest(BaseModel):
    input: str
    output: str
    mask_out: Optional[str] = None
    noise: str = "none"
    noise_mean: float = 0.0
    noise_var: float = 0.0
    poisson_peak: float = 255.0
    loss_fraction: float = 0.0
    loss_per_channel: bool = False
    blur: Optional[str] = None
    seed: int = 0


class SmoothRequest(BaseModel):
    input: str
    output: str
    lam: float
    mu: float = 1.0
    fidelity: str = "l2"
    mask: Optional[str] = None
    blur: Optional[str] = None
    tol: float = 1e-4
    max_iter: int = 200
    workers: Optional[int] = None
    trace_csv: Optional[str] = None


class LiftRequest(BaseModel):
    input: str
    output: str
    space: str = "lab"


class ThresholdRequest(BaseModel):
    cache: str
    k: int
    restarts: int = 10
    seed: int = 0
    labels_out: str
    render_out: str


class PipelineRequest(BaseModel):
    input: str
    lam: float
    k: int
    mask: Optional[str] = None
    truth: Optional[str] = None
    mu: float = 1.0
    fidelity: str = "l2"
    tol: float = 1e-4
    max_iter: int = 200
    restarts: int = 10
    seed: int = 0
    secondary_space: str = "lab"
    cache_path: Optional[str] = None
    blur: Optional[str] = None
    workers: Optional[int] = None
    outdir: Optional[str] = None
    stem: Optional[str] = None


class RethresholdRequest(BaseModel):
    cache: str
    k: int
    restarts: int = 10
    seed: int = 0
    outdir: Optional[str] = None


class EvaluateRequest(BaseModel):
    pred: str
    truth: str
    image: str = ""
    degradation: str = ""
    runtime: Optional[float] = None


class ExperimentRequest(BaseModel):
    manifest: str
    outdir: str
    workers: int = 1


class OpResponse(BaseModel):
    """Envelope for every operation: the op's report dict."""

    result: dict


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/v1/degrade", response_model=OpResponse)
def degrade(req: DegradeRequest):
    spec = DegradationSpec(
        noise=req.noise,
        noise_mean=req.noise_mean,
        noise_var=req.noise_var,
        poisson_peak=req.poisson_peak,
        loss_fraction=req.loss_fraction,
        loss_per_channel=req.loss_per_channel,
        blur=req.blur,
        seed=req.seed,
    )
    return {"result": pipeline.op_degrade(req.input, req.output, req.mask_out, spec)}


@app.post("/v1/smooth", response_model=OpResponse)
def smooth(req: SmoothRequest):
    return {
        "result": pipeline.op_smooth(
            req.input, req.output, req.lam, req.mu, req.fidelity, req.mask,
            req.blur, req.tol, req.max_iter, req.workers, req.trace_csv,
        )
    }


@app.post("/v1/lift", response_model=OpResponse)
def lift(req: LiftRequest):
    return {"result": pipeline.op_lift(req.input, req.output, req.space)}


@app.post("/v1/threshold", response_model=OpResponse)
def threshold(req: ThresholdRequest):
    return {
        "result": pipeline.threshold_cache(
            req.cache, req.k, req.restarts, req.seed, req.labels_out, req.render_out
        )
    }


@app.post("/v1/pipeline", response_model=OpResponse)
def run_pipeline(req: PipelineRequest):
    config = pipeline.PipelineConfig(
        lam=req.lam,
        k=req.k,
        mu=req.mu,
        fidelity=req.fidelity,
        tol=req.tol,
        max_iter=req.max_iter,
        restarts=req.restarts,
        seed=req.seed,
        secondary_space=req.secondary_space,
        cache_path=req.cache_path,
        blur=req.blur,
        workers=req.workers,
    )
    return {"result": pipeline.run_pipeline(req.input, config, req.mask, req.truth, req.outdir, req.stem)}


@app.post("/v1/rethreshold", response_model=OpResponse)
def rethreshold(req: RethresholdRequest):
    return {"result": pipeline.rethreshold(req.cache, req.k, req.restarts, req.seed, req.outdir)}


@app.post("/v1/evaluate", response_model=OpResponse)
def evaluate(req: EvaluateRequest):
    return {"result": pipeline.op_evaluate(req.pred, req.truth, req.image, req.degradation, req.runtime)}


@app.post("/v1/experiment", response_model=OpResponse)
def experiment(req: ExperimentRequest):
    return {"result": pipeline.run_experiment(req.manifest, req.outdir, req.workers)}
