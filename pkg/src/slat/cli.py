"""Command-line front end.

Every subcommand normally runs in-process; with --server URL it posts
the same parameters to a running `slat serve` instance instead, which
is useful when one machine holds the feature-stack caches and several
clients only want to re-threshold them.

Exit codes: 0 success, 1 bad usage/validation/file problems,
2 numerical failure (divergence, degenerate systems).
"""

from __future__ import annotations

import argparse
import json
import sys

from .degradations import DegradationSpec
from .errors import FormatError, NumericalError, ValidationError
from . import pipeline


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; 2 is reserved for
    # numerical failures here, so remap usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _spec_from(args) -> DegradationSpec:
    return DegradationSpec(
        noise=args.noise,
        noise_mean=args.noise_mean,
        noise_var=args.noise_var,
        poisson_peak=args.poisson_peak,
        loss_fraction=args.loss_fraction,
        loss_per_channel=args.loss_per_channel,
        blur=args.blur,
        seed=args.seed,
    )


def _run_degrade(args) -> dict:
    return pipeline.op_degrade(args.input, args.output, args.mask_out, _spec_from(args))


def _run_smooth(args) -> dict:
    return pipeline.op_smooth(
        args.input, args.output, args.lam, args.mu, args.fidelity, args.mask,
        args.blur, args.tol, args.max_iter, args.workers, args.trace_csv,
    )


def _run_lift(args) -> dict:
    return pipeline.op_lift(args.input, args.output, args.space)


def _run_threshold(args) -> dict:
    labels_out = args.labels_out or f"{args.cache}.k{args.k}.labels.pgm"
    render_out = args.render_out or f"{args.cache}.k{args.k}.phases.ppm"
    return pipeline.threshold_cache(args.cache, args.k, args.restarts, args.seed, labels_out, render_out)


def _config_from(args) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        lam=args.lam,
        k=args.k,
        mu=args.mu,
        fidelity=args.fidelity,
        tol=args.tol,
        max_iter=args.max_iter,
        restarts=args.restarts,
        seed=args.seed,
        secondary_space=args.space,
        cache_path=args.cache,
        blur=args.blur,
        workers=args.workers,
    )


def _run_pipeline(args) -> dict:
    return pipeline.run_pipeline(args.input, _config_from(args), args.mask, args.truth, args.outdir, args.stem)


def _run_rethreshold(args) -> dict:
    return pipeline.rethreshold(args.cache, args.k, args.restarts, args.seed, args.outdir)


def _run_evaluate(args) -> dict:
    return pipeline.op_evaluate(args.pred, args.truth, args.image, args.degradation, args.runtime)


def _run_experiment(args) -> dict:
    return pipeline.run_experiment(args.manifest, args.outdir, args.workers)


# payload field name per CLI dest, for the --server path; matches the
# service request models
_PAYLOAD_FIELDS = {
    "degrade": ["input", "output", "mask_out", "noise", "noise_mean", "noise_var",
                "poisson_peak", "loss_fraction", "loss_per_channel", "blur", "seed"],
    "smooth": ["input", "output", "lam", "mu", "fidelity", "mask", "blur", "tol",
               "max_iter", "workers", "trace_csv"],
    "lift": ["input", "output", "space"],
    "threshold": ["cache", "k", "restarts", "seed", "labels_out", "render_out"],
    "pipeline": ["input", "lam", "k", "mask", "truth", "mu", "fidelity", "tol",
                 "max_iter", "restarts", "seed", "outdir", "stem", "blur", "workers"],
    "rethreshold": ["cache", "k", "restarts", "seed", "outdir"],
    "evaluate": ["pred", "truth", "image", "degradation", "runtime"],
    "experiment": ["manifest", "outdir", "workers"],
}

def _remote(server: str, op: str, args) -> dict:
    import requests

    payload = {}
    for field in _PAYLOAD_FIELDS[op]:
        value = getattr(args, field)
        if value is not None:
            payload[field] = value
    if op == "pipeline":
        payload["secondary_space"] = args.space
        if args.cache is not None:
            payload["cache_path"] = args.cache
    if op == "threshold":
        payload.setdefault("labels_out", f"{args.cache}.k{args.k}.labels.pgm")
        payload.setdefault("render_out", f"{args.cache}.k{args.k}.phases.ppm")
    resp = requests.post(f"{server.rstrip('/')}/v1/{op}", json=payload, timeout=3600)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        print(f"error: {detail}", file=sys.stderr)
        sys.exit(2 if resp.status_code == 422 else 1)
    return resp.json()["result"]


def _emit(op: str, args, result: dict) -> None:
    if op == "experiment":
        sys.stdout.write(result["csv"])
        if result.get("failures"):
            print(f"{result['failures']} of {result['rows']} rows failed", file=sys.stderr)
        return
    if op == "evaluate":
        if args.header:
            print(result["header"])
        print(result["csv"])
        return
    if args.json:
        print(json.dumps(result, indent=2, sort_keys=True))
        return
    for key, value in result.items():
        if value is not None and key not in ("csv", "header"):
            print(f"{key} = {value}")


def _add_common(sub):
    sub.add_argument("--server", help="base URL of a running `slat serve`; run there instead of in-process")
    sub.add_argument("--json", action="store_true", help="print the result as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slat", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("degrade", help="apply blur/noise/pixel loss to an image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mask-out", help="write the known-pixel mask raster here")
    p.add_argument("--noise", choices=["none", "gaussian", "poisson"], default="none")
    p.add_argument("--noise-mean", type=float, default=0.0)
    p.add_argument("--noise-var", type=float, default=0.0)
    p.add_argument("--poisson-peak", type=float, default=255.0)
    p.add_argument("--loss-fraction", type=float, default=0.0)
    p.add_argument("--loss-per-channel", action="store_true")
    p.add_argument("--blur", help="blur spec, e.g. vbox10")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = subs.add_parser("smooth", help="stage 1: per-channel convex smoothing")
    p.add_argument("input")
    p.add_argument("output", help="output .slat cache of the smoothed image")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="fidelity weight (no default)")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--fidelity", choices=["l2", "poisson"], default="l2")
    p.add_argument("--mask", help="known-pixel mask raster")
    p.add_argument("--blur", help="operator inside the data term, e.g. vbox10")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--workers", type=int)
    p.add_argument("--trace-csv", help="write per-iteration energy/relative-change CSV")
    _add_common(p)

    p = subs.add_parser("lift", help="stage 2: build the 6-channel feature cache")
    p.add_argument("input", help="3-channel .slat (or raster)")
    p.add_argument("output", help="output .slat cache")
    p.add_argument("--space", choices=["lab", "hsv", "none"], default="lab")
    _add_common(p)

    p = subs.add_parser("threshold", help="stage 3: K-means phases from a cache")
    p.add_argument("cache")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels-out")
    p.add_argument("--render-out")
    _add_common(p)

    p = subs.add_parser("pipeline", help="all three stages with artifacts")
    p.add_argument("input")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mask")
    p.add_argument("--truth", help="ground-truth label PGM; adds accuracy to the manifest")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--fidelity", choices=["l2", "poisson"], default="l2")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--space", choices=["lab", "hsv", "none"], default="lab")
    p.add_argument("--cache", help="explicit path for the feature-stack cache")
    p.add_argument("--blur")
    p.add_argument("--workers", type=int)
    p.add_argument("--outdir")
    p.add_argument("--stem")
    _add_common(p)

    p = subs.add_parser("rethreshold", help="stage 3 only, from an existing cache")
    p.add_argument("cache")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir")
    _add_common(p)

    p = subs.add_parser("evaluate", help="accuracy of a label map vs ground truth")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("--image", default="")
    p.add_argument("--degradation", default="")
    p.add_argument("--runtime", type=float)
    p.add_argument("--header", action="store_true", help="print the CSV header line too")
    _add_common(p)

    p = subs.add_parser("experiment", help="run a manifest of degradation/pipeline rows")
    p.add_argument("manifest")
    p.add_argument("--outdir", required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)

    p = subs.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    return parser


_HANDLERS = {
    "degrade": _run_degrade,
    "smooth": _run_smooth,
    "lift": _run_lift,
    "threshold": _run_threshold,
    "pipeline": _run_pipeline,
    "rethreshold": _run_rethreshold,
    "evaluate": _run_evaluate,
    "experiment": _run_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    try:
        if args.server:
            result = _remote(args.server, args.command, args)
        else:
            result = _HANDLERS[args.command](args)
    except (ValidationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(args.command, args, result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
