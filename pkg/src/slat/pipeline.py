"""End-to-end orchestration: the staged operations behind the CLI and
the HTTP service, the three-stage pipeline, the cache-only re-threshold
path, and the manifest-driven experiment runner.

Every operation takes plain values and returns a JSON-friendly dict, so
the CLI and service are thin shells over the same functions. Artifacts
on disk:

  <stem>.smoothed.ppm   Stage-1 output as an 8-bit raster
  <stem>.gstar.slat     the feature-stack cache (Stage 2)
  <stem>.labels.pgm     label map, raw byte k per pixel
  <stem>.phases.ppm     each phase painted with its mean color
  <stem>.run.txt        key=value run manifest

Experiment manifests are flat key=value blocks separated by blank
lines; '#' lines are comments. Recognized keys: label, image (a file
path or a built-in synthetic name), truth (label PGM, optional),
the degradation keys (noise, noise_mean, noise_var, poisson_peak,
loss_fraction, loss_per_channel, blur, seed), and the pipeline keys
(lambda, mu, fidelity, k, tol, max_iter, restarts, seed,
secondary_space, workers). results.csv holds only deterministic
columns; wall-clock timings go to timings.csv beside it.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import counters, synthetic
from .degradations import DegradationSpec, degrade
from .errors import FormatError, NumericalError, ValidationError
from .image import (
    Image,
    Mask,
    load_image,
    load_labels,
    load_raw,
    rescale_to_unit,
    save_image,
    save_labels,
    save_raw,
)
from .lifting import lift
from .linops import identity_operator
from .metrics import accuracy
from .smoothing import SolverConfig, smooth_channels
from .thresholding import render_phases, segment

SECONDARY_SPACES = ("lab", "hsv", "none")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one three-stage run needs besides the input pixels."""

    lam: float
    k: int
    mu: float = 1.0
    fidelity: str = "l2"
    tol: float = 1e-4
    max_iter: int = 200
    restarts: int = 10
    seed: int = 0
    secondary_space: str = "lab"
    cache_path: Optional[str] = None
    blur: Optional[str] = None  # operator for the data term, e.g. "vbox10"
    workers: Optional[int] = None

    def __post_init__(self):
        if not (self.lam > 0):
            raise ValidationError("lambda must be > 0")
        if not (self.mu > 0):
            raise ValidationError("mu must be > 0")
        if self.fidelity not in ("l2", "poisson"):
            raise ValidationError(f"fidelity must be l2 or poisson, got {self.fidelity!r}")
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.secondary_space not in SECONDARY_SPACES:
            raise ValidationError(f"secondary_space must be one of {SECONDARY_SPACES}")
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, max_iter=self.max_iter)


def _write_manifest(path, entries: dict) -> None:
    lines = [f"{key} = {value}" for key, value in entries.items() if value is not None]
    payload = ("\n".join(lines) + "\n").encode()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _load_any_image(path) -> Image:
    path = os.fspath(path)
    # built-in scene names work anywhere a raster path does (a real file
    # with the same name still wins)
    if path in synthetic._GENERATORS and not os.path.exists(path):
        return synthetic.make(path)[0]
    if path.endswith(".slat"):
        return load_raw(path)
    return load_image(path)


def _load_mask(path, img: Image) -> Mask:
    m = _load_any_image(path)
    if (m.height, m.width) != (img.height, img.width):
        raise ValidationError(f"mask {m.height}x{m.width} does not match image {img.height}x{img.width}")
    return Mask(m.data > 0.5)


def save_mask(mask: Mask, path) -> None:
    """Masks travel as rasters: 255 = known pixel, 0 = missing."""
    save_image(Image(mask.bits.astype(np.float64)), path)


# ---------------------------------------------------------------- stages


def stages_on_arrays(img: Image, mask: Optional[Mask], config: PipelineConfig):
    """Run the three stages in memory.

    Returns (segmentation, smoothed 3-channel image, feature stack, info dict);
    info carries per-channel iteration counts and per-stage wall times.
    """
    op = DegradationSpec(blur=config.blur).blur_operator() or identity_operator()
    info: dict = {}
    t0 = time.perf_counter()
    try:
        results = smooth_channels(
            img, mask, op, config.fidelity, config.lam, config.mu,
            config.solver_config(), config.workers,
        )
    except (ValidationError, FormatError, NumericalError) as exc:
        raise type(exc)(f"stage 1: {exc}") from exc
    smoothed = rescale_to_unit(Image(np.stack([r.g for r in results])))
    info["iterations"] = [r.iters for r in results]
    info["stage1_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if config.secondary_space == "none":
        stack = smoothed
    else:
        stack = lift(smoothed, config.secondary_space)
    info["stage2_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    seg = segment(stack, config.k, config.restarts, config.seed)
    info["stage3_seconds"] = time.perf_counter() - t0
    return seg, smoothed, stack, info


def _artifact_paths(outdir: str, stem: str, config: PipelineConfig) -> dict:
    join = lambda suffix: os.path.join(outdir, f"{stem}.{suffix}")  # noqa: E731
    return {
        "smoothed": join("smoothed.ppm"),
        "cache": config.cache_path or join("gstar.slat"),
        "labels": join("labels.pgm"),
        "render": join("phases.ppm"),
        "manifest": join("run.txt"),
    }


def run_pipeline(
    input_path: str,
    config: PipelineConfig,
    mask_path: Optional[str] = None,
    truth_path: Optional[str] = None,
    outdir: Optional[str] = None,
    stem: Optional[str] = None,
) -> dict:
    """Full three-stage run on a file, with artifacts and run manifest."""
    img = _load_any_image(input_path)
    if img.channels != 3:
        raise ValidationError(f"pipeline input must have 3 channels, got {img.channels}")
    mask = _load_mask(mask_path, img) if mask_path else None
    outdir = outdir or (os.path.dirname(os.fspath(input_path)) or ".")
    os.makedirs(outdir, exist_ok=True)
    stem = stem or os.path.splitext(os.path.basename(os.fspath(input_path)))[0]
    paths = _artifact_paths(outdir, stem, config)

    seg, smoothed, stack, info = stages_on_arrays(img, mask, config)
    save_image(smoothed, paths["smoothed"])
    save_raw(stack, paths["cache"])
    save_labels(seg.labels, paths["labels"])
    save_image(render_phases(seg.labels, smoothed), paths["render"])

    result = {
        "input": os.fspath(input_path),
        "mask": os.fspath(mask_path) if mask_path else None,
        "lambda": config.lam,
        "mu": config.mu,
        "fidelity": config.fidelity,
        "k": config.k,
        "tol": config.tol,
        "max_iter": config.max_iter,
        "restarts": config.restarts,
        "seed": config.seed,
        "secondary_space": config.secondary_space,
        "blur": config.blur,
        "iterations": ",".join(str(i) for i in info["iterations"]),
        "stage1_seconds": f"{info['stage1_seconds']:.3f}",
        "stage2_seconds": f"{info['stage2_seconds']:.3f}",
        "stage3_seconds": f"{info['stage3_seconds']:.3f}",
        "objective": repr(seg.objective),
        "effective_k": seg.effective_k(),
    }
    if truth_path:
        truth = load_labels(truth_path)
        result["accuracy"] = repr(accuracy(seg.labels, truth).accuracy)
    result.update(paths)
    _write_manifest(paths["manifest"], result)
    return result


def rethreshold(
    cache_path: str,
    k: int,
    restarts: int = 10,
    seed: int = 0,
    outdir: Optional[str] = None,
) -> dict:
    """Stage 3 only, against a stored feature-stack cache."""
    stack = load_raw(cache_path)
    before = counters.get("stage1_iterations")
    t0 = time.perf_counter()
    seg = segment(stack, k, restarts, seed)
    elapsed = time.perf_counter() - t0
    assert counters.get("stage1_iterations") == before, "re-threshold must not smooth"

    outdir = outdir or (os.path.dirname(os.fspath(cache_path)) or ".")
    os.makedirs(outdir, exist_ok=True)
    stem = os.path.basename(os.fspath(cache_path))
    stem = stem[: -len(".slat")] if stem.endswith(".slat") else os.path.splitext(stem)[0]
    if stem.endswith(".gstar"):
        stem = stem[: -len(".gstar")]
    labels_path = os.path.join(outdir, f"{stem}.k{k}.labels.pgm")
    render_path = os.path.join(outdir, f"{stem}.k{k}.phases.ppm")
    manifest_path = os.path.join(outdir, f"{stem}.k{k}.run.txt")
    save_labels(seg.labels, labels_path)
    source = Image(stack.data[:3]) if stack.channels >= 3 else Image(np.repeat(stack.data[:1], 3, axis=0))
    save_image(render_phases(seg.labels, source), render_path)
    result = {
        "cache": os.fspath(cache_path),
        "k": k,
        "restarts": restarts,
        "seed": seed,
        "stage1_iterations": 0,
        "stage3_seconds": f"{elapsed:.3f}",
        "objective": repr(seg.objective),
        "effective_k": seg.effective_k(),
        "labels": labels_path,
        "render": render_path,
        "manifest": manifest_path,
    }
    _write_manifest(manifest_path, result)
    return result


def threshold_cache(cache_path: str, k: int, restarts: int, seed: int, labels_out: str, render_out: str) -> dict:
    """Stage 3 with explicit output paths (the `slat threshold` body)."""
    stack = load_raw(cache_path)
    seg = segment(stack, k, restarts, seed)
    save_labels(seg.labels, labels_out)
    source = Image(stack.data[:3]) if stack.channels >= 3 else Image(np.repeat(stack.data[:1], 3, axis=0))
    save_image(render_phases(seg.labels, source), render_out)
    return {
        "cache": os.fspath(cache_path),
        "k": k,
        "objective": repr(seg.objective),
        "effective_k": seg.effective_k(),
        "labels": os.fspath(labels_out),
        "render": os.fspath(render_out),
    }


# ---------------------------------------------------------- experiments


_DEGRADE_KEYS = {
    "noise", "noise_mean", "noise_var", "poisson_peak",
    "loss_fraction", "loss_per_channel", "blur",
}
_PIPELINE_KEYS = {
    "lambda", "mu", "fidelity", "k", "tol", "max_iter", "restarts",
    "secondary_space", "workers",
}


def parse_manifest(text: str) -> list:
    """key=value blocks -> list of row dicts; '#' lines are comments."""
    rows, block = [], {}
    for raw in text.splitlines() + [""]:
        line = raw.strip()
        if not line:
            if block:
                rows.append(block)
                block = {}
            continue
        if line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"manifest line {line!r} is not key = value")
        key, _, value = line.partition("=")
        block[key.strip()] = value.strip()
    return rows


def _row_config(row: dict) -> PipelineConfig:
    if "lambda" not in row:
        raise ValidationError("manifest row needs a lambda value")
    if "k" not in row:
        raise ValidationError("manifest row needs a phase count k")
    return PipelineConfig(
        lam=float(row["lambda"]),
        k=int(row["k"]),
        mu=float(row.get("mu", 1.0)),
        fidelity=row.get("fidelity", "l2"),
        tol=float(row.get("tol", 1e-4)),
        max_iter=int(row.get("max_iter", 200)),
        restarts=int(row.get("restarts", 10)),
        seed=int(row.get("seed", 0)),
        secondary_space=row.get("secondary_space", "lab"),
        blur=row.get("blur") or None,
        workers=int(row["workers"]) if "workers" in row else None,
    )


def _row_inputs(row: dict):
    name = row.get("image")
    if not name:
        raise ValidationError("manifest row needs an image")
    if name in synthetic._GENERATORS:
        return synthetic.make(name) + (name,)
    img = _load_any_image(name)
    truth = load_labels(row["truth"]) if "truth" in row else None
    return img, truth, os.path.splitext(os.path.basename(name))[0]


def run_row(row: dict, outdir: Optional[str] = None, index: int = 0) -> dict:
    """Degrade, run the pipeline, score; returns one report dict."""
    img, truth, default_label = _row_inputs(row)
    label = row.get("label", f"{default_label}-{index}")
    spec_kv = {k: v for k, v in row.items() if k in _DEGRADE_KEYS or k == "seed"}
    spec = DegradationSpec.from_kv(spec_kv)
    config = _row_config(row)
    degraded, mask = degrade(img, spec)

    t0 = time.perf_counter()
    seg, smoothed, stack, info = stages_on_arrays(degraded, mask, config)
    total = time.perf_counter() - t0
    report = {
        "label": label,
        "image": row.get("image"),
        "degradation": spec.describe(),
        "k": config.k,
        "accuracy": "" if truth is None else repr(accuracy(seg.labels, truth).accuracy),
        "iterations": "/".join(str(i) for i in info["iterations"]),
        "status": "ok",
        "_seconds": total,
        "_info": info,
    }
    if outdir:
        rowdir = os.path.join(outdir, label)
        os.makedirs(rowdir, exist_ok=True)
        save_image(degraded, os.path.join(rowdir, "degraded.ppm"))
        save_mask(mask, os.path.join(rowdir, "mask.pgm"))
        save_image(smoothed, os.path.join(rowdir, "smoothed.ppm"))
        save_raw(stack, os.path.join(rowdir, "gstar.slat"))
        save_labels(seg.labels, os.path.join(rowdir, "labels.pgm"))
        save_image(render_phases(seg.labels, smoothed), os.path.join(rowdir, "phases.ppm"))
        if truth is not None:
            save_labels(truth, os.path.join(rowdir, "truth.pgm"))
    return report


_CSV_COLUMNS = ("label", "image", "degradation", "k", "accuracy", "iterations", "status")


def run_experiment(manifest_path: str, outdir: str, workers: int = 1) -> dict:
    """Run every manifest row (failures recorded, never fatal) -> CSV files.

    results.csv is deterministic for fixed seeds; timings.csv carries the
    wall-clock numbers separately so reruns diff clean.
    """
    with open(manifest_path, "r", encoding="utf-8") as fh:
        rows = parse_manifest(fh.read())
    os.makedirs(outdir, exist_ok=True)

    def execute(item):
        index, row = item
        try:
            return run_row(row, outdir, index)
        except Exception as exc:  # per-row isolation is the contract
            return {
                "label": row.get("label", f"row-{index}"),
                "image": row.get("image", ""),
                "degradation": "",
                "k": row.get("k", ""),
                "accuracy": "",
                "iterations": "",
                "status": f"error: {exc}",
                "_seconds": 0.0,
            }

    items = list(enumerate(rows))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(execute, items))
    else:
        reports = [execute(item) for item in items]

    lines = [",".join(_CSV_COLUMNS)]
    for rep in reports:
        lines.append(",".join(str(rep[c]) for c in _CSV_COLUMNS))
    results_path = os.path.join(outdir, "results.csv")
    with open(results_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    with open(os.path.join(outdir, "timings.csv"), "w", encoding="utf-8") as fh:
        fh.write("label,seconds\n")
        for rep in reports:
            fh.write(f"{rep['label']},{rep['_seconds']:.3f}\n")
    return {
        "manifest": os.fspath(manifest_path),
        "rows": len(reports),
        "failures": sum(1 for r in reports if r["status"] != "ok"),
        "results": results_path,
        "csv": "\n".join(lines) + "\n",
    }


# ------------------------------------------------------------- file ops


def op_degrade(
    input_path: str,
    output_path: str,
    mask_out: Optional[str] = None,
    spec: DegradationSpec = DegradationSpec(),
) -> dict:
    img = _load_any_image(input_path)
    degraded, mask = degrade(img, spec)
    save_image(degraded, output_path)
    if mask_out:
        save_mask(mask, mask_out)
    known = float(mask.bits.mean())
    return {
        "input": os.fspath(input_path),
        "output": os.fspath(output_path),
        "mask_out": os.fspath(mask_out) if mask_out else None,
        "degradation": spec.describe(),
        "known_fraction": known,
    }


def op_smooth(
    input_path: str,
    output_path: str,
    lam: float,
    mu: float = 1.0,
    fidelity: str = "l2",
    mask_path: Optional[str] = None,
    blur: Optional[str] = None,
    tol: float = 1e-4,
    max_iter: int = 200,
    workers: Optional[int] = None,
    trace_csv: Optional[str] = None,
) -> dict:
    """Stage 1 alone: raster/cache in, rescaled smooth SLAT cache out."""
    img = _load_any_image(input_path)
    mask = _load_mask(mask_path, img) if mask_path else None
    op = DegradationSpec(blur=blur).blur_operator() or identity_operator()
    cfg = SolverConfig(tol=tol, max_iter=max_iter)
    t0 = time.perf_counter()
    results = smooth_channels(img, mask, op, fidelity, lam, mu, cfg, workers)
    elapsed = time.perf_counter() - t0
    smoothed = rescale_to_unit(Image(np.stack([r.g for r in results])))
    save_raw(smoothed, output_path)
    if trace_csv:
        with open(trace_csv, "w", encoding="utf-8") as fh:
            fh.write("channel,iteration,energy,rel_change\n")
            for c, res in enumerate(results):
                for i, (e, r) in enumerate(zip(res.trace, res.rel_change)):
                    fh.write(f"{c},{i + 1},{e!r},{r!r}\n")
    return {
        "input": os.fspath(input_path),
        "output": os.fspath(output_path),
        "lambda": lam,
        "fidelity": fidelity,
        "iterations": ",".join(str(r.iters) for r in results),
        "seconds": f"{elapsed:.3f}",
    }


def op_lift(input_path: str, output_path: str, space: str = "lab") -> dict:
    img = load_raw(input_path) if os.fspath(input_path).endswith(".slat") else load_image(input_path)
    stack = img if space == "none" else lift(img, space)
    save_raw(stack, output_path)
    return {
        "input": os.fspath(input_path),
        "output": os.fspath(output_path),
        "space": space,
        "channels": stack.channels,
    }


def op_evaluate(
    pred_path: str,
    truth_path: str,
    image: str = "",
    degradation: str = "",
    runtime: Optional[float] = None,
) -> dict:
    pred, truth = load_labels(pred_path), load_labels(truth_path)
    report = accuracy(pred, truth)
    line = ",".join(
        [image or os.fspath(pred_path), degradation, str(pred.k),
         f"{report.accuracy:.6f}", "" if runtime is None else f"{runtime:.3f}"]
    )
    return {
        "accuracy": report.accuracy,
        "matching": {str(k): v for k, v in report.matching.items()},
        "per_phase": {str(k): v for k, v in report.per_phase.items()},
        "csv": line,
        "header": "image,degradation,k,accuracy,runtime",
    }
