"""End-to-end experiment runs: null building, epsilon scans and report data."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, check_fgd_sizes
from .core import make_stream, stable_digest
from .dataio import Dataset, load_dataset, standardize
from .deformations import DeformKind
from .errors import MissingCache
from .models import ModelSpec, build_cg, build_mog, model_from_json, model_to_json
from .nulls import (
    NullDistribution,
    estimate_null_bootstrap,
    estimate_null_generator,
    load_null,
    save_null,
    threshold,
)
from .scan import EpsilonBound, ScanProblem, scan_problem
from .teststats import MetricConfig, MetricKind, kolmogorov_pdf

log = logging.getLogger(__name__)

SUMMARY_ALPHAS = (0.32, 0.05, 0.01)
MISSING = "-"


@dataclass
class Source:
    """The reference side of an experiment: an analytic model or a dataset."""

    ident: str
    digest: str
    model: Optional[ModelSpec] = None
    dataset: Optional[Dataset] = None

    @property
    def d(self) -> int:
        return self.model.d if self.model is not None else self.dataset.d


def build_source(cfg: ExperimentConfig) -> Source:
    src = cfg.source
    kind = src["type"]
    if kind in ("cg", "mog"):
        stream = make_stream(cfg.master_seed, "model")
        d = src["d"]
        if kind == "cg":
            model = build_cg(d, stream, src.get("components"), src.get("covariance", "mixture"))
        else:
            from .models import default_components

            model = build_mog(d, src.get("components") or default_components(d), stream)
        text = model_to_json(model)
        return Source(f"{kind}-d{d}-s{cfg.master_seed}", stable_digest([text]), model=model)
    if kind == "model_file":
        path = cfg.resolve(src["path"])
        model = model_from_json(path.read_text())
        text = model_to_json(model)
        return Source(path.stem, stable_digest([text]), model=model)
    path = cfg.resolve(src["path"])
    ds = load_dataset(path, src.get("format"))
    check_fgd_sizes(cfg, ds.d)
    return Source(path.stem, ds.content_hash, dataset=ds)


def cache_dir(cfg: ExperimentConfig, output_dir: Path) -> Path:
    env = os.environ.get("TSTBENCH_CACHE")
    return Path(env) if env else output_dir / "cache"


def _null_key(cfg: ExperimentConfig, source: Source, metric: MetricKind, mcfg: MetricConfig, n: int) -> str:
    parts = [source.digest, metric.value, json.dumps(mcfg.to_dict(), sort_keys=True), n, cfg.null_iterations, cfg.master_seed]
    if source.dataset is not None:
        parts += [cfg.scale_features, cfg.bootstrap_with_replacement]
    return stable_digest(parts)


def _null_stream(cfg, metric, n):
    return make_stream(cfg.master_seed, f"null/{metric.value}/{n}")


def get_null(
    cfg: ExperimentConfig,
    source: Source,
    metric: MetricKind,
    mcfg: MetricConfig,
    n: int,
    output_dir: Path,
    threads: int | None = None,
) -> tuple[NullDistribution, Path, bool]:
    """Load the cached null for ``(source, metric, cfg, n, iters, seed)`` or build it."""
    key = _null_key(cfg, source, metric, mcfg, n)
    path = cache_dir(cfg, output_dir) / f"null-{metric.value}-n{n}-{key[:16]}.csv"
    if path.exists():
        try:
            return load_null(path), path, True
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            log.warning("cache file %s unreadable (%s); recomputing", path, exc)
    stream = _null_stream(cfg, metric, n)
    if source.model is not None:
        null = estimate_null_generator(source.model, metric, mcfg, n, cfg.null_iterations, stream, threads)
    else:
        data = source.dataset.matrix
        if cfg.scale_features:
            data = standardize(source.dataset)[0].matrix
        null = estimate_null_bootstrap(
            data, metric, mcfg, n, cfg.null_iterations, stream, cfg.bootstrap_with_replacement, threads
        )
    null.meta.update({"key": key, "source": source.ident, "cfg": mcfg.to_dict(), "seed": cfg.master_seed})
    save_null(null, path)
    return null, path, False


def _write_json(path: Path, data) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True))
    tmp.replace(path)


def cmd_null(cfg: ExperimentConfig, output_dir: Path | None = None, threads: int | None = None) -> list[dict]:
    """Build or reuse every null distribution of the config; return threshold summaries."""
    output_dir = Path(output_dir) if output_dir else cfg.resolve(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    source = build_source(cfg)
    summary = []
    index = []
    for n in cfg.sample_sizes:
        for metric, mcfg in cfg.metrics:
            if metric is MetricKind.LLR:
                continue
            null, path, hit = get_null(cfg, source, metric, mcfg, n, output_dir, threads)
            row = {
                "source": source.ident,
                "metric": metric.value,
                "n": n,
                "iterations": null.iterations,
                "cache_hit": hit,
                "null_seconds": null.elapsed_seconds,
                "path": str(path),
            }
            for a in SUMMARY_ALPHAS:
                row[f"t{round(100 * (1 - a))}"] = threshold(null, a).t_alpha
            summary.append(row)
            index.append({"metric": metric.value, "n": n, "path": str(path), "source": source.ident})
    _write_json(output_dir / "nulls.json", {"nulls": index})
    return summary


# --------------------------------------------------------------------------
# scans


def _cl_label(alpha: float) -> str:
    cl = 100.0 * (1.0 - alpha)
    return f"{cl:g}".replace(".", "p")


def result_columns(alphas) -> list[str]:
    cols = ["model_id", "deformation", "metric", "n"]
    for a in alphas:
        c = _cl_label(a)
        cols += [f"eps{c}", f"eps{c}_low", f"eps{c}_up"]
    cols.append("converged")
    return cols


def _row_key(kind: DeformKind, metric: MetricKind, n: int) -> str:
    return f"{kind.value}|{metric.value}|{n}"


def _fmt(x: float) -> str:
    return repr(float(x))


def _scan_row(source, kind, metric, n, bounds, alphas) -> dict:
    row = {"model_id": source.ident, "deformation": kind.value, "metric": metric.value, "n": n}
    for a, b in zip(alphas, bounds):
        c = _cl_label(a)
        row[f"eps{c}"] = _fmt(b.eps)
        row[f"eps{c}_low"] = _fmt(b.eps_low)
        row[f"eps{c}_up"] = _fmt(b.eps_up)
    row["converged"] = str(all(b.converged for b in bounds)).lower()
    return row


def _missing_row(source, kind, metric, n, alphas, converged=MISSING) -> dict:
    row = {"model_id": source.ident, "deformation": kind.value, "metric": metric.value, "n": n}
    for a in alphas:
        c = _cl_label(a)
        row[f"eps{c}"] = row[f"eps{c}_low"] = row[f"eps{c}_up"] = MISSING
    row["converged"] = converged
    return row


def _llr_applicable(source: Source, kind: DeformKind) -> bool:
    return source.model is not None and kind.bijective


def cmd_scan(
    cfg: ExperimentConfig,
    output_dir: Path | None = None,
    threads: int | None = None,
    resume: bool = False,
) -> tuple[list[dict], int]:
    """Run every (deformation, metric, n) scan; return result rows and the failure count."""
    output_dir = Path(output_dir) if output_dir else cfg.resolve(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = output_dir / "manifest.json"
    source = build_source(cfg)

    manifest = None
    if resume and manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("config_digest") != cfg.digest():
            log.warning("manifest belongs to a different config; starting over")
            manifest = None
    if manifest is None:
        manifest = {
            "schema_version": 1,
            "package_version": __version__,
            "config": cfg.raw,
            "config_digest": cfg.digest(),
            "master_seed": cfg.master_seed,
            "source": {"id": source.ident, "digest": source.digest},
            "design": {
                "rng": "PCG64 via SeedSequence(master_seed, blake2b64(label), index)",
                "tolerance_mode": "relative",
                "tolerance": cfg.tolerance,
                "noisy_tolerance": cfg.noisy_tolerance,
                "eps_max": cfg.eps_max,
                "eps_max_doublings": 3,
                "frozen_deformation_directions": True,
                "common_random_numbers": True,
                "bootstrap_with_replacement": cfg.bootstrap_with_replacement,
                "bootstrap_reshuffle_per_iteration": True,
                "scale_features": cfg.scale_features,
                "threshold_rule": "smallest null value t with #(>= t)/N <= alpha",
                "p_value_rule": "(1 + #(>= t_obs)) / (1 + N)",
            },
            "nulls": {},
            "rows": {},
        }
    if source.model is not None:
        manifest["model"] = source.model.to_dict()

    failures = 0
    alphas = cfg.alphas
    for n in cfg.sample_sizes:
        nulls: dict[MetricKind, NullDistribution] = {}
        for kind in cfg.deformations:
            for metric, mcfg in cfg.metrics:
                key = _row_key(kind, metric, n)
                done = manifest["rows"].get(key)
                if done is not None and done.get("status") in ("ok", "not_applicable"):
                    continue
                if metric is MetricKind.LLR and not _llr_applicable(source, kind):
                    manifest["rows"][key] = {
                        "status": "not_applicable",
                        "row": _missing_row(source, kind, metric, n, alphas),
                        "scan_seconds": None,
                        "null_seconds": None,
                    }
                    _write_json(manifest_path, manifest)
                    continue
                try:
                    null = None
                    null_seconds = None
                    if metric is not MetricKind.LLR:
                        if metric not in nulls:
                            nulls[metric], path, _ = get_null(cfg, source, metric, mcfg, n, output_dir, threads)
                            manifest["nulls"][f"{metric.value}|{n}"] = {
                                "path": str(path),
                                "elapsed_seconds": nulls[metric].elapsed_seconds,
                            }
                        null = nulls[metric]
                        null_seconds = null.elapsed_seconds
                    problem = _make_problem(cfg, source, kind, metric, mcfg, n, threads)
                    stream = make_stream(cfg.master_seed, f"scan/{kind.value}/{n}")
                    start = time.perf_counter()
                    bounds = scan_problem(problem, alphas, stream, null)
                    scan_seconds = time.perf_counter() - start
                    manifest["rows"][key] = {
                        "status": "ok",
                        "row": _scan_row(source, kind, metric, n, bounds, alphas),
                        "scan_seconds": scan_seconds,
                        "null_seconds": null_seconds,
                        "bounds": [b.to_dict() for b in bounds],
                    }
                except Exception as exc:  # a failed row is recorded and the run continues
                    log.exception("scan %s failed", key)
                    failures += 1
                    manifest["rows"][key] = {
                        "status": "failed",
                        "error": f"{type(exc).__name__}: {exc}",
                        "row": _missing_row(source, kind, metric, n, alphas, converged="false"),
                        "scan_seconds": None,
                        "null_seconds": None,
                    }
                _write_json(manifest_path, manifest)

    rows = _ordered_rows(cfg, manifest)
    write_results(output_dir, cfg, manifest, rows)
    return rows, failures


def _make_problem(cfg, source, kind, metric, mcfg, n, threads) -> ScanProblem:
    common = dict(
        metric=metric,
        kind=kind,
        n=n,
        cfg=mcfg,
        reps=cfg.reps,
        eps_max=cfg.eps_max,
        tolerance=cfg.tolerance,
        noisy_tolerance=cfg.noisy_tolerance,
        llr_null_iterations=cfg.llr_iterations,
        threads=threads,
    )
    if source.model is not None:
        return ScanProblem(model=source.model, **common)
    _, scale = standardize(source.dataset)
    return ScanProblem(
        dataset=source.dataset.matrix,
        scale=scale,
        scale_features=cfg.scale_features,
        with_replacement=cfg.bootstrap_with_replacement,
        **common,
    )


def _ordered_rows(cfg: ExperimentConfig, manifest: dict) -> list[dict]:
    rows = []
    for n in cfg.sample_sizes:
        for kind in cfg.deformations:
            for metric, _ in cfg.metrics:
                entry = manifest["rows"].get(_row_key(kind, metric, n))
                if entry is not None:
                    rows.append(entry["row"])
    return rows


def results_csv_text(cfg: ExperimentConfig, rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=result_columns(cfg.alphas), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_results(output_dir: Path, cfg: ExperimentConfig, manifest: dict, rows: list[dict]) -> None:
    (output_dir / "results.csv").write_text(results_csv_text(cfg, rows))
    # wall-clock timings live apart from results.csv so that file stays byte-reproducible
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["deformation", "metric", "n", "scan_seconds", "null_seconds"])
    for n in cfg.sample_sizes:
        for kind in cfg.deformations:
            for metric, _ in cfg.metrics:
                e = manifest["rows"].get(_row_key(kind, metric, n))
                if e is None:
                    continue
                w.writerow([kind.value, metric.value, n, _opt(e.get("scan_seconds")), _opt(e.get("null_seconds"))])
    (output_dir / "timings.csv").write_text(buf.getvalue())
    (output_dir / "results.md").write_text(markdown_tables(cfg, manifest))


def _opt(x) -> str:
    return MISSING if x is None else f"{x:.3f}"


def _sig(x: float, digits: int = 5) -> str:
    return f"{x:.{digits}g}"


def _cell(row: dict, alpha: float) -> str:
    c = _cl_label(alpha)
    if row[f"eps{c}"] == MISSING:
        return MISSING
    eps = float(row[f"eps{c}"])
    lo = float(row[f"eps{c}_low"]) - eps
    up = float(row[f"eps{c}_up"]) - eps
    return f"{_sig(eps)} (-{_sig(abs(lo), 2)} / +{_sig(abs(up), 2)})"


def markdown_tables(cfg: ExperimentConfig, manifest: dict) -> str:
    """One table per sample size: deformation blocks of metric rows, then null timings."""
    out = []
    src = manifest.get("source", {}).get("id", "")
    for n in cfg.sample_sizes:
        out.append(f"## {src}, n = m = {n}\n")
        for kind in cfg.deformations:
            head = ["Statistic"] + [f"eps {_cl_label(a)}% CL" for a in cfg.alphas] + ["t (s)"]
            out.append(f"### {kind.value}-deformation\n")
            out.append("| " + " | ".join(head) + " |")
            out.append("|" + "---|" * len(head))
            for metric, _ in cfg.metrics:
                e = manifest["rows"].get(_row_key(kind, metric, n))
                if e is None:
                    continue
                cells = [metric.value] + [_cell(e["row"], a) for a in cfg.alphas]
                t = e.get("scan_seconds")
                cells.append(MISSING if t is None else f"{t:.0f}")
                out.append("| " + " | ".join(cells) + " |")
            out.append("")
        out.append("### Timing\n")
        out.append("| Statistic | t_null (s) |")
        out.append("|---|---|")
        for metric, _ in cfg.metrics:
            info = manifest["nulls"].get(f"{metric.value}|{n}")
            t = MISSING if info is None else f"{info['elapsed_seconds']:.0f}"
            out.append(f"| {metric.value} | {t} |")
        out.append("")
    return "\n".join(out)


# --------------------------------------------------------------------------
# report data


KS_FAMILY = {MetricKind.MEAN_KS, MetricKind.SLICED_KS}


def _null_entries(results_dir: Path) -> list[dict]:
    index = results_dir / "nulls.json"
    entries = []
    if index.exists():
        entries = json.loads(index.read_text())["nulls"]
    manifest = results_dir / "manifest.json"
    if manifest.exists():
        for key, info in json.loads(manifest.read_text()).get("nulls", {}).items():
            metric, n = key.split("|")
            entries.append({"metric": metric, "n": int(n), "path": info["path"]})
    seen = set()
    unique = []
    for e in entries:
        k = (e["metric"], e["n"])
        if k not in seen:
            seen.add(k)
            unique.append(e)
    return unique


def histogram_series(null: NullDistribution, bins: int = 50) -> list[dict]:
    v = null.values
    lo, hi = float(v[0]), float(v[-1])
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    width = np.diff(edges)
    mass = counts / v.size
    density = mass / width
    rows = []
    for i in range(bins):
        center = 0.5 * (edges[i] + edges[i + 1])
        row = {
            "bin_left": edges[i],
            "bin_right": edges[i + 1],
            "center": center,
            "mass": mass[i],
            "density": density[i],
        }
        if null.metric in KS_FAMILY:
            row["kolmogorov_pdf"] = kolmogorov_pdf(center)
        rows.append(row)
    return rows


def ecdf_series(null: NullDistribution) -> list[dict]:
    v = null.values
    # one point per distinct value, after consuming ties
    uniq, last = np.unique(v, return_index=False, return_counts=True)
    cum = np.cumsum(last) / v.size
    return [{"value": float(u), "ecdf": float(c)} for u, c in zip(uniq, cum)]


def _write_series(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) for k, v in r.items()})


def cmd_report(results_dir, bins: int = 50) -> list[Path]:
    """Write histogram and eCDF plot-data CSVs for every null recorded in ``results_dir``."""
    results_dir = Path(results_dir)
    entries = _null_entries(results_dir)
    if not entries:
        raise MissingCache(f"no null distributions recorded in {results_dir}")
    out_dir = results_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for e in entries:
        path = Path(e["path"])
        if not path.exists():
            raise MissingCache(f"null cache {path} is missing")
        null = load_null(path)
        stem = f"null_{e['metric']}_n{e['n']}"
        hist = out_dir / f"{stem}_hist.csv"
        ecdf = out_dir / f"{stem}_ecdf.csv"
        _write_series(hist, histogram_series(null, bins))
        _write_series(ecdf, ecdf_series(null))
        thr = out_dir / f"{stem}_thresholds.csv"
        _write_series(
            thr,
            [{"alpha": a, "t_alpha": threshold(null, a).t_alpha} for a in SUMMARY_ALPHAS],
        )
        written += [hist, ecdf, thr]
    return written
