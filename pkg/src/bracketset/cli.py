"""Batch command-line front end.

Subcommands: ``simulate`` (emit generator CSVs), ``fit`` (minimal-volume rule
on all input data), ``calibrate`` (split-conformal pipeline), ``predict``
(apply a saved rule to covariates), ``evaluate`` (coverage/volume against a
labeled CSV), and ``report`` (the seeded multi-method experiment).

Exit codes: 0 success, 1 configuration error, 2 data error.  Artifact-writing
commands also write a ``<name>.manifest.json`` capturing config, seeds and
library versions.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .conformal import (
    DEFAULT_GRID_POINTS,
    DEFAULT_SPLIT_FRAC,
    Partition,
    local_split_conformal,
    split_conformal,
)
from .data import Dataset
from .io import (
    BracketMap,
    ConfigError,
    DataError,
    build_manifest,
    dataset_to_csv,
    ingest_csv,
    read_json,
    write_json,
)
from .kernels import KernelSpec, default_bandwidth
from .rules import PredictionRule
from .sets import union_to_pairs
from .sim import METHODS, ModelSpec, generate, integrated_volume, run_experiment
from .solver import SolverConfig, auto_psi, fit_prediction_rule

_EXIT_CODES = {ConfigError: 1, DataError: 2}


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(_EXIT_CODES.get(type(exc), 1))


def _load_config(path) -> dict:
    try:
        cfg = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return cfg


def _solver_from_config(cfg: dict, alpha: float, n_train: int, bandwidth) -> SolverConfig:
    s = cfg.get("solver", {})
    psi = s.get("psi", 0.0)
    if psi == "auto":
        psi = auto_psi(n_train, bandwidth)
    try:
        return SolverConfig(
            alpha=alpha,
            psi_n=float(psi),
            max_components=int(s.get("max_components", 2)),
            weight_grid=float(s.get("weight_grid", 1e-4)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver config: {exc}") from exc


def _kernel_from_config(cfg: dict, data: Dataset) -> KernelSpec:
    k = cfg.get("kernel", {})
    try:
        bw = k.get("bandwidth", "auto")
        if bw == "auto":
            spec = default_bandwidth(data, scale=float(k.get("scale", 1.5)))
            if "family" in k:
                spec = KernelSpec(family=k["family"], bandwidth=spec.bandwidth)
            return spec
        return KernelSpec(family=k.get("family", "epanechnikov"), bandwidth=tuple(np.atleast_1d(bw)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid kernel config: {exc}") from exc


def _alpha_from_config(cfg: dict) -> float:
    try:
        alpha = float(cfg.get("alpha", 0.1))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid alpha: {exc}") from exc
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    return alpha


def _grid_from_config(cfg: dict, data: Dataset) -> np.ndarray:
    grid_cfg = cfg.get("grid", {})
    if isinstance(grid_cfg, list):
        return np.asarray(grid_cfg, dtype=float)
    points = int(grid_cfg.get("points", DEFAULT_GRID_POINTS))
    if data.dim != 1:
        raise ConfigError("automatic grids support one covariate; give grid as a list")
    lo, hi = float(data.x.min()), float(data.x.max())
    return np.array([[lo]]) if lo == hi else np.linspace(lo, hi, points)[:, None]


def _bracket_map_from_config(cfg: dict) -> BracketMap | None:
    bm = cfg.get("bracket_map")
    if bm is None:
        return None
    return BracketMap.from_json(bm)


@click.group()
def main() -> None:
    """Prediction sets for interval-censored outcomes."""


@main.command()
@click.option("--model", required=True, type=click.Choice(["A", "B", "C", "example1"]))
@click.option("--n", required=True, type=int)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--latent-out", default=None, type=click.Path(dir_okay=False),
              help="Also write the diagnostic latent outcomes.")
def simulate(model, n, seed, out, latent_out):
    """Draw a synthetic dataset and write it as CSV."""
    try:
        data, latent = generate(ModelSpec(model, n, seed))
    except ValueError as exc:
        _fail(ConfigError(str(exc)))
        return
    dataset_to_csv(data, out)
    if latent_out:
        with open(latent_out, "w", encoding="utf-8") as fh:
            fh.write("y\n")
            for v in latent:
                fh.write(repr(float(v)) + "\n")
    write_json(
        build_manifest("simulate", {"model": model, "n": n, "seed": seed}),
        Path(out).with_suffix(".manifest.json"),
    )
    click.echo(f"wrote {n} rows to {out}")


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def fit(data_path, config_path, out):
    """Fit the minimal-volume union rule on all rows of a dataset."""
    try:
        cfg = _load_config(config_path)
        data = ingest_csv(data_path, _bracket_map_from_config(cfg))
        alpha = _alpha_from_config(cfg)
        spec = _kernel_from_config(cfg, data)
        solver = _solver_from_config(cfg, alpha, data.n, spec.bandwidth)
        grid = _grid_from_config(cfg, data)
        rule = fit_prediction_rule(data, grid, spec, solver)
    except (ConfigError, DataError) as exc:
        _fail(exc)
        return
    rule.save(out)
    write_json(build_manifest("fit", cfg), Path(out).with_suffix(".manifest.json"))
    click.echo(f"wrote rule with {rule.n_points} grid points to {out}")


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-rule", required=True, type=click.Path(dir_okay=False))
@click.option("--out-calibration", required=True, type=click.Path(dir_okay=False))
@click.option("--with-scores", is_flag=True, help="Include raw scores in the calibration JSON.")
def calibrate(data_path, config_path, out_rule, out_calibration, with_scores):
    """Split-conformal pipeline: fit on one split, calibrate on the other."""
    try:
        cfg = _load_config(config_path)
        data = ingest_csv(data_path, _bracket_map_from_config(cfg))
        alpha = _alpha_from_config(cfg)
        seed = int(cfg.get("seed", 0))
        split_frac = float(cfg.get("split_frac", DEFAULT_SPLIT_FRAC))
        grid_cfg = cfg.get("grid", {})
        grid = np.asarray(grid_cfg, dtype=float) if isinstance(grid_cfg, list) else None
        grid_points = (
            int(grid_cfg.get("points", DEFAULT_GRID_POINTS))
            if isinstance(grid_cfg, dict)
            else DEFAULT_GRID_POINTS
        )
        kernel_cfg = cfg.get("kernel", {})
        # Resolve auto bandwidth (and auto psi) from the training split so the
        # command matches what split_conformal would derive internally.
        from .conformal import split_indices

        idx1, _ = split_indices(data.n, split_frac, seed)
        train = data.subset(idx1)
        if kernel_cfg.get("bandwidth", "auto") == "auto":
            spec = _kernel_from_config(cfg, train)
        else:
            spec = _kernel_from_config(cfg, data)
        solver = _solver_from_config(cfg, alpha, train.n, spec.bandwidth)
        part_cfg = cfg.get("partition")
        if part_cfg:
            part = Partition.equal_width(
                float(part_cfg["lo"]), float(part_cfg["hi"]), int(part_cfg["bins"])
            )
            rule, results = local_split_conformal(
                data, part, alpha, split_frac, spec, solver, seed=seed,
                grid=grid, grid_points=grid_points,
            )
            cal_json = {"cells": [r.to_json(include_scores=with_scores) for r in results]}
        else:
            rule, result = split_conformal(
                data, alpha, split_frac, spec, solver, seed=seed,
                grid=grid, grid_points=grid_points,
            )
            cal_json = result.to_json(include_scores=with_scores)
    except (ConfigError, DataError) as exc:
        _fail(exc)
        return
    rule.save(out_rule)
    write_json(cal_json, out_calibration)
    write_json(build_manifest("calibrate", cfg), Path(out_rule).with_suffix(".manifest.json"))
    click.echo(f"wrote conformalized rule to {out_rule}")


@main.command()
@click.option("--rule", "rule_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--covariates", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def predict(rule_path, covariates, out):
    """Map covariate rows to prediction-set JSON."""
    import pandas as pd

    try:
        rule = PredictionRule.load(rule_path)
        frame = pd.read_csv(covariates)
        x = frame.to_numpy(dtype=float)
    except (OSError, ValueError) as exc:
        _fail(DataError(str(exc)))
        return
    try:
        sets = [union_to_pairs(rule.evaluate(row)) for row in x]
    except ValueError as exc:
        _fail(DataError(str(exc)))
        return
    write_json({"predictions": sets}, out)
    click.echo(f"wrote {len(sets)} predictions to {out}")


@main.command()
@click.option("--rule", "rule_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--bracket-map", "map_path", default=None, type=click.Path(exists=True, dir_okay=False))
def evaluate(rule_path, data_path, out, map_path):
    """Bracket coverage and integrated volume of a rule on labeled data."""
    try:
        bm = BracketMap.from_json(read_json(map_path)) if map_path else None
        rule = PredictionRule.load(rule_path)
        data = ingest_csv(data_path, bm)
        hits = rule.contains_brackets(data.x, data.y_lo, data.y_hi)
        vol = integrated_volume(rule) if rule.dim == 1 else None
    except (ConfigError, DataError) as exc:
        _fail(exc)
        return
    except ValueError as exc:
        _fail(DataError(str(exc)))
        return
    write_json(
        {"n": data.n, "coverage": float(hits.mean()), "integrated_volume": vol},
        out,
    )
    click.echo(f"coverage {hits.mean():.4f} over {data.n} rows")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def report(config_path, out_dir):
    """Run the seeded multi-method experiment and write report artifacts."""
    try:
        cfg = _load_config(config_path)
        models = cfg.get("models")
        if not models:
            raise ConfigError("config needs a nonempty 'models' list")
        alpha = _alpha_from_config(cfg)
        n = int(cfg.get("n", 2500))
        specs = [ModelSpec(m, n, 0, alpha) for m in models]
        methods = cfg.get("methods", ["conformal_union"])
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        solver_cfg = cfg.get("solver", {})
        kernel_cfg = cfg.get("kernel", {})
        if kernel_cfg.get("bandwidth", "auto") != "auto":
            kernel = KernelSpec(
                family=kernel_cfg.get("family", "epanechnikov"),
                bandwidth=tuple(np.atleast_1d(kernel_cfg["bandwidth"])),
            )
        else:
            kernel = None
        psi = solver_cfg.get("psi", 0.0)
        if psi == "auto":
            raise ConfigError("psi 'auto' is per-fit; reports require a numeric psi")
        grid_cfg = cfg.get("grid", {})
        if not isinstance(grid_cfg, dict):
            raise ConfigError("report grids are generated; give grid as {'points': N}")
        rep = run_experiment(
            specs,
            methods,
            reps=int(cfg.get("reps", 100)),
            seed=int(cfg.get("seed", 0)),
            split_frac=float(cfg.get("split_frac", DEFAULT_SPLIT_FRAC)),
            kernel=kernel,
            max_components=int(solver_cfg.get("max_components", 2)),
            psi_n=float(psi),
            weight_grid=float(solver_cfg.get("weight_grid", 1e-4)),
            partition_bins=int(cfg.get("partition", {}).get("bins", 5) if cfg.get("partition") else 5),
            grid_points=int(grid_cfg.get("points", DEFAULT_GRID_POINTS)),
            eval_points=int(cfg.get("eval_points", 5000)),
            n_jobs=int(cfg.get("n_jobs", 1)),
        )
    except (ConfigError, DataError) as exc:
        _fail(exc)
        return
    except ValueError as exc:
        _fail(ConfigError(str(exc)))
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out / "report.csv")
    write_json(rep.summary_json(), out / "summary.json")
    write_json(build_manifest("report", cfg), out / "manifest.json")
    click.echo(f"wrote report to {out}")


if __name__ == "__main__":
    main()
