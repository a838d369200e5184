"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import BulkEigenvalueError, ConfigError, DataError, DegeneratePrecisionError
from .experiments import (
    ExperimentConfig,
    fit_weights,
    run_backtest,
    run_compare,
    run_consistency,
    summarize,
)
from .io import (
    estimator_list,
    fmt,
    log_returns,
    model_from_settings,
    parse_n_grid,
    parse_spike_counts,
    read_config,
    read_prices,
    read_returns,
    subset_columns,
    write_manifest,
    write_records,
    write_summary,
)
from .risk_theory import AsymptoticInputs, write_grid_scan
from .sampling import sample_covariance
from .spectral import BHAT_MODES, fit_spikes, sample_spectrum

logger = logging.getLogger("scrgmvp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

# setting name -> (section, default)
_DEFAULTS: dict[str, tuple[str, str]] = {
    "sigma2": ("model", "1.0"),
    "model_spikes": ("model", "1:20, 2:10, 3:5, -1:-0.99"),
    "vectors": ("model", "canonical-basis"),
    "dim": ("experiment", "50"),
    "n_grid": ("experiment", "60:500:20"),
    "reps": ("experiment", "1000"),
    "seed": ("experiment", "0"),
    "estimators": ("experiment", "scme,shre,wshre,sce,scre"),
    "grid_resolution": ("experiment", "100"),
    "grid_refine": ("experiment", "10"),
    "window": ("experiment", "200"),
    "horizon": ("experiment", "30"),
    "step": ("experiment", "1"),
    "spikes": ("experiment", "3,1"),
    "spike_mode": ("experiment", "oracle"),
    "bhat_denominator": ("experiment", "overlap"),
    "wshre_c": ("experiment", "1.0"),
    "workers": ("experiment", "1"),
    "subset": ("experiment", ""),
    "subset_seed": ("experiment", ""),
    "n": ("experiment", ""),
    "returns": ("io", ""),
    "prices": ("io", ""),
    "out": ("io", ""),
    "summary": ("io", ""),
    "manifest": ("io", ""),
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file with [model]/[experiment]/[io]")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--summary", help="summary CSV path")
    p.add_argument("--manifest", help="write the resolved configuration here")
    p.add_argument("--reps", type=int, help="repetitions or maximum number of windows")
    p.add_argument("--dim", type=int, help="number of assets M for synthetic runs")
    p.add_argument("--n-grid", dest="n_grid", help="sample sizes, lo:hi:step or comma list")
    p.add_argument("--estimators", help="comma list from scme,shre,wshre,sce,scre")
    p.add_argument("--grid-resolution", dest="grid_resolution", type=int)
    p.add_argument("--grid-refine", dest="grid_refine", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--spikes", help="spike counts r1,r2 or 'auto'")
    p.add_argument("--spike-mode", dest="spike_mode", choices=("oracle", "estimated"))
    p.add_argument("--subset", type=int, help="randomly keep this many assets")
    p.add_argument("--subset-seed", dest="subset_seed", type=int)
    p.add_argument("--bhat-denominator", dest="bhat_denominator", choices=BHAT_MODES)
    p.add_argument("--wshre-c", dest="wshre_c", type=float)
    p.add_argument("--workers", type=int, help="worker processes, 0 = one per CPU")
    p.add_argument("--returns", help="returns CSV (date,TICKER...)")
    p.add_argument("--prices", help="prices CSV; log returns are taken")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scrgmvp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate-consistency", "realised vs deterministic-equivalent SCRE risk"),
        ("simulate-compare", "five-estimator comparison on synthetic panels"),
        ("backtest", "rolling-window out-of-sample variance on a returns file"),
        ("weights", "one-shot weights on a returns file"),
        ("grid-scan", "dump the (phi1, phi2, gbar) objective surface"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        if name == "weights":
            p.add_argument("--estimator", default="scre", help="one of scme,shre,wshre,sce,scre")
        if name == "grid-scan":
            p.add_argument("--n", type=int, help="sample size fixing J = M / n")
    return parser


def resolve(args: argparse.Namespace) -> dict[str, str]:
    settings = {k: v for k, (_, v) in _DEFAULTS.items()}
    if args.config:
        cfg = read_config(args.config)
        for section, values in cfg.items():
            for key, value in values.items():
                name = "model_spikes" if (section, key) == ("model", "spikes") else key
                if name not in _DEFAULTS or _DEFAULTS[name][0] != section:
                    raise ConfigError(f"unknown setting [{section}] {key}")
                settings[name] = value
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = str(value)
    return settings


def _int(settings: dict[str, str], key: str) -> int | None:
    text = settings[key].strip()
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from None


def _float(settings: dict[str, str], key: str) -> float:
    try:
        return float(settings[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {settings[key]!r}") from None


def experiment_config(settings: dict[str, str]) -> ExperimentConfig:
    return ExperimentConfig(
        dim=_int(settings, "dim"),
        n_grid=parse_n_grid(settings["n_grid"]),
        reps=_int(settings, "reps"),
        base_seed=_int(settings, "seed"),
        estimators=estimator_list(settings["estimators"]),
        grid_resolution=_int(settings, "grid_resolution"),
        grid_refine=_int(settings, "grid_refine"),
        window=_int(settings, "window"),
        horizon=_int(settings, "horizon"),
        step=_int(settings, "step"),
        spike_counts=parse_spike_counts(settings["spikes"]),
        spike_mode=settings["spike_mode"].strip(),
        bhat_mode=_bhat(settings),
        wshre_c=_float(settings, "wshre_c"),
        workers=_int(settings, "workers"),
        subset=_int(settings, "subset"),
        subset_seed=_int(settings, "subset_seed"),
    )


def _bhat(settings: dict[str, str]) -> str:
    mode = settings["bhat_denominator"].strip()
    if mode not in BHAT_MODES:
        raise ConfigError(f"bhat-denominator must be one of {BHAT_MODES}")
    return mode


def load_panel(settings: dict[str, str], config: ExperimentConfig):
    if settings["returns"]:
        panel = read_returns(settings["returns"])
    elif settings["prices"]:
        panel = log_returns(read_prices(settings["prices"]))
    else:
        raise ConfigError("this command needs --returns or --prices")
    if config.subset is not None:
        seed = config.subset_seed if config.subset_seed is not None else 0
        panel = subset_columns(panel, config.subset, seed)
    return panel


def _open_out(path: str):
    if not path:
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


def _emit(records, settings: dict[str, str]) -> None:
    out = _open_out(settings["out"])
    try:
        write_records(records, out)
    finally:
        if out is not sys.stdout:
            out.close()
    rows = summarize(records)
    if settings["summary"]:
        write_summary(rows, settings["summary"])
    elif settings["out"]:
        write_summary(rows, sys.stdout)


def _cmd_simulate(settings, config: ExperimentConfig, kind: str) -> None:
    model = model_from_settings(
        {"spikes": settings["model_spikes"], "sigma2": settings["sigma2"], "vectors": settings["vectors"]},
        config.dim,
    )
    runner = run_consistency if kind == "consistency" else run_compare
    _emit(runner(config, model), settings)


def _cmd_backtest(settings, config: ExperimentConfig) -> None:
    panel = load_panel(settings, config)
    _emit(run_backtest(config, panel), settings)


def _cmd_weights(settings, config: ExperimentConfig, estimator: str) -> None:
    panel = load_panel(settings, config)
    cfg = ExperimentConfig(**{**config.__dict__, "estimators": (estimator,)})
    fitted, grid = fit_weights(panel, cfg)
    w = fitted[estimator]
    out = _open_out(settings["out"])
    try:
        out.write("ticker,weight\n")
        labels = panel.labels or tuple(f"A{i + 1:04d}" for i in range(panel.dim))
        for t, x in zip(labels, w.weights):
            out.write(f"{t},{fmt(x)}\n")
    finally:
        if out is not sys.stdout:
            out.close()


def _cmd_grid_scan(settings, config: ExperimentConfig) -> None:
    if settings["returns"] or settings["prices"]:
        panel = load_panel(settings, config)
        spectrum = sample_spectrum(sample_covariance(panel), panel.n)
        r1, r2 = config.spike_counts if config.spike_counts is not None else (None, None)
        inputs = AsymptoticInputs.from_estimates(fit_spikes(spectrum, r1, r2, bhat_mode=config.bhat_mode))
    else:
        n = _int(settings, "n") or config.n_grid[0]
        model = model_from_settings(
            {"spikes": settings["model_spikes"], "sigma2": settings["sigma2"], "vectors": settings["vectors"]},
            config.dim,
        )
        if n <= model.dim:
            raise ConfigError(f"n = {n} must exceed M = {model.dim}")
        inputs = AsymptoticInputs.from_model(model, model.dim / n)
    out = _open_out(settings["out"])
    try:
        write_grid_scan(inputs, config.grid_resolution, out)
    finally:
        if out is not sys.stdout:
            out.close()


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        settings = resolve(args)
        config = experiment_config(settings)
        if args.command == "simulate-consistency":
            _cmd_simulate(settings, config, "consistency")
        elif args.command == "simulate-compare":
            _cmd_simulate(settings, config, "compare")
        elif args.command == "backtest":
            _cmd_backtest(settings, config)
        elif args.command == "weights":
            _cmd_weights(settings, config, args.estimator.strip().lower())
        elif args.command == "grid-scan":
            _cmd_grid_scan(settings, config)
        if settings["manifest"]:
            sections: dict[str, dict[str, object]] = {"model": {}, "experiment": {}, "io": {}}
            for key, (section, _) in _DEFAULTS.items():
                sections[section]["spikes" if key == "model_spikes" else key] = settings[key]
            sections["run"] = {
                "command": args.command,
                "code_version": __version__,
                "base_seed": config.base_seed,
                "subset_seed": config.subset_seed,
                "wshre_method": "stein-grand-mean",
                "started": started,
                "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            }
            write_manifest(sections, settings["manifest"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, BulkEigenvalueError, DegeneratePrecisionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
