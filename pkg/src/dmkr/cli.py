"""Command-line interface: classical / quantum / compare / sweep / verify.

Configuration is a single JSON file plus flag overrides; unknown keys are
rejected.  Every output file embeds the resolved configuration and seed.
Exit codes: 0 success, 2 configuration error, 3 numerical-guard abort,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import evolve_ensemble, initial_band_ensemble, momentum_histogram
from .errors import (
    ConfigError,
    DmkrError,
    LeakageError,
    SingularityError,
    StabilityError,
)
from .measures import dispersion, participation_ratio
from .params import HBAR_PRESETS, ModelParams
from .quantum import HilbertSpec, evolve_periods, initial_band_state, momentum_marginal
from .sweep import CellBudgets, SweepPlan, compute_cell, emit, run_sweep
from .verify import SIGN_CONVENTION_NOTE, run_all_checks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

_MODEL_KEYS = {"k", "gamma", "tau", "a", "phi", "diffusion_D"}
_BUDGET_KEYS = {"ensemble_size", "classical_steps", "quantum_periods", "n_max", "leakage_guard"}
_SWEEP_KEYS = {
    "k_min", "k_max", "n_k", "k_values",
    "gamma_min", "gamma_max", "n_gamma", "gamma_values",
    "hbar_list",
}
_TOP_KEYS = {"model", "budgets", "sweep", "seed", "noisy", "out_dir", "workers"}


def _check_keys(data: dict, allowed: set, context: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")


@dataclass
class RunConfig:
    """Validated CLI configuration."""

    model: dict = field(default_factory=dict)
    budgets: CellBudgets = field(default_factory=CellBudgets)
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    noisy: bool = True
    out_dir: str = "."
    workers: int = 1

    @classmethod
    def load(cls, path, overrides: dict) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except ValueError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(data, _TOP_KEYS, "config")
        model = dict(data.get("model", {}))
        _check_keys(model, _MODEL_KEYS, "model")
        budgets_raw = dict(data.get("budgets", {}))
        _check_keys(budgets_raw, _BUDGET_KEYS, "budgets")
        sweep = dict(data.get("sweep", {}))
        _check_keys(sweep, _SWEEP_KEYS, "sweep")

        if overrides.get("hbar_preset") is not None:
            preset = overrides["hbar_preset"]
            if preset not in HBAR_PRESETS:
                raise ConfigError(
                    f"hbar preset {preset} not in {sorted(HBAR_PRESETS)}"
                )
            model["tau"] = preset

        config = cls(
            model=model,
            budgets=CellBudgets(**budgets_raw),
            sweep=sweep,
            seed=int(data.get("seed", 0)),
            noisy=bool(data.get("noisy", True)),
            out_dir=data.get("out_dir", os.environ.get("DMKR_OUT_DIR", ".")),
            workers=int(data.get("workers", 1)),
        )
        if overrides.get("seed") is not None:
            config.seed = int(overrides["seed"])
        if overrides.get("workers") is not None:
            config.workers = int(overrides["workers"])
        if overrides.get("out_dir") is not None:
            config.out_dir = overrides["out_dir"]
        if config.workers < 1:
            raise ConfigError("workers must be >= 1")
        return config

    def params(self) -> ModelParams:
        model = dict(self.model)
        missing = {"k", "gamma", "tau"} - set(model)
        if missing:
            raise ConfigError(f"model requires keys {sorted(missing)}")
        return ModelParams(**model)

    def resolved(self) -> dict:
        return {
            "model": self.model,
            "budgets": {
                "ensemble_size": self.budgets.ensemble_size,
                "classical_steps": self.budgets.classical_steps,
                "quantum_periods": self.budgets.quantum_periods,
                "n_max": self.budgets.n_max,
                "leakage_guard": self.budgets.leakage_guard,
            },
            "sweep": self.sweep,
            "seed": self.seed,
            "noisy": self.noisy,
            "out_dir": str(self.out_dir),
            "workers": self.workers,
        }

    def plan(self) -> SweepPlan:
        sweep = self.sweep
        if "k_values" in sweep:
            k_values = tuple(sweep["k_values"])
        else:
            k_values = tuple(
                np.linspace(
                    sweep.get("k_min", 0.5), sweep.get("k_max", 10.0), sweep.get("n_k", 20)
                )
            )
        if "gamma_values" in sweep:
            gamma_values = tuple(sweep["gamma_values"])
        else:
            gamma_values = tuple(
                np.linspace(
                    sweep.get("gamma_min", 0.01),
                    sweep.get("gamma_max", 0.99),
                    sweep.get("n_gamma", 20),
                )
            )
        hbar_list = tuple(sweep.get("hbar_list", [self.model.get("tau", 0.137)]))
        return SweepPlan(
            k_values=k_values,
            gamma_values=gamma_values,
            hbar_list=hbar_list,
            budgets=self.budgets,
            master_seed=self.seed,
        )


def _config_header(config: RunConfig) -> str:
    blob = json.dumps(config.resolved(), sort_keys=True)
    return f"# config: {blob}\n# seed: {config.seed}\n"


def _write_marginal_csv(path, config: RunConfig, dist, extra_columns=None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_config_header(config))
        if extra_columns is None:
            fh.write("p,probability\n")
            for p, prob in zip(dist.bin_centers, dist.probabilities):
                fh.write(f"{p!r},{prob!r}\n")
        else:
            names = ",".join(name for name, _ in extra_columns)
            fh.write(f"p,{names}\n")
            rows = zip(dist.bin_centers, *[vals for _, vals in extra_columns])
            for p, *vals in rows:
                fh.write(",".join([repr(float(p))] + [repr(float(v)) for v in vals]) + "\n")


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def cmd_classical(config: RunConfig, quiet: bool) -> int:
    params = config.params()
    n_max = config.budgets.resolve_n_max(params.tau)
    hilbert = HilbertSpec(n_max=n_max, tau=params.tau)
    ensemble = initial_band_ensemble(config.budgets.ensemble_size, config.seed, params.tau)
    ensemble = evolve_ensemble(ensemble, params, config.budgets.classical_steps, config.noisy)
    dist, out_fraction = momentum_histogram(ensemble, hilbert.bins, params.tau)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "classical_marginal.csv"
    _write_marginal_csv(path, config, dist)
    _say(quiet, f"wrote {path}")
    _say(quiet, f"sigma = {dispersion(dist)!r}")
    _say(quiet, f"eta = {participation_ratio(dist)!r}")
    _say(quiet, f"out_of_range_fraction = {out_fraction!r}")
    return EXIT_OK


def cmd_quantum(config: RunConfig, quiet: bool) -> int:
    params = config.params()
    n_max = config.budgets.resolve_n_max(params.tau)
    hilbert = HilbertSpec(n_max=n_max, tau=params.tau)
    rho = initial_band_state(hilbert)
    rho, diagnostics = evolve_periods(
        rho,
        params,
        config.budgets.quantum_periods,
        leakage_guard=config.budgets.leakage_guard,
    )
    dist = momentum_marginal(rho, params.tau)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "quantum_marginal.csv"
    _write_marginal_csv(path, config, dist)
    _say(quiet, f"wrote {path}")
    _say(quiet, f"sigma = {dispersion(dist)!r}")
    _say(quiet, f"eta = {participation_ratio(dist)!r}")
    _say(quiet, f"trace_drift = {diagnostics['trace_drift']!r}")
    _say(quiet, f"max_edge_population = {diagnostics['max_edge_population']!r}")
    return EXIT_OK


def cmd_compare(config: RunConfig, quiet: bool) -> int:
    from .measures import dispersion_complement, literal_overlap, overlap

    params = config.params()
    cell = (params.k, params.gamma, params.tau)
    data = compute_cell(cell, config.budgets, config.seed)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "compare_marginals.csv"
    _write_marginal_csv(
        path,
        config,
        data.classical_noisy,
        extra_columns=[
            ("classical_noisy", data.classical_noisy.probabilities),
            ("quantum", data.quantum.probabilities),
            ("classical_noiseless", data.classical_noiseless.probabilities),
        ],
    )
    _say(quiet, f"wrote {path}")
    print(f"overlap = {overlap(data.classical_noisy, data.quantum)!r}")
    print(f"sigma_prime = {dispersion_complement(data.classical_noisy, data.quantum)!r}")
    print(f"eta_cl = {participation_ratio(data.classical_noiseless)!r}")
    print(f"eta_q = {participation_ratio(data.quantum)!r}")
    _say(quiet, f"overlap_literal = {literal_overlap(data.classical_noisy, data.quantum)!r}")
    return EXIT_OK


def cmd_sweep(config: RunConfig, quiet: bool, formats: str) -> int:
    plan = config.plan()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "sweep.checkpoint"
    progress = None
    if not quiet:
        def progress(done, total):
            if done % 10 == 0 or done == total:
                print(f"  {done}/{total} cells", flush=True)
    result = run_sweep(
        plan, parallelism=config.workers, checkpoint_path=checkpoint, progress=progress
    )
    files = emit(result, formats, out_dir)
    for f in files:
        _say(quiet, f"wrote {f}")
    if result.failures:
        _say(quiet, f"{len(result.failures)} cells failed numerical guards:")
        for index, reason in sorted(result.failures.items()):
            k, gamma, hbar = plan.cell(index)
            _say(quiet, f"  cell {index} (k={k:g}, gamma={gamma:g}, hbar={hbar:g}): {reason}")
    return EXIT_OK


def cmd_verify(quiet: bool) -> int:
    results = run_all_checks()
    for result in results:
        print(result.line())
    print(SIGN_CONVENTION_NOTE)
    if all(r.passed for r in results):
        _say(quiet, "all checks passed")
        return EXIT_OK
    return EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmkr",
        description="dissipative modified kicked rotator simulator and analysis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("classical", "evolve a classical ensemble and write its momentum marginal"),
        ("quantum", "evolve the density matrix and write its momentum marginal"),
        ("compare", "run both pipelines and print the comparison measures"),
        ("sweep", "run a (k, gamma) parameter sweep"),
        ("verify", "run the built-in formula and channel verification checks"),
    ]:
        p = sub.add_parser(name, help=help_text)
        if name != "verify":
            p.add_argument("--config", type=str, default=None, help="JSON config file")
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--out-dir", type=str, default=None)
            p.add_argument(
                "--hbar-preset",
                type=float,
                default=None,
                help=f"one of {sorted(HBAR_PRESETS)} (sets model tau)",
            )
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None)
            p.add_argument("--format", type=str, default="csv,json,pgm")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.quiet)
        overrides = {
            "seed": args.seed,
            "out_dir": args.out_dir,
            "hbar_preset": args.hbar_preset,
            "workers": getattr(args, "workers", None),
        }
        config = RunConfig.load(args.config, overrides)
        if args.command == "classical":
            return cmd_classical(config, args.quiet)
        if args.command == "quantum":
            return cmd_quantum(config, args.quiet)
        if args.command == "compare":
            return cmd_compare(config, args.quiet)
        if args.command == "sweep":
            return cmd_sweep(config, args.quiet, args.format)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LeakageError, StabilityError, SingularityError) as exc:
        print(f"numerical guard abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DmkrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
