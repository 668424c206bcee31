"""Configuration-driven experiment runner.

Subcommands
-----------
run <config>
    Execute one experiment described by a flat key=value config file.
figure <id> [--set key=value ...]
    Run a named figure preset (fig2 .. fig9) with optional overrides.
convert-lab <config>
    Convert laboratory parameters to the dimensionless ones.
flux --k <v> [--samples n]
    Steady-state phase-space flux across the 10 pi barrier.

All data files are comma-separated tables with a one-line header;
numbers carry 9 significant digits.  A sidecar .meta.json records the
full configuration, code version, and wall time.  Seeds are mandatory,
so a (config, seed) pair always yields byte-identical data files.

Exit codes: 0 success, 2 config error, 3 numerical-guard failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classical import (
    equilibrium_flux,
    evolve_ensemble,
    init_thermal_ensemble,
    poincare_section,
    seed_grid,
)
from .model import DOUBLE, SINGLE, LabParameters, PulseTrain
from .model import dimensionless_from_lab as _to_dimensionless
from .observables import TEN_PI, fraction_outside, kinetic_energy
from .quantum import TruncationError, init_quantum_mixture, simulate_quantum


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

ENGINES = ("classical", "quantum", "flux", "poincare", "compare")

# Per-key parsers; every engine accepts the common keys plus its own.
_COMMON_KEYS = {
    "engine": str,
    "train": str,
    "pulse_width": float,
    "pulse_edges": str,
    "seed": int,
    "out": str,
}
_CLASSICAL_KEYS = {
    "k": float,
    "num_kicks": int,
    "sigma_rho": float,
    "ensemble_size": int,
    "substeps": int,
    "rho_c": float,
}
_QUANTUM_KEYS = {
    "k": float,
    "kbar": float,
    "eta": float,
    "num_kicks": int,
    "sigma_rho": float,
    "member_count": int,
    "n_max": int,
    "substeps": int,
    "rho_c": float,
    "threads": int,
}
_FLUX_KEYS = {"k": float, "kbar": float, "rho_c": float, "samples": int, "substeps": int}
_POINCARE_KEYS = {
    "k": float,
    "n_phi": int,
    "n_rho": int,
    "rho_max": float,
    "periods": int,
    "substeps": int,
}
_ENGINE_KEYS = {
    "classical": _CLASSICAL_KEYS,
    "quantum": _QUANTUM_KEYS,
    "flux": _FLUX_KEYS,
    "poincare": _POINCARE_KEYS,
    "compare": {**_CLASSICAL_KEYS, **_QUANTUM_KEYS},
}

_LAB_KEYS = {
    "rabi_frequency": float,
    "detuning_45": float,
    "detuning_44": float,
    "detuning_43": float,
    "kick_period": float,
    "pulse_width": float,
    "pulse_separation": float,
    "recoil_frequency": float,
    "eta": float,
    "num_kicks": int,
    "out": str,
}

_DEFAULTS = {
    "train": "double",
    "kbar": 2.6,
    "eta": 0.0,
    "num_kicks": 70,
    "sigma_rho": 9.2,
    "ensemble_size": 40000,
    "member_count": 256,
    "n_max": 128,
    "rho_c": TEN_PI,
    "samples": 100000,
    "n_phi": 20,
    "n_rho": 20,
    "rho_max": 9.0 * math.pi,
    "periods": 1000,
    "threads": 1,
}
# Engine-appropriate integrator defaults: ensembles and sections are
# statistical, single-pass accuracy suffices.
_SUBSTEP_DEFAULTS = {
    "classical": 50,
    "quantum": 100,
    "flux": 20,
    "poincare": 20,
    "compare": 100,
}


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat key=value lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _typed(raw: dict[str, str], schema: dict[str, type]) -> dict[str, object]:
    """Validate keys against a schema and coerce value types."""
    config: dict[str, object] = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}")
        caster = schema[key]
        try:
            config[key] = caster(value)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: {exc}") from exc
    return config


def validate_config(raw: dict[str, str]) -> dict[str, object]:
    """Validate a run() config and fill engine defaults."""
    engine = raw.get("engine")
    if engine is None:
        raise ConfigError("missing required key 'engine'")
    if engine not in ENGINES:
        raise ConfigError(f"key 'engine': expected one of {ENGINES}, got {engine!r}")
    schema = {**_COMMON_KEYS, **_ENGINE_KEYS[engine]}
    config = _typed(raw, schema)

    if "seed" not in config:
        raise ConfigError("missing required key 'seed' (wall-clock seeding is not allowed)")
    if "k" not in config:
        raise ConfigError("missing required key 'k'")
    for key in schema:
        if key in config or key in ("engine", "seed", "out", "pulse_width", "pulse_edges"):
            continue
        if key == "substeps":
            config[key] = _SUBSTEP_DEFAULTS[engine]
        elif key == "k":
            pass
        else:
            config[key] = _DEFAULTS[key]

    if config["k"] < 0:
        raise ConfigError(f"key 'k': must be >= 0, got {config['k']}")
    if not 0.0 <= config.get("eta", 0.0) <= 1.0:
        raise ConfigError(f"key 'eta': must lie in [0, 1], got {config['eta']}")
    config["train_obj"] = _resolve_train(config)
    return config


def _resolve_train(config: dict[str, object]) -> PulseTrain:
    name = config.get("train", "double")
    if name == "double":
        return DOUBLE
    if name == "single":
        return SINGLE
    if name == "custom":
        if "pulse_width" not in config or "pulse_edges" not in config:
            raise ConfigError("custom train requires 'pulse_width' and 'pulse_edges'")
        try:
            edges = tuple(float(e) for e in str(config["pulse_edges"]).split(","))
        except ValueError as exc:
            raise ConfigError(f"key 'pulse_edges': {exc}") from exc
        return PulseTrain(pulse_width=float(config["pulse_width"]), leading_edges=edges)
    raise ConfigError(f"key 'train': expected double|single|custom, got {name!r}")


# ---------------------------------------------------------------------------
# Output writing
# ---------------------------------------------------------------------------


def _fmt(value: object) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def write_csv(path: Path, header: list[str], rows: list[list[object]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_metadata(path: Path, config: dict[str, object], started: float, extra: dict | None = None) -> None:
    record = {
        "config": {k: v for k, v in config.items() if k != "train_obj"},
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        record.update(extra)
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# Engine pipelines
# ---------------------------------------------------------------------------


def _classical_curve(config: dict[str, object]) -> tuple[list[int], list[float], list[float]]:
    ensemble = init_thermal_ensemble(
        config["sigma_rho"], config["ensemble_size"], config["seed"]
    )
    series = evolve_ensemble(
        ensemble, config["k"], config["train_obj"], config["num_kicks"], config["substeps"]
    )
    kicks = list(range(len(series)))
    pct = [fraction_outside(d, config["rho_c"]) for d in series]
    energy = [kinetic_energy(d) for d in series]
    return kicks, pct, energy


def _quantum_series(config: dict[str, object]):
    from .model import DimensionlessParams

    mixture = init_quantum_mixture(
        config["sigma_rho"],
        config["kbar"],
        config["member_count"],
        n_max=config["n_max"],
        seed=config["seed"],
    )
    params = DimensionlessParams(
        k=config["k"], kbar=config["kbar"], eta=config["eta"], num_kicks=config["num_kicks"]
    )
    return simulate_quantum(
        params,
        config["train_obj"],
        mixture,
        substeps_per_pulse=config["substeps"],
        threads=config["threads"],
    )


def _quantum_curve(config: dict[str, object]) -> tuple[list[int], list[float], list[float]]:
    series = _quantum_series(config)
    kicks = list(range(len(series)))
    pct = [fraction_outside(d, config["rho_c"]) for d in series]
    energy = [kinetic_energy(d) for d in series]
    return kicks, pct, energy


def run_config(config: dict[str, object], out: Path) -> dict:
    """Dispatch one validated config; returns extra metadata."""
    engine = config["engine"]
    if engine == "classical":
        kicks, pct, energy = _classical_curve(config)
        write_csv(
            out,
            ["kick", "fraction_outside_pct", "kinetic_energy"],
            [[n, p, e] for n, p, e in zip(kicks, pct, energy)],
        )
        return {}
    if engine == "quantum":
        kicks, pct, energy = _quantum_curve(config)
        write_csv(
            out,
            ["kick", "fraction_outside_pct", "kinetic_energy"],
            [[n, p, e] for n, p, e in zip(kicks, pct, energy)],
        )
        return {}
    if engine == "compare":
        ck, cp, _ = _classical_curve(config)
        _, qp, _ = _quantum_curve(config)
        write_csv(
            out,
            ["kick", "classical_pct", "quantum_pct"],
            [[n, c, q] for n, c, q in zip(ck, cp, qp)],
        )
        return {}
    if engine == "flux":
        estimate = equilibrium_flux(
            config["k"],
            config["train_obj"],
            config["rho_c"],
            config["samples"],
            substeps_per_pulse=config["substeps"],
            kbar=config["kbar"],
            seed=config["seed"],
        )
        write_csv(
            out,
            ["k", "flux_area", "flux_in_kbar", "statistical_error_area", "samples"],
            [[estimate.k, estimate.flux_area, estimate.flux_in_kbar,
              estimate.statistical_error, estimate.sample_count]],
        )
        return {"statistical_error_area": estimate.statistical_error}
    if engine == "poincare":
        phi0, rho0 = seed_grid(config["n_phi"], config["n_rho"], config["rho_max"])
        section = poincare_section(
            phi0, rho0, config["k"], config["train_obj"], config["periods"], config["substeps"]
        )
        rows = []
        for orbit in range(section.phi.shape[0]):
            for period in range(section.phi.shape[1]):
                rows.append(
                    [orbit, period, section.phi[orbit, period], section.rho[orbit, period]]
                )
        write_csv(out, ["orbit", "period", "phi_rad", "rho"], rows)
        return {}
    raise ConfigError(f"unhandled engine {engine!r}")


# ---------------------------------------------------------------------------
# Figure presets
# ---------------------------------------------------------------------------

# Presets are plain config fragments; overrides from --set apply on top.
FIGURE_PRESETS: dict[str, dict[str, str]] = {
    "fig2": {"engine": "poincare", "k": "70", "periods": "1000", "seed": "1"},
    "fig3": {"engine": "quantum", "k": "310", "eta": "0.021", "num_kicks": "68", "seed": "1"},
    "fig4": {"engine": "quantum", "k": "310", "eta": "0.021", "num_kicks": "68", "seed": "1"},
    "fig5": {"engine": "compare", "k": "310", "eta": "0", "num_kicks": "70", "seed": "1",
             "ensemble_size": "20000"},
    "fig6": {"engine": "quantum", "k": "310", "eta": "0.021", "num_kicks": "70", "seed": "1"},
    "fig7": {"engine": "quantum", "k": "300", "eta": "0.02", "num_kicks": "68", "seed": "1"},
    "fig8": {"engine": "classical", "k": "300", "num_kicks": "68", "seed": "1",
             "ensemble_size": "20000"},
    "fig9": {"engine": "quantum", "k": "300", "eta": "0.02", "num_kicks": "70", "seed": "1"},
}

# Figures that sweep a parameter run the preset once per sweep entry.
_FIGURE_SWEEPS: dict[str, list[dict[str, str]]] = {
    "fig2": [{"k": "70"}, {"k": "300"}],
    "fig5": [{"k": "310"}, {"k": "240"}, {"k": "120"}],
    "fig6": [{"k": "310", "eta": "0.021"}, {"k": "240", "eta": "0.017"},
             {"k": "120", "eta": "0.008"}],
    "fig7": [{"train": "double"}, {"train": "single"}],
    "fig8": [{"train": "double"}, {"train": "single"}],
    "fig9": [{"train": "double"}, {"train": "single"}],
}

_LINESHAPE_FIGURES = {"fig3", "fig4", "fig7", "fig8"}


def run_figure(figure_id: str, overrides: dict[str, str], out: Path) -> dict:
    if figure_id not in FIGURE_PRESETS:
        raise ConfigError(
            f"unknown figure {figure_id!r}; expected one of {sorted(FIGURE_PRESETS)}"
        )
    preset = FIGURE_PRESETS[figure_id]
    sweeps = _FIGURE_SWEEPS.get(figure_id, [{}])
    # User overrides win over both the preset and the sweep entries.
    variants = [{**preset, **sweep, **overrides} for sweep in sweeps]

    if figure_id in _LINESHAPE_FIGURES:
        return _run_lineshape_figure(figure_id, variants, sweeps, out)

    if figure_id == "fig2":
        rows = []
        for variant in variants:
            config = validate_config(variant)
            phi0, rho0 = seed_grid(config["n_phi"], config["n_rho"], config["rho_max"])
            section = poincare_section(
                phi0, rho0, config["k"], config["train_obj"],
                config["periods"], config["substeps"],
            )
            for orbit in range(section.phi.shape[0]):
                for period in range(section.phi.shape[1]):
                    rows.append([config["k"], orbit, period,
                                 section.phi[orbit, period], section.rho[orbit, period]])
        write_csv(out, ["k", "orbit", "period", "phi_rad", "rho"], rows)
        return {}

    # Diffusion-curve figures: one fraction-outside column per sweep entry.
    columns: list[list[float]] = []
    labels: list[str] = []
    kicks: list[int] | None = None
    for variant, sweep in zip(variants, sweeps):
        config = validate_config(variant)
        if config["engine"] == "compare":
            ck, cp, _ = _classical_curve(config)
            _, qp, _ = _quantum_curve(config)
            kicks = ck
            columns.extend([cp, qp])
            labels.extend(
                [f"classical_pct_k{config['k']:g}", f"quantum_pct_k{config['k']:g}"]
            )
        else:
            ck, pct, _ = _quantum_curve(config)
            kicks = ck
            columns.append(pct)
            tag = sweep.get("train", f"k{config['k']:g}")
            labels.append(f"quantum_pct_{tag}")
    rows = [[n, *[col[i] for col in columns]] for i, n in enumerate(kicks)]
    write_csv(out, ["kick", *labels], rows)
    return {}


def _run_lineshape_figure(
    figure_id: str, variants: list[dict[str, str]], sweeps: list[dict[str, str]], out: Path
) -> dict:
    """Momentum-distribution figures: one probability column per variant."""
    from .observables import detector_blur

    columns = []
    labels = []
    grid = None
    for variant, sweep in zip(variants, sweeps):
        config = validate_config(variant)
        if config["engine"] == "classical":
            ensemble = init_thermal_ensemble(
                config["sigma_rho"], config["ensemble_size"], config["seed"]
            )
            series = evolve_ensemble(
                ensemble, config["k"], config["train_obj"],
                config["num_kicks"], config["substeps"],
            )
        else:
            series = _quantum_series(config)
        final = series[-1]
        if figure_id == "fig4":
            final = detector_blur(final, 0.8)
        grid = final.bin_centers
        columns.append(final.probabilities)
        labels.append("p_" + sweep.get("train", f"N{config['num_kicks']}"))
    rows = [[grid[i], *[col[i] for col in columns]] for i in range(grid.size)]
    write_csv(out, ["rho", *labels], rows)
    return {}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def convert_lab(raw: dict[str, str], out: Path) -> dict:
    config = _typed(raw, _LAB_KEYS)
    required = [k for k in _LAB_KEYS if k not in ("out", "eta", "num_kicks")]
    missing = [k for k in required if k not in config]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")
    lab = LabParameters(
        rabi_frequency=config["rabi_frequency"],
        detuning_45=config["detuning_45"],
        detuning_44=config["detuning_44"],
        detuning_43=config["detuning_43"],
        kick_period=config["kick_period"],
        pulse_width=config["pulse_width"],
        pulse_separation=config["pulse_separation"],
        recoil_frequency=config["recoil_frequency"],
    )
    try:
        params, train = _to_dimensionless(
            lab, eta=config.get("eta", 0.0), num_kicks=config.get("num_kicks", 1)
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_csv(
        out,
        ["k", "kbar", "eta", "pulse_width_scaled", "pulse_edges_scaled"],
        [[params.k, params.kbar, params.eta, train.pulse_width,
          ";".join(_fmt(e) for e in train.leading_edges)]],
    )
    return {"k": params.k, "kbar": params.kbar}


def _parse_set_overrides(pairs: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument("--out", type=str, help="output data file path")
    shared.add_argument("--threads", type=int, help="worker threads for mixtures")

    parser = argparse.ArgumentParser(
        prog="cantori", description="Double-pulse kicked-atom simulator",
        parents=[shared],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config file", parents=[shared])
    p_run.add_argument("config", type=str)

    p_fig = sub.add_parser("figure", help="run a figure preset", parents=[shared])
    p_fig.add_argument("figure_id", type=str)
    p_fig.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE")

    p_lab = sub.add_parser(
        "convert-lab", help="laboratory -> dimensionless parameters", parents=[shared]
    )
    p_lab.add_argument("config", type=str)

    p_flux = sub.add_parser("flux", help="flux across the 10 pi barrier", parents=[shared])
    p_flux.add_argument("--k", type=float, required=True)
    p_flux.add_argument("--samples", type=int, default=_DEFAULTS["samples"])
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        if args.command == "run":
            raw = parse_kv_text(Path(args.config).read_text())
            if args.seed is not None:
                raw["seed"] = str(args.seed)
            if args.threads is not None:
                raw["threads"] = str(args.threads)
            config = validate_config(raw)
            out = Path(args.out or config.get("out", f"{config['engine']}.csv"))
            extra = run_config(config, out)
            write_metadata(out.with_suffix(out.suffix + ".meta.json"), config, started, extra)
        elif args.command == "figure":
            overrides = _parse_set_overrides(args.overrides)
            if args.seed is not None:
                overrides["seed"] = str(args.seed)
            if args.threads is not None:
                overrides["threads"] = str(args.threads)
            out = Path(args.out or f"{args.figure_id}.csv")
            extra = run_figure(args.figure_id, overrides, out)
            record = {**FIGURE_PRESETS.get(args.figure_id, {}), **overrides}
            write_metadata(out.with_suffix(out.suffix + ".meta.json"), record, started, extra)
        elif args.command == "convert-lab":
            raw = parse_kv_text(Path(args.config).read_text())
            out = Path(args.out or raw.get("out", "lab.csv"))
            extra = convert_lab(raw, out)
            write_metadata(out.with_suffix(out.suffix + ".meta.json"), raw, started, extra)
        elif args.command == "flux":
            raw = {"engine": "flux", "k": str(args.k), "samples": str(args.samples),
                   "seed": str(args.seed if args.seed is not None else 0)}
            config = validate_config(raw)
            out = Path(args.out or "flux.csv")
            extra = run_config(config, out)
            write_metadata(out.with_suffix(out.suffix + ".meta.json"), config, started, extra)
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TruncationError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
