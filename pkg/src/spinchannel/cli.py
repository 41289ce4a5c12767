"""Batch front end: config parsing, solver dispatch, CSV + metadata output.

Configs are INI-style text with [model], [solver], and [experiment]
sections.  All physical inputs use bench units (nm, MHz, kHz, us); the
conversion to the internal angular-frequency units happens in one place,
when the parsed config is turned into a channel spec.  Every field has a
default, unknown keys are rejected with the offending line, and emit/parse
round-trip exactly.  Outputs are a CSV (layout depends on the experiment),
plus a .meta JSON sidecar echoing the resolved configuration; both are
byte-identical across reruns of the same config and seed.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import (CapabilityError, ConfigError, ConvergenceError,
                     NumericalError)
from .model import uniform_spec
from .experiments import (SolverSettings, default_window, disorder_average,
                          mask_spin_order, mask_to_bits, mask_to_missing,
                          missing_spin_average, reflect_mask, run_dynamics,
                          sweep_length)
from .observables import max_entanglement

MHZ_TO_RAD_PER_US = 2.0 * math.pi      # couplings, splitting: MHz -> rad/us
KHZ_TO_PER_US = 1e-3                   # plain decay rates: kHz -> 1/us

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CAPABILITY = 3
EXIT_CONVERGENCE = 4
EXIT_NUMERICAL = 5

GEOMETRIES = ("chain", "ladder")
SOLVERS = ("auto", "dense", "tebd")
EXPERIMENTS = ("dynamics", "length_sweep", "missing", "disorder")


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved run request, in bench units."""

    # [model]
    geometry: str = "chain"
    n: int = 1
    separation_nm: float = 40.0
    spacing_nm: float | None = None
    gamma_nv_khz: float = 0.1
    gamma_c_khz: float = 2.0
    epsilon_mhz: float = 0.0
    missing_mask: str = ""
    # [solver]
    solver: str = "auto"
    dt_us: float | None = None
    t_max_us: float | None = None
    sample_every: int | None = None
    chi_max: int = 64
    cutoff: float = 1e-12
    chi_schedule: tuple = ()
    trotter_order: int = 2
    workers: int = 1
    # [experiment]
    experiment: str = "dynamics"
    n_list: tuple = (1, 2, 3, 4)
    gamma_c_list_khz: tuple = (2.0,)
    p_grid: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    sigma_mhz: tuple = (0.3,)
    realizations: int = 50
    seed: int = 2024
    output: str = "results.csv"


_SCHEMA = {
    "model": {
        "geometry": str, "n": int, "separation_nm": float,
        "spacing_nm": (float, None), "gamma_nv_khz": float,
        "gamma_c_khz": float, "epsilon_mhz": float, "missing_mask": str,
    },
    "solver": {
        "solver": str, "dt_us": (float, None), "t_max_us": (float, None),
        "sample_every": (int, None), "chi_max": int, "cutoff": float,
        "chi_schedule": "int_list", "trotter_order": int, "workers": int,
    },
    "experiment": {
        "experiment": str, "n_list": "int_list",
        "gamma_c_list_khz": "float_list", "p_grid": "float_list",
        "sigma_mhz": "float_list", "realizations": int, "seed": int,
        "output": str,
    },
}


def _key_lines(text):
    """Map (section, key) -> 1-based line number for error messages."""
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
        elif "=" in line and section is not None:
            key = line.split("=", 1)[0].strip().lower()
            lines[(section, key)] = lineno
    return lines


def _convert(section, key, raw, kind, lineno):
    raw = raw.strip()
    optional = isinstance(kind, tuple)
    if optional:
        if raw == "":
            return None
        kind = kind[0]
    if kind == "int_list":
        if raw == "":
            return ()
        try:
            return tuple(int(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(
                f"line {lineno}: key '{key}' expects comma-separated "
                f"integers, got {raw!r}")
    if kind == "float_list":
        if raw == "":
            return ()
        try:
            return tuple(float(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(
                f"line {lineno}: key '{key}' expects comma-separated "
                f"numbers, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: key '{key}' expects {kind.__name__}, "
            f"got {raw!r}")


def parse_config(text):
    """Parse INI text into a validated RunConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}")
    lines = _key_lines(text)

    values = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            k = key.lower()
            lineno = lines.get((sec, k), "?")
            if k not in _SCHEMA[sec]:
                raise ConfigError(
                    f"line {lineno}: unknown key '{k}' in section [{sec}]")
            values[k] = _convert(sec, k, raw, _SCHEMA[sec][k], lineno)
    return validate_config(RunConfig(**values))


def validate_config(config):
    """Constraint checks shared by file parsing and flag overrides."""
    c = config
    if c.geometry not in GEOMETRIES:
        raise ConfigError(f"geometry must be one of {GEOMETRIES}, "
                          f"got {c.geometry!r}")
    if c.n < 1:
        raise ConfigError(f"n must be >= 1, got {c.n}")
    if c.solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {c.solver!r}")
    if c.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, "
                          f"got {c.experiment!r}")
    for name in ("separation_nm", "chi_max", "cutoff", "realizations",
                 "workers"):
        if getattr(c, name) <= 0:
            raise ConfigError(f"{name} must be positive, got {getattr(c, name)}")
    if c.trotter_order not in (1, 2):
        raise ConfigError(f"trotter_order must be 1 or 2, got {c.trotter_order}")
    if c.gamma_nv_khz < 0 or c.gamma_c_khz < 0:
        raise ConfigError("decay rates must be non-negative")
    if c.spacing_nm is not None and c.spacing_nm <= 0:
        raise ConfigError(f"spacing_nm must be positive, got {c.spacing_nm}")
    if c.dt_us is not None and c.dt_us <= 0:
        raise ConfigError(f"dt_us must be positive, got {c.dt_us}")
    if c.t_max_us is not None and c.t_max_us < 0:
        raise ConfigError(f"t_max_us must be non-negative, got {c.t_max_us}")
    if any(p < 0 or p > 1 for p in c.p_grid):
        raise ConfigError("p_grid values must lie in [0, 1]")
    if any(s < 0 for s in c.sigma_mhz):
        raise ConfigError("sigma_mhz values must be non-negative")
    if any(n < 1 for n in c.n_list):
        raise ConfigError("n_list values must be >= 1")
    if c.missing_mask and any(ch not in "01" for ch in c.missing_mask):
        raise ConfigError(f"missing_mask must be a 0/1 string, "
                          f"got {c.missing_mask!r}")
    return c


def emit_config(config):
    """Write a RunConfig back to parseable INI text (exact round trip)."""
    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, tuple):
            return ",".join(repr(v) if isinstance(v, float) else str(v)
                            for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    out = []
    for section, keys in _SCHEMA.items():
        out.append(f"[{section}]")
        for key in keys:
            out.append(f"{key} = {fmt(getattr(config, key))}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# conversion to internal units (the single boundary crossing)


def build_spec(config):
    """ChannelSpec in internal units (rad/us couplings, 1/us rates)."""
    order = mask_spin_order_for(config)
    missing = frozenset()
    if config.missing_mask:
        if len(config.missing_mask) != len(order):
            raise ConfigError(
                f"missing_mask length {len(config.missing_mask)} does not "
                f"match the {len(order)} channel spins of this geometry")
        mask = int(config.missing_mask[::-1], 2)
        missing = mask_to_missing(mask, order)
    kwargs = dict(
        nv_noise_rate=config.gamma_nv_khz * KHZ_TO_PER_US,
        channel_noise_rate=config.gamma_c_khz * KHZ_TO_PER_US,
        splitting=config.epsilon_mhz * MHZ_TO_RAD_PER_US,
        missing=missing,
    )
    if config.spacing_nm is not None:
        return uniform_spec(config.geometry, config.n, nv_separation_nm=None,
                            spacing_nm=config.spacing_nm, **kwargs)
    return uniform_spec(config.geometry, config.n,
                        nv_separation_nm=config.separation_nm, **kwargs)


def mask_spin_order_for(config):
    from .model import Geometry
    return mask_spin_order(Geometry(config.geometry, config.n))


def solver_settings(config):
    return SolverSettings(
        solver=config.solver,
        dt=config.dt_us,
        sample_every=config.sample_every,
        chi_max=config.chi_max,
        cutoff=config.cutoff,
        chi_schedule=config.chi_schedule or None,
        order=config.trotter_order,
        workers=config.workers,
    )


# ---------------------------------------------------------------------------
# output writing


def _fmt(x):
    """Shortest representation that parses back to the same float."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_rows(handle, header, rows):
    handle.write(header + "\n")
    for row in rows:
        handle.write(",".join(_fmt(v) for v in row) + "\n")


def _run_dynamics(config, spec, settings):
    t_max = config.t_max_us
    if t_max is None:
        t_max = default_window(spec)
    traj = run_dynamics(spec, t_max, settings)
    rows = zip(traj.times, traj.entanglement, traj.trace, traj.aux)
    return [("trajectory", "time_us,E,trace,purity_or_discarded_weight",
             [tuple(float(v) for v in r) for r in rows])], traj.metadata


def _run_sweep(config, settings):
    gammas = [g * KHZ_TO_PER_US for g in config.gamma_c_list_khz]
    rows, _ = sweep_length(config.geometry, config.n_list,
                           separation_nm=config.separation_nm,
                           gamma_c_list=gammas, settings=settings,
                           nv_noise_rate=config.gamma_nv_khz * KHZ_TO_PER_US,
                           t_max=config.t_max_us)
    out = [(p.geometry, p.n, p.gamma_c / KHZ_TO_PER_US, p.e_max, p.t_at_max)
           for p in rows]
    return [("sweep", "geometry,n,gamma_c_khz,e_max,t_at_max_us", out)], {}


def _run_missing(config, spec, settings):
    ens = missing_spin_average(spec, config.p_grid, settings=settings,
                               t_max=config.t_max_us)
    by_class = {r.mask: r for r in ens.results}
    geometry = spec.geometry
    width = ens.n_sites
    config_rows = []
    for mask in range(2 ** width):
        canon = min(mask, reflect_mask(mask, geometry))
        r = by_class[canon]
        config_rows.append((mask_to_bits(mask, width),
                            bin(mask).count("1"), r.e_max))
    p_rows = list(zip(ens.p_grid, ens.averages))
    return [("missing_configs", "mask,m_c,e_max", config_rows),
            ("missing_avg", "p,avg_e_max", p_rows)], {
                "n_configurations": 2 ** width,
                "n_simulated": sum(1 for r in ens.results if r.simulated)}


def _run_disorder(config, spec, settings):
    rows = []
    for sigma_mhz in config.sigma_mhz:
        ens = disorder_average(spec, sigma_mhz * MHZ_TO_RAD_PER_US,
                               config.realizations, config.seed,
                               settings=settings, t_max=config.t_max_us)
        rows.append((sigma_mhz, ens.k, ens.mean, ens.std_err))
    return [("disorder", "sigma_mhz,k,mean_e_max,std_err", rows)], {}


def run(config):
    """Execute one config; returns the exit code, writing artifacts."""
    out_path = Path(config.output)
    meta_path = out_path.with_suffix(".meta")
    written = []
    try:
        spec = build_spec(config)
        settings = solver_settings(config)
        if config.experiment == "dynamics":
            blocks, extra = _run_dynamics(config, spec, settings)
        elif config.experiment == "length_sweep":
            blocks, extra = _run_sweep(config, settings)
        elif config.experiment == "missing":
            blocks, extra = _run_missing(config, spec, settings)
        else:
            blocks, extra = _run_disorder(config, spec, settings)

        with open(out_path, "w") as fh:
            written.append(out_path)
            for i, (_name, header, rows) in enumerate(blocks):
                if i:
                    fh.write("\n")
                _write_rows(fh, header, rows)

        meta = {
            "config": {f.name: _json_safe(getattr(config, f.name))
                       for f in fields(config)},
            "experiment": config.experiment,
            "seed": config.seed,
            "run_info": _json_safe(extra),
            "versions": {
                "spinchannel": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": sys.version.split()[0],
            },
        }
        with open(meta_path, "w") as fh:
            written.append(meta_path)
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return EXIT_OK
    except (ConfigError, ValueError) as exc:
        _cleanup(written)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CapabilityError as exc:
        _cleanup(written)
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except ConvergenceError as exc:
        _cleanup(written)
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except NumericalError as exc:
        _cleanup(written)
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _json_safe(value):
    if isinstance(value, (tuple, list)):
        return [_json_safe(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, frozenset):
        return sorted(_json_safe(v) for v in value)
    return value


def _cleanup(written):
    for path in written:
        try:
            path.unlink()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# argument parsing


def build_arg_parser():
    p = argparse.ArgumentParser(
        prog="spinchannel",
        description="Simulate entanglement distribution through dark-spin "
                    "channels between NV centers.")
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--geometry", choices=GEOMETRIES)
    p.add_argument("--n", type=int, help="channel length (spins per rail)")
    p.add_argument("--separation-nm", type=float,
                   help="NV-to-NV distance; spin spacing is separation/(n+1)")
    p.add_argument("--spacing-nm", type=float,
                   help="fix the spin spacing instead of the NV separation")
    p.add_argument("--gamma-nv-khz", type=float, help="NV decay rate")
    p.add_argument("--gamma-c-khz", type=float, help="channel decay rate")
    p.add_argument("--epsilon-mhz", type=float, help="NV Zeeman splitting")
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--dt-us", type=float, help="integrator step")
    p.add_argument("--t-max-us", type=float, help="measurement window")
    p.add_argument("--chi-max", type=int, help="tensor bond-dimension cap")
    p.add_argument("--cutoff", type=float, help="relative truncation cutoff")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--p-grid", type=str,
                   help="comma-separated missing probabilities")
    p.add_argument("--sigma-mhz", type=float, help="coupling disorder SD")
    p.add_argument("--realizations", type=int, help="disorder sample count")
    p.add_argument("--seed", type=int, help="root RNG seed")
    p.add_argument("--missing-mask", type=str,
                   help="0/1 string over channel spins (site-major, B rail "
                        "before T), 1 = missing")
    p.add_argument("--workers", type=int, help="parallel work items")
    p.add_argument("--output", type=str, help="output CSV path")
    return p


_FLAG_TO_FIELD = {
    "geometry": "geometry", "n": "n", "separation_nm": "separation_nm",
    "spacing_nm": "spacing_nm", "gamma_nv_khz": "gamma_nv_khz",
    "gamma_c_khz": "gamma_c_khz", "epsilon_mhz": "epsilon_mhz",
    "solver": "solver", "dt_us": "dt_us", "t_max_us": "t_max_us",
    "chi_max": "chi_max", "cutoff": "cutoff", "experiment": "experiment",
    "realizations": "realizations", "seed": "seed",
    "missing_mask": "missing_mask", "workers": "workers", "output": "output",
}


def config_from_args(args):
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        config = parse_config(text)
    else:
        config = RunConfig()

    overrides = {}
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[field_name] = value
    if args.p_grid is not None:
        try:
            overrides["p_grid"] = tuple(float(x) for x in args.p_grid.split(","))
        except ValueError:
            raise ConfigError(f"--p-grid expects comma-separated numbers, "
                              f"got {args.p_grid!r}")
    if args.sigma_mhz is not None:
        overrides["sigma_mhz"] = (args.sigma_mhz,)
    if args.n is not None and "n_list" not in overrides:
        overrides["n_list"] = (args.n,)
    if overrides:
        config = replace(config, **overrides)
    return validate_config(config)


def main(argv=None):
    args = build_arg_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
