"""Command-line front end: YAML configs in, CSV/JSON files and a manifest out.

Usage::

    ferroneedle <experiment> [--config FILE] [--seed N] [--out DIR] [--quiet]

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

import argparse
import copy
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__, noise, protocols
from .dynamics import NumericalError, default_dtau, integrate
from .model import (MATERIALS, PhysicalParams, aligned_state, build_system, rng,
                    sample_initial_state)
from .observables import trajectory_observables

log = logging.getLogger("ferroneedle")

EXPERIMENTS = ("precess", "regimes", "noise", "berry", "nutate", "sweep")

TRAJECTORY_COLUMNS = ("tau", "Mx", "My", "Mz", "Sz", "Lz", "Jz", "needle_azimuth",
                      "needle_polar", "energy_total", "energy_err")
SCHEMAS = {
    "trajectory/v1": TRAJECTORY_COLUMNS,
    "delta_phi/v1": ("tau", "delta_phi"),
    "psd/v1": ("freq", "psd"),
    "regimes/v1": ("field_magnitude", "regime", "mz_mean", "mz_excursion", "bloch_norm_error"),
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and line."""


# -- configuration ----------------------------------------------------------------

_SI_OVERRIDES = ("gamma", "exchange_j", "pseudo_dipolar_c", "lattice_v", "atom_mass",
                 "lattice_const_r0", "spin_s0")

# key -> (type, default); "req" marks a required key
_PHYSICAL = {"material": (str, "cobalt"), "n_atoms": (int, 50), "b_field": ("vec3", None),
             "eps_j": (float, 1.0e4), "eps_c": (float, 1.2e5),
             **{k: (float, None) for k in _SI_OVERRIDES}}
_SIM = {"dt_override": (float, None), "t_end": (float, None), "record_every": (int, None),
        "omega_ph": (float, 100.0), "lattice_temp": (float, 0.0),
        "sample_interval": (float, 0.05)}
_PROTOCOL = {
    "precess": {},
    "regimes": {"fields": ("floats", [1e-9, 50e-6, 5e-3])},
    "noise": {"n_spins": (int, 50), "n_seeds": (int, 100), "noise_strength": (float, 0.1),
              "t_end": (float, 100.0), "dt": (float, 0.05), "isotropic": (bool, False),
              "needle": (bool, True), "needle_t_end": (float, 400.0)},
    "berry": {"cos_theta": ("floats", [0.75]), "omega_rot": (float, 0.01),
              "readout_periods": (float, 2.0)},
    "nutate": {"depth": (float, 0.5), "drive_freq": (float, 0.2),
               "n_drive_periods": (int, 6)},
    "sweep": {"base": (str, "precess"), "n_members": (int, 8), "workers": (int, 0),
              "member": ("dict", {})},
}
_DEFAULT_FIELD = {"nutate": [0.0, 0.0, 50e-6]}
_TOP = {"experiment": (str, "req"), "seed": (int, 0), "output_dir": (str, "out"),
        "physical": ("dict", {}), "sim": ("dict", {}), "protocol": ("dict", {})}


@dataclass
class ExperimentConfig:
    experiment: str
    physical: dict
    sim: dict
    protocol: dict
    seed: int = 0
    output_dir: str = "out"

    def params(self) -> PhysicalParams:
        p = self.physical
        preset = MATERIALS[p["material"]]
        params = preset(b_field=tuple(p["b_field"]), n_atoms=p["n_atoms"], eps_j=p["eps_j"],
                        eps_c=p["eps_c"], omega_ph=self.sim["omega_ph"])
        over = {k: p[k] for k in _SI_OVERRIDES if p.get(k) is not None}
        return replace(params, **over) if over else params

    def settings(self) -> protocols.SimSettings:
        s = self.sim
        return protocols.SimSettings(dtau=s["dt_override"], t_end=s["t_end"],
                                     sample_interval=s["sample_interval"],
                                     lattice_temp=s["lattice_temp"], seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    return out


def _coerce(kind, value, where):
    def bad():
        return ConfigError(f"{where}: expected {kind if isinstance(kind, str) else kind.__name__}, "
                           f"got {value!r}")

    def num(v):
        if isinstance(v, bool):
            raise bad()
        if isinstance(v, (int, float)):
            return float(v)
        if isinstance(v, str):  # YAML 1.1 reads "1e-9" as a string
            try:
                return float(v)
            except ValueError:
                raise bad() from None
        raise bad()

    if value is None:
        return None
    if kind is float:
        return num(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad()
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise bad()
        return value
    if kind is str:
        if not isinstance(value, str):
            raise bad()
        return value
    if kind == "dict":
        if not isinstance(value, dict):
            raise bad()
        return value
    if kind == "floats":
        if not isinstance(value, list) or not value:
            raise bad()
        return [num(v) for v in value]
    if kind == "vec3":
        if not isinstance(value, list) or len(value) != 3:
            raise bad()
        return [num(v) for v in value]
    raise AssertionError(kind)


def _resolve_block(raw, schema, path, lines):
    raw = {} if raw is None else raw
    out = {}
    for key in raw:
        if key not in schema:
            where = ".".join(path + (str(key),))
            line = lines.get(path + (key,))
            at = f" (line {line})" if line else ""
            raise ConfigError(f"unknown key '{where}'{at}; allowed: {', '.join(sorted(schema))}")
    for key, (kind, default) in schema.items():
        line = lines.get(path + (key,))
        where = ".".join(path + (key,)) + (f" (line {line})" if line else "")
        if key in raw:
            out[key] = _coerce(kind, raw[key], where)
        elif default == "req":
            raise ConfigError(f"missing required key '{'.'.join(path + (key,))}'")
        else:
            out[key] = copy.deepcopy(default)
    return out


def resolve_config(raw: dict, lines=None) -> ExperimentConfig:
    """Validate a plain mapping and fill in defaults."""
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    top = _resolve_block(raw, _TOP, (), lines)
    exp = top["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: '{exp}' is not one of {', '.join(EXPERIMENTS)}"
                          + (f" (line {lines[('experiment',)]})" if ("experiment",) in lines else ""))
    if not 0 <= top["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    phys = _resolve_block(top["physical"], _PHYSICAL, ("physical",), lines)
    if phys["material"] not in MATERIALS:
        raise ConfigError(f"physical.material: unknown preset '{phys['material']}'; "
                          f"known: {', '.join(sorted(MATERIALS))}")
    if phys["b_field"] is None:
        phys["b_field"] = list(_DEFAULT_FIELD.get(exp, [0.0, 0.0, 1e-9]))
    sim = _resolve_block(top["sim"], _SIM, ("sim",), lines)
    proto = _resolve_block(top["protocol"], _PROTOCOL[exp], ("protocol",), lines)
    if exp == "sweep":
        base = proto["base"]
        if base not in EXPERIMENTS or base == "sweep":
            raise ConfigError(f"protocol.base: '{base}' is not a sweepable experiment")
        proto["member"] = _resolve_block(proto["member"], _PROTOCOL[base],
                                         ("protocol", "member"), lines)
    cfg = ExperimentConfig(experiment=exp, physical=phys, sim=sim, protocol=proto,
                           seed=top["seed"], output_dir=top["output_dir"])
    try:
        cfg.params()
    except ValueError as exc:
        raise ConfigError(f"physical: {exc}") from exc
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse YAML text into a resolved :class:`ExperimentConfig`."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return resolve_config({} if raw is None else raw, _line_map(node))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


# -- output -----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, columns, rows) -> None:
    """Comma-separated, header first, floats in round-trip ``repr`` form."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    return obj


def write_json(path, payload) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_trajectory(trajectory, path) -> Path:
    """Write the per-sample observables of ``trajectory`` as CSV."""
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    obs = trajectory_observables(trajectory)
    cols = np.column_stack([obs[c] for c in TRAJECTORY_COLUMNS])
    write_csv(path, TRAJECTORY_COLUMNS, cols)
    return Path(path)


def read_csv(path):
    """Header and float columns of a file written by :func:`write_csv`."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


@dataclass
class RunManifest:
    config_echo: dict
    code_version: str
    wall_time: float
    files: list = field(default_factory=list)
    status: str = "ok"
    error: dict = None


class _Outputs:
    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.files = []

    def add(self, name, role, schema):
        self.files.append({"name": name, "role": role, "schema": schema})
        return self.dir / name

    def csv(self, name, role, schema, rows):
        write_csv(self.add(name, role, schema), SCHEMAS[schema], rows)

    def json(self, name, role, payload):
        write_json(self.add(name, role, f"{Path(name).stem}/v1"), payload)


# -- experiments ------------------------------------------------------------------

def _report(obj, skip=()):
    return {f.name: getattr(obj, f.name) for f in fields(obj) if f.name not in skip}


def _run_precess(cfg, out):
    system = build_system(cfg.params())
    settings = cfg.settings()
    summary = protocols.precession_experiment(system, _with_record(cfg, settings, system))
    emit_trajectory(summary.trajectory, out.add("trajectory.csv", "trajectory", "trajectory/v1"))
    out.csv("delta_phi.csv", "angle spread", "delta_phi/v1",
            np.column_stack([summary.times, summary.delta_phi]))
    report = _report(summary, skip=("times", "delta_phi", "trajectory"))
    out.json("precession.json", "report", report)
    return report


def _with_record(cfg, settings, system):
    # an explicit record_every pins the sample interval to whole steps
    if cfg.sim["record_every"] is None:
        return settings
    dtau = settings.dtau if settings.dtau is not None else default_dtau(system)
    return replace(settings, sample_interval=cfg.sim["record_every"] * dtau)


def _run_regimes(cfg, out):
    base = build_system(cfg.params())
    settings = _with_record(cfg, cfg.settings(), base)
    reports = protocols.regime_scan(cfg.protocol["fields"], base, settings)
    rows = [[r.field_magnitude, r.regime, r.mz_mean, r.mz_excursion, r.bloch_norm_error]
            for r in reports]
    out.csv("regimes.csv", "regime table", "regimes/v1", rows)
    report = {"reports": [_report(r) for r in reports]}
    out.json("regimes.json", "report", report)
    return report


def _run_noise(cfg, out):
    p = cfg.protocol
    ind = noise.independent_ensemble(p["n_spins"], p["noise_strength"], p["t_end"], p["dt"],
                                     p["n_seeds"], cfg.seed, isotropic=p["isotropic"])
    out.csv("independent_delta_phi.csv", "angle spread", "delta_phi/v1",
            np.column_stack([ind.times, ind.delta_phi]))
    out.csv("independent_psd.csv", "spectrum", "psd/v1",
            np.column_stack([ind.spectrum.freqs, ind.spectrum.psd]))
    report = {"independent": _noise_report(ind)}
    if p["needle"]:
        system = build_system(cfg.params())
        settings = _with_record(cfg, cfg.settings(), system)
        dtau = settings.dtau if settings.dtau is not None else default_dtau(system)
        state = (sample_initial_state(system, settings.lattice_temp, cfg.seed)
                 if settings.lattice_temp > 0 else aligned_state(system))
        traj = integrate(state, system, p["needle_t_end"],
                         record_every=settings.record_every(dtau), dtau=dtau)
        ndl = noise.needle_noise(traj)
        out.csv("needle_delta_phi.csv", "angle spread", "delta_phi/v1",
                np.column_stack([ndl.times, ndl.delta_phi]))
        out.csv("needle_psd.csv", "spectrum", "psd/v1",
                np.column_stack([ndl.spectrum.freqs, ndl.spectrum.psd]))
        report["needle"] = _noise_report(ndl)
    out.json("noise.json", "report", report)
    return report


def _noise_report(s):
    return {"delta_phi_slope": s.delta_phi_slope.slope,
            "delta_phi_slope_stderr": s.delta_phi_slope.stderr,
            "psd_slope": s.psd_slope.slope, "psd_slope_stderr": s.psd_slope.stderr,
            "band": list(s.band), "n_segments": s.spectrum.n_segments,
            "window": s.spectrum.window}


def _run_berry(cfg, out):
    system = build_system(cfg.params())
    settings = _with_record(cfg, cfg.settings(), system)
    p = cfg.protocol
    results = [protocols.berry_protocol(float(np.arccos(c)), p["omega_rot"], system, settings,
                                        readout_periods=p["readout_periods"])
               for c in p["cos_theta"]]
    report = {"results": [_report(r) for r in results]}
    out.json("berry.json", "report", report)
    return report


def _run_nutate(cfg, out):
    system = build_system(cfg.params())
    settings = _with_record(cfg, cfg.settings(), system)
    p = cfg.protocol
    reading = protocols.nutation_sensing(p["depth"], p["drive_freq"], system, settings,
                                         n_drive_periods=p["n_drive_periods"])
    report = _report(reading)
    out.json("nutation.json", "report", report)
    return report


def member_seed(seed: int, index: int) -> int:
    """Seed of sweep member ``index``, drawn from stream ``index`` of ``seed``."""
    return int(rng(seed, index).integers(0, 2**63))


def _member_config(cfg, index):
    base = cfg.protocol["base"]
    return ExperimentConfig(experiment=base, physical=copy.deepcopy(cfg.physical),
                            sim=copy.deepcopy(cfg.sim), protocol=copy.deepcopy(cfg.protocol["member"]),
                            seed=member_seed(cfg.seed, index),
                            output_dir=str(Path(cfg.output_dir) / f"member_{index:03d}"))


def _sweep_member(args):
    cfg_dict, index = args
    cfg = ExperimentConfig(**cfg_dict)
    manifest = run(_member_config(cfg, index))
    return index, manifest.status, manifest.error


def _run_sweep(cfg, out):
    n = cfg.protocol["n_members"]
    if n < 1:
        raise ConfigError("protocol.n_members must be >= 1")
    workers = cfg.protocol["workers"] or (os.cpu_count() or 1)
    jobs = [(cfg.to_dict(), k) for k in range(n)]
    if workers == 1 or n == 1:
        done = [_sweep_member(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            done = list(pool.map(_sweep_member, jobs))
    members = []
    for index, status, error in sorted(done, key=lambda r: r[0]):
        sub = _member_config(cfg, index)
        entry = {"index": index, "seed": sub.seed, "status": status,
                 "manifest": f"member_{index:03d}/manifest.json"}
        if status == "ok":
            report_name = _REPORT_FILE[sub.experiment]
            with open(Path(sub.output_dir) / report_name, encoding="utf-8") as fh:
                entry["report"] = json.load(fh)
        else:
            entry["error"] = error
        members.append(entry)
        out.files.append({"name": entry["manifest"], "role": "member manifest",
                          "schema": "manifest/v1"})
    summary = {"base": cfg.protocol["base"], "n_members": n, "members": members,
               "aggregate": _aggregate([m.get("report") for m in members])}
    out.json("summary.json", "aggregate", summary)
    if any(m["status"] != "ok" for m in members):
        raise NumericalError("some sweep members failed; see summary.json")
    return summary


def _aggregate(reports):
    """Mean and population std of every top-level numeric report entry."""
    keys = sorted({k for r in reports if r for k, v in r.items()
                   if isinstance(v, (int, float)) and not isinstance(v, bool)})
    agg = {}
    for k in keys:
        vals = np.array([r[k] for r in reports if r and r.get(k) is not None], dtype=float)
        if len(vals):
            agg[k] = {"mean": float(vals.mean()), "std": float(vals.std()), "n": len(vals)}
    return agg


_RUNNERS = {"precess": _run_precess, "regimes": _run_regimes, "noise": _run_noise,
            "berry": _run_berry, "nutate": _run_nutate, "sweep": _run_sweep}
_REPORT_FILE = {"precess": "precession.json", "regimes": "regimes.json", "noise": "noise.json",
                "berry": "berry.json", "nutate": "nutation.json", "sweep": "summary.json"}


def run(cfg: ExperimentConfig) -> RunManifest:
    """Run one experiment and write its outputs plus ``manifest.json``.

    Failures are recorded in the manifest (``status`` and ``error``) rather
    than raised; the manifest is written in every case that the output
    directory can be created.
    """
    t0 = time.perf_counter()
    out = _Outputs(cfg.output_dir)
    manifest = RunManifest(config_echo=cfg.to_dict(), code_version=__version__, wall_time=0.0)
    try:
        out.dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        manifest.status = "failed"
        manifest.error = {"kind": "io", "exit_code": EXIT_IO, "message": str(exc)}
        return manifest
    try:
        write_json(out.add("config.json", "resolved config", "config/v1"), cfg.to_dict())
        _RUNNERS[cfg.experiment](cfg, out)
    except ConfigError as exc:
        manifest.status, manifest.error = "failed", _error("config", EXIT_CONFIG, exc)
    except (NumericalError, FloatingPointError, ValueError) as exc:
        manifest.status, manifest.error = "failed", _error("numerical", EXIT_NUMERICAL, exc)
    except OSError as exc:
        manifest.status, manifest.error = "failed", _error("io", EXIT_IO, exc)
    manifest.files = out.files
    manifest.wall_time = time.perf_counter() - t0
    if manifest.status != "ok":
        manifest.error["partial_outputs"] = [f["name"] for f in out.files]
    try:
        write_json(out.dir / "manifest.json", asdict(manifest))
    except OSError as exc:
        if manifest.status == "ok":
            manifest.status, manifest.error = "failed", _error("io", EXIT_IO, exc)
    return manifest


def _error(kind, code, exc):
    return {"kind": kind, "exit_code": code, "type": type(exc).__name__, "message": str(exc)}


# -- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ferroneedle",
                                 description="Spin-lattice needle experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", type=Path, help="YAML config file")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", type=Path, help="override the output directory")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
    except OSError as exc:
        print(json.dumps({"kind": "io", "exit_code": EXIT_IO, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_IO
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader) if text else None
        raw = (yaml.safe_load(text) if text else None) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping at the top level")
        raw.setdefault("experiment", args.experiment)
        if raw["experiment"] != args.experiment:
            raise ConfigError(f"config is for '{raw['experiment']}' but the subcommand "
                              f"is '{args.experiment}'")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output_dir"] = str(args.out)
        cfg = resolve_config(raw, _line_map(node) if node is not None else {})
    except yaml.YAMLError as exc:
        print(json.dumps({"kind": "config", "exit_code": EXIT_CONFIG,
                          "message": f"malformed config: {exc}"}), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(json.dumps({"kind": "config", "exit_code": EXIT_CONFIG, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG

    log.info("running %s into %s", cfg.experiment, cfg.output_dir)
    manifest = run(cfg)
    if manifest.status != "ok":
        print(json.dumps(manifest.error), file=sys.stderr)
        return manifest.error["exit_code"]
    log.info("done in %.1f s; %d files", manifest.wall_time, len(manifest.files))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
