import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_state, toy_system
from ferroneedle.cli import (EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, SCHEMAS,
                             TRAJECTORY_COLUMNS, ConfigError, dump_config, emit_trajectory,
                             main, member_seed, parse_config, read_csv, resolve_config, run)
from ferroneedle.dynamics import integrate

SMALL = """
experiment: precess
seed: 3
physical: {material: cobalt, n_atoms: 10}
sim: {t_end: 1.0, dt_override: 5.0e-5, record_every: 200}
"""


def test_minimal_config_defaults():
    cfg = parse_config("experiment: precess\nphysical:\n  material: cobalt\nseed: 1\n")
    assert cfg.physical["n_atoms"] == 50
    assert cfg.physical["b_field"] == [0.0, 0.0, 1e-9]
    assert cfg.physical["eps_j"] == 1e4 and cfg.physical["eps_c"] == 1.2e5
    assert cfg.sim["omega_ph"] == 100.0
    assert cfg.seed == 1
    p = cfg.params()
    assert p.n_atoms == 50 and p.b_field == (0.0, 0.0, 1e-9)


def test_unknown_key_named_with_line():
    text = "experiment: precess\nphysical:\n  material: cobalt\n  n_atmos: 40\n"
    with pytest.raises(ConfigError, match=r"n_atmos.*line 4"):
        parse_config(text)


@pytest.mark.parametrize("text, match", [
    ("experiment: precess\nseed: abc\n", "seed"),
    ("experiment: levitate\n", "levitate"),
    ("seed: 3\n", "experiment"),
    ("experiment: precess\nphysical: {material: unobtainium}\n", "unobtainium"),
    ("experiment: precess\nphysical: {n_atoms: 1}\n", "n_atoms"),
    ("experiment: [unclosed\n", "malformed"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


@pytest.mark.parametrize("exp", ["precess", "regimes", "noise", "berry", "nutate", "sweep"])
def test_config_round_trip(exp):
    cfg = parse_config(f"experiment: {exp}\nseed: 9\nsim: {{t_end: 2.5}}\n")
    again = parse_config(dump_config(cfg))
    assert again == cfg


def test_nutate_defaults_to_visible_field():
    assert parse_config("experiment: nutate\n").physical["b_field"] == [0.0, 0.0, 50e-6]


def test_resolve_requires_mapping():
    with pytest.raises(ConfigError):
        resolve_config([1, 2])


def test_emit_single_sample(tmp_path):
    system = toy_system()
    # fewer steps than record_every keeps only the initial sample
    traj = integrate(random_state(system, 1), system, 5e-4, record_every=10, dtau=1e-4)
    assert len(traj) == 1
    lines = emit_trajectory(traj, tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == 2


def test_emit_round_trip_exact(tmp_path):
    from ferroneedle.observables import trajectory_observables
    system = toy_system()
    traj = integrate(random_state(system, 2), system, 0.05, record_every=10, dtau=1e-3)
    emit_trajectory(traj, tmp_path / "t.csv")
    header, data = read_csv(tmp_path / "t.csv")
    assert tuple(header) == TRAJECTORY_COLUMNS
    obs = trajectory_observables(traj)
    for k, name in enumerate(header):
        assert data[:, k].tobytes() == np.asarray(obs[name], dtype=float).tobytes(), name
    raw = (tmp_path / "t.csv").read_bytes()
    assert b"\r" not in raw and b'"' not in raw


def _payloads(out_dir):
    return {p.relative_to(out_dir).as_posix(): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_repeat_runs_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(parse_config(SMALL + f"output_dir: {d}\n")).status == "ok"
    pa, pb = _payloads(a), _payloads(b)
    # the echoed config differs only by output_dir
    ca, cb = json.loads(pa.pop("config.json")), json.loads(pb.pop("config.json"))
    assert {**ca, "output_dir": ""} == {**cb, "output_dir": ""}
    assert pa.keys() == pb.keys() and "trajectory.csv" in pa
    assert pa == pb


def test_manifest_lists_files_with_matching_schemas(tmp_path):
    cfg = parse_config(SMALL + f"output_dir: {tmp_path}\n")
    run(cfg)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["error"] is None
    assert manifest["config_echo"]["seed"] == 3
    names = {f["name"] for f in manifest["files"]}
    on_disk = {p.name for p in tmp_path.iterdir()} - {"manifest.json"}
    assert names == on_disk
    for f in manifest["files"]:
        if f["name"].endswith(".csv"):
            header, _ = read_csv(tmp_path / f["name"])
            assert tuple(header) == SCHEMAS[f["schema"]]


def test_exit_codes(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL)
    assert main(["precess", "--config", str(cfg), "--out", str(tmp_path / "ok"), "--quiet"]) \
        == EXIT_OK
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL + "bogus: 1\n")
    assert main(["precess", "--config", str(bad), "--quiet"]) == EXIT_CONFIG
    assert main(["noise", "--config", str(cfg), "--quiet"]) == EXIT_CONFIG
    unstable = tmp_path / "u.yaml"
    unstable.write_text(SMALL.replace("5.0e-5", "1.0e-3"))
    out = tmp_path / "u"
    assert main(["precess", "--config", str(unstable), "--out", str(out), "--quiet"]) \
        == EXIT_NUMERICAL
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["error"]["kind"] == "numerical"
    assert main(["precess", "--config", str(tmp_path / "missing.yaml"), "--quiet"]) == EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["precess", "--config", str(cfg), "--out", str(blocker / "x"), "--quiet"]) \
        == EXIT_IO


def test_seed_flag_overrides(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL)
    main(["precess", "--config", str(cfg), "--seed", "77", "--out", str(tmp_path / "o"),
          "--quiet"])
    echo = json.loads((tmp_path / "o" / "config.json").read_text())
    assert echo["seed"] == 77


def test_member_seeds_distinct():
    seeds = [member_seed(5, k) for k in range(8)]
    assert len(set(seeds)) == 8 and all(0 <= s < 2**63 for s in seeds)
    assert seeds == [member_seed(5, k) for k in range(8)]


SWEEP = """
experiment: sweep
seed: 11
physical: {material: cobalt, n_atoms: 6}
sim: {t_end: 0.5, dt_override: 5.0e-5, record_every: 200, lattice_temp: 0.01}
protocol: {base: precess, n_members: 8, workers: WORKERS}
"""


def test_sweep_parallel_matches_sequential(tmp_path):
    runs = {}
    for workers in (1, 2):
        d = tmp_path / f"w{workers}"
        cfg = parse_config(SWEEP.replace("WORKERS", str(workers)) + f"output_dir: {d}\n")
        manifest = run(cfg)
        assert manifest.status == "ok", manifest.error
        runs[workers] = d
    summary = json.loads((runs[1] / "summary.json").read_text())
    assert len(summary["members"]) == 8
    assert len({m["seed"] for m in summary["members"]}) == 8
    for k in range(8):
        assert (runs[1] / f"member_{k:03d}" / "manifest.json").exists()
    a, b = _payloads(runs[1]), _payloads(runs[2])
    # only the echoed configs mention the directory and worker count
    strip = [k for k in a if k.endswith("config.json")]
    for k in strip:
        a.pop(k), b.pop(k)
    assert a.keys() == b.keys()
    assert a == b


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL)
    res = subprocess.run([sys.executable, "-m", "ferroneedle", "precess", "--config", str(cfg),
                          "--out", str(tmp_path / "o"), "--quiet"], capture_output=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "trajectory.csv").exists()
