import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pnsklab import cli, config
from pnsklab.errors import BlowUpError, ValidationError


def minimal_doc(**overrides):
    doc = {
        "domain": {"length": 1.0, "n_cells": 64},
        "physics": {"mu": 0.05, "lambda": 0.05, "kappa": 1e-3, "alpha": 1.0, "beta": 1.0},
        "pressure": {"kind": "isentropic", "coefficients": [1.0], "gamma": 2.0},
        "initial": {
            "oscillation": {"n_interfaces": 2, "r_vap": 0.5, "r_liq": 2.0, "theta": 0.5}
        },
        "numerics": {"dt_max": 5e-4, "t_end": 0.01, "n_outputs": 2},
        "study": {"n_ladder": [1, 2]},
    }
    for key, val in overrides.items():
        section, _, field = key.partition(".")
        if field:
            doc.setdefault(section, {})[field] = val
        else:
            doc[section] = val
    return doc


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_minimal_config_defaults(tmp_path):
    cfg = config.parse_config(write_config(tmp_path, minimal_doc()))
    assert cfg.grid.n_cells == 64
    assert cfg.window_h == pytest.approx(1.0 / 16.0)
    assert cfg.observables == ("xi", "peff", "bounded")
    assert cfg.u0_spec["kind"] == "zero"
    assert cfg.c0_spec["kind"] == "mean-density"
    assert cfg.params.cfl == 0.4
    assert cfg.params.renorm_tol == 1e-6
    assert cfg.output_times == [0.005, 0.01]
    assert cfg.law.kind == "isentropic"


def test_config_rejects_nonpositive_alpha(tmp_path):
    with pytest.raises(ValidationError, match="physics.alpha must be positive"):
        config.parse_config(write_config(tmp_path, minimal_doc(**{"physics.alpha": 0.0})))


def test_config_rejects_oversized_ladder(tmp_path):
    doc = minimal_doc()
    doc["study"]["n_ladder"] = [40]
    with pytest.raises(ValidationError, match="2 \\* n_interfaces <= n_cells"):
        config.parse_config(write_config(tmp_path, doc))


@pytest.mark.parametrize(
    "mutate,needle",
    [
        ({"domain.typo": 1}, "domain has unknown key 'typo'"),
        ({"physics.nu": 1.0}, "physics has unknown key 'nu'"),
        ({"numerics.step": 1}, "numerics has unknown key 'step'"),
        ({"study.ladder": [1]}, "study has unknown key 'ladder'"),
    ],
)
def test_config_rejects_unknown_keys(tmp_path, mutate, needle):
    with pytest.raises(ValidationError, match=needle.split("'")[0].strip()):
        config.parse_config(write_config(tmp_path, minimal_doc(**mutate)))


def test_config_rejects_unknown_root_key(tmp_path):
    doc = minimal_doc()
    doc["extras"] = {}
    with pytest.raises(ValidationError, match="unknown key 'extras'"):
        config.parse_config(write_config(tmp_path, doc))


def test_config_output_times_validation(tmp_path):
    doc = minimal_doc()
    doc["numerics"]["output_times"] = [0.02, 0.01]
    with pytest.raises(ValidationError, match="increasing"):
        config.parse_config(write_config(tmp_path, doc))


def test_config_pressure_alpha_must_match_physics(tmp_path):
    doc = minimal_doc()
    doc["pressure"]["alpha"] = 2.0
    with pytest.raises(ValidationError, match="pressure.alpha must equal physics.alpha"):
        config.parse_config(write_config(tmp_path, doc))


def test_config_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        config.parse_config(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json }")
    with pytest.raises(ValidationError, match="line"):
        config.parse_config(str(bad))


def test_config_u0_c0_specs(tmp_path):
    doc = minimal_doc()
    doc["initial"]["u0"] = {"kind": "sine", "amplitude": 0.01, "mode": 2}
    doc["initial"]["c0"] = {"kind": "uniform", "value": 1.25}
    cfg = config.parse_config(write_config(tmp_path, doc))
    u0 = config.build_u0(cfg)
    assert u0[0] == 0.0 and u0[-1] == 0.0
    assert np.max(np.abs(u0)) <= 0.01 + 1e-15
    c0 = config.build_c0(cfg, np.full(64, 2.0))
    assert np.all(c0 == 1.25)


def run_cli(args):
    return cli.main(args)


def test_cli_run_pnsk_writes_outputs(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc())
    out = tmp_path / "out"
    code = run_cli(["--out", str(out), "run-pnsk", cfg_path])
    assert code == 0
    names = sorted(os.listdir(out))
    assert "energy.csv" in names and "monitors.csv" in names
    fields = [n for n in names if n.startswith("fields_")]
    assert len(fields) == 3  # t = 0 plus two output times
    header = (out / fields[0]).read_text().splitlines()[0]
    assert header == "t,x,rho,u_center,c"
    header_e = (out / "energy.csv").read_text().splitlines()[0]
    assert header_e.startswith("t,E,kinetic,potential_W,coupling,gradient,dissipation_visc")


def test_cli_run_effective_writes_measures(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc())
    out = tmp_path / "out"
    code = run_cli(["--out", str(out), "run-effective", cfg_path])
    assert code == 0
    names = sorted(os.listdir(out))
    measures = [n for n in names if n.startswith("measure_")]
    assert len(measures) == 3
    header = (out / measures[0]).read_text().splitlines()[0]
    assert header == "t,x_cell,atom,weight,xi"


def test_cli_convergence_and_determinism(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc())
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert run_cli(["--out", str(out1), "--seed", "7", "convergence", cfg_path]) == 0
    assert run_cli(["--out", str(out2), "--seed", "7", "convergence", cfg_path]) == 0
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    # wall-clock timing block aside, the reports are bit-identical
    r1.pop("timing")
    r2.pop("timing")
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)
    assert r1["schema_version"] == 1
    assert [row["n"] for row in r1["rows"]] == [1, 2]
    assert all(row["status"] == "ok" for row in r1["rows"])


def test_cli_run_outputs_are_byte_deterministic(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc())
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    assert run_cli(["--out", str(out1), "run-pnsk", cfg_path]) == 0
    assert run_cli(["--out", str(out2), "run-pnsk", cfg_path]) == 0
    for name in os.listdir(out1):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_cli_residuals_subcommand(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc())
    out = tmp_path / "out"
    assert run_cli(["--out", str(out), "residuals", cfg_path, "--equation", "continuity"]) == 0
    lines = (out / "residuals.csv").read_text().splitlines()
    assert lines[0] == "equation,test_function,residual"
    assert len(lines) == 4
    assert run_cli(["--out", str(out), "residuals", cfg_path, "--equation", "kinetic"]) == 0


def test_cli_validation_error_exit_code(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc(**{"physics.alpha": -1.0}))
    assert run_cli(["--out", str(tmp_path / "o"), "run-pnsk", cfg_path]) == 2
    assert run_cli(["--out", str(tmp_path / "o"), "run-pnsk", str(tmp_path / "missing.json")]) == 2


def test_cli_runtime_abort_exit_code(tmp_path, monkeypatch):
    cfg_path = write_config(tmp_path, minimal_doc())

    def explode(*a, **kw):
        raise BlowUpError("synthetic blow-up", t=0.0, snapshot=None)

    monkeypatch.setattr(cli, "run_pnsk", explode)
    assert run_cli(["--out", str(tmp_path / "o"), "run-pnsk", cfg_path]) == 3


def test_cli_seed_validation(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc())
    assert run_cli(["--out", str(tmp_path / "o"), "--seed", "-3", "run-pnsk", cfg_path]) == 2
    assert run_cli(["--out", str(tmp_path / "o"), "--threads", "0", "run-pnsk", cfg_path]) == 2


def test_cli_convergence_threads_match_serial(tmp_path):
    cfg_path = write_config(tmp_path, minimal_doc())
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert run_cli(["--out", str(out1), "convergence", cfg_path]) == 0
    assert run_cli(["--out", str(out2), "--threads", "2", "convergence", cfg_path]) == 0
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    r1.pop("timing")
    r2.pop("timing")
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


def test_cli_entry_point_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "pnsklab.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "run-pnsk" in proc.stdout
