import json
import subprocess
import sys

import pytest
import yaml

from spadaac.channel import CountModel
from spadaac.cli import EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_OK, EXIT_VALIDATION, main


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


SMALL = {
    "axes": [{"name": "lambda_s", "values": [10, 60]}, {"name": "lambda_b", "values": [0.1, 50]}],
}


def test_sweep_outputs(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    lines = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "lambda_s,lambda_b,algorithm,alpha_opt,rate_bits,avg_trigger,ser,k_max,gates"
    meta = json.loads((tmp_path / "o" / "sweep.json").read_text())
    assert meta["command"] == "sweep" and "version" in meta and "seed" in meta


def test_byte_identical_reruns(tmp_path):
    cfg = write_config(tmp_path, {
        "axes": [{"name": "lambda_s", "values": [10, 60]}, {"name": "lambda_b", "values": [50]}],
        "algorithms": ["none", "rate-max"],
        "simulation": {"trials": 100_000},
    })
    for cmd in ("sweep", "validate", "optimize", "scan-concavity"):
        outs = []
        for i, workers in enumerate(("1", "3")):
            out = tmp_path / f"{cmd}{i}"
            rc = main([cmd, "--config", cfg, "--out", str(out), "--seed", "77", "--workers", workers])
            assert rc == EXIT_OK
            outs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
        assert outs[0] == outs[1]


def test_optimize_json(tmp_path):
    out = tmp_path / "o"
    assert main(["optimize", "--out", str(out), "--algorithm", "trigger"]) == EXIT_OK
    data = json.loads((out / "point.json").read_text())
    assert list(data["solutions"]) == ["trigger"]


def test_config_errors_exit_1(tmp_path):
    bad_axis = write_config(tmp_path, {"axes": [{"name": "foo", "values": [1]}]})
    assert main(["sweep", "--config", bad_axis, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    degenerate = write_config(tmp_path, {"lambda_s": 0, "lambda_b": 1}, "deg.yaml")
    assert main(["optimize", "--config", degenerate, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["sweep", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    broken = tmp_path / "broken.yaml"
    broken.write_text("axes: [unclosed")
    assert main(["sweep", "--config", str(broken)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--algorithm", "bogus"])
    assert exc.value.code == EXIT_CONFIG


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write_config(tmp_path, SMALL)
    assert main(["sweep", "--config", cfg, "--out", str(blocker / "sub")]) == EXIT_CONFIG


def test_nonconvergence_exit_2(tmp_path):
    cfg = write_config(tmp_path, {
        "axes": [{"name": "lambda_s", "values": [50]}], "lambda_b": 300,
        "algorithms": ["rate-max"], "solver": {"t_max": 1},
    })
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_NONCONVERGED
    assert (tmp_path / "o" / "sweep.csv").exists()
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path / "p")]) == EXIT_NONCONVERGED


def test_validate_exit_codes(tmp_path):
    cfg = write_config(tmp_path, {
        "axes": [{"name": "lambda_s", "values": [30]}], "lambda_b": 10,
        "algorithms": ["none"], "simulation": {"trials": 100_000},
    })
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "ok")]) == EXIT_OK
    assert (tmp_path / "ok" / "histograms" / "point_0000.csv").read_text().startswith("symbol,k,count\n")

    def corrupt(model):
        return CountModel.from_trigger_probs(model.k_max, model.trigger_probs * 0.8, model.attenuation)

    rc = main(["validate", "--config", cfg, "--out", str(tmp_path / "bad")], model_hook=corrupt)
    assert rc == EXIT_VALIDATION


def test_scan_concavity_csv(tmp_path):
    cfg = write_config(tmp_path, {"concavity": {"lambda_s": [20, 10], "lambda_b": [50, 0.1], "alpha": [0.5, 1.0]}})
    assert main(["scan-concavity", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "concavity.csv").read_text().splitlines()
    assert rows[0] == "lambda_s,lambda_b,alpha,d2I"
    keys = [tuple(float(v) for v in r.split(",")[:3]) for r in rows[1:]]
    assert keys == sorted(keys, key=lambda t: (t[1], t[0], t[2]))


def test_json_config_accepted(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "spadaac.cli", "optimize", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "point.json").exists()
