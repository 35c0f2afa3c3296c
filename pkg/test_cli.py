#!/usr/bin/env python3
"""
Pruebas de la línea de comandos: validación de configuración, artefactos,
reproducibilidad byte a byte y códigos de salida.
"""

import sys
import os
import json
import logging
import tempfile
import xml.etree.ElementTree as ET

import pytest

# Configurar logging para ver los detalles del proceso
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Agregar el directorio del proyecto al path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from app.main import main, parse_config, run
from app.models.models import BenchKernelConfig, SampleConfig
from app.modules.nomc.nomc import coherence, load_ensemble
from app.utils.errors import ConfigError

BENCH = {
    "command": "bench-kernel",
    "kernel": "gaussian",
    "d": 3,
    "methods": ["mc", "bomc", "opt-nomc"],
    "multipliers": [1, 2],
    "trials": 4,
    "pairs": 5,
    "nomc_iterations": 20,
    "seed": 11,
}


def _write_config(directory: str, name: str, data) -> str:
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8") as f:
        f.write(data if isinstance(data, str) else json.dumps(data))
    return path


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def test_parse_config_minimal():
    cfg = parse_config('{"command": "sample", "law": "gaussian", "d": 3, "s": 2}')
    assert isinstance(cfg, SampleConfig)
    assert cfg.method == "mc" and cfg.seed == 0

    cfg = parse_config('{"kernel": "gaussian", "master_seed": 5}', command="bench-kernel")
    assert isinstance(cfg, BenchKernelConfig)
    assert cfg.seed == 5 and cfg.trials == 450 and cfg.multipliers == [1, 2, 3, 4, 5]


def test_parse_config_errors():
    with pytest.raises(ConfigError) as info:
        parse_config('{"command": "sample", "law": "gaussian", "d": 3, "s": 2, "foo": 1}')
    assert "clave desconocida 'foo'" in str(info.value)
    assert info.value.path == "foo"

    with pytest.raises(ConfigError) as info:
        parse_config('{"command": "bench-kernel", "kernel": "gaussian", "trials": -1}')
    assert info.value.path == "trials"

    with pytest.raises(ConfigError):
        parse_config("{no es json")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config('{"command": "sample", "law": "gaussian", "d": 3, "s": 2}', command="diagnose")
    with pytest.raises(ConfigError):
        parse_config('{"command": "build-nomc", "variant": "opt", "d": 3}')


def test_build_alg_nomc(tmp_path):
    out = str(tmp_path)
    cfg = parse_config('{"variant": "alg", "p": 3, "r": 2, "seed": 1}', command="build-nomc")
    result = run(cfg, out=out)
    assert result.success and result.exit_code == 0
    assert result.artifacts == [os.path.join(out, "alg-nomc-p3-r2.csv")]
    ensemble = load_ensemble(result.artifacts[0])
    assert ensemble.rows.shape == (9, 6)


def test_build_opt_nomc_writes_trace(tmp_path):
    out = str(tmp_path)
    cfg = parse_config('{"variant": "opt", "d": 3, "s": 6, "T": 10}', command="build-nomc")
    result = run(cfg, out=out)
    assert result.success
    trace = result.artifacts[1]
    assert trace.endswith("opt-nomc-d3-s6-trace.csv")
    with open(trace, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0] == "iteration,energy,d_max,d_min"
    assert len(lines) == 12


def test_sample_then_coherence(tmp_path, capsys):
    out = str(tmp_path)
    sample = run(parse_config('{"law": "sphere", "d": 4, "s": 8, "method": "bomc", "seed": 2}',
                              command="sample"), out=out)
    assert sample.success
    ensemble_path = sample.artifacts[0]
    assert os.path.basename(ensemble_path) == "ensemble-bomc-d4-s8.csv"

    cfg = parse_config(json.dumps({"ensemble": ensemble_path}), command="coherence")
    result = run(cfg, out=out)
    assert result.success
    with open(result.artifacts[0], encoding="utf-8") as f:
        data = json.load(f)
    assert data["s"] == 8 and data["method"] == "BOMC"
    assert data["coherence"] == coherence(load_ensemble(ensemble_path))
    assert capsys.readouterr().out.strip() == f"{data['coherence']:.17g}"


def test_bench_kernel_is_reproducible(tmp_path):
    first = os.path.join(str(tmp_path), "a")
    second = os.path.join(str(tmp_path), "b")
    cfg = parse_config(json.dumps(BENCH))
    one = run(cfg, threads=1, out=first)
    many = run(cfg, threads=3, out=second)
    assert one.success and many.success
    assert [os.path.basename(p) for p in one.artifacts] == ["bench-kernel-Gaussian.csv", "bench-kernel-Gaussian.svg"]
    for a, b in zip(one.artifacts, many.artifacts):
        assert _read_bytes(a) == _read_bytes(b)

    csv_text = _read_bytes(one.artifacts[0]).decode("utf-8")
    lines = csv_text.split("\n")
    assert lines[0] == "kernel,method,multiplier,s,trials,mean_err,mse,ci95"
    assert len([l for l in lines if l]) == 1 + 3 * 2
    assert "\r" not in csv_text


def test_bench_kernel_svg_is_well_formed(tmp_path):
    cfg = parse_config(json.dumps(BENCH))
    result = run(cfg, out=str(tmp_path))
    root = ET.parse(result.artifacts[1]).getroot()
    ids = {el.get("id") for el in root.iter() if el.get("id")}
    for method in ("MC", "BOMC", "OptNOMC"):
        assert f"series-{method}" in ids
        assert f"band-{method}" in ids


def test_bench_swd_small(tmp_path):
    cfg = parse_config(json.dumps({
        "command": "bench-swd", "distribution": "laplace", "d": 3, "methods": ["mc", "qmc"],
        "multipliers": [1], "trials": 3, "points": 100, "reference_directions": 200, "plot": False,
        "export_clouds": True,
    }))
    result = run(cfg, out=str(tmp_path))
    assert result.success
    assert [os.path.basename(p) for p in result.artifacts] == [
        "bench-swd-laplace.csv", "bench-swd-laplace-cloud-a.csv", "bench-swd-laplace-cloud-b.csv"]
    with open(result.artifacts[1], encoding="utf-8") as f:
        rows = f.read().splitlines()
    assert len(rows) == 100 and len(rows[0].split(",")) == 3
    with open(result.artifacts[0], encoding="utf-8") as f:
        assert f.readline().strip() == "distribution,method,multiplier,s,trials,mean_err,mse,ci95"


def test_diagnose_nd_report(tmp_path):
    cfg = parse_config(json.dumps({"command": "diagnose", "claim": "nd", "d": 2, "trials": 10000,
                                   "thresholds": [0.5], "seed": 3}))
    result = run(cfg, out=str(tmp_path))
    assert result.success
    assert os.path.basename(result.artifacts[0]) == "diagnose-nd.json"
    with open(result.artifacts[0], encoding="utf-8") as f:
        report = json.load(f)
    assert list(report) == ["claim_id", "config", "statistics", "verdict", "notes"]
    assert report["verdict"] == "consistent"


def test_diagnose_sweep_artifacts(tmp_path):
    cfg = parse_config(json.dumps({"command": "diagnose", "claim": "sweep", "d": 2, "trials": 5,
                                   "s_values": [4, 16], "grid_points": 6, "methods": ["mc"]}))
    result = run(cfg, out=str(tmp_path))
    assert result.success
    assert [os.path.basename(p) for p in result.artifacts] == [
        "sweep-Gaussian.csv", "sweep-Gaussian.svg", "diagnose-sweep.json"]


def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path)
    too_few = _write_config(out, "nd.json", {"claim": "nd", "d": 2, "trials": 100})
    assert main(["diagnose", "--config", too_few, "--out", out]) == 2
    assert "structmc: " in capsys.readouterr().err

    unknown = _write_config(out, "bad.json", {"law": "gaussian", "d": 3, "s": 2, "extra": True})
    assert main(["sample", "--config", unknown, "--out", out]) == 2

    broken = _write_config(out, "broken.csv", "# no es un ensemble\n1,2\n")
    cfg = _write_config(out, "coh.json", {"ensemble": broken})
    assert main(["coherence", "--config", cfg, "--out", out]) == 2

    assert main(["sample", "--config", os.path.join(out, "missing.json")]) == 3

    blocker = _write_config(out, "blocker", "x")
    ok = _write_config(out, "ok.json", {"law": "gaussian", "d": 3, "s": 2})
    assert main(["sample", "--config", ok, "--out", blocker]) == 3

    assert main(["sample", "--config", ok, "--out", os.path.join(out, "fine")]) == 0


if __name__ == "__main__":
    tmp = tempfile.mkdtemp()
    test_parse_config_minimal()
    test_parse_config_errors()
    test_build_alg_nomc(tmp)
    test_bench_kernel_is_reproducible(tmp)
    test_bench_kernel_svg_is_well_formed(tmp)
    test_diagnose_nd_report(tmp)
    print("\n✅ Pruebas de la CLI completadas")
