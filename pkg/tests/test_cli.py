import csv
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest
from scipy import integrate

from fmaxanova import ecg
from fmaxanova.cli import main
from fmaxanova.funcdata import load_sample, save_sample

from conftest import random_sample, synthetic_subject


def schema(name):
    return json.loads(resources.files("fmaxanova").joinpath(f"schemas/{name}.schema.json").read_text())


@pytest.fixture
def sample_csv(tmp_path, rng):
    p = tmp_path / "sample.csv"
    save_sample(random_sample(rng, sizes=(6, 7), M=15, shift=0.5), p)
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_test_command_report(capsys, sample_csv):
    code, out, _ = run(capsys, "test", sample_csv, "--B", 200)
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("test_report"))
    for key in ("statistic", "observed", "p_value", "critical_value", "alpha", "B", "method", "seed", "degenerate"):
        assert key in doc
    assert doc["statistic"] == "fmax" and doc["B"] == 200


@pytest.mark.parametrize("extra", [["--stat", "gpf"], ["--method", "pb"], ["--within-group"]])
def test_test_command_variants_validate(capsys, sample_csv, extra):
    code, out, _ = run(capsys, "test", sample_csv, "--B", 100, *extra)
    assert code == 0
    jsonschema.validate(json.loads(out), schema("test_report"))


def test_pb_gpf_rejected(capsys, sample_csv):
    code, _, err = run(capsys, "test", sample_csv, "--method", "pb", "--stat", "gpf", "--B", 10)
    assert code == 1
    assert "pb supports fmax only" in err


def test_test_command_byte_identical(tmp_path, capsys, sample_csv):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "test", sample_csv, "--B", 300, "--seed", 7, "--output", a)[0] == 0
    assert run(capsys, "test", sample_csv, "--B", 300, "--seed", 7, "--output", b, "--threads", 4)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_from_environment(monkeypatch, capsys, sample_csv):
    monkeypatch.setenv("FMAXANOVA_SEED", "42")
    _, out, _ = run(capsys, "test", sample_csv, "--B", 50)
    assert json.loads(out)["seed"] == 42


def test_replicates_file(tmp_path, capsys, sample_csv):
    rp = tmp_path / "reps.csv"
    run(capsys, "test", sample_csv, "--B", 40, "--replicates", rp)
    assert len(rp.read_text().strip().splitlines()) in (40, 41)


def test_missing_sample_file(capsys, tmp_path):
    code, _, err = run(capsys, "test", tmp_path / "nope.csv")
    assert code == 1 and err.startswith("error:")


def test_unknown_flag_and_bad_threads(sample_csv):
    with pytest.raises(SystemExit):
        main(["test", str(sample_csv), "--bogus"])
    with pytest.raises(SystemExit):
        main(["test", str(sample_csv), "--threads", "0"])


def test_simulate_single_cell(tmp_path, capsys):
    js = tmp_path / "res.json"
    code, out, _ = run(capsys, "simulate", "--n", "5,6,5", "--M", 10, "--N", 1, "--B", 9, "--output", js)
    assert code == 0
    header, row = out.strip().splitlines()
    assert header.split("\t")[4:] == ["gpf_rate", "gpf_se", "fmax_rate", "fmax_se"]
    assert float(row.split("\t")[6]) in (0.0, 1.0)
    doc = json.loads(js.read_text())
    jsonschema.validate(doc, schema("sim_result"))
    assert doc["config"]["k"] == 3


def test_simulate_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 2, "n": [4, 5], "M": 8, "N": 2, "B": 9, "rho": 0.3}))
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--delta", 0.5)
    assert code == 0
    assert out.strip().splitlines()[1].split("\t")[:3] == ["0.3", "(4,5)", "0.5"]


def test_simulate_preset_appends_tsv(tmp_path, capsys):
    tsv = tmp_path / "table.tsv"
    code, out, _ = run(capsys, "simulate", "--table1-subset", "--N", 1, "--B", 9, "--M", 10, "--tsv", tsv)
    assert code == 0
    rows = list(csv.reader(tsv.open(), delimiter="\t"))
    assert len(rows) == 9
    assert all(len(r) == 8 for r in rows)
    run(capsys, "simulate", "--table1-subset", "--N", 1, "--B", 9, "--M", 10, "--tsv", tsv)
    assert len(tsv.read_text().strip().splitlines()) == 17


def test_simulate_negative_delta(capsys):
    code, _, err = run(capsys, "simulate", "--delta", -0.1, "--N", 1)
    assert code == 1 and "delta" in err


def test_nullpdf_from_sample(tmp_path, capsys, sample_csv):
    out = tmp_path / "pdf.csv"
    svg = tmp_path / "pdf.svg"
    code, _, _ = run(capsys, "nullpdf", sample_csv, "--B", 400, "--output", out, "--svg", svg)
    assert code == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    x, d = data[:, 0], data[:, 1]
    assert np.all(np.diff(x) > 0)
    assert np.all(d >= 0)
    assert integrate.trapezoid(d, x) == pytest.approx(1.0, abs=0.02)
    assert svg.read_text().startswith("<svg")


def test_nullpdf_from_sim_cell(capsys):
    code, out, _ = run(capsys, "nullpdf", "--rho", 0.1, "--M", 20, "--B", 200, "--points", 64)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "x,density" and len(lines) == 65


def _write_subjects(tmp_path, n_per_group=2, width=(1.0, 1.3), twelve=True):
    rng = np.random.default_rng(11)
    rows = ["subject_id,group,path"]
    for g, wf in zip("AB", width):
        for i in range(n_per_group):
            v = synthetic_subject(rng, wf, f"{g}{i}")
            data = ecg.vcg_to_leads(v).leads if twelve else v.xyz
            name = f"{g}{i}.csv"
            np.savetxt(tmp_path / name, data.T, delimiter=",", fmt="%.10g")
            rows.append(f"{g}{i},{g},{name}")
    man = tmp_path / "manifest.csv"
    man.write_text("\n".join(rows) + "\n")
    return man


def test_ecg_manifest_to_sample(tmp_path, capsys):
    man = _write_subjects(tmp_path)
    out = tmp_path / "ecg_sample.csv"
    code, _, err = run(capsys, "ecg", man, "--output", out, "--threads", 2)
    assert code == 0, err
    s = load_sample(out)
    assert (s.k, s.sizes, s.M) == ((2), (2, 2), 250)
    subj = tmp_path / "ecg_sample_subjects"
    files = sorted(subj.glob("*.json"))
    assert len(files) == 4
    for f in files:
        jsonschema.validate(json.loads(f.read_text()), schema("waveform"))


def test_ecg_vcg_input_and_waveform_feature(tmp_path, capsys):
    man = _write_subjects(tmp_path, twelve=False)
    code, out, _ = run(capsys, "ecg", man, "--feature", "waveform")
    assert code == 0
    assert out.splitlines()[0].count(",") == 500


def test_ecg_missing_file(tmp_path, capsys):
    man = _write_subjects(tmp_path, n_per_group=3)
    (tmp_path / "B2.csv").unlink()
    out = tmp_path / "s.csv"
    code, _, err = run(capsys, "ecg", man, "--output", out)
    assert code == 1
    assert "subject B2" in err
    assert load_sample(out).sizes == (3, 2)


def test_ecg_chains_into_test(tmp_path, capsys):
    man = _write_subjects(tmp_path, n_per_group=4)
    out = tmp_path / "s.csv"
    assert run(capsys, "ecg", man, "--output", out)[0] == 0
    code, rep, _ = run(capsys, "test", out, "--B", 200)
    assert code == 0
    doc = json.loads(rep)
    jsonschema.validate(doc, schema("test_report"))
    assert 0 < doc["p_value"] <= 1


def test_sample_file_matches_schema(tmp_path, rng):
    p = tmp_path / "s.json"
    save_sample(random_sample(rng), p)
    jsonschema.validate(json.loads(p.read_text()), schema("sample"))


def test_module_entry_point(sample_csv):
    res = subprocess.run([sys.executable, "-m", "fmaxanova", "test", str(sample_csv), "--B", "20"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["B"] == 20
