import json

import numpy as np
import pytest

from forster.cli import main
from forster.detection import DetectionChain, fine_structure_mix
from forster.io import read_spectrum, read_table

FAST = ["--realizations", "20", "--grid-min", "-6", "--grid-max", "6", "--grid-step", "0.5"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum_writes_tables(tmp_path, capsys):
    code, out, _ = run(["spectrum", "--i", "2", "3", "--out", str(tmp_path), *FAST], capsys)
    assert code == 0
    assert (tmp_path / "rho_2.csv").read_text().startswith("detuning_mhz,rho,stderr\n")
    assert (tmp_path / "rho_3.csv").exists()
    assert read_table(tmp_path / "spectra.csv").keys() == {"detuning_mhz", "rho_2", "stderr_2", "rho_3", "stderr_3"}
    meta = json.loads((tmp_path / "spectrum.meta.json").read_text())
    assert meta["config"]["seed"] == 42 and meta["version"] == "0.1.0"
    assert "rho_2.csv" in meta["files"]
    assert json.loads(out)["command"] == "spectrum"


def test_spectrum_is_byte_identical_across_runs_and_workers(tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run(["spectrum", "--i", "3", "--out", str(a), *FAST], capsys)
    run(["spectrum", "--i", "3", "--out", str(b), *FAST], capsys)
    run(["spectrum", "--i", "3", "--out", str(c), "--workers", "3", *FAST], capsys)
    ref = (a / "rho_3.csv").read_bytes()
    assert (b / "rho_3.csv").read_bytes() == ref
    assert (c / "rho_3.csv").read_bytes() == ref
    assert b"\r" not in ref


def test_atom_bound_rejected(tmp_path, capsys):
    code, _, err = run(["spectrum", "--i", "9", "--out", str(tmp_path)], capsys)
    assert code == 2
    assert "1 <= i <= 8" in err


@pytest.mark.parametrize(
    "flags,field",
    [(["--T", "1.5"], "T"), (["--p32", "2"], "p32"), (["--realizations", "0"], "realizations"), (["--grid-step", "0"], "grid_step")],
)
def test_field_precise_errors(tmp_path, capsys, flags, field):
    code, _, err = run(["detect", "--out", str(tmp_path), *flags], capsys)
    assert code == 2
    assert err.startswith(f"error: {field}:")


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(["histogram", "--out", str(blocker)], capsys)
    assert code == 2 and "out:" in err


def test_detect_perfect_detector(tmp_path, capsys):
    spectra = tmp_path / "rho"
    run(["spectrum", "--i", "2", "3", "4", "5", "--out", str(spectra), *FAST], capsys)
    out = tmp_path / "det"
    code, _, _ = run(["detect", "--input", str(spectra), "--T", "1.0", "--rho-bg", "0.02", "--out", str(out)], capsys)
    assert code == 0
    rho = {k: read_spectrum(spectra / f"rho_{k}.csv") for k in range(2, 6)}
    for N in range(1, 6):
        s = read_table(out / f"s_{N}.csv")
        assert list(s) == ["detuning_mhz", "s_n"]
        expected = 0.02 + (fine_structure_mix(rho, N, 0.52).values if N >= 2 else 0.0)
        np.testing.assert_allclose(s["s_n"], expected, atol=1e-15)
    summary = read_table(out / "summary.csv")
    assert list(summary) == ["n_detected", "amplitude", "fwhm_mhz", "fwhm_mvcm", "tail_mass"]
    hist = read_table(out / "histogram.csv")
    assert hist["k2"][0] == pytest.approx(0.0) and hist["k2"][1] == pytest.approx(0.52**2)


def test_detect_histogram_table_at_paper_defaults(tmp_path, capsys):
    code, out, _ = run(["histogram", "--out", str(tmp_path)], capsys)
    assert code == 0
    share = read_table(tmp_path / "histogram.csv")["k2_resonant_share"]
    assert share[0] >= 0.85
    total = sum(read_table(tmp_path / "histogram.csv")[c] for c in ("none", "k2", "k3", "k4", "k5", "tail"))
    np.testing.assert_allclose(total, 1.0, atol=1e-9)


def test_detect_missing_input_grid(tmp_path, capsys):
    (tmp_path / "in").mkdir()
    code, _, err = run(["detect", "--input", str(tmp_path / "in"), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "missing" in err


def test_calibrate(capsys):
    code, out, _ = run(["calibrate", "--alpha", "0.27", "--nbarT", "0.65"], capsys)
    assert code == 0
    assert "n_bar = 1.0199" in out and "T = 0.6373" in out
    code, _, err = run(["calibrate", "--alpha", "1.2", "--nbarT", "0.65"], capsys)
    assert code == 2 and "alpha" in err


def test_fieldscan_peak_on_narrow_grid(tmp_path, capsys):
    code, out, _ = run(
        ["fieldscan", "--field-min", "1.74", "--field-max", "1.84", "--out", str(tmp_path), "--realizations", "50"],
        capsys,
    )
    assert code == 0
    table = read_table(tmp_path / "fieldscan_s_1.csv")
    assert list(table) == ["field_vcm", "s_n"]
    peak = table["field_vcm"][np.argmax(table["s_n"])]
    assert abs(peak - 1.79) <= 0.001 + 1e-12


def test_fieldscan_empty_grid(tmp_path, capsys):
    code, _, err = run(["fieldscan", "--field-min", "1.80", "--field-max", "1.78", "--out", str(tmp_path)], capsys)
    assert code == 2 and "field grid is empty" in err


def test_fieldscan_outside_window(tmp_path, capsys):
    code, _, err = run(["fieldscan", "--field-max", "1.95", "--out", str(tmp_path)], capsys)
    assert code == 2 and "field_max" in err


def test_fieldscan_from_detect_outputs(tmp_path, capsys):
    det = tmp_path / "det"
    run(["detect", "--out", str(det), "--realizations", "20"], capsys)
    code, _, _ = run(["fieldscan", "--input", str(det), "--out", str(tmp_path / "fs")], capsys)
    assert code == 0
    assert (tmp_path / "fs" / "fieldscan_summary.csv").exists()


def test_lineshape_command(tmp_path, capsys):
    run(["spectrum", "--i", "2", "--out", str(tmp_path), "--realizations", "50"], capsys)
    code, out, _ = run(["lineshape", "--input", str(tmp_path / "rho_2.csv"), "--out", str(tmp_path)], capsys)
    assert code == 0
    report = json.loads(out)["summary"]
    assert report["fwhm_mhz"] > 0 and report["lorentz_gamma_mhz"] > 0
    assert list(read_table(tmp_path / "lorentz_rho_2.csv")) == ["detuning_mhz", "data", "lorentz", "residual"]


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"simulation": {"i": [3], "realizations": 5, "seed": 7}, "output": {"out": str(tmp_path / "o")}}))
    code, _, _ = run(["spectrum", "--config", str(cfg), "--seed", "8"], capsys)
    assert code == 0
    meta = json.loads((tmp_path / "o" / "spectrum.meta.json").read_text())
    assert meta["config"]["i"] == [3]
    assert meta["config"]["realizations"] == 5
    assert meta["config"]["seed"] == 8


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"simulation": {"atoms": 3}}))
    code, _, err = run(["spectrum", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 2 and "atoms" in err


def test_c3_flag_sets_exchange_defaults(tmp_path, capsys):
    code, _, _ = run(["spectrum", "--c3", "150", "--c3-exchange-sp", "90", "--out", str(tmp_path), *FAST], capsys)
    assert code == 0
    from forster.config import RunConfig

    consts = RunConfig(c3=150.0, c3_exchange_sp=90.0).constants
    assert (consts.c3_forster, consts.c3_exchange_s, consts.c3_exchange_sp) == (150.0, 150.0, 90.0)


def test_tsv_format(tmp_path, capsys):
    code, _, _ = run(["spectrum", "--format", "tsv", "--out", str(tmp_path), *FAST], capsys)
    assert code == 0
    assert (tmp_path / "rho_2.tsv").read_text().startswith("detuning_mhz\trho\tstderr\n")
