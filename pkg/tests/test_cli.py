import json
from pathlib import Path

import pytest

from ultrajet.cli import main, run, validate_config
from ultrajet.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def load_report(out):
    return json.loads((Path(out) / "report.json").read_text())


# -- validation ------------------------------------------------------------------

def test_defaults_materialized():
    cfg = validate_config({"weights": [
        {"name": "w", "preset": "power", "params": {"alpha": 0.5}}]})
    assert cfg["K_max"] == 128
    assert cfg["extension"]["L_guard"] == 64.0
    assert cfg["x_grid"] == {"min_pow": -4, "max_pow": 6}


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        validate_config({"bogus": 1})
    with pytest.raises(ConfigError):
        validate_config({"weights": [{"name": "w", "preset": "power",
                                      "params": {"alpha": 0.5, "zz": 1}}]})
    with pytest.raises(ConfigError):
        validate_config({"checks": [{"check": "nonsense"}]})


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"bogus": 1}')
    assert run("check", str(bad), str(tmp_path / "out")) == 2
    rep = load_report(tmp_path / "out")
    assert rep["errors"][0]["kind"] == "config"


# -- check pipelines ----------------------------------------------------------------

def test_power_strong_config_passes(tmp_path):
    status = run("check", str(CONFIGS / "power_strong.json"),
                 str(tmp_path / "out"))
    assert status == 0
    rep = load_report(tmp_path / "out")
    assert all(v["holds"] for v in rep["verdicts"])
    echo = rep["config_echo"]
    assert echo["schema_version"] == 1
    assert echo["extension"]["L_guard"] == 64.0


def test_log_power_selfheir_fails_with_witness(tmp_path):
    status = run("check", str(CONFIGS / "log_power_selfheir.json"),
                 str(tmp_path / "out"))
    assert status == 1
    rep = load_report(tmp_path / "out")
    v = rep["verdicts"][0]
    assert not v["holds"]
    assert "t" in v["counterexample"]


def test_reports_byte_identical_across_runs(tmp_path):
    for name in ("a", "b"):
        assert run("check", str(CONFIGS / "power_strong.json"),
                   str(tmp_path / name), workers=1 if name == "a" else 4) == 0
    ra = (tmp_path / "a" / "report.json").read_bytes()
    rb = (tmp_path / "b" / "report.json").read_bytes()
    assert ra == rb


def test_seed_override_recorded(tmp_path):
    assert run("check", str(CONFIGS / "power_strong.json"),
               str(tmp_path / "out"), seed=17) == 0
    rep = load_report(tmp_path / "out")
    assert rep["config_echo"]["seed"] == 17


# -- full pipeline ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def all_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("all-out")
    status = run("all", str(CONFIGS / "sin_gevrey2_all.json"), str(out))
    return status, out


def test_all_pipeline_exits_zero(all_run):
    status, out = all_run
    rep = load_report(out)
    assert rep["errors"] == []
    assert status == 0
    assert all(v["holds"] for v in rep["verdicts"])


def test_all_pipeline_residual_csv_monotone(all_run):
    _, out = all_run
    lines = (Path(out) / "residuals.csv").read_text().strip().split("\n")
    assert lines[0] == "alpha,d,residual,capped"
    rows = [ln.split(",") for ln in lines[1:]]
    by_alpha = {}
    for a, d, rres, capped in rows:
        by_alpha.setdefault(a, []).append((float(d), float(rres)))
    for a, pairs in by_alpha.items():
        pairs.sort(reverse=True)
        vals = [v for _, v in pairs]
        drops = sum(1 for x, y in zip(vals, vals[1:]) if y <= x * 1.1)
        assert drops >= len(vals) - 2, (a, vals)


def test_all_pipeline_artifacts_exist(all_run):
    _, out = all_run
    for name in ("report.json", "seq_S.csv", "fn_omega.csv",
                 "matrix_omega.csv", "cubes.csv", "pou_bounds.csv",
                 "field_samples.csv", "residuals.csv"):
        assert (Path(out) / name).exists(), name
    rep = load_report(out)
    kinds = {c["kind"] for c in rep["certificates"]}
    assert {"sequence", "weight", "matrix", "chain", "extension",
            "verification"} <= kinds


def test_all_pipeline_csv_floats_roundtrip(all_run):
    _, out = all_run
    lines = (Path(out) / "seq_S.csv").read_text().strip().split("\n")
    k, logm_col = lines[5].split(",")[0], lines[5].split(",")[1]
    # 17 significant digits: the printed decimal recovers the stored double
    assert format(float(logm_col), ".17g") == logm_col
    import math
    assert math.isclose(float(logm_col), 2.0 * math.lgamma(float(k) + 1.0),
                        rel_tol=1e-14)


def test_strict_escalates_warnings(tmp_path):
    status = run("verify", str(CONFIGS / "sin_gevrey2_all.json"),
                 str(tmp_path / "out"), strict=True)
    rep = load_report(tmp_path / "out")
    if rep["warnings"]:
        assert status == 1
    else:
        assert status == 0


def test_extend_with_cutoff_config(tmp_path):
    cfg = json.loads((CONFIGS / "sin_gevrey2_all.json").read_text())
    cfg["extension"]["cutoff_radius"] = 0.25
    cfg["decomposition"]["depth_cap"] = 10
    path = tmp_path / "cut.json"
    path.write_text(json.dumps(cfg))
    assert run("extend", str(path), str(tmp_path / "out")) == 0
    lines = (tmp_path / "out" / "field_samples.csv").read_text().strip().split("\n")
    rows = [(float(a), float(b)) for a, b in (ln.split(",") for ln in lines[1:])]
    far = [v for x, v in rows if abs(abs(x) - 1.0) > 0.6]
    assert far and all(v == 0.0 for v in far)


def test_verify_in_chain_mode_config(tmp_path):
    cfg = json.loads((CONFIGS / "sin_gevrey2_all.json").read_text())
    cfg["extension"]["schedule"] = "omega"   # chain mode over omega's matrix
    cfg["extension"]["orders"] = [0, 1]
    cfg["extension"]["approach_scales"] = [0.125, 0.03125, 0.0078125]
    cfg["extension"]["grid_points"] = 100
    cfg["decomposition"]["depth_cap"] = 11
    path = tmp_path / "chain.json"
    path.write_text(json.dumps(cfg))
    assert run("verify", str(path), str(tmp_path / "out")) == 0
    rep = load_report(tmp_path / "out")
    ver = next(c for c in rep["certificates"] if c["kind"] == "verification")
    assert ver["mode"] == "matrix"
    assert ver["fit"] is not None


def test_main_entry_point(tmp_path):
    status = main(["check", "--config", str(CONFIGS / "power_strong.json"),
                   "--out", str(tmp_path / "out"), "--seed", "3"])
    assert status == 0
