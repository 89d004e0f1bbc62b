import json
import subprocess
import sys
from pathlib import Path

import pytest

from smi.cli import main
from smi.config import load_config
from smi.errors import ConfigError

GAUSSIAN = """
model = "gaussian-biased"
seed = 7
[truth]
phi_star = 0.0
theta_star = 1.0
[data]
simulate = {{n = 25, m = 50}}
[scorer]
kind = "{kind}"
sampler = "closed-form"
n_draws = 1000
n_mc = 1000
{extra}
"""

HPV = """
model = "hpv"
seed = 1
[truth]
theta1 = 1.0
theta2 = 4.0
phi = [0.1, 0.3]
[data]
simulate = {T = [10.0, 10.0], N = [20, 20]}
[chain]
n1 = 200
n2 = 20
burnin = 100
proposal_scales = [0.3, 0.3, 0.3, 0.3]
stage2_mode = "parallel"
[eta]
grid = [0.0, 1.0]
[scorer]
kind = "waic"
target = "y"
sampler = "nested"
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def gaussian(tmp_path, kind="exact", extra=""):
    return write(tmp_path, GAUSSIAN.format(kind=kind, extra=extra))


def test_simulate_outputs(tmp_path):
    cfg = gaussian(tmp_path)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("z.csv", "y.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    z = (tmp_path / "a" / "z.csv").read_text().splitlines()
    y = (tmp_path / "a" / "y.csv").read_text().splitlines()
    assert z[0] == "value" and len(z) == 26 and len(y) == 51
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["truth"] == {"phi_star": 0.0, "theta_star": 1.0}
    assert manifest["seed"] == 7


def test_sweep_is_byte_identical_and_selects_interior_or_cut(tmp_path):
    cfg = gaussian(tmp_path)
    for out in ("a", "b"):
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / out)]) == 0
    for name in ("sweep.csv", "sweep.svg", "selection.json", "effective_config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len((tmp_path / "a" / "sweep.csv").read_text().splitlines()) == 22


def test_two_point_grid(tmp_path):
    cfg = gaussian(tmp_path, extra="[eta]\ngrid = [0.0, 1.0]")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "sweep.csv").read_text().splitlines()) == 3


def test_sweep_on_simulated_files_matches_in_memory(tmp_path):
    cfg = gaussian(tmp_path, kind="waic")
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "data")])
    files = write(tmp_path, GAUSSIAN.format(kind="waic", extra="").replace(
        "simulate = {n = 25, m = 50}", 'z_csv = "data/z.csv"\ny_csv = "data/y.csv"'), "files.toml")
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "mem")])
    main(["sweep", "--config", files, "--out", str(tmp_path / "disk")])
    assert (tmp_path / "mem" / "sweep.csv").read_bytes() == (tmp_path / "disk" / "sweep.csv").read_bytes()


def test_seed_override(tmp_path):
    cfg = gaussian(tmp_path)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "8"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "z.csv").read_bytes() != (tmp_path / "b" / "z.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "effective_config.json").read_text())["seed"] == 8


def test_effective_config_echoes_defaults(tmp_path):
    cfg = gaussian(tmp_path)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    eff = json.loads((tmp_path / "o" / "effective_config.json").read_text())
    assert eff["hyper"]["sigma_phi"] == "inf"
    assert len(eff["eta"]["grid"]) == 21
    assert eff["eta"]["smoothing"] == "none"
    assert eff["chain"]["n2"] == 500
    assert "PCG64" in eff["rng"]


def test_replicate_study_and_report(tmp_path):
    cfg = GAUSSIAN.format(kind="exact", extra="").replace("seed = 7", "seed = 7\nreplicates = 12")
    path = write(tmp_path, cfg, "study.toml")
    out = tmp_path / "study"
    assert main(["replicate-study", "--config", path, "--out", str(out), "--threads", "2"]) == 0
    for name in ("replicates.csv", "replicate_curves.csv", "study_curves.csv", "study_summary.json",
                 "eta_star_hist.svg", "se_diff_smi_cut.svg", "se_diff_cut_bayes.svg", "manifest.json"):
        assert (out / name).is_file(), name
    before = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(["report", "--config", path, "--out", str(out)]) == 0
    after = {p.name: p.read_bytes() for p in out.iterdir()}
    assert before == after


def test_hpv_sweep(tmp_path):
    assert main(["sweep", "--config", write(tmp_path, HPV), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[1].endswith(",ok")


def test_all_rows_failed_exit_code(tmp_path):
    cfg = write(tmp_path, HPV.replace("proposal_scales = [0.3, 0.3, 0.3, 0.3]", "proposal_scales = [0.3, 0.3, 0.3]"))
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "failed" in (tmp_path / "o" / "sweep.csv").read_text()


def test_custom_model_sweep(tmp_path):
    cfg = write(tmp_path, """
model = "custom"
[custom]
factory = "custom_factory:make"
options = {n = 15, m = 30}
[chain]
n1 = 200
n2 = 20
burnin = 100
proposal_scales = [0.3, 0.3]
stage2_mode = "parallel"
[eta]
points = 3
[scorer]
kind = "waic"
target = "pair"
sampler = "nested"
""")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("text", [
    'model = "agricultural"',
    'model = "gaussian-biased"\n[data]\nsimulate = {n = 5, m = 5}\nz_csv = "z.csv"\ny_csv = "y.csv"',
    'model = "gaussian-biased"\n[data]\nz_csv = "missing.csv"\ny_csv = "missing.csv"',
    'model = "gaussian-biased"\n[data]\nsimulate = {n = 5, m = 5}\n[eta]\ngrid = [0.0, 0.5]',
    'model = "gaussian-biased"\n[data]\nsimulate = {n = 5, m = 5}\n[hyper]\nsigma_z = -1.0',
    'model = "hpv"\n[data]\nsimulate = {T = [1.0], N = [3]}\n[scorer]\nkind = "exact"',
    'model = "gaussian-biased"\nbogus = 1',
    'model = "gaussian-biased"\n[data]\nsimulate = {n = 5, m = 5}\n[chain]\nthin = 0',
    'not toml [',
])
def test_validation_errors_exit_one(tmp_path, text):
    assert main(["sweep", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1


def test_bad_csv_exit_one(tmp_path):
    (tmp_path / "z.csv").write_text("x\n1.0\n")
    (tmp_path / "y.csv").write_text("value\n1.0\n")
    cfg = write(tmp_path, 'model = "gaussian-biased"\n[data]\nz_csv = "z.csv"\ny_csv = "y.csv"')
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_unwritable_output_exit_two(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--config", gaussian(tmp_path), "--out", str(blocker / "sub")]) == 2


def test_report_without_outputs(tmp_path):
    assert main(["report", "--config", gaussian(tmp_path), "--out", str(tmp_path / "empty")]) == 1


def test_simulate_needs_builtin_model(tmp_path):
    cfg = write(tmp_path, 'model = "custom"\n[custom]\nfactory = "custom_factory:make"')
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_load_config_resolves_relative_paths(tmp_path):
    (tmp_path / "z.csv").write_text("value\n1.0\n")
    (tmp_path / "y.csv").write_text("value\n1.0\n")
    cfg = load_config(write(tmp_path, 'model = "gaussian-biased"\n[data]\nz_csv = "z.csv"\ny_csv = "y.csv"'))
    assert cfg.path("z_csv") == tmp_path / "z.csv"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "smi.cli", "simulate", "--config", gaussian(tmp_path),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["command"] == "simulate"
    assert Path(tmp_path / "o" / "z.csv").is_file()


@pytest.mark.parametrize("path", sorted((Path(__file__).parents[1] / "examples" / "configs").glob("*.toml")),
                         ids=lambda p: p.stem)
def test_shipped_example_configs_validate(path):
    cfg = load_config(path)
    assert cfg.grid[0] == 0.0 and cfg.grid[-1] == 1.0
