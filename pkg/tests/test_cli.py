import json
import subprocess
import sys

import pytest

from distsde.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, SUBCOMMANDS, main

FAST = """
preset = "trivial"

[run]
M = 10000
checks = ["young", "gronwall", "inequalities"]

[young]
levels = 10
M = 500

[gronwall]
M = 2000
steps = 200

[inequalities]
trials = 10
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.toml"
    path.write_text(FAST)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_subcommands_exist():
    for name in ("build-zvonkin", "solve-pde", "simulate", "heatkernel", "ergodicity", "krylov", "young", "oracle",
                 "full-suite"):
        assert name in SUBCOMMANDS


def test_full_suite_passes(capsys, fast_config, tmp_path):
    code, out, _ = run(capsys, "full-suite", "--config", fast_config, "--out", tmp_path / "runs")
    assert code == EXIT_OK
    for name in ("young", "gronwall", "inequalities"):
        assert f"{name}: pass" in out
    manifest = next((tmp_path / "runs").glob("*/manifest.json"))
    checks = json.loads(manifest.read_text())["checks"]
    assert set(checks) == {"young", "gronwall", "inequalities"}
    for entry in checks.values():
        assert all((manifest.parent / a["path"]).exists() for a in entry["artifacts"])


def test_alpha_violation_exits_2(capsys, tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('preset = "trivial"\n[sobolev]\nalpha = 0.6\n')
    code, _, err = run(capsys, "young", "--config", cfg, "--out", tmp_path)
    assert code == EXIT_CONFIG
    assert "α ∈ (0,1/2]" in err


def test_strict_window_violation_exits_2(capsys, fast_config, tmp_path):
    code, _, err = run(capsys, "young", "--config", fast_config, "--out", tmp_path, "--strict-th29")
    assert code == EXIT_CONFIG
    assert "p > d/(1/2−α)" in err


def test_unparsable_config_exits_2(capsys, tmp_path):
    cfg = tmp_path / "broken.toml"
    cfg.write_text("[run\n")
    assert run(capsys, "young", "--config", cfg)[0] == EXIT_CONFIG


def test_empty_check_list_exits_2(capsys, tmp_path):
    cfg = tmp_path / "empty.toml"
    cfg.write_text("[run]\nchecks = []\n")
    assert run(capsys, "full-suite", "--config", cfg, "--out", tmp_path)[0] == EXIT_CONFIG


def test_numerical_error_exits_1(capsys, tmp_path):
    cfg = tmp_path / "few.toml"
    cfg.write_text('preset = "trivial"\n[run]\nM = 100\n[heatkernel]\ntimes = [1.0]\n')
    code, _, err = run(capsys, "heatkernel", "--config", cfg, "--out", tmp_path)
    assert code == EXIT_CHECK
    assert "paths" in err


def test_hash_collision_exits_1(capsys, fast_config, tmp_path):
    out = tmp_path / "runs"
    assert run(capsys, "young", "--config", fast_config, "--out", out)[0] == EXIT_OK
    manifest = next(out.glob("*/manifest.json"))
    data = json.loads(manifest.read_text())
    data["config"]["run"]["seed"] = 12345
    manifest.write_text(json.dumps(data))
    code, _, err = run(capsys, "young", "--config", fast_config, "--out", out)
    assert code == EXIT_CHECK
    assert "collision" in err


def test_seed_override_changes_hash(capsys, fast_config, tmp_path):
    run(capsys, "young", "--config", fast_config, "--out", tmp_path, "--seed", "0")
    run(capsys, "young", "--config", fast_config, "--out", tmp_path, "--seed", "0x10")
    assert len(list(tmp_path.glob("*/manifest.json"))) == 2


def test_seed_must_fit_u64(fast_config):
    with pytest.raises(SystemExit):
        main(["young", "--config", str(fast_config), "--seed", str(2**64)])


def test_outputs_independent_of_jobs_and_rerun(capsys, fast_config, tmp_path):
    one, two, again = tmp_path / "one", tmp_path / "two", tmp_path / "again"
    assert run(capsys, "full-suite", "--config", fast_config, "--out", one, "--jobs", "1")[0] == EXIT_OK
    assert run(capsys, "full-suite", "--config", fast_config, "--out", two, "--jobs", "2")[0] == EXIT_OK
    manifest = next(one.glob("*/manifest.json"))
    assert run(capsys, "full-suite", "--config", manifest, "--out", again, "--jobs", "2")[0] == EXIT_OK
    csvs = sorted(manifest.parent.glob("*.csv"))
    assert csvs
    for path in csvs:
        for other in (two, again):
            assert (other / manifest.parent.name / path.name).read_bytes() == path.read_bytes()


def test_module_entry_point(fast_config, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "distsde.cli", "young", "--config", str(fast_config),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_OK
    assert "young: pass" in proc.stdout
