import subprocess
import sys

import pytest

from tinylidarnet.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """collect -> train -> quantize on one oval lap, run twice into separate dirs."""
    dirs = []
    for name in ("a", "b"):
        d = tmp_path_factory.mktemp(name)
        assert run("collect", "--track", "oval", "--laps", 1, "--seed", 3, "--out", d / "data.csv") == 0
        assert run("train", "--family", "tinylidarnet", "--size", "S", "--data", d / "data.csv",
                   "--epochs", 2, "--seed", 1, "--out", d / "m.bin", "--history", d / "hist.csv") == 0
        assert run("quantize", "--model", d / "m.bin", "--calib", d / "data.csv",
                   "--out", d / "m.q8.bin") == 0
        for m in ("m.bin", "m.q8.bin"):
            assert run("eval", "--model", d / m, "--track", "oval", "--trials", 2, "--seed", 5,
                       "--timeout", 3, "--report", d / f"{m}.report.csv") == 0
        assert run("trace", "--model", d / "m.q8.bin", "--track", "oval", "--start", 10,
                   "--timeout", 3, "--out", d / "trace.csv") == 0
        dirs.append(d)
    return dirs


@pytest.mark.parametrize("name", ["data.csv", "m.bin", "hist.csv", "m.q8.bin", "m.bin.report.csv",
                                  "m.q8.bin.report.csv", "trace.csv"])
def test_reruns_are_byte_identical(pipeline, name):
    a, b = pipeline
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_figures_written(pipeline):
    d = pipeline[0]
    for name in ("hist.png", "m.bin.report.png", "trace.png"):
        assert (d / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_bench_and_inspect_on_checkpoint(pipeline, capsys, tmp_path):
    d = pipeline[0]
    assert run("bench", "--model", d / "m.bin", d / "m.q8.bin", "--iters", 20, "--warmup", 2,
               "--out", tmp_path / "b.csv") == 0
    assert (tmp_path / "b.csv").read_text().startswith("model,format,mean_us,p50_us,p99_us,bytes")
    capsys.readouterr()
    assert run("inspect", "--model", d / "m.q8.bin") == 0
    assert "54,286" in capsys.readouterr().out


@pytest.mark.parametrize("ref,params,macs", [
    ("tinylidarnet:L", "220,686", "1,546,960"),
    ("tinylidarnet:M", "111,886", "687,680"),
    ("tinylidarnet:S", "54,286", "240,752"),
    ("mlp256:L", "343,298", "342,784"),
    ("mlp256:M", "205,058", "204,544"),
    ("mlp256:S", "135,938", "135,424"),
])
def test_inspect_counts(capsys, ref, params, macs):
    assert run("inspect", "--model", ref) == 0
    assert f"total params {params}  MACs {macs}" in capsys.readouterr().out


def test_inspect_default_is_tinylidarnet_l(capsys):
    assert run("inspect") == 0
    out = capsys.readouterr().out
    assert "220,686" in out and "1,546,960" in out


def test_missing_data_file(capsys, tmp_path):
    missing = tmp_path / "missing.csv"
    code = run("train", "--data", missing, "--out", tmp_path / "m.bin")
    err = capsys.readouterr().err.strip().splitlines()
    assert code != 0
    assert len(err) == 1 and err[0].startswith("error: FileNotFoundError:")
    assert str(missing) in err[0]


def test_missing_model_file(capsys, tmp_path):
    assert run("eval", "--model", tmp_path / "nope.bin") != 0
    assert "nope.bin" in capsys.readouterr().err


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nfamily = mlp256\nsize = M\n")
    assert run("--config", cfg, "inspect") == 0
    assert "205,058" in capsys.readouterr().out  # config beats built-in default
    assert run("--config", cfg, "inspect", "--size", "S") == 0
    assert "135,938" in capsys.readouterr().out  # flag beats config


def test_config_can_supply_required_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"model = stop\ntrials = 2\ntimeout = 0.5\nreport = {tmp_path / 'r.csv'}\n")
    assert run("--config", cfg, "eval", "--no-plot") == 0
    assert (tmp_path / "r.csv").exists()


def test_expert_eval_and_trace(tmp_path, capsys):
    assert run("eval", "--model", "expert", "--track", "uturn", "--trials", 2, "--seed", 1,
               "--report", tmp_path / "r.csv") == 0
    assert "100.0" in capsys.readouterr().out
    assert run("trace", "--model", "expert", "--track", "oval", "--out", tmp_path / "t.csv") == 0
    assert "lap_complete" in capsys.readouterr().out


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "tinylidarnet", "train", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for flag in ("--family", "--size", "--data", "--epochs", "--batch", "--lr", "--seed", "--out"):
        assert flag in out
