import subprocess
import sys

from ccnrtrl.cli import main


def test_run_and_summarize(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["run", "desk_ccn", "total_steps=4000", "log_every=2000", "window=2000",
               "seeds=0,1", "--out", str(out)])
    assert rc == 0
    assert (out / "summary.csv").exists() and (out / "config.cfg").exists()
    assert main(["summarize", str(out)]) == 0
    assert "step,mean,stderr,n" in capsys.readouterr().out


def test_dump_and_inspect(tmp_path, capsys):
    path = tmp_path / "s.bin"
    assert main(["dump-env", str(path), "--steps", "500", "--seed", "2"]) == 0
    assert main(["inspect-stream", str(path), "--head", "1"]) == 0
    text = capsys.readouterr().out
    assert "records      500" in text and "width        12" in text


def test_estimate_budget(capsys):
    assert main(["estimate-budget", "--m", "12"]) == 0
    text = capsys.readouterr().out
    assert "3920" in text and "3360" in text and "4352" in text and "15:4" in text


def test_verify_gradients(capsys):
    rc = main(["verify-gradients", "--topology", "ccn", "--instances", "2", "--steps", "30",
               "--fd-checks", "1"])
    assert rc == 0 and "ok" in capsys.readouterr().out


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["run", "no_such_config"]) == 2
    assert main(["run", "desk_ccn", "typo_key=1", "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ccnrtrl", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify-gradients" in r.stdout
