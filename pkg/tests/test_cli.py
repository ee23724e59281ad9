import json
import subprocess
import sys

import pytest

from bayesalign.cli import main
from test_io import MINIMAL, atom


def run(*args):
    return subprocess.run([sys.executable, "-m", "bayesalign", *args], capture_output=True, text=True)


def test_align_fixture_end_to_end(tmp_path):
    out = tmp_path / "run"
    assert main(["align", "--oracle-fixture", "small4", "--seed", "7", "--sweeps", "600",
                 "--burn-in", "100", "--thin", "5", "--out-dir", str(out)]) == 0
    for name in ("samples.csv", "matchprobs.csv", "matchprobs_dense.csv", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_samples"] == 100
    header = (out / "samples.csv").read_text().splitlines()[0]
    assert header.startswith("sweep,logpost,L,rmsd,S,ext,g,h,l")


def test_align_is_deterministic(tmp_path):
    args = ["align", "--oracle-fixture", "small4", "--seed", "3", "--sweeps", "300", "--burn-in", "0", "--thin", "3"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/samples.csv").read_bytes() == (tmp_path / "b/samples.csv").read_bytes()


def test_missing_chain_is_usage_error(tmp_path):
    proc = run("align", "--x", "a.pdb", "--y", "b.pdb", "--chain-x", "A")
    assert proc.returncode == 2
    assert "--chain-y" in proc.stderr


def test_align_on_pdb_files(tmp_path):
    rows = [atom(i, "CA", "ALA", "A", i, 3.8 * i, (i % 2) * 1.5, 0.0) for i in range(1, 9)]
    x = tmp_path / "x.pdb"
    y = tmp_path / "y.pdb"
    x.write_text("\n".join(rows) + "\n")
    y.write_text("\n".join(rows[1:]) + "\n")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sweeps = 200\nburn_in = 50\nthin = 10\n")
    out = tmp_path / "o"
    code = main(["align", "--x", str(x), "--chain-x", "A", "--y", str(y), "--chain-y", "A",
                 "--config", str(cfg), "--seed", "1", "--out-dir", str(out), "--tempering",
                 "--seq-mode", "fixed-pam", "250", "--gap-mode", "sampled"])
    assert code == 0
    assert "temperatures = 1.0 0.7" in (out / "config.txt").read_text()
    assert "gap_mode = sampled" in (out / "config.txt").read_text()


def test_bad_chain_reports_error(tmp_path, capsys):
    x = tmp_path / "x.pdb"
    x.write_text(MINIMAL + "\n")
    assert main(["align", "--x", str(x), "--chain-x", "Q", "--y", str(x), "--chain-y", "A"]) == 1
    assert "chain 'Q' not found" in capsys.readouterr().err


def test_zcheck(capsys):
    assert main(["zcheck", "--m", "4", "--n", "5", "--g", "4", "--h", "0.1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["relative_error"] < 1e-12


def test_pam_dump(tmp_path):
    out = tmp_path / "pam.txt"
    assert main(["pam", "--l", "250", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 21 and lines[0].split()[1:] == list("ACDEFGHIKLMNPQRSTVWY")


def test_summarize_and_point_estimate(tmp_path, capsys):
    out = tmp_path / "run"
    main(["align", "--oracle-fixture", "small4", "--sweeps", "400", "--burn-in", "0", "--thin", "4",
          "--out-dir", str(out)])
    capsys.readouterr()
    assert main(["summarize", str(out / "samples.csv")]) == 0
    recomputed = json.loads(capsys.readouterr().out)
    in_run = json.loads((out / "summary.json").read_text())
    for key in ("L", "rmsd", "log_post", "s", "ext"):
        assert recomputed[key] == in_run[key]
    assert main(["point-estimate", str(out / "matchprobs_dense.csv"), "--k", "0.3"]) == 0
