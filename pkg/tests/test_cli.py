import json
import os
import subprocess
import sys

import pytest

from conftest import corpus_path
from varseq import cli
from varseq.render import to_text

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
REGEN = os.environ.get("VARSEQ_REGEN_GOLDEN") == "1"

# (file, command, format)
CASES = [
    ("wave", "el", "text"),
    ("wave", "el", "latex"),
    ("wave", "noether", "text"),
    ("half_ux2", "secondvar", "text"),
    ("half_uxx2", "momenta", "text"),
    ("mechanics", "noether", "text"),
    ("maxwell", "bianchi", "json"),
    ("maxwell", "hamiltonian", "text"),
    ("proca", "bianchi", "text"),
    ("metric2d", "bianchi", "text"),
    ("sphere", "jacobi", "text"),
    ("sphere", "secondvar", "latex"),
]

EXIT = {
    ("proca", "bianchi"): 1,
    ("proca", "noether"): 1,
    ("proca", "hamiltonian"): 4,
    ("proca", "secondvar"): 4,
    ("metric2d", "secondvar"): 4,
}


def golden_name(name, cmd, fmt):
    ext = {"text": "txt", "latex": "tex", "json": "json"}[fmt]
    return os.path.join(GOLDEN, f"{name}.{cmd}.{ext}")


def run(name, cmd, fmt="text", **kw):
    code, out = cli.run_command(cmd, corpus_path(name), fmt, **kw)
    return code, out


@pytest.mark.parametrize("name, cmd, fmt", CASES)
def test_golden(name, cmd, fmt):
    code, out = run(name, cmd, fmt)
    assert code == EXIT.get((name, cmd), 0)
    path = golden_name(name, cmd, fmt)
    if REGEN:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(out)
    with open(path, encoding="utf-8") as fh:
        assert out == fh.read()


@pytest.mark.parametrize("name, cmd, fmt", CASES[:4])
def test_byte_identical_reruns(name, cmd, fmt):
    assert run(name, cmd, fmt) == run(name, cmd, fmt)


def test_wave_el_text():
    code, out = run("wave", "el")
    assert code == 0
    assert "E = -u_{tt} + u_{xx}" in out


def test_maxwell_bianchi_json():
    code, out = run("maxwell", "bianchi", "json")
    doc = json.loads(out)
    assert doc["schema"] == "varseq/v1" and doc["exit_code"] == 0
    entries = {e["label"]: e["value"] for s in doc["sections"] for e in s["entries"]}
    assert entries["beta[eps]"]["zero"] is True
    assert entries["beta[eps] vanishes"] == {"type": "bool", "value": True}
    assert set(entries["omega"]) == {"type", "text", "latex", "tree", "zero"}


def test_proca_bianchi_prints_beta():
    code, out = run("proca", "bianchi")
    assert code == 1
    assert "beta[eps] = -At_t + Ax_x" in out
    assert "status: failure" in out


@pytest.mark.parametrize("name", ["half_ux2", "half_uxx2", "wave", "mechanics", "maxwell", "proca", "metric2d", "sphere"])
@pytest.mark.parametrize("cmd", cli.COMMANDS)
def test_exit_codes(name, cmd):
    rc = cli.main([cmd, corpus_path(name)])
    assert rc == EXIT.get((name, cmd), 0)


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.vp"
    bad.write_text("[bundle]\ncoords: x\nfields: u\n[lagrangian]\nw^2\n")
    assert cli.main(["el", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "line 5, column 1" in err and "'w'" in err


def test_order_overflow_exit(capsys):
    assert cli.main(["el", corpus_path("half_uxx2"), "--max-order", "1"]) == 3


def test_missing_file_exit():
    assert cli.main(["el", "/nonexistent/file.vp"]) == 4


def test_unknown_lift_exit():
    assert cli.main(["noether", corpus_path("wave"), "--lift", "nope"]) == 4


def test_format_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("VARSEQ_FORMAT", "json")
    assert cli.main(["el", corpus_path("wave")]) == 0
    assert json.loads(capsys.readouterr().out)["command"] == "el"
    monkeypatch.setenv("VARSEQ_FORMAT", "yaml")
    assert cli.main(["el", corpus_path("wave")]) == 2


def test_tolerance_flag_can_fail_verify():
    code, out = run("half_ux2", "verify", tolerance=1e-30)
    assert code == 1 and "failed: action gradient" in out


def test_plot_writes_figures(tmp_path):
    code, out = run("sphere", "verify", plot=str(tmp_path))
    assert code == 0
    pngs = sorted(p.name for p in tmp_path.iterdir())
    assert pngs == ["sphere-gradient.png", "sphere-jacobi.png"]
    for p in tmp_path.iterdir():
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    code, _ = run("wave", "el", plot=str(tmp_path))
    assert (tmp_path / "wave-el.png").stat().st_size > 1000


def test_plot_is_deterministic(tmp_path):
    run("half_ux2", "el", plot=str(tmp_path / "a"))
    run("half_ux2", "el", plot=str(tmp_path / "b"))
    a = (tmp_path / "a" / "half_ux2-el.png").read_bytes()
    b = (tmp_path / "b" / "half_ux2-el.png").read_bytes()
    assert a == b


def test_console_script():
    out = subprocess.run(
        [sys.executable, "-m", "varseq.cli", "el", corpus_path("wave")], capture_output=True, text=True, check=False
    )
    assert out.returncode == 0 and "E = -u_{tt} + u_{xx}" in out.stdout


def test_verify_reports_facts_not_failures():
    code, out = run("proca", "verify")
    assert code == 0
    assert "gauge: symmetry = broken" in out
    assert "gauge: Bianchi vanishes = no" in out
