"""Command-line interface: flags, outputs, exit codes, determinism.

Subcommands run in-process through cli.run for speed; one test drives the
installed console script end to end.
"""

import json
import subprocess

from wavefront import cli
from wavefront.lattice import RectCheckReport


def run(argv, capsys):
    code = cli.run(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_components_cube_face_center(capsys):
    code, out, err = run(
        ["components", "--surface", "cube:1", "--p", "U/0.5/0.5",
         "--t-grid", "0.5:1.5:0.5"],
        capsys,
    )
    assert code == 0 and err == ""
    lines = out.strip().split("\n")
    assert lines[1] == "t,components"
    assert lines[2] == "0.5,1"
    assert lines[3] == "1.0,4"
    assert lines[4] == "1.5,4"


def test_density_csv_shape(capsys):
    code, out, err = run(
        ["density", "--surface", "torus:1,1", "--p", "0,0",
         "--t-grid", "2:4:2", "--eps", "0.05"],
        capsys,
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0].startswith("# surface=torus:1,1")
    assert lines[1] == "t,covering_radius,cells_hit_fraction,length,components"
    assert len(lines) == 4


def test_tau_csv(capsys):
    code, out, _ = run(
        ["tau", "--surface", "torus:1,1", "--p", "0.2,0.3",
         "--r", "0.5", "--t-max", "6", "--dt", "1"],
        capsys,
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[1] == "r,tau,t_max,delta_t,first_full_cover_time"
    assert lines[2].startswith("0.5,")


def test_length_reports_slope(capsys):
    code, out, _ = run(
        ["length", "--surface", "torus:1,1", "--p", "0.2,0.3",
         "--t-grid", "4:12:4"],
        capsys,
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[1] == "t,length"
    assert lines[-1].startswith("# slope=6.283")


def test_lattice_default_h(capsys):
    code, out, _ = run(["lattice", "--t-grid", "25:25:1"], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert "h=1/sqrt(t)" in lines[0]
    assert lines[2].split(",")[1] == "0.2"  # 1/sqrt(25)


def test_verify_theorem1_passes(capsys):
    code, out, _ = run(["verify-theorem1", "--t-grid", "10:100:45"], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "t,a,b,height,slope_max,projected_covering_radius,passed"
    assert all(line.endswith(",True") for line in lines[1:])


def test_verify_theorem1_failure_exit_code(monkeypatch, capsys):
    # verification failure is its own exit code; forge a failing report
    # since the argument genuinely holds at every valid t
    def failing(t, h_max=0.005):
        return RectCheckReport(
            t=t, a=-2.0, b=-1.0, height=1.0, slope_max=9.9,
            projected_covering_radius=9.9, passed=False,
        )

    monkeypatch.setattr(cli, "theorem1_rectangle_check", failing)
    code, out, err = run(["verify-theorem1", "--t-grid", "10:10:1"], capsys)
    assert code == 4
    assert "verification failed" in err


def test_simulate_then_render(tmp_path, capsys):
    snap = tmp_path / "front.json"
    svg = tmp_path / "front.svg"
    code, _, _ = run(
        ["simulate", "--surface", "cube:1", "--p", "U/0.5/0.5",
         "--t", "1", "--out", str(snap)],
        capsys,
    )
    assert code == 0
    doc = json.loads(snap.read_bytes())
    assert doc["surface"] == "cube:1" and doc["t"] == 1.0
    assert len(doc["components"]) == 4

    code, _, _ = run(["render", "--in", str(snap), "--out", str(svg)], capsys)
    assert code == 0
    assert svg.read_bytes().startswith(b"<?xml")


def test_simulate_arc_and_hmax_flags(tmp_path, capsys):
    snap = tmp_path / "arc.json"
    code, _, _ = run(
        ["simulate", "--surface", "torus:1,1", "--p", "0.2,0.3", "--t", "2",
         "--arc", "0,1.5", "--hmax", "0.01", "--n0", "64",
         "--out", str(snap)],
        capsys,
    )
    assert code == 0
    doc = json.loads(snap.read_bytes())
    assert doc["arc"] == [0.0, 1.5]
    assert doc["params"]["h_max"] == 0.01


def test_invalid_arguments_exit_1(capsys):
    cases = [
        ["simulate", "--surface", "torus:1,1", "--p", "0,0"],  # missing --t
        ["density", "--surface", "bogus:1", "--p", "0,0",
         "--t-grid", "1:2:1", "--eps", "0.1"],
        ["density", "--surface", "torus:1,1", "--p", "0,0",
         "--t-grid", "5:1:1", "--eps", "0.1"],  # HI < LO
        ["density", "--surface", "torus:1,1", "--p", "0,0",
         "--t-grid", "1:2:1", "--eps", "0.001"],  # eps below resolution
        ["simulate", "--surface", "torus:1,1", "--p", "9,9", "--t", "1"],
        ["nonsense"],
        [],
    ]
    for argv in cases:
        code, _, err = run(argv, capsys)
        assert code == 1, argv
        assert err.startswith("wavefront: error: "), argv
        assert err.count("\n") == 1  # single diagnostic line


def test_numerical_failure_exit_2(capsys):
    code, _, err = run(["lattice", "--t-grid", "20000:20000:1"], capsys)
    assert code == 2
    assert "budget" in err


def test_io_errors_exit_3(tmp_path, capsys):
    code, _, err = run(
        ["render", "--in", str(tmp_path / "missing.json"),
         "--out", str(tmp_path / "x.svg")],
        capsys,
    )
    assert code == 3
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    code, _, err = run(
        ["render", "--in", str(bad), "--out", str(tmp_path / "x.svg")], capsys
    )
    assert code == 3
    assert "malformed JSON" in err


def test_threads_env_validated(monkeypatch, capsys):
    monkeypatch.setenv("WAVEFRONT_THREADS", "frog")
    code, _, err = run(["lattice", "--t-grid", "1:1:1"], capsys)
    assert code == 1 and "WAVEFRONT_THREADS" in err
    monkeypatch.setenv("WAVEFRONT_THREADS", "8")
    code, out, _ = run(["lattice", "--t-grid", "1:1:1"], capsys)
    assert code == 0


def test_thread_count_does_not_change_bytes(monkeypatch, capsys):
    argv = ["density", "--surface", "torus:1,1", "--p", "0.2,0.3",
            "--t-grid", "2:4:2", "--eps", "0.05"]
    monkeypatch.setenv("WAVEFRONT_THREADS", "1")
    _, out1, _ = run(argv, capsys)
    monkeypatch.setenv("WAVEFRONT_THREADS", "7")
    _, out2, _ = run(argv, capsys)
    assert out1 == out2


def test_help_exits_zero(capsys):
    assert cli.run(["--help"]) == 0
    capsys.readouterr()


def test_console_script_end_to_end():
    # the installed entry point, through a real process
    result = subprocess.run(
        ["wavefront", "lattice", "--t-grid", "5:5:1"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "t,h,N_t" in result.stdout
    bad = subprocess.run(
        ["wavefront", "density", "--surface", "torus:1,1", "--p", "0,0",
         "--t-grid", "oops", "--eps", "0.1"],
        capture_output=True, text=True,
    )
    assert bad.returncode == 1
    assert bad.stderr.startswith("wavefront: error: ")
