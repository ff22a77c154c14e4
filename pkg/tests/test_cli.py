import json
import os
import subprocess
import sys

import numpy as np
import pytest

from bregflow import cli
from bregflow.flowfield import FlowField
from bregflow.io import read_flo, read_image, write_flo, write_image
from bregflow.synthetic import flow_pair, ramp

FAST = ["--lambda", "0.05", "--mu", "1.0", "--gamma", "1.0", "--bregman-iters", "5"]


@pytest.fixture
def frames(tmp_path):
    f0, f1, truth = flow_pair((32, 40), "translate", 1.0, seed=0)
    write_image(f0, tmp_path / "f0.pgm")
    write_image(f1, tmp_path / "f1.png")
    write_flo(truth, tmp_path / "gt.flo")
    return tmp_path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_flow_identical_frames_gives_zero_file(frames, capsys):
    code, out, _ = run(["flow", frames / "f0.pgm", frames / "f0.pgm", "--out", frames / "z.flo"] + FAST,
                       capsys)
    assert code == 0
    flow = read_flo(frames / "z.flo")
    assert not flow.u.any() and not flow.v.any()
    assert "runtime" in out and "trace warnings" in out


def test_flow_outputs_and_accuracy(frames, capsys):
    code, out, _ = run(["flow", frames / "f0.pgm", frames / "f1.png", "--out", frames / "e.flo",
                        "--viz-out", frames / "e.png", "--trace-csv", frames / "t.csv"] + FAST, capsys)
    assert code == 0
    assert read_image(frames / "e.png", gray=False).shape == (32, 40, 3)
    rows = (frames / "t.csv").read_text().splitlines()
    assert rows[0] == "k,H,J,divergence" and len(rows) == 1 + 5
    code, out, _ = run(["eval", frames / "e.flo", frames / "gt.flo"], capsys)
    assert code == 0 and out.startswith("AAE ")


def test_flow_is_deterministic(frames, capsys):
    for name in ("a.flo", "b.flo"):
        assert run(["flow", frames / "f0.pgm", frames / "f1.png", "--out", frames / name] + FAST, capsys)[0] == 0
    assert (frames / "a.flo").read_bytes() == (frames / "b.flo").read_bytes()


def test_horn_schunck_trace_note(frames, capsys):
    code, out, _ = run(["flow", frames / "f0.pgm", frames / "f1.png", "--out", frames / "h.flo",
                        "--model", "horn_schunck", "--trace-csv", frames / "h.csv"] + FAST, capsys)
    assert code == 0 and "ignored" in out and not (frames / "h.csv").exists()


def test_missing_input_exit_2_names_path(frames, capsys):
    missing = frames / "nope.pgm"
    code, _, err = run(["flow", missing, frames / "f1.png", "--out", frames / "x.flo"] + FAST, capsys)
    assert code == 2 and str(missing) in err


def test_usage_error_exit_64(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["flow", "--bogus"])
    assert exc.value.code == 64


def test_missing_parameters_exit_4(frames, capsys):
    code, _, err = run(["flow", frames / "f0.pgm", frames / "f1.png", "--out", frames / "x.flo"], capsys)
    assert code == 4 and "--lambda" in err


def test_invalid_parameters_exit_4(frames, capsys):
    code, _, _ = run(["flow", frames / "f0.pgm", frames / "f1.png", "--out", frames / "x.flo",
                      "--lambda", "1", "--mu", "-1"], capsys)
    assert code == 4


def test_frame_size_mismatch_exit_5(frames, capsys):
    write_image(np.zeros((10, 10)), frames / "small.pgm")
    code, _, _ = run(["flow", frames / "f0.pgm", frames / "small.pgm", "--out", frames / "x.flo"] + FAST,
                     capsys)
    assert code == 5


def test_bad_format_exit_3(frames, capsys):
    (frames / "bad.pgm").write_bytes(b"P5\n4 4\n255\n\0")
    code, _, _ = run(["flow", frames / "bad.pgm", frames / "f1.png", "--out", frames / "x.flo"] + FAST,
                     capsys)
    assert code == 3


def test_numerical_failure_exit_6(frames, capsys, monkeypatch):
    def boom(*a, **k):
        raise np.linalg.LinAlgError("singular 2x2 block")

    monkeypatch.setattr(cli, "compute_flow", boom)
    code, _, err = run(["flow", frames / "f0.pgm", frames / "f1.png", "--out", frames / "x.flo"] + FAST,
                       capsys)
    assert code == 6 and "singular" in err


def test_exit_codes_distinct_and_documented(capsys):
    codes = list(cli.EXIT_CODES)
    assert len(set(codes)) == len(codes)
    with pytest.raises(SystemExit):
        cli.main(["flow", "--help"])
    text = capsys.readouterr().out
    for code in codes:
        assert f"{code:>3}  " in text


# -- parameter precedence --------------------------------------------------

def parse(argv):
    return cli.build_parser().parse_args(["flow", "a", "b", "--out", "c"] + argv)


def test_preset_only():
    model, p = cli.resolve_params(parse(["--preset", "RubberWhale"]))
    assert model == "osb" and (p.lam, p.mu, p.gamma, p.sigma) == (0.01, 11.25, 20.0, 0.4)
    model, p = cli.resolve_params(parse(["--preset", "Grove2", "--model", "brox"]))
    assert model == "brox" and (p.lam, p.mu, p.N) == (0.065, 0.41, 150)


def test_flags_beat_config_beat_preset(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "RubberWhale", "mu": 2.0, "lambda": 0.5, "bregman_iters": 7}))
    _, p = cli.resolve_params(parse(["--config", str(cfg), "--lambda", "0.25", "--no-median"]))
    assert p.lam == 0.25      # flag
    assert p.mu == 2.0        # config
    assert p.N == 7           # config
    assert p.gamma == 20.0    # preset
    assert p.median is False  # flag
    assert p.pyramid_scale == 0.9


@pytest.mark.parametrize("content, code", [("{not json", 4), ("[1, 2]", 4), ('{"colour": 1}', 4)])
def test_bad_config(tmp_path, capsys, content, code):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    assert run(["flow", "a", "b", "--out", "c", "--config", cfg], capsys)[0] == code


def test_missing_config_exit_2(tmp_path, capsys):
    code, _, err = run(["flow", "a", "b", "--out", "c", "--config", tmp_path / "none.json"], capsys)
    assert code == 2 and "none.json" in err


# -- eval / viz ------------------------------------------------------------

def test_eval_self_and_offset(tmp_path, capsys):
    f = FlowField(np.random.default_rng(0).standard_normal((6, 7)), np.zeros((6, 7)))
    write_flo(f, tmp_path / "a.flo")
    write_flo(FlowField(f.u + 1.0, f.v), tmp_path / "b.flo")
    assert run(["eval", tmp_path / "a.flo", tmp_path / "a.flo"], capsys)[1] == "AAE 0.00  AEE 0.00\n"
    code, out, _ = run(["eval", tmp_path / "b.flo", tmp_path / "a.flo"], capsys)
    assert code == 0 and out.strip().endswith("AEE 1.00")


def test_eval_dimension_mismatch_exit_5(tmp_path, capsys):
    write_flo(FlowField.zeros((3, 3)), tmp_path / "a.flo")
    write_flo(FlowField.zeros((3, 4)), tmp_path / "b.flo")
    assert run(["eval", tmp_path / "a.flo", tmp_path / "b.flo"], capsys)[0] == 5


def test_eval_bad_magic_exit_3(tmp_path, capsys):
    (tmp_path / "a.flo").write_bytes(b"\0" * 20)
    write_flo(FlowField.zeros((1, 1)), tmp_path / "b.flo")
    assert run(["eval", tmp_path / "a.flo", tmp_path / "b.flo"], capsys)[0] == 3


def test_viz(tmp_path, capsys):
    write_flo(FlowField.zeros((4, 5)), tmp_path / "z.flo")
    assert run(["viz", tmp_path / "z.flo", "--out", tmp_path / "z.ppm"], capsys)[0] == 0
    assert (read_image(tmp_path / "z.ppm", gray=False) == 255).all()
    assert run(["viz", tmp_path / "z.flo", "--out", tmp_path / "z.png", "--max-magnitude", "0"], capsys)[0] == 4


# -- diag ------------------------------------------------------------------

def test_diag_nonplanar(frames, capsys):
    code, out, _ = run(["diag", frames / "f0.pgm", frames / "f1.png", "--trials", "200",
                        "--trace-csv", frames / "d.csv"] + FAST, capsys)
    assert code == 0
    assert "min quadratic form > 0" in out and "not degenerate" in out
    assert "monotone H" in out
    rows = (frames / "d.csv").read_text().splitlines()[1:]
    assert len(rows) == 5 and rows[0].startswith("1,")


def test_diag_planar_ramp_flags_degeneracy(tmp_path, capsys):
    write_image(ramp((24, 24), 4.0, 0.0, 10.0), tmp_path / "r0.pgm")
    write_image(ramp((24, 24), 4.0, 0.0, 14.0), tmp_path / "r1.pgm")
    code, out, _ = run(["diag", tmp_path / "r0.pgm", tmp_path / "r1.pgm", "--gamma", "0",
                        "--lambda", "1", "--mu", "1", "--bregman-iters", "3", "--trials", "50"], capsys)
    assert code == 0 and "degenerate: constant flow orthogonal" in out
    assert "gives form 0.000e+00" in out


def test_diag_envelope_reference(frames, capsys):
    code, out, _ = run(["diag", frames / "f0.pgm", frames / "f1.png", "--trials", "10",
                        "--d0", "1e9"] + FAST, capsys)
    assert code == 0 and "1/k envelope on H: ok" in out


# -- reproduction driver ---------------------------------------------------

def test_reproduce_without_data_exit_7(capsys, monkeypatch):
    monkeypatch.delenv("BREGFLOW_DATA", raising=False)
    assert run(["reproduce-table3"], capsys)[0] == 7


def test_reproduce_missing_sequence_exit_7(tmp_path, capsys):
    assert run(["reproduce-table3", "--data", tmp_path], capsys)[0] == 7


@pytest.mark.parametrize("layout", ["official", "flat"])
def test_find_sequence_layouts(tmp_path, layout):
    if layout == "official":
        fdir, gdir = tmp_path / "other-data" / "Grove2", tmp_path / "other-gt-flow" / "Grove2"
    else:
        fdir = gdir = tmp_path / "Grove2"
    fdir.mkdir(parents=True)
    gdir.mkdir(parents=True, exist_ok=True)
    write_image(np.zeros((4, 4)), fdir / "frame10.png")
    write_image(np.zeros((4, 4)), fdir / "frame11.pgm")
    write_flo(FlowField.zeros((4, 4)), gdir / "flow10.flo")
    hit = cli.find_sequence(str(tmp_path), "Grove2")
    assert hit == (str(fdir / "frame10.png"), str(fdir / "frame11.pgm"), str(gdir / "flow10.flo"))
    assert cli.find_sequence(str(tmp_path), "RubberWhale") is None


def test_reproduce_runs_on_synthetic_stand_in(tmp_path, capsys, monkeypatch):
    f0, f1, truth = flow_pair((24, 28), "translate", 0.5, seed=1)
    d = tmp_path / "Grove2"
    d.mkdir()
    write_image(f0, d / "frame10.png")
    write_image(f1, d / "frame11.png")
    write_flo(truth, d / "flow10.flo")
    monkeypatch.setenv("BREGFLOW_DATA", str(tmp_path))
    code, out, _ = run(["reproduce-table3", "--sequences", "Grove2", "--out-dir", tmp_path / "o"], capsys)
    assert code in (0, 8)
    assert "osb    Grove2" in out and "brox   Grove2" in out and "ordering Grove2" in out
    assert (tmp_path / "o" / "osb_Grove2.flo").exists()


def test_console_script_entry_point(tmp_path):
    write_flo(FlowField.zeros((2, 2)), tmp_path / "a.flo")
    res = subprocess.run([sys.executable, "-m", "bregflow.cli", "eval", str(tmp_path / "a.flo"),
                          str(tmp_path / "a.flo")], capture_output=True, text=True,
                         env={**os.environ, "PYTHONPATH": os.pathsep.join(sys.path)})
    assert res.returncode == 0 and res.stdout == "AAE 0.00  AEE 0.00\n"
    res = subprocess.run([sys.executable, "-m", "bregflow.cli", "eval", str(tmp_path / "missing.flo"),
                          str(tmp_path / "a.flo")], capture_output=True, text=True)
    assert res.returncode == 2 and "missing.flo" in res.stderr
