import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from ovsfaccel import cli
from ovsfaccel.container import read_compressed, write_weights
from ovsfaccel.models import builtin_model, builtin_platform
from ovsfaccel.textio import serialize_platform
from ovsfaccel.workflow import LayerCheck, random_weights

SMALL = "M=64,128,256;T_R=16,32,64;T_P=4,8;T_C=64,128"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def header_fields(text):
    first = text.splitlines()[0]
    return dict(tok.split("=", 1) for tok in first.split()[3:])


def csv_rows(text):
    body = "\n".join(l for l in text.splitlines() if not l.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def test_compress_resnet34_summary(capsys, tmp_path):
    code, out, _ = run(capsys, "compress", "--model", "resnet34", "--schedule", "ovsf25", "--container",
                       str(tmp_path / "c.ovsw"), "--format", "csv")
    assert code == 0
    h = header_fields(out)
    assert abs(int(h["params_original"]) - 21.8e6) / 21.8e6 < 0.01
    assert int(h["params_compressed"]) < int(h["params_original"])
    rows = csv_rows(out)
    assert len(rows) == len(builtin_model("resnet34"))
    assert len(read_compressed(tmp_path / "c.ovsw")) == len(rows)


def test_full_ratio_has_no_error(capsys, tmp_path):
    sched = tmp_path / "full.txt"
    sched.write_text("schedule name=full ratios=1,1,1,1 mode=crop4 scope=all\n")
    code, out, _ = run(capsys, "compress", "--model", "resnet18", "--schedule", str(sched), "--format", "csv")
    assert code == 0
    assert max(float(r["max_abs_error"]) for r in csv_rows(out)) < 1e-5


def test_weights_file_input(capsys, tmp_path):
    m = builtin_model("resnet18")
    w = random_weights(m, 7)
    write_weights(tmp_path / "w.ovsw", {"layer1.0.conv1": w["layer1.0.conv1"]})
    code, out, _ = run(capsys, "compress", "--model", "resnet18", "--schedule", "ovsf50", "--weights",
                       str(tmp_path / "w.ovsw"), "--layers", "layer1.0.conv1", "--format", "csv")
    assert code == 0 and len(csv_rows(out)) == 1


def test_missing_weights_is_input_error(capsys, tmp_path):
    code, _, err = run(capsys, "compress", "--model", "resnet18", "--weights", str(tmp_path / "none.ovsw"))
    assert code == 2 and "none.ovsw" in err


def test_reproducible_outputs(capsys, tmp_path):
    args = ["compress", "--model", "resnet18", "--schedule", "ovsf50", "--layers", "layer2.0.conv2,conv1",
            "--seed", "5"]
    a = run(capsys, *args, "--container", str(tmp_path / "a.ovsw"))[1]
    b = run(capsys, *args, "--container", str(tmp_path / "b.ovsw"))[1]
    assert a == b and "seed=5" in a.splitlines()[0]
    assert (tmp_path / "a.ovsw").read_bytes() == (tmp_path / "b.ovsw").read_bytes()


@pytest.mark.parametrize("mode", ["fixed16", "float"])
def test_simulate_passes(capsys, tmp_path, mode):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "simulate", "--model", "resnet18", "--schedule", "ovsf50", "--sigma", "64,32,16,32",
                       "--layers", "layer2.0.conv2,layer3.1.conv1", "--mode", mode, "--max-rows", "16",
                       "--trace-out", str(trace), "--format", "csv")
    assert code == 0 and header_fields(out)["result"] == "PASS"
    rows = csv_rows(out)
    assert len(rows) == 2
    assert all(r["wgen_cycles"] == r["expected_cycles"] for r in rows)
    assert trace.read_text().startswith("# layer=layer2.0.conv2")


def test_simulate_rejects_per_filter(capsys, tmp_path):
    c = tmp_path / "pf.ovsw"
    run(capsys, "compress", "--model", "resnet18", "--schedule", "ovsf50", "--selection", "per_filter",
        "--layers", "layer1.0.conv1", "--container", str(c))
    code, _, err = run(capsys, "simulate", "--model", "resnet18", "--schedule", "ovsf50", "--compressed", str(c),
                       "--sigma", "16,8,16,16")
    assert code == 2 and "per-filter" in err


def test_simulate_invariant_failure_exit_code(capsys, monkeypatch):
    def broken(cl, spec, *a, **k):
        return LayerCheck(spec.name, cl.repr_mode, 1, 2, "stream", True, False, True, True), None
    monkeypatch.setattr(cli, "simulate_layer", broken)
    code, out, err = run(capsys, "simulate", "--model", "resnet18", "--schedule", "ovsf50", "--sigma", "16,8,16,16",
                         "--layers", "layer1.0.conv1")
    assert code == 1 and "invariant" in err and "FAIL" in out


def test_estimate(capsys):
    code, out, _ = run(capsys, "estimate", "--model", "resnet34", "--schedule", "ovsf50", "--sigma", "256,32,8,64",
                       "--bw", "1x", "--format", "csv")
    assert code == 0
    h = header_fields(out)
    assert h["bw"] == "1.1" and float(h["inf_per_s"]) > 0
    assert len(csv_rows(out)) == len(builtin_model("resnet34"))


def test_unknown_platform(capsys):
    code, _, err = run(capsys, "estimate", "--model", "resnet18", "--platform", "nope", "--sigma", "1,1,1,1")
    assert code == 2 and "nope" in err


def test_bad_sigma_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["estimate", "--model", "resnet18", "--sigma", "1,2"])
    assert e.value.code == 2


def test_platform_from_environment(capsys, tmp_path, monkeypatch):
    p = tmp_path / "board.txt"
    p.write_text(serialize_platform(builtin_platform("zu7ev")).replace("name=zu7ev", "name=myboard"))
    monkeypatch.setenv(cli.CONFIG_ENV, str(p))
    code, out, _ = run(capsys, "estimate", "--model", "resnet18", "--sigma", "64,32,8,64")
    assert code == 0 and header_fields(out)["platform"] == "myboard"


def test_dse_top_k(capsys, tmp_path):
    out_file = tmp_path / "dse.csv"
    code, _, _ = run(capsys, "dse", "--model", "resnet34", "--schedule", "ovsf50", "--bw", "1.1", "--space", SMALL,
                     "--top-k", "3", "--format", "csv", "--out", str(out_file))
    text = out_file.read_text()
    assert code == 0 and "rank,M,T_R,T_P,T_C,inf_per_s" in text


def test_bad_space(capsys):
    with pytest.raises(SystemExit):
        cli.main(["dse", "--model", "resnet18", "--space", "Q=1"])


def test_report_single_bandwidth(capsys):
    code, out, _ = run(capsys, "report", "--models", "resnet18", "--schedules", "baseline,ovsf50", "--tiers", "4x",
                       "--space", SMALL, "--format", "csv")
    rows = csv_rows(out)
    assert code == 0 and [r["schedule"] for r in rows] == ["baseline", "ovsf50", "speedup:ovsf50"]
    assert list(rows[0]) == ["model", "schedule", "variant", "params_M", "4x"]


def test_report_speedup_trend(capsys):
    code, out, _ = run(capsys, "report", "--models", "resnet34", "--schedules", "baseline,ovsf50",
                       "--tiers", "1x,4x,12x", "--space", SMALL, "--format", "csv")
    speed = [float(csv_rows(out)[-1][t]) for t in ("1x", "4x", "12x")]
    assert code == 0 and speed[0] >= speed[1] >= speed[2]


def test_markdown_table(capsys):
    code, out, _ = run(capsys, "estimate", "--model", "resnet18", "--sigma", "64,32,8,64")
    lines = out.splitlines()
    assert lines[1].startswith("| name") and set(lines[2]) <= set("|-")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ovsfaccel", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
